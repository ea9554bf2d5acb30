// Copyright 2026 The qder Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#ifndef QDER_CONFIG_H_
#define QDER_CONFIG_H_

#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace qder {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A small TOML subset shared by the weight file and the experiment file:
//
//   # comment
//   key = "string" | 12 | -1.5 | true | ["a", "b"] | [1, 2]
//   [[feature]]        # starts a new entry of the "feature" array
//   key = value
//
// Keys are bare words. Arrays hold scalars of one line. Everything after an
// unquoted '#' is a comment.
using ConfigScalar = std::variant<std::string, double, bool>;
using ConfigValue =
    std::variant<std::string, double, bool, std::vector<ConfigScalar>>;

class ConfigTable {
 public:
  bool Has(std::string_view key) const;
  void Set(std::string key, ConfigValue value, std::size_t line);

  std::string GetString(std::string_view key) const;
  std::string GetString(std::string_view key, std::string fallback) const;
  double GetNumber(std::string_view key) const;
  double GetNumber(std::string_view key, double fallback) const;
  bool GetBool(std::string_view key, bool fallback) const;
  std::vector<std::string> GetStringList(std::string_view key) const;
  std::vector<double> GetNumberList(std::string_view key) const;

  // Line of the key, for diagnostics; 0 if absent.
  std::size_t LineOf(std::string_view key) const;
  const std::map<std::string, ConfigValue, std::less<>>& entries() const {
    return entries_;
  }

 private:
  const ConfigValue& Require(std::string_view key) const;

  std::map<std::string, ConfigValue, std::less<>> entries_;
  std::map<std::string, std::size_t, std::less<>> lines_;
};

struct ConfigDocument {
  ConfigTable root;
  std::map<std::string, std::vector<ConfigTable>, std::less<>> arrays;
};

ConfigDocument ParseConfig(std::istream& in);
ConfigDocument LoadConfig(const std::string& path);

}  // namespace qder

#endif  // QDER_CONFIG_H_
