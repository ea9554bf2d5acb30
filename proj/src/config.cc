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


#include "qder/config.h"

#include <cctype>
#include <charconv>
#include <fstream>
#include <istream>

namespace qder {
namespace {

std::string_view Trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) {
    s.remove_prefix(1);
  }
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) {
    s.remove_suffix(1);
  }
  return s;
}

[[noreturn]] void Fail(std::size_t line, const std::string& what) {
  throw ConfigError("config line " + std::to_string(line) + ": " + what);
}

// Cuts a trailing comment that is not inside a string.
std::string_view StripComment(std::string_view s) {
  bool in_string = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"' && (i == 0 || s[i - 1] != '\\')) in_string = !in_string;
    if (s[i] == '#' && !in_string) return s.substr(0, i);
  }
  return s;
}

class ValueParser {
 public:
  ValueParser(std::string_view text, std::size_t line)
      : text_(text), line_(line) {}

  ConfigValue ParseValue() {
    SkipSpace();
    ConfigValue v;
    if (Peek() == '[') {
      ++pos_;
      std::vector<ConfigScalar> items;
      SkipSpace();
      if (Peek() == ']') {
        ++pos_;
      } else {
        while (true) {
          items.push_back(ParseScalar());
          SkipSpace();
          if (Peek() == ',') {
            ++pos_;
            SkipSpace();
            if (Peek() == ']') {
              ++pos_;
              break;
            }
            continue;
          }
          if (Peek() == ']') {
            ++pos_;
            break;
          }
          Fail(line_, "expected ',' or ']' in array");
        }
      }
      v = std::move(items);
    } else {
      ConfigScalar s = ParseScalar();
      std::visit([&](auto&& x) { v = x; }, s);
    }
    SkipSpace();
    if (pos_ != text_.size()) Fail(line_, "trailing characters after value");
    return v;
  }

 private:
  char Peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }
  void SkipSpace() {
    while (pos_ < text_.size() &&
           std::isspace(static_cast<unsigned char>(text_[pos_]))) {
      ++pos_;
    }
  }

  ConfigScalar ParseScalar() {
    SkipSpace();
    if (Peek() == '"') {
      ++pos_;
      std::string out;
      while (pos_ < text_.size() && text_[pos_] != '"') {
        char c = text_[pos_++];
        if (c == '\\' && pos_ < text_.size()) {
          char e = text_[pos_++];
          switch (e) {
            case 'n': out.push_back('\n'); break;
            case 't': out.push_back('\t'); break;
            default: out.push_back(e); break;
          }
        } else {
          out.push_back(c);
        }
      }
      if (Peek() != '"') Fail(line_, "unterminated string");
      ++pos_;
      return out;
    }
    std::size_t start = pos_;
    while (pos_ < text_.size() && text_[pos_] != ',' && text_[pos_] != ']' &&
           !std::isspace(static_cast<unsigned char>(text_[pos_]))) {
      ++pos_;
    }
    std::string_view word = text_.substr(start, pos_ - start);
    if (word == "true") return true;
    if (word == "false") return false;
    if (word.empty()) Fail(line_, "missing value");
    std::string_view num = word;
    if (!num.empty() && num.front() == '+') num.remove_prefix(1);
    double d = 0.0;
    auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), d);
    if (ec != std::errc() || ptr != num.data() + num.size()) {
      Fail(line_, "cannot parse value '" + std::string(word) + "'");
    }
    return d;
  }

  std::string_view text_;
  std::size_t line_;
  std::size_t pos_ = 0;
};

const char* TypeName(const ConfigValue& v) {
  switch (v.index()) {
    case 0: return "string";
    case 1: return "number";
    case 2: return "boolean";
    default: return "array";
  }
}

}  // namespace

bool ConfigTable::Has(std::string_view key) const {
  return entries_.find(key) != entries_.end();
}

void ConfigTable::Set(std::string key, ConfigValue value, std::size_t line) {
  if (Has(key)) Fail(line, "duplicate key '" + key + "'");
  lines_[key] = line;
  entries_.emplace(std::move(key), std::move(value));
}

std::size_t ConfigTable::LineOf(std::string_view key) const {
  auto it = lines_.find(key);
  return it == lines_.end() ? 0 : it->second;
}

const ConfigValue& ConfigTable::Require(std::string_view key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) {
    throw ConfigError("missing required key '" + std::string(key) + "'");
  }
  return it->second;
}

std::string ConfigTable::GetString(std::string_view key) const {
  const ConfigValue& v = Require(key);
  if (const auto* s = std::get_if<std::string>(&v)) return *s;
  Fail(LineOf(key), "key '" + std::string(key) + "' must be a string, got " +
                        TypeName(v));
}

std::string ConfigTable::GetString(std::string_view key,
                                   std::string fallback) const {
  return Has(key) ? GetString(key) : fallback;
}

double ConfigTable::GetNumber(std::string_view key) const {
  const ConfigValue& v = Require(key);
  if (const auto* d = std::get_if<double>(&v)) return *d;
  Fail(LineOf(key), "key '" + std::string(key) + "' must be a number, got " +
                        TypeName(v));
}

double ConfigTable::GetNumber(std::string_view key, double fallback) const {
  return Has(key) ? GetNumber(key) : fallback;
}

bool ConfigTable::GetBool(std::string_view key, bool fallback) const {
  if (!Has(key)) return fallback;
  const ConfigValue& v = Require(key);
  if (const auto* b = std::get_if<bool>(&v)) return *b;
  Fail(LineOf(key), "key '" + std::string(key) + "' must be a boolean");
}

std::vector<std::string> ConfigTable::GetStringList(
    std::string_view key) const {
  if (!Has(key)) return {};
  const ConfigValue& v = Require(key);
  if (const auto* s = std::get_if<std::string>(&v)) return {*s};
  const auto* list = std::get_if<std::vector<ConfigScalar>>(&v);
  if (list == nullptr) {
    Fail(LineOf(key), "key '" + std::string(key) + "' must be a list");
  }
  std::vector<std::string> out;
  for (const auto& item : *list) {
    const auto* s = std::get_if<std::string>(&item);
    if (s == nullptr) {
      Fail(LineOf(key), "key '" + std::string(key) + "' must hold strings");
    }
    out.push_back(*s);
  }
  return out;
}

std::vector<double> ConfigTable::GetNumberList(std::string_view key) const {
  if (!Has(key)) return {};
  const ConfigValue& v = Require(key);
  if (const auto* d = std::get_if<double>(&v)) return {*d};
  const auto* list = std::get_if<std::vector<ConfigScalar>>(&v);
  if (list == nullptr) {
    Fail(LineOf(key), "key '" + std::string(key) + "' must be a list");
  }
  std::vector<double> out;
  for (const auto& item : *list) {
    const auto* d = std::get_if<double>(&item);
    if (d == nullptr) {
      Fail(LineOf(key), "key '" + std::string(key) + "' must hold numbers");
    }
    out.push_back(*d);
  }
  return out;
}

ConfigDocument ParseConfig(std::istream& in) {
  ConfigDocument doc;
  ConfigTable* current = &doc.root;
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string_view line = Trim(StripComment(raw));
    if (line.empty()) continue;
    if (line.starts_with("[[")) {
      if (!line.ends_with("]]")) Fail(lineno, "malformed table header");
      std::string name(Trim(line.substr(2, line.size() - 4)));
      if (name.empty()) Fail(lineno, "empty table name");
      auto& list = doc.arrays[name];
      list.emplace_back();
      current = &list.back();
      continue;
    }
    if (line.front() == '[') Fail(lineno, "only [[array]] tables are supported");
    std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) Fail(lineno, "expected 'key = value'");
    std::string key(Trim(line.substr(0, eq)));
    if (key.empty()) Fail(lineno, "empty key");
    for (char c : key) {
      if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' &&
          c != '-') {
        Fail(lineno, "invalid key '" + key + "'");
      }
    }
    ValueParser parser(Trim(line.substr(eq + 1)), lineno);
    current->Set(std::move(key), parser.ParseValue(), lineno);
  }
  return doc;
}

ConfigDocument LoadConfig(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  return ParseConfig(in);
}

}  // namespace qder
