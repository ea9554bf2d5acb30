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


#include "qder/log.h"

#include <atomic>
#include <iostream>
#include <mutex>
#include <set>

namespace qder {
namespace {

std::atomic<int> g_level{static_cast<int>(LogLevel::kWarning)};
std::mutex g_mu;

std::set<std::string, std::less<>>& SeenKeys() {
  static std::set<std::string, std::less<>> keys;
  return keys;
}

void Emit(std::string_view tag, std::string_view message) {
  std::lock_guard<std::mutex> lock(g_mu);
  std::cerr << "[qder " << tag << "] " << message << '\n';
}

}  // namespace

void SetLogLevel(LogLevel level) { g_level = static_cast<int>(level); }

LogLevel GetLogLevel() { return static_cast<LogLevel>(g_level.load()); }

void LogWarning(std::string_view message) {
  if (g_level >= static_cast<int>(LogLevel::kWarning)) Emit("warn", message);
}

void LogInfo(std::string_view message) {
  if (g_level >= static_cast<int>(LogLevel::kInfo)) Emit("info", message);
}

void LogWarningOnce(std::string_view key, std::string_view message) {
  {
    std::lock_guard<std::mutex> lock(g_mu);
    auto& seen = SeenKeys();
    if (seen.find(key) != seen.end()) return;
    seen.emplace(key);
  }
  LogWarning(message);
}

}  // namespace qder
