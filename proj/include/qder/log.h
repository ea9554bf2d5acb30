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


#ifndef QDER_LOG_H_
#define QDER_LOG_H_

#include <string>
#include <string_view>

namespace qder {

enum class LogLevel { kQuiet = 0, kWarning = 1, kInfo = 2 };

void SetLogLevel(LogLevel level);
LogLevel GetLogLevel();

void LogWarning(std::string_view message);
void LogInfo(std::string_view message);

// Emits `message` only the first time `key` is seen in this process.
void LogWarningOnce(std::string_view key, std::string_view message);

}  // namespace qder

#endif  // QDER_LOG_H_
