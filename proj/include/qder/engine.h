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


#ifndef QDER_ENGINE_H_
#define QDER_ENGINE_H_

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "qder/features.h"
#include "qder/influence.h"
#include "qder/model.h"
#include "qder/samplers.h"

namespace qder {

enum class ContentionPolicy { kResample, kBaselineFallback };

std::optional<ContentionPolicy> ParseContentionPolicy(std::string_view name);
std::string_view ContentionPolicyName(ContentionPolicy p);

struct ParallelConfig {
  int workers = 1;
  double tau_alpha = 1.0;
  std::uint64_t budget_per_worker = 1000;
  ContentionPolicy contention = ContentionPolicy::kResample;
  AcceptanceMode acceptance = AcceptanceMode::kGreedy;
  std::uint64_t seed = 0;
  // Keep every accepted move with the entity versions it was scored
  // against.
  bool record_moves = false;

  void Validate() const;
};

struct EngineQuery {
  MentionId node = 0;
  const AliasTable* table = nullptr;  // attract table of the query
};

struct AcceptedMove {
  Move move;
  EntityId receiver = kNoEntity;
  std::uint64_t source_version = 0;
  // 0 when the receiver was created by the move.
  std::uint64_t target_version = 0;
  double delta = 0.0;
};

struct ContentionStats {
  std::uint64_t proposals = 0;
  std::uint64_t accepted = 0;
  std::uint64_t lock_attempts = 0;
  std::uint64_t lock_failures = 0;
  std::uint64_t resamples = 0;
  std::uint64_t fallbacks = 0;
  std::uint64_t abandoned = 0;

  ContentionStats& operator+=(const ContentionStats& o);
};

struct WorkerTrace {
  int worker = 0;
  ContentionStats stats;
  std::vector<TraceRecord> records;
  std::vector<AcceptedMove> moves;
};

struct ParallelResult {
  std::vector<WorkerTrace> workers;
  ContentionStats totals;
  bool aborted = false;
  std::string error;

  // {"workers":..,"proposals":..,"accepted":..,"lock_attempts":.., ...}
  std::string StatsJson() const;
};

// Workers share `state`. Worker w draws from Rng(seed, w) and serves the
// queries round-robin starting at index w. A worker that throws stops the
// run; the traces gathered so far are returned with aborted set.
ParallelResult RunParallel(const std::vector<EngineQuery>& queries,
                           EntityState& state, const Scorer& scorer,
                           const ParallelConfig& cfg);

// Engine queries for every resolvable workspace query.
std::vector<EngineQuery> EngineQueries(const Workspace& ws);

}  // namespace qder

#endif  // QDER_ENGINE_H_
