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


#ifndef QDER_SCHEDULER_H_
#define QDER_SCHEDULER_H_

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "qder/model.h"
#include "qder/samplers.h"

namespace qder {

enum class SchedulePolicy { kRandom, kSelectivity, kClosestFirst, kFarthestFirst };

// Accepts random, selectivity, closest, closest-first, farthest,
// farthest-first.
std::optional<SchedulePolicy> ParsePolicy(std::string_view name);
std::string_view PolicyName(SchedulePolicy p);

inline constexpr std::size_t kDefaultSlice = 500;
inline constexpr std::size_t kNoQuery = std::numeric_limits<std::size_t>::max();

struct QuerySchedule {
  std::size_t selectivity = 0;
  // False for a query that could not be scheduled (empty canopy).
  bool active = true;
  ConvergenceMonitor monitor;
  std::uint64_t consumed = 0;
  std::uint64_t slices = 0;
  bool stop_on_convergence = true;

  bool schedulable() const {
    return active && !(stop_on_convergence && monitor.converged());
  }
};

struct ScheduleState {
  std::vector<QuerySchedule> queries;
  // Round-robin position: the next pick starts looking here.
  std::size_t cursor = 0;
  std::uint64_t slices_issued = 0;

  void Commit(std::size_t pick);
};

// Each returns kNoQuery when no query is schedulable.
std::size_t NextRandom(const ScheduleState& ss);
std::size_t NextSelectivity(const ScheduleState& ss);
std::size_t NextClosestFirst(const ScheduleState& ss);
std::size_t NextFarthestFirst(const ScheduleState& ss);
std::size_t NextQuery(SchedulePolicy policy, const ScheduleState& ss);

struct WatchlistConfig {
  SchedulePolicy policy = SchedulePolicy::kRandom;
  std::size_t k_slice = kDefaultSlice;
  std::uint64_t budget = 10000;
  // Converged queries leave the schedule; the run ends when none is left.
  bool adaptive_stop = true;
  // Algorithm, acceptance, tau, seed, window and patience are taken from
  // here; samples is ignored.
  SamplerConfig sampler;
};

struct AggregateRow {
  std::uint64_t cumulative_proposals = 0;
  std::size_t query = 0;  // query that received the slice
  double mean_f1 = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> f1;
};

struct WatchlistResult {
  EntityState state;
  ScheduleState schedule;
  std::vector<AggregateRow> trace;
  std::uint64_t proposals = 0;
  std::uint64_t accepted = 0;
  bool terminated_early = false;
};

WatchlistResult RunWatchlist(const Workspace& ws, const WatchlistConfig& cfg);

// cumulative_proposals, query, mean_f1_q, then one f1 column per query.
void WriteAggregateCsv(std::ostream& out, const WatchlistResult& result);

}  // namespace qder

#endif  // QDER_SCHEDULER_H_
