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


#include "qder/scheduler.h"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace qder {

std::optional<SchedulePolicy> ParsePolicy(std::string_view name) {
  if (name == "random") return SchedulePolicy::kRandom;
  if (name == "selectivity") return SchedulePolicy::kSelectivity;
  if (name == "closest" || name == "closest-first" || name == "closest_first") {
    return SchedulePolicy::kClosestFirst;
  }
  if (name == "farthest" || name == "farthest-first" ||
      name == "farthest_first") {
    return SchedulePolicy::kFarthestFirst;
  }
  return std::nullopt;
}

std::string_view PolicyName(SchedulePolicy p) {
  switch (p) {
    case SchedulePolicy::kRandom:
      return "random";
    case SchedulePolicy::kSelectivity:
      return "selectivity";
    case SchedulePolicy::kClosestFirst:
      return "closest";
    case SchedulePolicy::kFarthestFirst:
      return "farthest";
  }
  return "?";
}

void ScheduleState::Commit(std::size_t pick) {
  cursor = (pick + 1) % std::max<std::size_t>(queries.size(), 1);
  ++slices_issued;
  ++queries[pick].slices;
}

std::size_t NextRandom(const ScheduleState& ss) {
  const std::size_t n = ss.queries.size();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = (ss.cursor + i) % n;
    if (ss.queries[k].schedulable()) return k;
  }
  return kNoQuery;
}

std::size_t NextSelectivity(const ScheduleState& ss) {
  double total = 0.0;
  for (const auto& q : ss.queries) {
    if (q.schedulable()) total += static_cast<double>(q.selectivity);
  }
  std::size_t best = kNoQuery;
  double best_deficit = 0.0;
  const double issued = static_cast<double>(ss.slices_issued) + 1.0;
  for (std::size_t k = 0; k < ss.queries.size(); ++k) {
    const auto& q = ss.queries[k];
    if (!q.schedulable()) continue;
    const double share = total > 0.0
                             ? static_cast<double>(q.selectivity) / total
                             : 0.0;
    const double deficit = share * issued - static_cast<double>(q.slices);
    if (best == kNoQuery || deficit > best_deficit) {
      best = k;
      best_deficit = deficit;
    }
  }
  return best;
}

namespace {

// Queries without any observation yet go first, in index order.
std::size_t FirstUnobserved(const ScheduleState& ss) {
  for (std::size_t k = 0; k < ss.queries.size(); ++k) {
    const auto& q = ss.queries[k];
    if (q.schedulable() && q.monitor.filled() == 0) return k;
  }
  return kNoQuery;
}

}  // namespace

std::size_t NextClosestFirst(const ScheduleState& ss) {
  if (std::size_t k = FirstUnobserved(ss); k != kNoQuery) return k;
  std::size_t best = kNoQuery;
  double best_fraction = 0.0;
  for (std::size_t k = 0; k < ss.queries.size(); ++k) {
    const auto& q = ss.queries[k];
    if (!q.schedulable()) continue;
    const double f = q.monitor.Fraction();
    if (f <= 0.0) continue;
    if (best == kNoQuery || f < best_fraction) {
      best = k;
      best_fraction = f;
    }
  }
  return best != kNoQuery ? best : NextRandom(ss);
}

std::size_t NextFarthestFirst(const ScheduleState& ss) {
  if (std::size_t k = FirstUnobserved(ss); k != kNoQuery) return k;
  std::size_t best = kNoQuery;
  double best_fraction = 0.0;
  for (std::size_t k = 0; k < ss.queries.size(); ++k) {
    const auto& q = ss.queries[k];
    if (!q.schedulable()) continue;
    const double f = q.monitor.Fraction();
    if (best == kNoQuery || f > best_fraction) {
      best = k;
      best_fraction = f;
    }
  }
  return best;
}

std::size_t NextQuery(SchedulePolicy policy, const ScheduleState& ss) {
  switch (policy) {
    case SchedulePolicy::kRandom:
      return NextRandom(ss);
    case SchedulePolicy::kSelectivity:
      return NextSelectivity(ss);
    case SchedulePolicy::kClosestFirst:
      return NextClosestFirst(ss);
    case SchedulePolicy::kFarthestFirst:
      return NextFarthestFirst(ss);
  }
  return kNoQuery;
}

namespace {

double MeanF1(const std::vector<double>& f1) {
  double sum = 0.0;
  std::size_t n = 0;
  for (double v : f1) {
    if (std::isnan(v)) continue;
    sum += v;
    ++n;
  }
  return n == 0 ? std::numeric_limits<double>::quiet_NaN()
                : sum / static_cast<double>(n);
}

}  // namespace

WatchlistResult RunWatchlist(const Workspace& ws, const WatchlistConfig& cfg) {
  if (cfg.k_slice == 0) throw std::invalid_argument("slice K must be positive");
  const SamplerConfig& scfg = cfg.sampler;
  scfg.Validate();

  WatchlistResult result;
  ScheduleState& ss = result.schedule;
  std::vector<SamplingContext> contexts;
  for (std::size_t i = 0; i < ws.queries.size(); ++i) {
    const WorkspaceQuery& wq = ws.queries[i];
    QuerySchedule qs{wq.selectivity, wq.resolvable,
                     ConvergenceMonitor(scfg.window, scfg.patience), 0, 0,
                     cfg.adaptive_stop};
    ss.queries.push_back(std::move(qs));
    contexts.push_back(wq.resolvable ? MakeContext(ws, i, scfg.algorithm)
                                     : SamplingContext{});
  }

  EntityState state = ws.InitialState(scfg.algorithm);
  for (std::size_t i = 0; i < contexts.size(); ++i) {
    if (ws.queries[i].resolvable) contexts[i].f1.Reset(state);
  }
  auto snapshot = [&](std::size_t query) {
    AggregateRow row;
    row.cumulative_proposals = result.proposals;
    row.query = query;
    for (std::size_t i = 0; i < contexts.size(); ++i) {
      row.f1.push_back(ws.queries[i].resolvable
                           ? contexts[i].f1.F1()
                           : std::numeric_limits<double>::quiet_NaN());
    }
    row.mean_f1 = MeanF1(row.f1);
    return row;
  };

  Rng rng(scfg.seed);
  while (result.proposals < cfg.budget) {
    const std::size_t pick = NextQuery(cfg.policy, ss);
    if (pick == kNoQuery) {
      result.terminated_early = true;
      break;
    }
    ss.Commit(pick);
    QuerySchedule& qs = ss.queries[pick];
    const std::uint64_t n =
        std::min<std::uint64_t>(cfg.k_slice, cfg.budget - result.proposals);
    for (std::uint64_t i = 0; i < n; ++i) {
      const StepOutcome out = SampleStep(scfg, contexts[pick], state, rng);
      ++result.proposals;
      ++qs.consumed;
      if (out.accepted) {
        ++result.accepted;
        for (std::size_t j = 0; j < contexts.size(); ++j) {
          if (ws.queries[j].resolvable) {
            contexts[j].f1.Update(state, out.move, out.receiver);
          }
        }
      }
      qs.monitor.Record(out.accepted);
      if (cfg.adaptive_stop && qs.monitor.converged()) break;
    }
    result.trace.push_back(snapshot(pick));
  }
  result.state = std::move(state);
  return result;
}

void WriteAggregateCsv(std::ostream& out, const WatchlistResult& result) {
  out << "cumulative_proposals,query,mean_f1_q";
  for (std::size_t i = 0; i < result.schedule.queries.size(); ++i) {
    out << ",f1_q" << i;
  }
  out << '\n';
  for (const AggregateRow& row : result.trace) {
    out << row.cumulative_proposals << ',' << row.query << ',';
    if (!std::isnan(row.mean_f1)) out << row.mean_f1;
    for (double v : row.f1) {
      out << ',';
      if (!std::isnan(v)) out << v;
    }
    out << '\n';
  }
}

}  // namespace qder
