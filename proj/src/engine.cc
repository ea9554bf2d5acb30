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


#include "qder/engine.h"

#include <omp.h>

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <stdexcept>

#include "json.hpp"

namespace qder {

std::optional<ContentionPolicy> ParseContentionPolicy(std::string_view name) {
  if (name == "resample") return ContentionPolicy::kResample;
  if (name == "baseline_fallback" || name == "baseline-fallback") {
    return ContentionPolicy::kBaselineFallback;
  }
  return std::nullopt;
}

std::string_view ContentionPolicyName(ContentionPolicy p) {
  return p == ContentionPolicy::kResample ? "resample" : "baseline_fallback";
}

void ParallelConfig::Validate() const {
  if (workers < 1) throw std::invalid_argument("workers must be at least 1");
  if (!(tau_alpha >= 0.0 && tau_alpha <= 1.0)) {
    throw std::invalid_argument("tau_alpha must be in [0, 1]");
  }
}

ContentionStats& ContentionStats::operator+=(const ContentionStats& o) {
  proposals += o.proposals;
  accepted += o.accepted;
  lock_attempts += o.lock_attempts;
  lock_failures += o.lock_failures;
  resamples += o.resamples;
  fallbacks += o.fallbacks;
  abandoned += o.abandoned;
  return *this;
}

std::string ParallelResult::StatsJson() const {
  nlohmann::ordered_json j;
  j["workers"] = workers.size();
  j["proposals"] = totals.proposals;
  j["accepted"] = totals.accepted;
  j["lock_attempts"] = totals.lock_attempts;
  j["lock_failures"] = totals.lock_failures;
  j["resamples"] = totals.resamples;
  j["fallbacks"] = totals.fallbacks;
  j["abandoned"] = totals.abandoned;
  j["aborted"] = aborted;
  return j.dump();
}

namespace {

enum class Attempt { kDegenerate, kNoOp, kContention, kDone };

class Worker {
 public:
  Worker(int id, const std::vector<EngineQuery>& queries, EntityState& state,
         const Scorer& scorer, const ParallelConfig& cfg, WorkerTrace& trace)
      : queries_(queries),
        state_(state),
        scorer_(scorer),
        cfg_(cfg),
        trace_(trace),
        rng_(cfg.seed, static_cast<std::uint64_t>(id)),
        id_(id) {}

  void Run(const std::atomic<bool>& abort) {
    ContentionStats& st = trace_.stats;
    trace_.records.reserve(cfg_.budget_per_worker);
    for (std::uint64_t i = 0; i < cfg_.budget_per_worker; ++i) {
      if (abort.load(std::memory_order_relaxed)) return;
      const EngineQuery& q =
          queries_[(static_cast<std::uint64_t>(id_) + i) % queries_.size()];
      accepted_ = false;
      delta_ = 0.0;
      Attempt a = Attempt::kDegenerate;
      const bool query_branch = rng_.Uniform() < cfg_.tau_alpha;
      for (int r = 0; r < kMaxRetries; ++r) {
        a = Propose(q, query_branch);
        if (a == Attempt::kDegenerate) continue;
        if (a != Attempt::kContention) break;
        ++st.lock_failures;
        if (cfg_.contention == ContentionPolicy::kResample) {
          ++st.resamples;
          continue;
        }
        ++st.fallbacks;
        a = ProposeBaseline();
        if (a == Attempt::kContention) ++st.lock_failures;
        break;
      }
      if (a == Attempt::kContention) ++st.abandoned;
      ++st.proposals;
      if (accepted_) ++st.accepted;
      trace_.records.push_back({i + 1, accepted_, delta_,
                                std::numeric_limits<double>::quiet_NaN()});
    }
  }

 private:
  bool Lock(EntityId a, EntityId b) {
    if (b == kNoEntity || a == b) {
      ++trace_.stats.lock_attempts;
      return state_.TryLock(a);
    }
    const EntityId lo = std::min(a, b);
    const EntityId hi = std::max(a, b);
    ++trace_.stats.lock_attempts;
    if (!state_.TryLock(lo)) return false;
    ++trace_.stats.lock_attempts;
    if (!state_.TryLock(hi)) {
      state_.Unlock(lo);
      return false;
    }
    return true;
  }

  void Unlock(EntityId a, EntityId b) {
    state_.Unlock(a);
    if (b != kNoEntity && b != a) state_.Unlock(b);
  }

  // Scores and maybe applies a move whose entities are held.
  Attempt Evaluate(const Move& move, EntityId held_target) {
    delta_ = scorer_.Delta(state_, move).value;
    accepted_ = Accept(delta_, cfg_.acceptance, rng_);
    if (accepted_) {
      AcceptedMove rec;
      rec.move = move;
      rec.delta = delta_;
      if (cfg_.record_moves) {
        rec.source_version = state_.Version(move.source);
        rec.target_version =
            held_target == kNoEntity ? 0 : state_.Version(held_target);
      }
      rec.receiver = state_.Apply(move);
      if (cfg_.record_moves) trace_.moves.push_back(rec);
    }
    Unlock(move.source, held_target);
    return Attempt::kDone;
  }

  // Hybrid-attract proposal.
  Attempt Propose(const EngineQuery& q, bool query_branch) {
    if (query_branch) {
      const MentionId m = q.table->Draw(rng_);
      const EntityId src = state_.EntityOf(m);
      const EntityId tgt = state_.EntityOf(q.node);
      if (src == tgt) return Attempt::kNoOp;
      if (!Lock(src, tgt)) return Attempt::kContention;
      if (state_.EntityOf(m) != src || state_.EntityOf(q.node) != tgt ||
          !state_.IsLive(src) || !state_.IsLive(tgt)) {
        Unlock(src, tgt);
        return Attempt::kContention;
      }
      return Evaluate({m, src, tgt}, tgt);
    }
    const EntityId qent = state_.EntityOf(q.node);
    const EntityId tgt = state_.RandomEntityExcept(qent, true, rng_);
    if (tgt == kNoEntity) return Attempt::kDegenerate;
    return LockedMove(tgt);
  }

  Attempt ProposeBaseline() {
    const EntityId src = state_.RandomEntity(rng_);
    const EntityId tgt = state_.RandomEntityExcept(src, true, rng_);
    if (tgt == kNoEntity) return Attempt::kDegenerate;
    return LockedMove(tgt, src);
  }

  // Picks a source (unless given), takes both entities, then a member.
  Attempt LockedMove(EntityId tgt, EntityId src = kNoEntity) {
    const bool fresh = tgt == kFreshEntity;
    if (src == kNoEntity) {
      src = fresh ? state_.RandomEntity(rng_)
                  : state_.RandomEntityExcept(tgt, false, rng_);
      if (src == kNoEntity) return Attempt::kDegenerate;
    }
    const EntityId held = fresh ? kNoEntity : tgt;
    if (!Lock(src, held)) return Attempt::kContention;
    if (!state_.IsLive(src) || (!fresh && !state_.IsLive(tgt))) {
      Unlock(src, held);
      return Attempt::kContention;
    }
    const Move move{state_.RandomMember(src, rng_), src, tgt};
    if (state_.IsNoOp(move)) {
      Unlock(src, held);
      return Attempt::kNoOp;
    }
    return Evaluate(move, held);
  }

  const std::vector<EngineQuery>& queries_;
  EntityState& state_;
  const Scorer& scorer_;
  const ParallelConfig& cfg_;
  WorkerTrace& trace_;
  Rng rng_;
  int id_;
  bool accepted_ = false;
  double delta_ = 0.0;
};

}  // namespace

ParallelResult RunParallel(const std::vector<EngineQuery>& queries,
                           EntityState& state, const Scorer& scorer,
                           const ParallelConfig& cfg) {
  cfg.Validate();
  if (queries.empty()) throw std::invalid_argument("engine needs a query");
  for (const EngineQuery& q : queries) {
    if (q.table == nullptr || q.table->size() == 0) {
      throw std::invalid_argument("engine query without an influence table");
    }
    if (!state.Contains(q.node)) {
      throw ContractError("query node is not part of the state");
    }
  }
  ParallelResult result;
  result.workers.resize(static_cast<std::size_t>(cfg.workers));
  std::atomic<bool> abort{false};
  std::mutex error_mu;

  const int saved_dynamic = omp_get_dynamic();
  omp_set_dynamic(0);
#pragma omp parallel num_threads(cfg.workers)
  {
    const int team = omp_get_num_threads();
    for (int w = omp_get_thread_num(); w < cfg.workers; w += team) {
      WorkerTrace& trace = result.workers[static_cast<std::size_t>(w)];
      trace.worker = w;
      try {
        Worker(w, queries, state, scorer, cfg, trace).Run(abort);
      } catch (const std::exception& e) {
        abort = true;
        std::lock_guard<std::mutex> lock(error_mu);
        if (result.error.empty()) {
          result.error = "worker " + std::to_string(w) + ": " + e.what();
        }
      }
    }
  }
  omp_set_dynamic(saved_dynamic);

  result.aborted = abort.load();
  for (const WorkerTrace& t : result.workers) result.totals += t.stats;
  return result;
}

std::vector<EngineQuery> EngineQueries(const Workspace& ws) {
  std::vector<EngineQuery> out;
  for (const WorkspaceQuery& wq : ws.queries) {
    if (wq.resolvable) out.push_back({wq.node, &wq.attract});
  }
  return out;
}

}  // namespace qder
