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


#include "qder/samplers.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <ostream>
#include <stdexcept>

namespace qder {

namespace {

struct AlgorithmEntry {
  Algorithm algorithm;
  std::string_view name;
};

constexpr AlgorithmEntry kAlgorithms[] = {
    {Algorithm::kBaseline, "baseline"},
    {Algorithm::kTargetFixed, "target-fixed"},
    {Algorithm::kQueryProportional, "query-proportional"},
    {Algorithm::kHybridAttract, "hybrid-attract"},
    {Algorithm::kHybridRepel, "hybrid-repel"},
};

double Seconds(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - since)
      .count();
}

}  // namespace

std::optional<Algorithm> ParseAlgorithm(std::string_view name) {
  std::string canon(name);
  std::replace(canon.begin(), canon.end(), '_', '-');
  for (const auto& e : kAlgorithms) {
    if (e.name == canon) return e.algorithm;
  }
  return std::nullopt;
}

std::string_view AlgorithmName(Algorithm a) {
  for (const auto& e : kAlgorithms) {
    if (e.algorithm == a) return e.name;
  }
  return "?";
}

bool StartsFromSingleCluster(Algorithm a) { return a == Algorithm::kHybridRepel; }

bool UsesRepelTable(Algorithm a) { return a == Algorithm::kHybridRepel; }

void SamplerConfig::Validate() const {
  if (!(tau_alpha >= 0.0 && tau_alpha <= 1.0)) {
    throw std::invalid_argument("tau_alpha must be in [0, 1]");
  }
  if (window == 0) throw std::invalid_argument("window must be positive");
  if (patience == 0) throw std::invalid_argument("patience must be positive");
}

ConvergenceMonitor::ConvergenceMonitor(std::size_t window, std::size_t patience)
    : window_(window), patience_(patience), ring_(window, 0) {
  if (window == 0) throw std::invalid_argument("window must be positive");
}

void ConvergenceMonitor::Record(bool accepted) {
  if (filled_ == window_) {
    accepted_ -= ring_[head_];
  } else {
    ++filled_;
  }
  ring_[head_] = accepted ? 1 : 0;
  accepted_ += ring_[head_];
  head_ = (head_ + 1) % window_;

  ++block_steps_;
  block_accepts_ += accepted ? 1 : 0;
  if (block_steps_ == window_) {
    zero_windows_ = block_accepts_ == 0 ? zero_windows_ + 1 : 0;
    block_steps_ = 0;
    block_accepts_ = 0;
  }
}

double ConvergenceMonitor::Fraction() const {
  return filled_ == 0 ? 0.0
                      : static_cast<double>(accepted_) /
                            static_cast<double>(filled_);
}

std::vector<bool> ConvergenceMonitor::Window() const {
  std::vector<bool> out;
  out.reserve(filled_);
  const std::size_t start = (head_ + window_ - filled_) % window_;
  for (std::size_t i = 0; i < filled_; ++i) {
    out.push_back(ring_[(start + i) % window_] != 0);
  }
  return out;
}

int TruthIndex::LabelId(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return static_cast<int>(i);
  }
  return -1;
}

F1Tracker::F1Tracker(const TruthIndex* truth, MentionId query_node, int label)
    : truth_(label >= 0 ? truth : nullptr), query_(query_node), label_(label) {
  if (truth_ != nullptr) {
    relevant_ = truth_->corpus_count[static_cast<std::size_t>(label)];
  }
}

void F1Tracker::Reset(const EntityState& state) {
  if (!enabled()) return;
  entity_ = state.EntityOf(query_);
  retrieved_ = 0;
  intersection_ = 0;
  for (MentionId m : state.Members(entity_)) {
    if (truth_->synthetic[m]) continue;
    ++retrieved_;
    if (truth_->label[m] == label_) ++intersection_;
  }
}

void F1Tracker::Update(const EntityState& state, const Move& move,
                       EntityId receiver) {
  if (!enabled()) return;
  const MentionId m = move.mention;
  if (m == query_) {
    Reset(state);
    return;
  }
  if (truth_->synthetic[m]) return;
  const bool hit = truth_->label[m] == label_;
  if (move.source == entity_) {
    --retrieved_;
    if (hit) --intersection_;
  }
  if (receiver == entity_) {
    ++retrieved_;
    if (hit) ++intersection_;
  }
}

double F1Tracker::F1() const {
  if (!enabled()) return std::numeric_limits<double>::quiet_NaN();
  const double p = retrieved_ == 0 ? 0.0
                                   : static_cast<double>(intersection_) /
                                         static_cast<double>(retrieved_);
  const double r =
      static_cast<double>(intersection_) / static_cast<double>(relevant_);
  return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

std::vector<MentionId> Workspace::Nodes() const {
  std::vector<MentionId> out(size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<MentionId>(i);
  }
  return out;
}

EntityState Workspace::InitialState(Algorithm algorithm) const {
  const std::vector<MentionId> nodes = Nodes();
  return StartsFromSingleCluster(algorithm) ? EntityState::SingleCluster(nodes)
                                            : EntityState::Singletons(nodes);
}

std::vector<MentionId> Workspace::QueryEntity(const EntityState& state,
                                              std::size_t query) const {
  std::vector<MentionId> out;
  const WorkspaceQuery& q = queries.at(query);
  if (!q.resolvable) return out;
  for (MentionId m : state.Members(state.EntityOf(q.node))) {
    if (corpus_ids[m]) out.push_back(*corpus_ids[m]);
  }
  std::sort(out.begin(), out.end());
  return out;
}

Workspace BuildWorkspace(std::span<const Mention> corpus,
                         const CorpusStats& stats, const QGramIndex& index,
                         std::span<const QueryNode> queries,
                         const FeatureModel& model,
                         const WorkspaceOptions& options) {
  Workspace ws;
  auto start = std::chrono::steady_clock::now();

  std::vector<std::vector<MentionId>> canopies;
  std::vector<MentionId> merged;
  for (const QueryNode& qn : queries) {
    std::vector<MentionId> members;
    if (options.exhaustive) {
      members.resize(corpus.size());
      for (std::size_t i = 0; i < corpus.size(); ++i) {
        members[i] = static_cast<MentionId>(i);
      }
    } else {
      members = index.ApproximateMatch(qn.mention.surface, options.min_jaccard);
    }
    if (qn.corpus_id && !members.empty() &&
        !std::binary_search(members.begin(), members.end(), *qn.corpus_id)) {
      members.insert(
          std::lower_bound(members.begin(), members.end(), *qn.corpus_id),
          *qn.corpus_id);
    }
    merged.insert(merged.end(), members.begin(), members.end());
    canopies.push_back(std::move(members));
  }
  std::sort(merged.begin(), merged.end());
  merged.erase(std::unique(merged.begin(), merged.end()), merged.end());
  ws.blocking_seconds = Seconds(start);

  std::map<MentionId, MentionId> local;
  for (MentionId id : merged) {
    local[id] = static_cast<MentionId>(ws.corpus_ids.size());
    ws.corpus_ids.push_back(id);
  }
  std::vector<MentionFeatures> nodes;
  nodes.reserve(merged.size() + queries.size());
  for (MentionId id : merged) nodes.push_back(ExtractFeatures(corpus[id], stats));

  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    WorkspaceQuery wq;
    wq.query = queries[qi];
    wq.selectivity = canopies[qi].size();
    wq.resolvable = !canopies[qi].empty();
    wq.truth = wq.query.mention.truth;
    if (wq.query.corpus_id && !wq.truth) {
      wq.truth = corpus[*wq.query.corpus_id].truth;
    }
    if (wq.resolvable) {
      if (wq.query.corpus_id) {
        wq.node = local.at(*wq.query.corpus_id);
        nodes[wq.node] = ExtractQueryFeatures(wq.query, corpus, stats);
      } else {
        wq.node = static_cast<MentionId>(ws.corpus_ids.size());
        ws.corpus_ids.push_back(std::nullopt);
        nodes.push_back(ExtractQueryFeatures(wq.query, corpus, stats));
      }
      for (MentionId id : canopies[qi]) {
        const MentionId l = local.at(id);
        if (l != wq.node) wq.canopy.push_back(l);
      }
      wq.canopy.push_back(wq.node);
    }
    ws.queries.push_back(std::move(wq));
  }

  // Gold labels.
  std::map<std::string, int> label_ids;
  auto label_of = [&](const std::string& name) {
    auto [it, inserted] =
        label_ids.emplace(name, static_cast<int>(ws.truth.names.size()));
    if (inserted) {
      ws.truth.names.push_back(name);
      ws.truth.corpus_count.push_back(0);
    }
    return it->second;
  };
  for (const Mention& m : corpus) {
    if (m.truth) ++ws.truth.corpus_count[static_cast<std::size_t>(label_of(*m.truth))];
  }
  ws.truth.label.assign(ws.corpus_ids.size(), -1);
  ws.truth.synthetic.assign(ws.corpus_ids.size(), 0);
  for (std::size_t i = 0; i < ws.corpus_ids.size(); ++i) {
    if (ws.corpus_ids[i]) {
      const Mention& m = corpus[*ws.corpus_ids[i]];
      if (m.truth) ws.truth.label[i] = label_of(*m.truth);
    } else {
      ws.truth.synthetic[i] = 1;
    }
  }
  for (WorkspaceQuery& wq : ws.queries) {
    if (!wq.resolvable) continue;
    if (wq.truth) {
      wq.label = label_of(*wq.truth);
      if (!ws.corpus_ids[wq.node]) ws.truth.label[wq.node] = wq.label;
    }
  }

  ws.scorer = std::make_unique<Scorer>(nodes, model, options.parallelism);

  start = std::chrono::steady_clock::now();
  for (WorkspaceQuery& wq : ws.queries) {
    if (!wq.resolvable) continue;
    std::vector<MentionFeatures> canopy_nodes;
    canopy_nodes.reserve(wq.canopy.size());
    for (MentionId l : wq.canopy) canopy_nodes.push_back(nodes[l]);
    wq.influence = ComputeInfluence(canopy_nodes, wq.canopy, nodes[wq.node],
                                    model, options.parallelism);
    if (std::isfinite(options.influence_floor)) {
      InfluenceScores kept;
      for (std::size_t i = 0; i < wq.influence.size(); ++i) {
        if (wq.influence.values[i] >= options.influence_floor ||
            wq.influence.ids[i] == wq.node) {
          kept.ids.push_back(wq.influence.ids[i]);
          kept.values.push_back(wq.influence.values[i]);
        }
      }
      wq.influence = std::move(kept);
    }
    wq.attract = BuildAttract(wq.influence, options.decay_p);
    wq.repel = BuildRepel(wq.influence, options.decay_p);
  }
  ws.table_seconds = Seconds(start);
  return ws;
}

void RunTrace::WriteCsv(std::ostream& out) const {
  out << "step,accepted,delta,f1_q\n";
  for (const TraceRecord& r : records) {
    out << r.step << ',' << (r.accepted ? 1 : 0) << ',' << r.delta << ',';
    if (!std::isnan(r.f1)) out << r.f1;
    out << '\n';
  }
}

double BaselineLogProposalRatio(const EntityState& before, const Move& move) {
  const double k = static_cast<double>(before.num_entities());
  const std::size_t s = before.Size(move.source);
  const bool fresh =
      move.target == kFreshEntity || move.target == before.next_entity_id();
  const std::size_t t = fresh ? 0 : before.Size(move.target);
  const double c_fwd = (k - 1.0) + (s > 1 ? 1.0 : 0.0);
  const double log_fwd =
      -std::log(k) - std::log(c_fwd) - std::log(static_cast<double>(s));
  const double k_after = k + (fresh ? 1.0 : 0.0) - (s == 1 ? 1.0 : 0.0);
  const std::size_t t_after = t + 1;
  const double c_rev = (k_after - 1.0) + (t_after > 1 ? 1.0 : 0.0);
  const double log_rev = -std::log(k_after) - std::log(c_rev) -
                         std::log(static_cast<double>(t_after));
  return log_rev - log_fwd;
}

namespace {

enum class Draw { kDegenerate, kNoOp, kMove };

struct Proposal {
  Draw kind = Draw::kDegenerate;
  bool query_branch = false;
  Move move;
};

bool IsFresh(const EntityState& state, EntityId e) {
  return e == kFreshEntity || e == state.next_entity_id();
}

Proposal Finish(const EntityState& state, Proposal p) {
  p.kind = state.IsNoOp(p.move) ? Draw::kNoOp : Draw::kMove;
  return p;
}

// Target outside the query entity (fresh allowed), source any other entity.
Proposal BackOut(const EntityState& state, EntityId query_entity, Rng& rng) {
  Proposal p;
  const EntityId target = state.RandomEntityExcept(query_entity, true, rng);
  if (target == kNoEntity) return p;
  const EntityId source = IsFresh(state, target)
                              ? state.RandomEntity(rng)
                              : state.RandomEntityExcept(target, false, rng);
  if (source == kNoEntity) return p;
  p.move = {state.RandomMember(source, rng), source, target};
  return Finish(state, p);
}

bool HasBranches(Algorithm a) {
  return a == Algorithm::kTargetFixed || a == Algorithm::kHybridAttract ||
         a == Algorithm::kHybridRepel;
}

// `query_branch` is drawn once per step by the caller, so retries of a
// degenerate draw stay in the same branch.
Proposal DrawProposal(const SamplerConfig& cfg, const SamplingContext& ctx,
                      const EntityState& state, bool query_branch, Rng& rng) {
  Proposal p;
  p.query_branch = query_branch;
  if (state.num_entities() == 0) return p;
  switch (cfg.algorithm) {
    case Algorithm::kBaseline: {
      const EntityId source = state.RandomEntity(rng);
      const EntityId target =
          state.RandomEntityExcept(source, state.Size(source) > 1, rng);
      if (target == kNoEntity) return p;
      p.move = {state.RandomMember(source, rng), source, target};
      return Finish(state, p);
    }
    case Algorithm::kTargetFixed: {
      const EntityId q = state.EntityOf(ctx.query_node);
      if (query_branch) {
        const EntityId source = state.RandomEntityExcept(q, false, rng);
        if (source == kNoEntity) return p;
        p.move = {state.RandomMember(source, rng), source, q};
        return Finish(state, p);
      }
      return BackOut(state, q, rng);
    }
    case Algorithm::kQueryProportional: {
      const MentionId m1 = ctx.table->Draw(rng);
      MentionId m2 = ctx.table->Draw(rng);
      for (int r = 0; m2 == m1 && r < kMaxRetries; ++r) {
        m2 = ctx.table->Draw(rng);
      }
      if (m1 == m2) return p;
      p.move = {m1, state.EntityOf(m1), state.EntityOf(m2)};
      return Finish(state, p);
    }
    case Algorithm::kHybridAttract: {
      const EntityId q = state.EntityOf(ctx.query_node);
      if (query_branch) {
        const MentionId m = ctx.table->Draw(rng);
        p.move = {m, state.EntityOf(m), q};
        return Finish(state, p);
      }
      return BackOut(state, q, rng);
    }
    case Algorithm::kHybridRepel: {
      const EntityId q = state.EntityOf(ctx.query_node);
      if (query_branch) {
        const MentionId m = ctx.table->Draw(rng);
        const EntityId target = state.RandomEntityExcept(q, true, rng);
        if (target == kNoEntity) return p;
        p.move = {m, state.EntityOf(m), target};
        return Finish(state, p);
      }
      return BackOut(state, kNoEntity, rng);
    }
  }
  return p;
}

}  // namespace

StepOutcome SampleStep(const SamplerConfig& cfg, const SamplingContext& ctx,
                       EntityState& state, Rng& rng) {
  StepOutcome out;
  Proposal p;
  const bool query_branch =
      HasBranches(cfg.algorithm) && rng.Uniform() < cfg.tau_alpha;
  for (int attempt = 0; attempt < kMaxRetries; ++attempt) {
    p = DrawProposal(cfg, ctx, state, query_branch, rng);
    if (p.kind != Draw::kDegenerate) break;
  }
  out.query_branch = p.query_branch;
  if (p.kind == Draw::kDegenerate) return out;
  out.formed = true;
  out.move = p.move;
  if (p.kind == Draw::kNoOp) return out;

  out.delta = ctx.scorer->Delta(state, p.move).value;
  double log_ratio = out.delta;
  if (cfg.algorithm == Algorithm::kBaseline &&
      cfg.acceptance == AcceptanceMode::kMetropolis) {
    log_ratio += BaselineLogProposalRatio(state, p.move);
  }
  out.accepted = Accept(log_ratio, cfg.acceptance, rng);
  if (out.accepted) out.receiver = state.Apply(p.move);
  return out;
}

SamplerResult RunSampler(EntityState state, SamplingContext ctx,
                         const SamplerConfig& cfg,
                         const StepObserver& observer) {
  cfg.Validate();
  if (ctx.scorer == nullptr) throw std::invalid_argument("sampler needs a scorer");
  if (cfg.algorithm != Algorithm::kBaseline) {
    if (!state.Contains(ctx.query_node)) {
      throw ContractError("query node is not part of the state");
    }
    const bool needs_table = cfg.algorithm == Algorithm::kQueryProportional ||
                             cfg.algorithm == Algorithm::kHybridAttract ||
                             cfg.algorithm == Algorithm::kHybridRepel;
    if (needs_table && (ctx.table == nullptr || ctx.table->size() == 0)) {
      throw std::invalid_argument("sampler needs an influence table");
    }
  }
  SamplerResult result;
  RunTrace& trace = result.trace;
  if (cfg.record_trace) trace.records.reserve(cfg.samples);
  Rng rng(cfg.seed);
  ctx.f1.Reset(state);
  ConvergenceMonitor monitor(cfg.window, cfg.patience);
  for (std::uint64_t step = 1; step <= cfg.samples; ++step) {
    const StepOutcome out = SampleStep(cfg, ctx, state, rng);
    ++trace.proposals;
    if (out.query_branch) ++trace.query_branch;
    if (out.accepted) {
      ++trace.accepted;
      ctx.f1.Update(state, out.move, out.receiver);
    }
    if (cfg.record_trace) {
      trace.records.push_back({step, out.accepted, out.delta, ctx.f1.F1()});
    }
    if (observer) observer(step, state);
    monitor.Record(out.accepted);
    if (cfg.adaptive_stop && monitor.converged()) {
      trace.stopped_early = step < cfg.samples;
      break;
    }
  }
  result.state = std::move(state);
  return result;
}

namespace {

SamplerResult RunWith(Algorithm algorithm, EntityState state,
                      const Scorer& scorer, MentionId query_node,
                      const AliasTable* table, SamplerConfig cfg,
                      F1Tracker f1) {
  cfg.algorithm = algorithm;
  SamplingContext ctx;
  ctx.scorer = &scorer;
  ctx.query_node = query_node;
  ctx.table = table;
  ctx.f1 = f1;
  return RunSampler(std::move(state), ctx, cfg);
}

}  // namespace

SamplerResult BaselineEr(EntityState state, const Scorer& scorer,
                         SamplerConfig cfg, F1Tracker f1) {
  return RunWith(Algorithm::kBaseline, std::move(state), scorer, 0, nullptr,
                 cfg, f1);
}

SamplerResult TargetFixed(EntityState state, const Scorer& scorer,
                          MentionId query_node, SamplerConfig cfg,
                          F1Tracker f1) {
  return RunWith(Algorithm::kTargetFixed, std::move(state), scorer, query_node,
                 nullptr, cfg, f1);
}

SamplerResult QueryProportional(EntityState state, const Scorer& scorer,
                                MentionId query_node, const AliasTable& attract,
                                SamplerConfig cfg, F1Tracker f1) {
  return RunWith(Algorithm::kQueryProportional, std::move(state), scorer,
                 query_node, &attract, cfg, f1);
}

SamplerResult HybridAttract(EntityState state, const Scorer& scorer,
                            MentionId query_node, const AliasTable& attract,
                            SamplerConfig cfg, F1Tracker f1) {
  return RunWith(Algorithm::kHybridAttract, std::move(state), scorer,
                 query_node, &attract, cfg, f1);
}

SamplerResult HybridRepel(EntityState state, const Scorer& scorer,
                          MentionId query_node, const AliasTable& repel,
                          SamplerConfig cfg, F1Tracker f1) {
  return RunWith(Algorithm::kHybridRepel, std::move(state), scorer, query_node,
                 &repel, cfg, f1);
}

SamplingContext MakeContext(const Workspace& ws, std::size_t query,
                            Algorithm algorithm) {
  const WorkspaceQuery& wq = ws.queries.at(query);
  SamplingContext ctx;
  ctx.scorer = ws.scorer.get();
  ctx.query_node = wq.node;
  ctx.table = UsesRepelTable(algorithm) ? &wq.repel : &wq.attract;
  ctx.f1 = F1Tracker(&ws.truth, wq.node, wq.label);
  return ctx;
}

SamplerResult ResolveQuery(const Workspace& ws, std::size_t query,
                           const SamplerConfig& cfg) {
  if (!ws.queries.at(query).resolvable) {
    throw std::invalid_argument("query has an empty canopy");
  }
  return RunSampler(ws.InitialState(cfg.algorithm),
                    MakeContext(ws, query, cfg.algorithm), cfg);
}

}  // namespace qder
