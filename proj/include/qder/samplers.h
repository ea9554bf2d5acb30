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


#ifndef QDER_SAMPLERS_H_
#define QDER_SAMPLERS_H_

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qder/blocking.h"
#include "qder/corpus.h"
#include "qder/features.h"
#include "qder/influence.h"
#include "qder/model.h"
#include "qder/rng.h"

namespace qder {

enum class Algorithm {
  kBaseline,
  kTargetFixed,
  kQueryProportional,
  kHybridAttract,
  kHybridRepel,
};

// Accepts "hybrid-attract" and "hybrid_attract" spellings.
std::optional<Algorithm> ParseAlgorithm(std::string_view name);
std::string_view AlgorithmName(Algorithm a);
// Hybrid-repel starts from one cluster, everything else from singletons.
bool StartsFromSingleCluster(Algorithm a);
bool UsesRepelTable(Algorithm a);

inline constexpr int kMaxRetries = 8;
inline constexpr std::size_t kDefaultWindow = 100;
inline constexpr std::size_t kDefaultPatience = 5;

struct SamplerConfig {
  Algorithm algorithm = Algorithm::kHybridAttract;
  double tau_alpha = 0.9;
  std::size_t samples = 1000;
  AcceptanceMode acceptance = AcceptanceMode::kGreedy;
  std::uint64_t seed = 0;
  // Stop once `patience` consecutive windows of `window` proposals had no
  // acceptance.
  bool adaptive_stop = false;
  std::size_t window = kDefaultWindow;
  std::size_t patience = kDefaultPatience;
  bool record_trace = true;

  void Validate() const;
};

// Tracks acceptance over the last `window` proposals and over consecutive
// non-overlapping windows.
class ConvergenceMonitor {
 public:
  explicit ConvergenceMonitor(std::size_t window = kDefaultWindow,
                              std::size_t patience = kDefaultPatience);

  void Record(bool accepted);
  std::size_t window() const { return window_; }
  std::size_t filled() const { return filled_; }
  std::size_t accepted_in_window() const { return accepted_; }
  // Accepted fraction over the filled part of the window; 0 when empty.
  double Fraction() const;
  bool converged() const { return zero_windows_ >= patience_; }
  // The last min(filled, window) outcomes, oldest first.
  std::vector<bool> Window() const;

 private:
  std::size_t window_;
  std::size_t patience_;
  std::vector<std::uint8_t> ring_;
  std::size_t head_ = 0;
  std::size_t filled_ = 0;
  std::size_t accepted_ = 0;
  std::size_t block_steps_ = 0;
  std::size_t block_accepts_ = 0;
  std::size_t zero_windows_ = 0;
};

// Labels of workspace nodes for query-specific F1.
struct TruthIndex {
  std::vector<int> label;  // per node; -1 when unknown
  std::vector<std::uint8_t> synthetic;  // per node; query templates
  std::vector<std::string> names;  // label id -> gold label
  std::vector<std::size_t> corpus_count;  // label id -> corpus mentions

  int LabelId(std::string_view name) const;
};

// Query-entity statistics, updated incrementally after each accepted move.
class F1Tracker {
 public:
  F1Tracker() = default;
  // `label` is the query's label id, -1 disables tracking.
  F1Tracker(const TruthIndex* truth, MentionId query_node, int label);

  bool enabled() const { return truth_ != nullptr && relevant_ > 0; }
  void Reset(const EntityState& state);
  void Update(const EntityState& state, const Move& move, EntityId receiver);
  double F1() const;
  std::size_t retrieved() const { return retrieved_; }
  std::size_t intersection() const { return intersection_; }
  std::size_t relevant() const { return relevant_; }

 private:
  const TruthIndex* truth_ = nullptr;
  MentionId query_ = 0;
  int label_ = -1;
  EntityId entity_ = kNoEntity;
  std::size_t retrieved_ = 0;
  std::size_t intersection_ = 0;
  std::size_t relevant_ = 0;
};

struct WorkspaceQuery {
  QueryNode query;
  bool resolvable = false;  // false when the canopy came back empty
  MentionId node = 0;       // local id of the query node
  std::vector<MentionId> canopy;  // local ids, query node included
  std::size_t selectivity = 0;    // corpus canopy size
  std::optional<std::string> truth;
  int label = -1;
  InfluenceScores influence;
  AliasTable attract;
  AliasTable repel;
};

struct WorkspaceOptions {
  double min_jaccard = kDefaultMinJaccard;
  double decay_p = kDefaultDecayP;
  double influence_floor = -std::numeric_limits<double>::infinity();
  Parallelism parallelism = Parallelism::kOpenMP;
  // Use every corpus mention instead of the q-gram canopy.
  bool exhaustive = false;
};

// The merged canopies of a set of queries, renumbered 0..n-1, with one
// scorer and per-query influence tables.
struct Workspace {
  std::vector<std::optional<MentionId>> corpus_ids;  // nullopt: template
  std::vector<WorkspaceQuery> queries;
  TruthIndex truth;
  std::unique_ptr<Scorer> scorer;
  double blocking_seconds = 0.0;
  double table_seconds = 0.0;

  std::size_t size() const { return corpus_ids.size(); }
  std::vector<MentionId> Nodes() const;
  EntityState InitialState(Algorithm algorithm) const;
  // Corpus ids of the query entity's members, templates dropped, ascending.
  std::vector<MentionId> QueryEntity(const EntityState& state,
                                     std::size_t query) const;
};

Workspace BuildWorkspace(std::span<const Mention> corpus,
                         const CorpusStats& stats, const QGramIndex& index,
                         std::span<const QueryNode> queries,
                         const FeatureModel& model,
                         const WorkspaceOptions& options = {});

struct TraceRecord {
  std::uint64_t step = 0;
  bool accepted = false;
  double delta = 0.0;
  double f1 = std::numeric_limits<double>::quiet_NaN();
};

struct RunTrace {
  std::vector<TraceRecord> records;
  std::uint64_t proposals = 0;
  std::uint64_t accepted = 0;
  // Proposals that came from the query-focused branch.
  std::uint64_t query_branch = 0;
  bool stopped_early = false;

  void WriteCsv(std::ostream& out) const;
};

// What one sampler needs besides the state.
struct SamplingContext {
  const Scorer* scorer = nullptr;
  // Unused by the baseline.
  MentionId query_node = 0;
  const AliasTable* table = nullptr;
  F1Tracker f1;
};

struct StepOutcome {
  bool formed = false;        // a proposal was drawn within the retry bound
  bool query_branch = false;  // the query-focused branch was taken
  bool accepted = false;
  double delta = 0.0;
  Move move;
  EntityId receiver = kNoEntity;
};

// One proposal of `cfg.algorithm` against `state`, applied if accepted.
StepOutcome SampleStep(const SamplerConfig& cfg, const SamplingContext& ctx,
                       EntityState& state, Rng& rng);

// Log of the reverse over forward proposal probability for a baseline move
// (the Hastings correction). The move must not be a no-op.
double BaselineLogProposalRatio(const EntityState& before, const Move& move);

using StepObserver =
    std::function<void(std::uint64_t step, const EntityState& state)>;

struct SamplerResult {
  EntityState state;
  RunTrace trace;
};

// Runs cfg.samples proposals (fewer with adaptive stop) from `state` with
// Rng(cfg.seed).
SamplerResult RunSampler(EntityState state, SamplingContext ctx,
                         const SamplerConfig& cfg,
                         const StepObserver& observer = nullptr);

SamplerResult BaselineEr(EntityState state, const Scorer& scorer,
                         SamplerConfig cfg, F1Tracker f1 = {});
SamplerResult TargetFixed(EntityState state, const Scorer& scorer,
                          MentionId query_node, SamplerConfig cfg,
                          F1Tracker f1 = {});
SamplerResult QueryProportional(EntityState state, const Scorer& scorer,
                                MentionId query_node, const AliasTable& attract,
                                SamplerConfig cfg, F1Tracker f1 = {});
SamplerResult HybridAttract(EntityState state, const Scorer& scorer,
                            MentionId query_node, const AliasTable& attract,
                            SamplerConfig cfg, F1Tracker f1 = {});
SamplerResult HybridRepel(EntityState state, const Scorer& scorer,
                          MentionId query_node, const AliasTable& repel,
                          SamplerConfig cfg, F1Tracker f1 = {});

// Scorer, query node, table and F1 tracker of one workspace query.
SamplingContext MakeContext(const Workspace& ws, std::size_t query,
                            Algorithm algorithm);

// Runs the configured algorithm for one workspace query from its initial
// state.
SamplerResult ResolveQuery(const Workspace& ws, std::size_t query,
                           const SamplerConfig& cfg);

}  // namespace qder

#endif  // QDER_SAMPLERS_H_
