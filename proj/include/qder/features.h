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


#ifndef QDER_FEATURES_H_
#define QDER_FEATURES_H_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qder/corpus.h"
#include "qder/model.h"

namespace qder {

enum class FeatureKind {
  // Surface-string features.
  kEqualStrings,
  kEqualFirstChar,
  kEqualSecondChar,
  kEqualSubstrings,
  kEqualLengths,
  kMatchingFirstTerm,
  // Context features; silent when either side has context disabled.
  kSimilarity,
  kMatchingTerms,
  kTokenInContext,
  kMatchingKeyword,
  kKeywordInToken,
  kExtraToken,
  kMatchingTokenInContext,
  // Entity-wide features.
  kSimilarNeighbor,
  kMatchingDocument,
  // Restates another row from the negative side. Loaded, never scored.
  kComplement,
};

enum class FeatureClass { kToken, kContext, kEntity, kInert };

FeatureClass ClassOf(FeatureKind kind);
std::string_view KindName(FeatureKind kind);

// One weight row. A binary row adds `pos` when its predicate holds and `neg`
// otherwise. A similarity row is one bucket [min, next higher min) of the
// context cosine and adds pos + neg when the cosine falls inside it.
struct FeatureSpec {
  std::string id;
  FeatureKind kind = FeatureKind::kEqualStrings;
  double pos = 0.0;
  double neg = 0.0;
  std::map<std::string, std::string> params;

  double Param(const std::string& key, double fallback) const;
};

class FeatureModel {
 public:
  FeatureModel() = default;
  // Throws ConfigError when a weight has the wrong sign or the similarity
  // buckets do not partition [0, 1].
  explicit FeatureModel(std::vector<FeatureSpec> rows);

  const std::vector<FeatureSpec>& rows() const { return rows_; }
  // Bucket lower bounds in decreasing order with their weights.
  const std::vector<std::pair<double, double>>& buckets() const {
    return buckets_;
  }
  bool has_entity_features() const { return has_entity_features_; }
  // Cosine at or above which two members count as similar neighbors.
  double neighbor_threshold() const { return neighbor_threshold_; }

  std::string ToConfigText() const;

 private:
  std::vector<FeatureSpec> rows_;
  std::vector<std::pair<double, double>> buckets_;
  bool has_entity_features_ = false;
  double neighbor_threshold_ = 0.5;
};

// The default weights: one row per line of the published feature table.
FeatureModel DefaultFeatureModel();
FeatureModel ParseFeatureModel(std::istream& in);
FeatureModel LoadFeatureModel(const std::string& path);

// Everything the scorer needs from one node, precomputed once.
struct MentionFeatures {
  std::string surface;  // lowercased
  std::vector<std::string> tokens;
  std::string first_term;
  bool context_enabled = true;
  SparseVector tfidf;
  TokenBag context;
  std::vector<std::string> keywords;  // lowercased, sorted, unique
  // Empty for a synthetic node that belongs to no document.
  std::string doc_id;
};

MentionFeatures ExtractFeatures(const Mention& m, const CorpusStats& stats,
                                bool context_enabled = true);
MentionFeatures ExtractQueryFeatures(const QueryNode& qn,
                                     std::span<const Mention> corpus,
                                     const CorpusStats& stats);

double PairwiseScore(const MentionFeatures& a, const MentionFeatures& b,
                     const FeatureModel& model);
double PairwiseScore(const Mention& a, const Mention& b,
                     const FeatureModel& model, const CorpusStats& stats);

bool SimilarNeighbors(const MentionFeatures& a, const MentionFeatures& b,
                      const FeatureModel& model);
bool SameDocument(const MentionFeatures& a, const MentionFeatures& b);

double EntityScore(std::span<const MentionFeatures* const> members,
                   const FeatureModel& model);
double EntityScore(std::span<const Mention> members, const FeatureModel& model,
                   const CorpusStats& stats);

struct ScoreDelta {
  double value = 0.0;
  std::vector<EntityId> touched_entities;
};

enum class Parallelism { kSerial, kOpenMP };

// Scores states whose mention ids index `nodes`. Pair scores are cached in
// dense matrices when the node count is at most dense_limit.
class Scorer {
 public:
  static constexpr std::size_t kDefaultDenseLimit = 2048;

  Scorer(std::vector<MentionFeatures> nodes, const FeatureModel& model,
         Parallelism parallelism = Parallelism::kOpenMP,
         std::size_t dense_limit = kDefaultDenseLimit);

  std::size_t size() const { return nodes_.size(); }
  const MentionFeatures& node(std::size_t i) const { return nodes_[i]; }
  const FeatureModel& model() const { return model_; }
  bool dense() const { return dense_; }

  double Pair(MentionId a, MentionId b) const;
  bool Similar(MentionId a, MentionId b) const;
  bool SameDoc(MentionId a, MentionId b) const;

  double EntityScore(std::span<const MentionId> members) const;
  double EntityTotal(std::span<const MentionId> members) const;
  double ModelScore(const EntityState& state) const;
  // Rescores only the two entities of the move. Throws ContractError when
  // the mention is not in the source.
  ScoreDelta Delta(const EntityState& state, const Move& move) const;

  // Dense pair matrix, row-major, exposed for the benchmark.
  const std::vector<double>& pair_matrix() const { return pair_; }

 private:
  void BuildSerial();
  void BuildParallel();
  void FillRow(std::size_t i);

  std::vector<MentionFeatures> nodes_;
  FeatureModel model_;
  bool dense_ = false;
  std::vector<double> pair_;
  // bit 0: similar neighbors, bit 1: same document.
  std::vector<std::uint8_t> flags_;
};

// Builds the dense pair-score matrix either serially or with OpenMP.
std::vector<double> PairMatrix(std::span<const MentionFeatures> nodes,
                               const FeatureModel& model,
                               Parallelism parallelism);

}  // namespace qder

#endif  // QDER_FEATURES_H_
