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


#ifndef QDER_INFLUENCE_H_
#define QDER_INFLUENCE_H_

#include <cstdint>
#include <span>
#include <vector>

#include "qder/blocking.h"
#include "qder/corpus.h"
#include "qder/features.h"
#include "qder/rng.h"

namespace qder {

inline constexpr double kDefaultDecayP = 0.05;

// Score of each id against the query node, parallel arrays.
struct InfluenceScores {
  std::vector<MentionId> ids;
  std::vector<double> values;

  std::size_t size() const { return ids.size(); }
};

// Pairwise score of every node against the query. Entity-wide features do
// not take part. `ids` labels the nodes in the result.
InfluenceScores ComputeInfluence(std::span<const MentionFeatures> nodes,
                                 std::span<const MentionId> ids,
                                 const MentionFeatures& query,
                                 const FeatureModel& model,
                                 Parallelism parallelism = Parallelism::kOpenMP);
InfluenceScores ComputeInfluence(const Canopy& canopy,
                                 std::span<const Mention> corpus,
                                 const CorpusStats& stats,
                                 const FeatureModel& model,
                                 Parallelism parallelism = Parallelism::kOpenMP);

// Masses aligned with scores.ids. Ids are ranked by score (descending when
// `descending`, ties by ascending id) and rank k gets weight p (1-p)^k,
// normalized. Only r = 1 is supported.
std::vector<double> DecayMasses(const InfluenceScores& scores,
                                double p = kDefaultDecayP, int r = 1,
                                bool descending = true);

enum class Direction { kAttract, kRepel };

// Vose alias table. Draws cost one cell choice and one biased coin.
class AliasTable {
 public:
  AliasTable() = default;
  // Throws std::invalid_argument when masses are negative, do not sum to 1
  // within 1e-9, or are empty. `ops`, when given, is incremented once per
  // worklist step so tests can check the construction is linear.
  AliasTable(std::vector<MentionId> ids, std::span<const double> masses,
             Direction direction = Direction::kAttract,
             std::size_t* ops = nullptr);

  std::size_t size() const { return ids_.size(); }
  Direction direction() const { return direction_; }
  const std::vector<MentionId>& ids() const { return ids_; }
  const std::vector<double>& prob() const { return prob_; }
  const std::vector<std::uint32_t>& alias() const { return alias_; }

  MentionId Draw(Rng& rng) const {
    const auto k = static_cast<std::size_t>(rng.UniformIndex(ids_.size()));
    return rng.Uniform() < prob_[k] ? ids_[k] : ids_[alias_[k]];
  }

  // The distribution encoded by the table, per cell.
  std::vector<double> Decode() const;

 private:
  std::vector<MentionId> ids_;
  std::vector<double> prob_;
  std::vector<std::uint32_t> alias_;
  Direction direction_ = Direction::kAttract;
};

AliasTable BuildAttract(const InfluenceScores& scores,
                        double p = kDefaultDecayP);
// Lowest-influence ids get the most mass.
AliasTable BuildRepel(const InfluenceScores& scores, double p = kDefaultDecayP);

// Ids whose score is at least `floor`, in input order.
std::vector<MentionId> ThresholdCanopy(const InfluenceScores& scores,
                                       double floor);

}  // namespace qder

#endif  // QDER_INFLUENCE_H_
