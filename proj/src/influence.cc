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


#include "qder/influence.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace qder {

InfluenceScores ComputeInfluence(std::span<const MentionFeatures> nodes,
                                 std::span<const MentionId> ids,
                                 const MentionFeatures& query,
                                 const FeatureModel& model,
                                 Parallelism parallelism) {
  if (nodes.size() != ids.size()) {
    throw std::invalid_argument("influence: ids and nodes differ in length");
  }
  InfluenceScores out;
  out.ids.assign(ids.begin(), ids.end());
  out.values.assign(ids.size(), 0.0);
  const auto n = static_cast<std::int64_t>(nodes.size());
  if (parallelism == Parallelism::kSerial) {
    for (std::int64_t i = 0; i < n; ++i) {
      out.values[i] = PairwiseScore(nodes[i], query, model);
    }
  } else {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
      out.values[i] = PairwiseScore(nodes[i], query, model);
    }
  }
  return out;
}

InfluenceScores ComputeInfluence(const Canopy& canopy,
                                 std::span<const Mention> corpus,
                                 const CorpusStats& stats,
                                 const FeatureModel& model,
                                 Parallelism parallelism) {
  std::vector<MentionFeatures> nodes;
  nodes.reserve(canopy.members.size());
  for (MentionId id : canopy.members) {
    nodes.push_back(ExtractFeatures(corpus[id], stats));
  }
  const MentionFeatures query =
      ExtractQueryFeatures(canopy.query, corpus, stats);
  return ComputeInfluence(nodes, canopy.members, query, model, parallelism);
}

std::vector<double> DecayMasses(const InfluenceScores& scores, double p, int r,
                                bool descending) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("p must be in (0, 1)");
  if (r != 1) throw std::invalid_argument("only r = 1 is supported");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double sa = scores.values[a];
    const double sb = scores.values[b];
    if (sa != sb) return descending ? sa > sb : sa < sb;
    return scores.ids[a] < scores.ids[b];
  });
  std::vector<double> masses(n, 0.0);
  double weight = p;
  double total = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    masses[order[k]] = weight;
    total += weight;
    weight *= 1.0 - p;
  }
  for (double& m : masses) m /= total;
  return masses;
}

AliasTable::AliasTable(std::vector<MentionId> ids,
                       std::span<const double> masses, Direction direction,
                       std::size_t* ops)
    : ids_(std::move(ids)), direction_(direction) {
  const std::size_t n = ids_.size();
  if (n == 0) throw std::invalid_argument("alias table needs at least one id");
  if (masses.size() != n) {
    throw std::invalid_argument("alias table: ids and masses differ in length");
  }
  double total = 0.0;
  for (double m : masses) {
    if (!(m >= 0.0) || !std::isfinite(m)) {
      throw std::invalid_argument("alias table: negative mass");
    }
    total += m;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("alias table: masses do not sum to 1");
  }

  prob_.assign(n, 0.0);
  alias_.resize(n);
  std::iota(alias_.begin(), alias_.end(), 0u);
  std::vector<double> scaled(n);
  std::vector<std::uint32_t> small;
  std::vector<std::uint32_t> large;
  for (std::size_t i = 0; i < n; ++i) {
    scaled[i] = masses[i] * static_cast<double>(n);
    (scaled[i] < 1.0 ? small : large).push_back(static_cast<std::uint32_t>(i));
    if (ops != nullptr) ++*ops;
  }
  while (!small.empty() && !large.empty()) {
    const std::uint32_t s = small.back();
    small.pop_back();
    const std::uint32_t l = large.back();
    prob_[s] = scaled[s];
    alias_[s] = l;
    scaled[l] = (scaled[l] + scaled[s]) - 1.0;
    if (scaled[l] < 1.0) {
      large.pop_back();
      small.push_back(l);
    }
    if (ops != nullptr) ++*ops;
  }
  // Leftovers are full cells up to rounding.
  for (std::uint32_t l : large) prob_[l] = 1.0;
  for (std::uint32_t s : small) prob_[s] = 1.0;
  if (ops != nullptr) *ops += large.size() + small.size();
}

std::vector<double> AliasTable::Decode() const {
  const std::size_t n = ids_.size();
  std::vector<double> out(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    out[k] += prob_[k];
    if (prob_[k] < 1.0) out[alias_[k]] += 1.0 - prob_[k];
  }
  for (double& v : out) v /= static_cast<double>(n);
  return out;
}

AliasTable BuildAttract(const InfluenceScores& scores, double p) {
  const std::vector<double> masses = DecayMasses(scores, p, 1, true);
  return AliasTable(scores.ids, masses, Direction::kAttract);
}

AliasTable BuildRepel(const InfluenceScores& scores, double p) {
  const std::vector<double> masses = DecayMasses(scores, p, 1, false);
  return AliasTable(scores.ids, masses, Direction::kRepel);
}

std::vector<MentionId> ThresholdCanopy(const InfluenceScores& scores,
                                       double floor) {
  std::vector<MentionId> out;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores.values[i] >= floor) out.push_back(scores.ids[i]);
  }
  return out;
}

}  // namespace qder
