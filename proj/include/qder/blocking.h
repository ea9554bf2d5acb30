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


#ifndef QDER_BLOCKING_H_
#define QDER_BLOCKING_H_

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "qder/corpus.h"

namespace qder {

inline constexpr int kDefaultQ = 3;
inline constexpr double kDefaultMinJaccard = 0.3;

// Gram -> multiplicity.
using GramBag = std::map<std::string, int, std::less<>>;

// Lowercased s padded with q-1 '#' on both sides, all length-q windows.
// Empty s gives an empty bag. Throws std::invalid_argument if q < 1.
GramBag Grams(std::string_view s, int q);
std::size_t GramCount(const GramBag& bag);

// Multiset Jaccard: sum of min counts over sum of max counts.
double GramJaccard(const GramBag& a, const GramBag& b);

struct Posting {
  MentionId id;
  int count;
};

class QGramIndex {
 public:
  QGramIndex() = default;
  QGramIndex(std::span<const Mention> corpus, int q = kDefaultQ);

  int q() const { return q_; }
  std::size_t num_mentions() const { return gram_counts_.size(); }
  std::size_t num_grams() const { return postings_.size(); }
  // Sorted by id, one entry per mention.
  std::span<const Posting> PostingsOf(std::string_view gram) const;
  std::size_t GramCountOf(MentionId id) const { return gram_counts_[id]; }

  // Ids whose gram Jaccard with s is at least min_jaccard, ascending.
  std::vector<MentionId> ApproximateMatch(std::string_view s,
                                          double min_jaccard) const;

 private:
  int q_ = kDefaultQ;
  std::unordered_map<std::string, std::vector<Posting>> postings_;
  std::vector<std::size_t> gram_counts_;
};

struct Canopy {
  QueryNode query;
  // Matching corpus ids, ascending. The query template is not a member
  // unless it is itself a corpus mention.
  std::vector<MentionId> members;
};

Canopy BuildCanopy(const QueryNode& qn, const QGramIndex& index,
                   double min_jaccard = kDefaultMinJaccard);
std::size_t Selectivity(const QueryNode& qn, const QGramIndex& index,
                        double min_jaccard = kDefaultMinJaccard);

}  // namespace qder

#endif  // QDER_BLOCKING_H_
