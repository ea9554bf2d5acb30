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


#include "qder/blocking.h"

#include <algorithm>
#include <stdexcept>

namespace qder {

GramBag Grams(std::string_view s, int q) {
  if (q < 1) throw std::invalid_argument("q must be at least 1");
  GramBag out;
  if (s.empty()) return out;
  std::string padded(static_cast<std::size_t>(q - 1), '#');
  for (char c : s) {
    padded.push_back((c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a')
                                            : c);
  }
  padded.append(static_cast<std::size_t>(q - 1), '#');
  const std::size_t len = static_cast<std::size_t>(q);
  for (std::size_t i = 0; i + len <= padded.size(); ++i) {
    ++out[padded.substr(i, len)];
  }
  return out;
}

std::size_t GramCount(const GramBag& bag) {
  std::size_t n = 0;
  for (const auto& [g, c] : bag) n += static_cast<std::size_t>(c);
  return n;
}

double GramJaccard(const GramBag& a, const GramBag& b) {
  std::size_t inter = 0;
  for (const auto& [g, c] : a) {
    auto it = b.find(g);
    if (it != b.end()) inter += static_cast<std::size_t>(std::min(c, it->second));
  }
  const std::size_t uni = GramCount(a) + GramCount(b) - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

QGramIndex::QGramIndex(std::span<const Mention> corpus, int q) : q_(q) {
  if (q < 1) throw std::invalid_argument("q must be at least 1");
  gram_counts_.resize(corpus.size(), 0);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const GramBag bag = Grams(corpus[i].surface, q);
    gram_counts_[i] = GramCount(bag);
    for (const auto& [gram, count] : bag) {
      // Ids arrive in increasing order, so lists stay sorted.
      postings_[gram].push_back({static_cast<MentionId>(i), count});
    }
  }
}

std::span<const Posting> QGramIndex::PostingsOf(std::string_view gram) const {
  auto it = postings_.find(std::string(gram));
  if (it == postings_.end()) return {};
  return it->second;
}

std::vector<MentionId> QGramIndex::ApproximateMatch(std::string_view s,
                                                    double min_jaccard) const {
  if (min_jaccard <= 0.0) {
    // Every mention qualifies, including those sharing no gram.
    std::vector<MentionId> all(gram_counts_.size());
    for (std::size_t i = 0; i < all.size(); ++i) {
      all[i] = static_cast<MentionId>(i);
    }
    return all;
  }
  const GramBag query = Grams(s, q_);
  const std::size_t query_count = GramCount(query);
  std::unordered_map<MentionId, std::size_t> inter;
  for (const auto& [gram, count] : query) {
    for (const Posting& p : PostingsOf(gram)) {
      inter[p.id] += static_cast<std::size_t>(std::min(count, p.count));
    }
  }
  std::vector<MentionId> out;
  for (const auto& [id, shared] : inter) {
    const std::size_t uni = query_count + gram_counts_[id] - shared;
    const double jaccard =
        static_cast<double>(shared) / static_cast<double>(uni);
    if (jaccard >= min_jaccard) out.push_back(id);
  }
  std::sort(out.begin(), out.end());
  return out;
}

Canopy BuildCanopy(const QueryNode& qn, const QGramIndex& index,
                   double min_jaccard) {
  Canopy c;
  c.query = qn;
  c.members = index.ApproximateMatch(qn.mention.surface, min_jaccard);
  return c;
}

std::size_t Selectivity(const QueryNode& qn, const QGramIndex& index,
                        double min_jaccard) {
  return BuildCanopy(qn, index, min_jaccard).members.size();
}

}  // namespace qder
