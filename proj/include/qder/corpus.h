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


#ifndef QDER_CORPUS_H_
#define QDER_CORPUS_H_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace qder {

using MentionId = std::uint32_t;

// Token bag of a context string: lowercase token -> positive count.
using TokenBag = std::map<std::string, int, std::less<>>;

// One extracted surface string plus its document context.
struct Mention {
  MentionId id = 0;
  std::string doc_id;
  std::int64_t start_pos = 0;
  std::string surface;
  // Raw context text, kept so that the canonical jsonl form round-trips.
  std::string context_text;
  TokenBag context;
  std::optional<std::vector<std::string>> keywords;
  std::optional<std::string> truth;
};

enum class ContextLevel { kNone, kParagraph, kDocument };

std::optional<ContextLevel> ParseContextLevel(std::string_view name);
std::string_view ContextLevelName(ContextLevel level);

// A template mention whose entity is the resolution target.
struct QueryNode {
  Mention mention;
  ContextLevel context_level = ContextLevel::kParagraph;
  std::vector<std::string> extra_keywords;
  // Set when the template is itself a corpus mention.
  std::optional<MentionId> corpus_id;
};

enum class CorpusFormat { kJsonl, kTsv };

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Lowercases ASCII letters and splits on every ASCII character that is not
// alphanumeric. Bytes >= 0x80 are kept inside tokens. Empty tokens are
// dropped.
std::vector<std::string> Tokenize(std::string_view text);
TokenBag BagOfWords(std::string_view text);

std::optional<CorpusFormat> ParseCorpusFormat(std::string_view name);

// Ids are assigned densely in record order. Throws ParseError on a
// malformed record or a duplicate (doc_id, start_pos).
std::vector<Mention> ParseCorpus(std::istream& in, CorpusFormat format);
std::vector<Mention> LoadCorpus(const std::string& path, CorpusFormat format);

// Canonical jsonl: one object per line with keys in the order
// doc_id, start_pos, surface, context, truth, keywords.
std::string ToJsonLine(const Mention& m);
void WriteCorpusJsonl(std::ostream& out, std::span<const Mention> corpus);

// Corpus-wide document frequencies. Term ids follow sorted term order, so the
// result does not depend on the order of the corpus.
class CorpusStats {
 public:
  CorpusStats() = default;

  std::size_t doc_count() const { return doc_count_; }
  std::size_t vocabulary_size() const { return terms_.size(); }

  std::optional<std::uint32_t> TermId(std::string_view term) const;
  const std::string& Term(std::uint32_t id) const { return terms_[id]; }
  std::uint32_t DocFreq(std::uint32_t id) const { return doc_freq_[id]; }
  // 0 for a term that never occurs.
  std::uint32_t DocFreq(std::string_view term) const;

  bool operator==(const CorpusStats& other) const {
    return doc_count_ == other.doc_count_ && terms_ == other.terms_ &&
           doc_freq_ == other.doc_freq_;
  }

 private:
  friend CorpusStats ComputeStats(std::span<const Mention> corpus);

  std::size_t doc_count_ = 0;
  std::vector<std::string> terms_;
  std::vector<std::uint32_t> doc_freq_;
  std::unordered_map<std::string, std::uint32_t> ids_;
};

// N = number of distinct doc ids; df(t) = documents whose mention contexts
// contain t. Throws std::invalid_argument on an empty corpus.
CorpusStats ComputeStats(std::span<const Mention> corpus);

// tf-idf weights split into terms known to the corpus statistics and terms
// that are not (those can only match each other).
struct SparseVector {
  std::vector<std::pair<std::uint32_t, double>> known;  // sorted by id
  std::vector<std::pair<std::string, double>> unseen;   // sorted by term

  bool IsZero() const { return known.empty() && unseen.empty(); }
  double Norm() const;
};

// weight(t) = tf(t) * ln(N / df(t)), then L2-normalized. Terms absent from
// the statistics use df = 1. Zero-weight terms are not stored.
SparseVector TfidfVector(const TokenBag& bag, const CorpusStats& stats);
SparseVector TfidfVector(const Mention& m, const CorpusStats& stats);

double Dot(const SparseVector& a, const SparseVector& b);

// Cosine of two tf-idf vectors, clamped to [0, 1]; 0 if either is zero.
double CosineSimilarity(const SparseVector& a, const SparseVector& b);

}  // namespace qder

#endif  // QDER_CORPUS_H_
