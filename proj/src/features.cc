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


#include "qder/features.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "qder/config.h"

namespace qder {
namespace {

struct KindEntry {
  FeatureKind kind;
  std::string_view name;
};

constexpr KindEntry kKinds[] = {
    {FeatureKind::kEqualStrings, "equal_strings"},
    {FeatureKind::kEqualFirstChar, "equal_first_char"},
    {FeatureKind::kEqualSecondChar, "equal_second_char"},
    {FeatureKind::kEqualSubstrings, "equal_substrings"},
    {FeatureKind::kEqualLengths, "equal_lengths"},
    {FeatureKind::kMatchingFirstTerm, "matching_first_term"},
    {FeatureKind::kSimilarity, "similarity"},
    {FeatureKind::kMatchingTerms, "matching_terms"},
    {FeatureKind::kTokenInContext, "token_in_context"},
    {FeatureKind::kMatchingKeyword, "matching_keyword"},
    {FeatureKind::kKeywordInToken, "keyword_in_token"},
    {FeatureKind::kExtraToken, "extra_token"},
    {FeatureKind::kMatchingTokenInContext, "matching_token_in_context"},
    {FeatureKind::kSimilarNeighbor, "similar_neighbor"},
    {FeatureKind::kMatchingDocument, "matching_document"},
    {FeatureKind::kComplement, "complement"},
};

std::optional<FeatureKind> KindFromName(std::string_view name) {
  for (const auto& e : kKinds) {
    if (e.name == name) return e.kind;
  }
  return std::nullopt;
}

std::map<std::string, std::string> ParseParams(const std::string& text,
                                               const std::string& id) {
  std::map<std::string, std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(' ');
      const auto e = s.find_last_not_of(' ');
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    item = trim(item);
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("feature " + id + ": parameter '" + item +
                        "' is not key=value");
    }
    out[trim(item.substr(0, eq))] = trim(item.substr(eq + 1));
  }
  return out;
}

std::string FormatNumber(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string Lowercase(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

bool AnyTokenIn(const std::vector<std::string>& tokens, const TokenBag& bag) {
  for (const auto& t : tokens) {
    if (bag.count(t) != 0) return true;
  }
  return false;
}

bool SharesKeyword(const MentionFeatures& a, const MentionFeatures& b) {
  auto i = a.keywords.begin();
  auto j = b.keywords.begin();
  while (i != a.keywords.end() && j != b.keywords.end()) {
    if (*i == *j) return true;
    if (*i < *j) {
      ++i;
    } else {
      ++j;
    }
  }
  return false;
}

bool KeywordInSurface(const std::vector<std::string>& keywords,
                      const std::string& surface) {
  for (const auto& k : keywords) {
    if (surface.find(k) != std::string::npos) return true;
  }
  return false;
}

// True unless both surfaces have several tokens, overlap, and each carries a
// token the other lacks.
bool NoExtraToken(const MentionFeatures& a, const MentionFeatures& b) {
  if (a.tokens.size() < 2 || b.tokens.size() < 2) return true;
  std::set<std::string> sa(a.tokens.begin(), a.tokens.end());
  std::set<std::string> sb(b.tokens.begin(), b.tokens.end());
  bool shared = false;
  bool a_extra = false;
  bool b_extra = false;
  for (const auto& t : sa) {
    if (sb.count(t) != 0) {
      shared = true;
    } else {
      a_extra = true;
    }
  }
  for (const auto& t : sb) {
    if (sa.count(t) == 0) b_extra = true;
  }
  return !(shared && a_extra && b_extra);
}

bool Predicate(FeatureKind kind, const MentionFeatures& a,
               const MentionFeatures& b) {
  switch (kind) {
    case FeatureKind::kEqualStrings:
      return a.surface == b.surface;
    case FeatureKind::kEqualFirstChar:
      return !a.surface.empty() && !b.surface.empty() &&
             a.surface[0] == b.surface[0];
    case FeatureKind::kEqualSecondChar:
      return a.surface.size() > 1 && b.surface.size() > 1 &&
             a.surface[1] == b.surface[1];
    case FeatureKind::kEqualSubstrings:
      return a.surface.find(b.surface) != std::string::npos ||
             b.surface.find(a.surface) != std::string::npos;
    case FeatureKind::kEqualLengths:
      return a.surface.size() == b.surface.size();
    case FeatureKind::kMatchingFirstTerm:
      return !a.first_term.empty() && a.first_term == b.first_term;
    case FeatureKind::kMatchingTerms:
      return Dot(a.tfidf, b.tfidf) > 0.0;
    case FeatureKind::kTokenInContext:
      return AnyTokenIn(a.tokens, b.context) || AnyTokenIn(b.tokens, a.context);
    case FeatureKind::kMatchingKeyword:
      return SharesKeyword(a, b);
    case FeatureKind::kKeywordInToken:
      return KeywordInSurface(a.keywords, b.surface) ||
             KeywordInSurface(b.keywords, a.surface);
    case FeatureKind::kExtraToken:
      return NoExtraToken(a, b);
    case FeatureKind::kMatchingTokenInContext: {
      for (const auto* tokens : {&a.tokens, &b.tokens}) {
        for (const auto& t : *tokens) {
          if (a.context.count(t) != 0 && b.context.count(t) != 0) return true;
        }
      }
      return false;
    }
    default:
      return false;
  }
}

}  // namespace

FeatureClass ClassOf(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::kEqualStrings:
    case FeatureKind::kEqualFirstChar:
    case FeatureKind::kEqualSecondChar:
    case FeatureKind::kEqualSubstrings:
    case FeatureKind::kEqualLengths:
    case FeatureKind::kMatchingFirstTerm:
      return FeatureClass::kToken;
    case FeatureKind::kSimilarity:
    case FeatureKind::kMatchingTerms:
    case FeatureKind::kTokenInContext:
    case FeatureKind::kMatchingKeyword:
    case FeatureKind::kKeywordInToken:
    case FeatureKind::kExtraToken:
    case FeatureKind::kMatchingTokenInContext:
      return FeatureClass::kContext;
    case FeatureKind::kSimilarNeighbor:
    case FeatureKind::kMatchingDocument:
      return FeatureClass::kEntity;
    case FeatureKind::kComplement:
      return FeatureClass::kInert;
  }
  return FeatureClass::kInert;
}

std::string_view KindName(FeatureKind kind) {
  for (const auto& e : kKinds) {
    if (e.kind == kind) return e.name;
  }
  return "?";
}

double FeatureSpec::Param(const std::string& key, double fallback) const {
  auto it = params.find(key);
  if (it == params.end()) return fallback;
  try {
    std::size_t used = 0;
    double v = std::stod(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("feature " + id + ": parameter " + key +
                      " is not a number");
  }
}

FeatureModel::FeatureModel(std::vector<FeatureSpec> rows)
    : rows_(std::move(rows)) {
  std::set<std::string> ids;
  for (const auto& r : rows_) {
    if (!ids.insert(r.id).second) {
      throw ConfigError("duplicate feature id " + r.id);
    }
    if (!(r.pos >= 0.0) || !std::isfinite(r.pos)) {
      throw ConfigError("feature " + r.id + ": pos must be >= 0");
    }
    if (!(r.neg <= 0.0) || !std::isfinite(r.neg)) {
      throw ConfigError("feature " + r.id + ": neg must be <= 0");
    }
    if (r.kind == FeatureKind::kSimilarity) {
      if (r.params.count("min") == 0) {
        throw ConfigError("feature " + r.id + ": similarity needs min");
      }
      const double min = r.Param("min", 0.0);
      if (min < 0.0 || min > 1.0) {
        throw ConfigError("feature " + r.id + ": min outside [0, 1]");
      }
      if (!buckets_.empty() && !(min < buckets_.back().first)) {
        throw ConfigError("feature " + r.id +
                          ": similarity thresholds must strictly decrease");
      }
      buckets_.emplace_back(min, r.pos + r.neg);
    } else if (r.kind == FeatureKind::kSimilarNeighbor) {
      neighbor_threshold_ = r.Param("threshold", 0.5);
      has_entity_features_ = true;
    } else if (r.kind == FeatureKind::kMatchingDocument) {
      has_entity_features_ = true;
    }
  }
  if (!buckets_.empty() && buckets_.back().first != 0.0) {
    throw ConfigError("similarity buckets must end at min = 0");
  }
}

std::string FeatureModel::ToConfigText() const {
  std::ostringstream os;
  for (const auto& r : rows_) {
    os << "[[feature]]\n";
    os << "id = \"" << r.id << "\"\n";
    if (KindName(r.kind) != r.id) {
      os << "kind = \"" << KindName(r.kind) << "\"\n";
    }
    os << "pos = " << FormatNumber(r.pos) << "\n";
    os << "neg = " << FormatNumber(r.neg) << "\n";
    if (!r.params.empty()) {
      std::string joined;
      for (const auto& [k, v] : r.params) {
        if (!joined.empty()) joined += ",";
        joined += k + "=" + v;
      }
      os << "params = \"" << joined << "\"\n";
    }
    os << "\n";
  }
  return os.str();
}

FeatureModel DefaultFeatureModel() {
  using K = FeatureKind;
  auto row = [](std::string id, K kind, double pos, double neg,
                std::map<std::string, std::string> params = {}) {
    return FeatureSpec{std::move(id), kind, pos, neg, std::move(params)};
  };
  auto of = [](std::string id) {
    return std::map<std::string, std::string>{{"of", std::move(id)}};
  };
  auto bucket = [](std::string min) {
    return std::map<std::string, std::string>{{"min", std::move(min)}};
  };
  std::vector<FeatureSpec> rows = {
      row("equal_strings", K::kEqualStrings, 20, -15),
      row("equal_first_char", K::kEqualFirstChar, 5, 0),
      row("equal_second_char", K::kEqualSecondChar, 3, 0),
      row("equal_second_char_2", K::kEqualSecondChar, 0, 0),
      row("unequal_strings", K::kComplement, 0, -15, of("equal_strings")),
      row("unequal_first_char", K::kComplement, 0, 0, of("equal_first_char")),
      row("unequal_second_char", K::kComplement, 0, 0,
          of("equal_second_char")),
      row("unequal_second_char_2", K::kComplement, 0, 0,
          of("equal_second_char_2")),
      row("equal_substrings", K::kEqualSubstrings, 30, -150),
      row("unequal_substrings", K::kComplement, 0, -150,
          of("equal_substrings")),
      row("equal_lengths", K::kEqualLengths, 10, 0),
      row("matching_first_term", K::kMatchingFirstTerm, 90, -3),
      row("no_matching_first_term", K::kComplement, 0, -3,
          of("matching_first_term")),
      row("similarity_99", K::kSimilarity, 120, 0, bucket("0.99")),
      row("similarity_90", K::kSimilarity, 105, 0, bucket("0.9")),
      row("similarity_80", K::kSimilarity, 80, 0, bucket("0.8")),
      row("similarity_70", K::kSimilarity, 55, 0, bucket("0.7")),
      row("similarity_60", K::kSimilarity, 35, 0, bucket("0.6")),
      row("similarity_50", K::kSimilarity, 15, 0, bucket("0.5")),
      row("similarity_40", K::kSimilarity, 0, -5, bucket("0.4")),
      row("similarity_30", K::kSimilarity, 0, -50, bucket("0.3")),
      row("similarity_20", K::kSimilarity, 0, -80, bucket("0.2")),
      row("similarity_0", K::kSimilarity, 0, -100, bucket("0")),
      row("matching_terms", K::kMatchingTerms, 20, 0),
      row("token_in_context", K::kTokenInContext, 1, 0),
      row("no_matching_keyword", K::kMatchingKeyword, 700, -10),
      row("matching_keyword", K::kComplement, 700, 0,
          of("no_matching_keyword")),
      row("keyword_in_token", K::kKeywordInToken, 70, 0),
      row("extra_token", K::kExtraToken, 0, -500),
      row("matching_token_in_context", K::kMatchingTokenInContext, 10, 0),
      row("similar_neighbor", K::kSimilarNeighbor, 100, -5,
          {{"threshold", "0.5"}}),
      row("no_similar_neighbor", K::kComplement, 0, -5,
          of("similar_neighbor")),
      row("matching_document", K::kMatchingDocument, 350, -15),
      row("no_matching_documents", K::kComplement, 0, -15,
          of("matching_document")),
  };
  return FeatureModel(std::move(rows));
}

FeatureModel ParseFeatureModel(std::istream& in) {
  ConfigDocument doc = ParseConfig(in);
  if (!doc.root.entries().empty()) {
    throw ConfigError("weight file: keys outside a [[feature]] entry");
  }
  for (const auto& [name, tables] : doc.arrays) {
    if (name != "feature") throw ConfigError("weight file: unknown [[" + name + "]]");
  }
  std::vector<FeatureSpec> rows;
  auto it = doc.arrays.find("feature");
  if (it == doc.arrays.end()) return FeatureModel(std::vector<FeatureSpec>{});
  for (const ConfigTable& t : it->second) {
    for (const auto& [key, value] : t.entries()) {
      if (key != "id" && key != "kind" && key != "pos" && key != "neg" &&
          key != "params") {
        throw ConfigError("line " + std::to_string(t.LineOf(key)) +
                          ": unknown feature key " + key);
      }
    }
    FeatureSpec spec;
    spec.id = t.GetString("id");
    const std::string kind_name = t.GetString("kind", spec.id);
    auto kind = KindFromName(kind_name);
    if (!kind) {
      throw ConfigError("feature " + spec.id + ": unknown kind " + kind_name);
    }
    spec.kind = *kind;
    spec.pos = t.GetNumber("pos", 0.0);
    spec.neg = t.GetNumber("neg", 0.0);
    spec.params = ParseParams(t.GetString("params", ""), spec.id);
    rows.push_back(std::move(spec));
  }
  return FeatureModel(std::move(rows));
}

FeatureModel LoadFeatureModel(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open weight file " + path);
  return ParseFeatureModel(in);
}

MentionFeatures ExtractFeatures(const Mention& m, const CorpusStats& stats,
                                bool context_enabled) {
  MentionFeatures f;
  f.surface = Lowercase(m.surface);
  f.tokens = Tokenize(m.surface);
  if (!f.tokens.empty()) f.first_term = f.tokens.front();
  f.context_enabled = context_enabled;
  if (context_enabled) {
    f.context = m.context;
    f.tfidf = TfidfVector(m.context, stats);
    if (m.keywords) {
      for (const auto& k : *m.keywords) {
        std::string lk = Lowercase(k);
        if (!lk.empty()) f.keywords.push_back(std::move(lk));
      }
      std::sort(f.keywords.begin(), f.keywords.end());
      f.keywords.erase(std::unique(f.keywords.begin(), f.keywords.end()),
                       f.keywords.end());
    }
  }
  f.doc_id = m.doc_id;
  return f;
}

MentionFeatures ExtractQueryFeatures(const QueryNode& qn,
                                     std::span<const Mention> corpus,
                                     const CorpusStats& stats) {
  Mention m = qn.mention;
  if (qn.context_level == ContextLevel::kDocument && !m.doc_id.empty()) {
    for (const Mention& other : corpus) {
      if (other.doc_id != m.doc_id) continue;
      if (qn.corpus_id && *qn.corpus_id == other.id) continue;
      for (const auto& [term, count] : other.context) m.context[term] += count;
    }
  }
  if (!qn.extra_keywords.empty()) {
    if (!m.keywords) m.keywords.emplace();
    m.keywords->insert(m.keywords->end(), qn.extra_keywords.begin(),
                       qn.extra_keywords.end());
  }
  return ExtractFeatures(m, stats, qn.context_level != ContextLevel::kNone);
}

double PairwiseScore(const MentionFeatures& a, const MentionFeatures& b,
                     const FeatureModel& model) {
  const bool context = a.context_enabled && b.context_enabled;
  double score = 0.0;
  for (const FeatureSpec& r : model.rows()) {
    const FeatureClass cls = ClassOf(r.kind);
    if (cls == FeatureClass::kInert || cls == FeatureClass::kEntity) continue;
    if (cls == FeatureClass::kContext && !context) continue;
    if (r.kind == FeatureKind::kSimilarity) continue;
    if (r.kind == FeatureKind::kMatchingKeyword && a.keywords.empty() &&
        b.keywords.empty()) {
      continue;
    }
    score += Predicate(r.kind, a, b) ? r.pos : r.neg;
  }
  if (context && !model.buckets().empty()) {
    const double cos = CosineSimilarity(a.tfidf, b.tfidf);
    for (const auto& [min, weight] : model.buckets()) {
      if (cos >= min) {
        score += weight;
        break;
      }
    }
  }
  return score;
}

double PairwiseScore(const Mention& a, const Mention& b,
                     const FeatureModel& model, const CorpusStats& stats) {
  return PairwiseScore(ExtractFeatures(a, stats), ExtractFeatures(b, stats),
                       model);
}

bool SimilarNeighbors(const MentionFeatures& a, const MentionFeatures& b,
                      const FeatureModel& model) {
  if (!a.context_enabled || !b.context_enabled) return false;
  return CosineSimilarity(a.tfidf, b.tfidf) >= model.neighbor_threshold();
}

bool SameDocument(const MentionFeatures& a, const MentionFeatures& b) {
  return !a.doc_id.empty() && a.doc_id == b.doc_id;
}

namespace {

template <typename FlagFn>
bool AnyPair(std::size_t n, FlagFn&& flag) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (flag(i, j)) return true;
    }
  }
  return false;
}

double EntityRows(const FeatureModel& model, std::size_t size,
                  bool any_similar, bool any_same_doc) {
  if (size < 2) return 0.0;
  double score = 0.0;
  for (const FeatureSpec& r : model.rows()) {
    if (r.kind == FeatureKind::kSimilarNeighbor) {
      score += any_similar ? r.pos : r.neg;
    } else if (r.kind == FeatureKind::kMatchingDocument) {
      score += any_same_doc ? r.pos : r.neg;
    }
  }
  return score;
}

}  // namespace

double EntityScore(std::span<const MentionFeatures* const> members,
                   const FeatureModel& model) {
  if (members.size() < 2 || !model.has_entity_features()) return 0.0;
  const bool similar = AnyPair(members.size(), [&](std::size_t i, std::size_t j) {
    return SimilarNeighbors(*members[i], *members[j], model);
  });
  const bool same_doc = AnyPair(members.size(), [&](std::size_t i, std::size_t j) {
    return SameDocument(*members[i], *members[j]);
  });
  return EntityRows(model, members.size(), similar, same_doc);
}

double EntityScore(std::span<const Mention> members, const FeatureModel& model,
                   const CorpusStats& stats) {
  std::vector<MentionFeatures> feats;
  for (const Mention& m : members) feats.push_back(ExtractFeatures(m, stats));
  std::vector<const MentionFeatures*> ptrs;
  for (const auto& f : feats) ptrs.push_back(&f);
  return EntityScore(ptrs, model);
}

std::vector<double> PairMatrix(std::span<const MentionFeatures> nodes,
                               const FeatureModel& model,
                               Parallelism parallelism) {
  const std::size_t n = nodes.size();
  std::vector<double> out(n * n, 0.0);
  auto fill = [&](std::size_t i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double s = PairwiseScore(nodes[i], nodes[j], model);
      out[i * n + j] = s;
      out[j * n + i] = s;
    }
  };
  if (parallelism == Parallelism::kSerial) {
    for (std::size_t i = 0; i < n; ++i) fill(i);
  } else {
    const auto rows = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(dynamic, 8)
    for (std::int64_t i = 0; i < rows; ++i) fill(static_cast<std::size_t>(i));
  }
  return out;
}

Scorer::Scorer(std::vector<MentionFeatures> nodes, const FeatureModel& model,
               Parallelism parallelism, std::size_t dense_limit)
    : nodes_(std::move(nodes)), model_(model) {
  dense_ = nodes_.size() <= dense_limit;
  if (!dense_) return;
  const std::size_t n = nodes_.size();
  pair_.assign(n * n, 0.0);
  flags_.assign(n * n, 0);
  if (parallelism == Parallelism::kSerial) {
    BuildSerial();
  } else {
    BuildParallel();
  }
}

void Scorer::FillRow(std::size_t i) {
  const std::size_t n = nodes_.size();
  for (std::size_t j = i + 1; j < n; ++j) {
    const double s = PairwiseScore(nodes_[i], nodes_[j], model_);
    std::uint8_t f = 0;
    if (model_.has_entity_features()) {
      if (SimilarNeighbors(nodes_[i], nodes_[j], model_)) f |= 1;
      if (SameDocument(nodes_[i], nodes_[j])) f |= 2;
    }
    pair_[i * n + j] = pair_[j * n + i] = s;
    flags_[i * n + j] = flags_[j * n + i] = f;
  }
}

void Scorer::BuildSerial() {
  for (std::size_t i = 0; i < nodes_.size(); ++i) FillRow(i);
}

void Scorer::BuildParallel() {
  const auto rows = static_cast<std::int64_t>(nodes_.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (std::int64_t i = 0; i < rows; ++i) FillRow(static_cast<std::size_t>(i));
}

double Scorer::Pair(MentionId a, MentionId b) const {
  if (dense_) return pair_[std::size_t{a} * nodes_.size() + b];
  if (a == b) return 0.0;
  return PairwiseScore(nodes_[a], nodes_[b], model_);
}

bool Scorer::Similar(MentionId a, MentionId b) const {
  if (dense_) return (flags_[std::size_t{a} * nodes_.size() + b] & 1) != 0;
  return a != b && SimilarNeighbors(nodes_[a], nodes_[b], model_);
}

bool Scorer::SameDoc(MentionId a, MentionId b) const {
  if (dense_) return (flags_[std::size_t{a} * nodes_.size() + b] & 2) != 0;
  return a != b && SameDocument(nodes_[a], nodes_[b]);
}

double Scorer::EntityScore(std::span<const MentionId> members) const {
  if (members.size() < 2 || !model_.has_entity_features()) return 0.0;
  const bool similar = AnyPair(members.size(), [&](std::size_t i, std::size_t j) {
    return Similar(members[i], members[j]);
  });
  const bool same_doc = AnyPair(members.size(), [&](std::size_t i, std::size_t j) {
    return SameDoc(members[i], members[j]);
  });
  return EntityRows(model_, members.size(), similar, same_doc);
}

double Scorer::EntityTotal(std::span<const MentionId> members) const {
  double total = 0.0;
  for (std::size_t i = 0; i < members.size(); ++i) {
    for (std::size_t j = i + 1; j < members.size(); ++j) {
      total += Pair(members[i], members[j]);
    }
  }
  return total + EntityScore(members);
}

double Scorer::ModelScore(const EntityState& state) const {
  double total = 0.0;
  for (EntityId e : state.Entities()) total += EntityTotal(state.Members(e));
  return total;
}

ScoreDelta Scorer::Delta(const EntityState& state, const Move& move) const {
  const MentionId m = move.mention;
  if (state.EntityOf(m) != move.source) {
    throw ContractError("mention " + std::to_string(m) +
                        " is not in source entity " +
                        std::to_string(move.source));
  }
  ScoreDelta out;
  out.touched_entities.push_back(move.source);
  if (state.IsNoOp(move)) return out;
  const bool fresh = move.target == kFreshEntity ||
                     move.target == state.next_entity_id();
  if (!fresh && !state.IsLive(move.target)) {
    throw ContractError("target entity " + std::to_string(move.target) +
                        " does not exist");
  }
  out.touched_entities.push_back(move.target);

  std::span<const MentionId> src = state.Members(move.source);
  std::span<const MentionId> tgt;
  if (!fresh) tgt = state.Members(move.target);

  double value = 0.0;
  for (MentionId t : tgt) value += Pair(m, t);
  for (MentionId s : src) {
    if (s != m) value -= Pair(m, s);
  }

  if (model_.has_entity_features()) {
    // Pair flags among the entity without m, and between m and the rest.
    auto scan = [&](std::span<const MentionId> members, bool skip_m,
                    bool* sim_rest, bool* doc_rest, bool* sim_m,
                    bool* doc_m) {
      *sim_rest = *doc_rest = *sim_m = *doc_m = false;
      for (std::size_t i = 0; i < members.size(); ++i) {
        const MentionId a = members[i];
        if (skip_m && a == m) continue;
        if (!*sim_m && Similar(m, a)) *sim_m = true;
        if (!*doc_m && SameDoc(m, a)) *doc_m = true;
        for (std::size_t j = i + 1; j < members.size() &&
                                    !(*sim_rest && *doc_rest);
             ++j) {
          const MentionId b = members[j];
          if (skip_m && b == m) continue;
          if (!*sim_rest && Similar(a, b)) *sim_rest = true;
          if (!*doc_rest && SameDoc(a, b)) *doc_rest = true;
        }
      }
    };
    bool s_rest, d_rest, s_m, d_m;
    scan(src, true, &s_rest, &d_rest, &s_m, &d_m);
    const std::size_t ns = src.size();
    value += EntityRows(model_, ns - 1, s_rest, d_rest) -
             EntityRows(model_, ns, s_rest || s_m, d_rest || d_m);
    scan(tgt, false, &s_rest, &d_rest, &s_m, &d_m);
    const std::size_t nt = tgt.size();
    value += EntityRows(model_, nt + 1, s_rest || s_m, d_rest || d_m) -
             EntityRows(model_, nt, s_rest, d_rest);
  }
  out.value = value;
  return out;
}

}  // namespace qder
