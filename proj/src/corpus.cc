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


#include "qder/corpus.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "qder/log.h"

namespace qder {
namespace {

bool IsTokenChar(unsigned char c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') ||
         (c >= 'A' && c <= 'Z') || c >= 0x80;
}

char Lower(unsigned char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a')
                                : static_cast<char>(c);
}

std::vector<std::string> SplitKeywords(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find(',', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view piece = text.substr(start, end - start);
    while (!piece.empty() && piece.front() == ' ') piece.remove_prefix(1);
    while (!piece.empty() && piece.back() == ' ') piece.remove_suffix(1);
    if (!piece.empty()) out.emplace_back(piece);
    start = end + 1;
  }
  return out;
}

std::vector<std::string> SplitTabs(const std::string& line) {
  std::vector<std::string> cols;
  std::size_t start = 0;
  while (true) {
    std::size_t end = line.find('\t', start);
    if (end == std::string::npos) {
      cols.push_back(line.substr(start));
      break;
    }
    cols.push_back(line.substr(start, end - start));
    start = end + 1;
  }
  return cols;
}

Mention ParseJsonRecord(const std::string& line, std::size_t lineno) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(lineno, std::string("invalid json: ") + e.what());
  }
  if (!j.is_object()) throw ParseError(lineno, "record is not an object");

  auto require_string = [&](const char* key) -> std::string {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string()) {
      throw ParseError(lineno, std::string("missing string field '") + key +
                                   "'");
    }
    return it->get<std::string>();
  };

  Mention m;
  m.doc_id = require_string("doc_id");
  auto pos = j.find("start_pos");
  if (pos == j.end() || !pos->is_number_integer()) {
    throw ParseError(lineno, "missing integer field 'start_pos'");
  }
  m.start_pos = pos->get<std::int64_t>();
  m.surface = require_string("surface");
  m.context_text = require_string("context");

  if (auto t = j.find("truth"); t != j.end() && !t->is_null()) {
    if (!t->is_string()) throw ParseError(lineno, "'truth' must be a string");
    m.truth = t->get<std::string>();
  }
  if (auto k = j.find("keywords"); k != j.end() && !k->is_null()) {
    if (!k->is_array()) throw ParseError(lineno, "'keywords' must be a list");
    std::vector<std::string> kws;
    for (const auto& v : *k) {
      if (!v.is_string()) {
        throw ParseError(lineno, "'keywords' entries must be strings");
      }
      kws.push_back(v.get<std::string>());
    }
    m.keywords = std::move(kws);
  }
  return m;
}

Mention ParseTsvRecord(const std::string& line, std::size_t lineno) {
  std::vector<std::string> cols = SplitTabs(line);
  if (cols.size() < 4 || cols.size() > 6) {
    throw ParseError(lineno, "expected 4 to 6 tab-separated columns, got " +
                                 std::to_string(cols.size()));
  }
  Mention m;
  m.doc_id = cols[0];
  if (m.doc_id.empty()) throw ParseError(lineno, "empty doc_id");
  try {
    std::size_t used = 0;
    m.start_pos = std::stoll(cols[1], &used);
    if (used != cols[1].size()) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    throw ParseError(lineno, "start_pos is not an integer: '" + cols[1] + "'");
  }
  m.surface = cols[2];
  m.context_text = cols[3];
  if (cols.size() > 4 && !cols[4].empty()) m.truth = cols[4];
  if (cols.size() > 5 && !cols[5].empty()) m.keywords = SplitKeywords(cols[5]);
  return m;
}

}  // namespace

std::vector<std::string> Tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    if (IsTokenChar(c)) {
      current.push_back(Lower(c));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

TokenBag BagOfWords(std::string_view text) {
  TokenBag bag;
  for (auto& t : Tokenize(text)) ++bag[std::move(t)];
  return bag;
}

std::optional<ContextLevel> ParseContextLevel(std::string_view name) {
  if (name == "none") return ContextLevel::kNone;
  if (name == "paragraph") return ContextLevel::kParagraph;
  if (name == "document") return ContextLevel::kDocument;
  return std::nullopt;
}

std::string_view ContextLevelName(ContextLevel level) {
  switch (level) {
    case ContextLevel::kNone: return "none";
    case ContextLevel::kParagraph: return "paragraph";
    case ContextLevel::kDocument: return "document";
  }
  return "paragraph";
}

std::optional<CorpusFormat> ParseCorpusFormat(std::string_view name) {
  if (name == "jsonl") return CorpusFormat::kJsonl;
  if (name == "tsv") return CorpusFormat::kTsv;
  return std::nullopt;
}

std::vector<Mention> ParseCorpus(std::istream& in, CorpusFormat format) {
  std::vector<Mention> corpus;
  std::set<std::pair<std::string, std::int64_t>> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    Mention m = format == CorpusFormat::kJsonl ? ParseJsonRecord(line, lineno)
                                               : ParseTsvRecord(line, lineno);
    if (m.surface.empty()) throw ParseError(lineno, "empty surface");
    if (m.start_pos < 0) throw ParseError(lineno, "negative start_pos");
    if (!seen.emplace(m.doc_id, m.start_pos).second) {
      throw ParseError(lineno, "duplicate mention (doc_id '" + m.doc_id +
                                   "', start_pos " +
                                   std::to_string(m.start_pos) + ")");
    }
    m.context = BagOfWords(m.context_text);
    m.id = static_cast<MentionId>(corpus.size());
    corpus.push_back(std::move(m));
  }
  return corpus;
}

std::vector<Mention> LoadCorpus(const std::string& path, CorpusFormat format) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus file: " + path);
  return ParseCorpus(in, format);
}

std::string ToJsonLine(const Mention& m) {
  nlohmann::ordered_json j;
  j["doc_id"] = m.doc_id;
  j["start_pos"] = m.start_pos;
  j["surface"] = m.surface;
  j["context"] = m.context_text;
  j["truth"] = m.truth ? nlohmann::ordered_json(*m.truth) : nullptr;
  j["keywords"] =
      m.keywords ? nlohmann::ordered_json(*m.keywords) : nullptr;
  return j.dump();
}

void WriteCorpusJsonl(std::ostream& out, std::span<const Mention> corpus) {
  for (const Mention& m : corpus) out << ToJsonLine(m) << '\n';
}

std::optional<std::uint32_t> CorpusStats::TermId(std::string_view term) const {
  auto it = ids_.find(std::string(term));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

std::uint32_t CorpusStats::DocFreq(std::string_view term) const {
  auto id = TermId(term);
  return id ? doc_freq_[*id] : 0;
}

CorpusStats ComputeStats(std::span<const Mention> corpus) {
  if (corpus.empty()) {
    throw std::invalid_argument("cannot compute statistics of an empty corpus");
  }
  std::map<std::string_view, std::set<std::string_view>> doc_terms;
  for (const Mention& m : corpus) {
    auto& terms = doc_terms[m.doc_id];
    for (const auto& [term, count] : m.context) terms.insert(term);
  }
  std::map<std::string_view, std::uint32_t> df;
  for (const auto& [doc, terms] : doc_terms) {
    for (std::string_view t : terms) ++df[t];
  }

  CorpusStats stats;
  stats.doc_count_ = doc_terms.size();
  stats.terms_.reserve(df.size());
  stats.doc_freq_.reserve(df.size());
  for (const auto& [term, count] : df) {
    stats.ids_.emplace(std::string(term),
                       static_cast<std::uint32_t>(stats.terms_.size()));
    stats.terms_.emplace_back(term);
    stats.doc_freq_.push_back(count);
  }
  return stats;
}

double SparseVector::Norm() const {
  double s = 0.0;
  for (const auto& [id, w] : known) s += w * w;
  for (const auto& [t, w] : unseen) s += w * w;
  return std::sqrt(s);
}

SparseVector TfidfVector(const TokenBag& bag, const CorpusStats& stats) {
  SparseVector v;
  const double n = static_cast<double>(stats.doc_count());
  for (const auto& [term, tf] : bag) {
    auto id = stats.TermId(term);
    double df = 1.0;
    if (id) {
      df = stats.DocFreq(*id);
    } else {
      LogWarningOnce("unseen-term",
                     "context term absent from corpus statistics, using df=1 "
                     "(first: '" + term + "')");
    }
    const double w = tf * std::log(n / df);
    if (w == 0.0) continue;
    if (id) {
      v.known.emplace_back(*id, w);
    } else {
      v.unseen.emplace_back(term, w);
    }
  }
  // TokenBag iterates in term order, and ids follow term order, so both
  // lists are already sorted.
  const double norm = v.Norm();
  if (norm > 0.0) {
    for (auto& [id, w] : v.known) w /= norm;
    for (auto& [t, w] : v.unseen) w /= norm;
  }
  return v;
}

SparseVector TfidfVector(const Mention& m, const CorpusStats& stats) {
  return TfidfVector(m.context, stats);
}

double Dot(const SparseVector& a, const SparseVector& b) {
  double s = 0.0;
  auto i = a.known.begin();
  auto j = b.known.begin();
  while (i != a.known.end() && j != b.known.end()) {
    if (i->first < j->first) {
      ++i;
    } else if (j->first < i->first) {
      ++j;
    } else {
      s += i->second * j->second;
      ++i;
      ++j;
    }
  }
  if (!a.unseen.empty() && !b.unseen.empty()) {
    auto p = a.unseen.begin();
    auto q = b.unseen.begin();
    while (p != a.unseen.end() && q != b.unseen.end()) {
      if (p->first < q->first) {
        ++p;
      } else if (q->first < p->first) {
        ++q;
      } else {
        s += p->second * q->second;
        ++p;
        ++q;
      }
    }
  }
  return s;
}

double CosineSimilarity(const SparseVector& a, const SparseVector& b) {
  if (a.IsZero() || b.IsZero()) return 0.0;
  return std::clamp(Dot(a, b), 0.0, 1.0);
}

}  // namespace qder
