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

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "qder/corpus.h"

namespace qder {
namespace {

std::vector<Mention> ParseJsonl(const std::string& text) {
  std::istringstream in(text);
  return ParseCorpus(in, CorpusFormat::kJsonl);
}

Mention Make(std::string doc, std::int64_t pos, std::string context) {
  Mention m;
  m.doc_id = std::move(doc);
  m.start_pos = pos;
  m.surface = "x";
  m.context_text = std::move(context);
  m.context = BagOfWords(m.context_text);
  return m;
}

TEST(Tokenize, LowercasesAndSplitsOnPunctuation) {
  EXPECT_EQ(Tokenize("New-York  Yankees, 1923!"),
            (std::vector<std::string>{"new", "york", "yankees", "1923"}));
  EXPECT_TRUE(Tokenize("  ...  ").empty());
}

TEST(Tokenize, KeepsNonAsciiBytesInsideTokens) {
  EXPECT_EQ(Tokenize("caf\xc3\xa9 ol\xc3\xa9"),
            (std::vector<std::string>{"caf\xc3\xa9", "ol\xc3\xa9"}));
}

TEST(LoadCorpus, EmptyInputGivesEmptyCorpus) {
  EXPECT_TRUE(ParseJsonl("").empty());
  EXPECT_TRUE(ParseJsonl("\n  \n").empty());
}

TEST(LoadCorpus, ContextBagOfOneRecord) {
  auto c = ParseJsonl(
      R"({"doc_id":"a","start_pos":3,"surface":"NY Giants","context":"football season opener"})");
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0].id, 0u);
  EXPECT_EQ(c[0].surface, "NY Giants");
  EXPECT_EQ(c[0].context,
            (TokenBag{{"football", 1}, {"season", 1}, {"opener", 1}}));
  EXPECT_FALSE(c[0].truth.has_value());
  EXPECT_FALSE(c[0].keywords.has_value());
}

TEST(LoadCorpus, TeamFixtureHasDenseIds) {
  auto c = LoadCorpus(QDER_TEST_DATA "/yankees.jsonl", CorpusFormat::kJsonl);
  ASSERT_EQ(c.size(), 6u);
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_EQ(c[i].id, i);
  EXPECT_EQ(c[1].surface, "Bronx Bombers");
  EXPECT_EQ(c[5].surface, "The Yanks");
  EXPECT_EQ(*c[3].truth, "new_york_yankees");
}

TEST(LoadCorpus, MalformedRecordNamesLine) {
  const std::string text =
      R"({"doc_id":"a","start_pos":0,"surface":"A","context":""})"
      "\n"
      R"({"doc_id":"a","start_pos":"zero","surface":"B","context":""})"
      "\n";
  try {
    ParseJsonl(text);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  EXPECT_THROW(ParseJsonl("{not json"), ParseError);
  EXPECT_THROW(ParseJsonl(R"({"doc_id":"a","start_pos":0,"surface":"","context":""})"),
               ParseError);
}

TEST(LoadCorpus, DuplicatePositionRejected) {
  const std::string text =
      R"({"doc_id":"a","start_pos":5,"surface":"A","context":""})"
      "\n"
      R"({"doc_id":"a","start_pos":5,"surface":"B","context":""})";
  try {
    ParseJsonl(text);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_NE(std::string(e.what()).find("duplicate"), std::string::npos);
  }
}

TEST(LoadCorpus, TsvColumnsMatchJsonl) {
  std::istringstream tsv(
      "d1\t4\tYankees\tbronx pennant\tnyy\tbaseball, bronx\n"
      "d2\t0\tMets\tqueens\t\t\n");
  auto c = ParseCorpus(tsv, CorpusFormat::kTsv);
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c[0].start_pos, 4);
  EXPECT_EQ(*c[0].truth, "nyy");
  EXPECT_EQ(*c[0].keywords, (std::vector<std::string>{"baseball", "bronx"}));
  EXPECT_FALSE(c[1].truth.has_value());
  EXPECT_FALSE(c[1].keywords.has_value());

  std::istringstream bad("d1\tx\tA\tctx\n");
  EXPECT_THROW(ParseCorpus(bad, CorpusFormat::kTsv), ParseError);
  std::istringstream short_row("d1\t0\tA\n");
  EXPECT_THROW(ParseCorpus(short_row, CorpusFormat::kTsv), ParseError);
}

TEST(LoadCorpus, CanonicalJsonlRoundTripsByteIdentically) {
  const std::string canonical =
      R"({"doc_id":"d1","start_pos":0,"surface":"Yankees","context":"Bronx, pennant","truth":"nyy","keywords":["baseball"]})"
      "\n"
      R"({"doc_id":"d2","start_pos":9,"surface":"The \"Yanks\"","context":"café","truth":null,"keywords":null})"
      "\n";
  auto c = ParseJsonl(canonical);
  std::ostringstream out;
  WriteCorpusJsonl(out, c);
  EXPECT_EQ(out.str(), canonical);
}

TEST(ComputeStats, SingleDocument) {
  std::vector<Mention> c = {Make("d", 0, "a b"), Make("d", 1, "b c")};
  auto s = ComputeStats(c);
  EXPECT_EQ(s.doc_count(), 1u);
  for (const char* t : {"a", "b", "c"}) EXPECT_EQ(s.DocFreq(t), 1u) << t;
}

TEST(ComputeStats, CountsDistinctDocuments) {
  std::vector<Mention> c = {Make("1", 0, "yankees win"), Make("2", 0, "mets"),
                            Make("3", 0, "yankees again yankees"),
                            Make("3", 7, "yankees")};
  auto s = ComputeStats(c);
  EXPECT_EQ(s.doc_count(), 3u);
  EXPECT_EQ(s.DocFreq("yankees"), 2u);
  EXPECT_EQ(s.DocFreq("mets"), 1u);
  EXPECT_EQ(s.DocFreq("absent"), 0u);
}

TEST(ComputeStats, TermInEveryDocumentHasFullDf) {
  std::vector<Mention> c = {Make("1", 0, "the a"), Make("2", 0, "the b"),
                            Make("3", 0, "the")};
  auto s = ComputeStats(c);
  EXPECT_EQ(s.DocFreq("the"), s.doc_count());
  for (std::uint32_t t = 0; t < s.vocabulary_size(); ++t) {
    EXPECT_GE(s.DocFreq(t), 1u);
    EXPECT_LE(s.DocFreq(t), s.doc_count());
  }
}

TEST(ComputeStats, OrderIndependent) {
  std::vector<Mention> c;
  for (int i = 0; i < 40; ++i) {
    c.push_back(Make("doc" + std::to_string(i % 7), i,
                     "w" + std::to_string(i % 5) + " w" +
                         std::to_string(i % 11) + " common"));
  }
  auto base = ComputeStats(c);
  std::mt19937 g(7);
  for (int r = 0; r < 5; ++r) {
    std::shuffle(c.begin(), c.end(), g);
    EXPECT_TRUE(ComputeStats(c) == base);
  }
}

TEST(ComputeStats, EmptyCorpusThrows) {
  EXPECT_THROW(ComputeStats(std::vector<Mention>{}), std::invalid_argument);
}

TEST(Tfidf, HandComputedWeights) {
  // N = 4, df(a) = 2, df(b) = 1.
  std::vector<Mention> c = {Make("1", 0, "a b"), Make("2", 0, "a"),
                            Make("3", 0, "c"), Make("4", 0, "c")};
  auto s = ComputeStats(c);
  auto v = TfidfVector(BagOfWords("a a b"), s);
  const double wa = 2 * std::log(2.0);
  const double wb = std::log(4.0);
  const double norm = std::sqrt(wa * wa + wb * wb);
  ASSERT_EQ(v.known.size(), 2u);
  EXPECT_NEAR(v.known[0].second, wa / norm, 1e-12);
  EXPECT_NEAR(v.known[1].second, wb / norm, 1e-12);
  EXPECT_NEAR(v.Norm(), 1.0, 1e-9);
}

TEST(Tfidf, TermInEveryDocumentContributesNothing) {
  std::vector<Mention> c = {Make("1", 0, "the x"), Make("2", 0, "the")};
  auto s = ComputeStats(c);
  auto v = TfidfVector(BagOfWords("the"), s);
  EXPECT_TRUE(v.IsZero());
  EXPECT_EQ(CosineSimilarity(v, v), 0.0);
}

TEST(Tfidf, IdenticalBagsHaveCosineOne) {
  std::vector<Mention> c = {Make("1", 0, "bronx pennant"), Make("2", 0, "mets"),
                            Make("3", 0, "bronx")};
  auto s = ComputeStats(c);
  auto a = TfidfVector(BagOfWords("bronx pennant pennant"), s);
  auto b = TfidfVector(BagOfWords("pennant bronx pennant"), s);
  EXPECT_NEAR(CosineSimilarity(a, b), 1.0, 1e-12);
}

TEST(Tfidf, UnseenTermsUseDfOne) {
  std::vector<Mention> c = {Make("1", 0, "a"), Make("2", 0, "b")};
  auto s = ComputeStats(c);
  auto v = TfidfVector(BagOfWords("zzz a"), s);
  ASSERT_EQ(v.unseen.size(), 1u);
  ASSERT_EQ(v.known.size(), 1u);
  // Both have df = 1 over N = 2, so the weights are equal.
  EXPECT_NEAR(v.unseen[0].second, v.known[0].second, 1e-12);
  auto w = TfidfVector(BagOfWords("zzz"), s);
  EXPECT_NEAR(CosineSimilarity(v, w), std::sqrt(0.5), 1e-12);
}

TEST(Tfidf, UnitNormOnRandomBags) {
  std::vector<Mention> c;
  std::mt19937 g(3);
  for (int i = 0; i < 30; ++i) {
    std::string ctx;
    for (int k = 0; k < 6; ++k) ctx += "t" + std::to_string(g() % 20) + " ";
    c.push_back(Make("d" + std::to_string(i), 0, ctx));
  }
  auto s = ComputeStats(c);
  for (const Mention& m : c) {
    auto v = TfidfVector(m, s);
    if (!v.IsZero()) EXPECT_NEAR(v.Norm(), 1.0, 1e-9);
  }
}

TEST(ContextLevel, ParsesNames) {
  EXPECT_EQ(ParseContextLevel("none"), ContextLevel::kNone);
  EXPECT_EQ(ParseContextLevel("document"), ContextLevel::kDocument);
  EXPECT_FALSE(ParseContextLevel("sentence").has_value());
  EXPECT_EQ(ContextLevelName(ContextLevel::kParagraph), "paragraph");
}

}  // namespace
}  // namespace qder
