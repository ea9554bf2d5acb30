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

#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "qder/config.h"
#include "qder/features.h"
#include "oracles.h"

namespace qder {
namespace {

using testing::FullModelScore;
using testing::RandomInstance;

Mention M(MentionId id, std::string surface, std::string context,
          std::string doc = "", std::vector<std::string> keywords = {}) {
  Mention m;
  m.id = id;
  m.doc_id = doc.empty() ? "doc" + std::to_string(id) : doc;
  m.start_pos = id;
  m.surface = std::move(surface);
  m.context_text = std::move(context);
  m.context = BagOfWords(m.context_text);
  if (!keywords.empty()) m.keywords = std::move(keywords);
  return m;
}

FeatureModel OneRow(FeatureKind kind, double pos, double neg) {
  FeatureSpec s;
  s.id = "row";
  s.kind = kind;
  s.pos = pos;
  s.neg = neg;
  return FeatureModel({s});
}

FeatureModel Parse(const std::string& text) {
  std::istringstream in(text);
  return ParseFeatureModel(in);
}

TEST(FeatureModel, DefaultWeightFileMatchesBuiltIn) {
  std::ifstream in(QDER_SOURCE_DIR "/data/default.weights");
  ASSERT_TRUE(in);
  std::stringstream buf;
  buf << in.rdbuf();
  EXPECT_EQ(buf.str(), DefaultFeatureModel().ToConfigText());
  const FeatureModel loaded =
      LoadFeatureModel(QDER_SOURCE_DIR "/data/default.weights");
  EXPECT_EQ(loaded.ToConfigText(), DefaultFeatureModel().ToConfigText());
}

TEST(FeatureModel, RoundTripThroughText) {
  const FeatureModel m = DefaultFeatureModel();
  const FeatureModel again = Parse(m.ToConfigText());
  ASSERT_EQ(again.rows().size(), m.rows().size());
  for (std::size_t i = 0; i < m.rows().size(); ++i) {
    EXPECT_EQ(again.rows()[i].id, m.rows()[i].id);
    EXPECT_EQ(again.rows()[i].kind, m.rows()[i].kind);
    EXPECT_EQ(again.rows()[i].pos, m.rows()[i].pos);
    EXPECT_EQ(again.rows()[i].neg, m.rows()[i].neg);
  }
  EXPECT_EQ(again.buckets(), m.buckets());
}

TEST(FeatureModel, RejectsBadRows) {
  EXPECT_THROW(Parse("[[feature]]\nid = \"equal_strings\"\npos = -1\n"),
               ConfigError);
  EXPECT_THROW(Parse("[[feature]]\nid = \"equal_strings\"\nneg = 2\n"),
               ConfigError);
  EXPECT_THROW(Parse("[[feature]]\nid = \"bogus_kind\"\n"), ConfigError);
  EXPECT_THROW(Parse("[[feature]]\nid = \"a\"\nkind = \"equal_strings\"\n"
                     "[[feature]]\nid = \"a\"\nkind = \"equal_lengths\"\n"),
               ConfigError);
  // Buckets must decrease and end at 0.
  EXPECT_THROW(Parse("[[feature]]\nid = \"s1\"\nkind = \"similarity\"\n"
                     "params = \"min=0.5\"\n"),
               ConfigError);
  EXPECT_THROW(Parse("[[feature]]\nid = \"s1\"\nkind = \"similarity\"\n"
                     "params = \"min=0\"\n"
                     "[[feature]]\nid = \"s2\"\nkind = \"similarity\"\n"
                     "params = \"min=0.5\"\n"),
               ConfigError);
  EXPECT_THROW(Parse("[[feature]]\nid = \"s1\"\nkind = \"similarity\"\n"
                     "params = \"min=1.5\"\n"
                     "[[feature]]\nid = \"s2\"\nkind = \"similarity\"\n"
                     "params = \"min=0\"\n"),
               ConfigError);
}

TEST(PairwiseScore, EqualStringsRow) {
  const FeatureModel m = OneRow(FeatureKind::kEqualStrings, 20, -15);
  const CorpusStats stats = ComputeStats(std::vector<Mention>{M(0, "a", "x")});
  EXPECT_EQ(PairwiseScore(M(0, "Yankees", ""), M(1, "Yankees", ""), m, stats),
            20);
  EXPECT_EQ(PairwiseScore(M(0, "Yankees", ""), M(1, "Mets", ""), m, stats),
            -15);
}

TEST(PairwiseScore, IdenticalMentionsFireEveryAffinityRow) {
  // Rows that hold for a mention against itself, with a keyword that occurs
  // in the surface and a surface token present in the context.
  const double expected = 20 + 5 + 3 + 0 + 30 + 10 + 90 + 120 + 20 + 1 + 700 +
                          70 + 0 + 10;
  std::vector<Mention> corpus = {
      M(0, "Yankees", "yankees bronx pennant", "", {"yankees"}),
      M(1, "Mets", "queens shea")};
  const CorpusStats stats = ComputeStats(corpus);
  EXPECT_DOUBLE_EQ(
      PairwiseScore(corpus[0], corpus[0], DefaultFeatureModel(), stats),
      expected);
}

TEST(PairwiseScore, CosineOneFiresOnlyTopBucket) {
  FeatureModel model = DefaultFeatureModel();
  std::vector<FeatureSpec> rows;
  for (const FeatureSpec& r : model.rows()) {
    if (r.kind == FeatureKind::kSimilarity) rows.push_back(r);
  }
  const FeatureModel buckets(rows);
  std::vector<Mention> corpus = {M(0, "a", "bronx pennant"),
                                 M(1, "b", "pennant bronx"),
                                 M(2, "c", "queens")};
  const CorpusStats stats = ComputeStats(corpus);
  EXPECT_DOUBLE_EQ(PairwiseScore(corpus[0], corpus[1], buckets, stats), 120);
  EXPECT_DOUBLE_EQ(PairwiseScore(corpus[0], corpus[2], buckets, stats), -100);
}

TEST(PairwiseScore, ExactlyOneBucketPerCosine) {
  const FeatureModel model = DefaultFeatureModel();
  const auto& b = model.buckets();
  ASSERT_EQ(b.size(), 10u);
  for (double cos = 0.0; cos <= 1.0; cos += 0.005) {
    int fired = 0;
    for (std::size_t i = 0; i < b.size(); ++i) {
      const double hi = i == 0 ? 1.0 + 1e-12 : b[i - 1].first;
      if (cos >= b[i].first && cos < hi) ++fired;
    }
    EXPECT_EQ(fired, 1) << cos;
  }
}

TEST(PairwiseScore, ContextNoneSilencesContextRows) {
  std::vector<Mention> corpus = {
      M(0, "New York Yankees", "bronx pennant", "", {"baseball"}),
      M(1, "Yankees", "bronx pennant", "", {"baseball"})};
  const CorpusStats stats = ComputeStats(corpus);
  const FeatureModel model = DefaultFeatureModel();
  MentionFeatures a = ExtractFeatures(corpus[0], stats, /*context_enabled=*/false);
  MentionFeatures b = ExtractFeatures(corpus[1], stats);
  // Token rows only: unequal strings, first chars differ, second chars
  // differ, substring holds, lengths differ, first terms differ.
  EXPECT_DOUBLE_EQ(PairwiseScore(a, b, model), -15 + 30 - 3);
  EXPECT_DOUBLE_EQ(PairwiseScore(b, a, model), -15 + 30 - 3);
}

TEST(PairwiseScore, KeywordRowsNeedKeywords) {
  FeatureSpec kw{"kw", FeatureKind::kMatchingKeyword, 700, -10, {}};
  const FeatureModel model({kw});
  std::vector<Mention> corpus = {M(0, "A", "x"), M(1, "B", "y"),
                                 M(2, "C", "z", "", {"team"}),
                                 M(3, "D", "w", "", {"Team", "city"})};
  const CorpusStats stats = ComputeStats(corpus);
  EXPECT_EQ(PairwiseScore(corpus[0], corpus[1], model, stats), 0);
  EXPECT_EQ(PairwiseScore(corpus[0], corpus[2], model, stats), -10);
  EXPECT_EQ(PairwiseScore(corpus[2], corpus[3], model, stats), 700);
}

TEST(PairwiseScore, ExtraTokenPenalty) {
  const FeatureModel model = OneRow(FeatureKind::kExtraToken, 0, -500);
  std::vector<Mention> corpus = {M(0, "Kelly Smith", "a"),
                                 M(1, "John Smith", "b"), M(2, "Smith", "c"),
                                 M(3, "Kelly Ann Smith", "d"),
                                 M(4, "Ann Jones", "e")};
  const CorpusStats stats = ComputeStats(corpus);
  EXPECT_EQ(PairwiseScore(corpus[0], corpus[1], model, stats), -500);
  EXPECT_EQ(PairwiseScore(corpus[0], corpus[2], model, stats), 0);
  // Only one side has an extra token.
  EXPECT_EQ(PairwiseScore(corpus[0], corpus[3], model, stats), 0);
  // No shared token.
  EXPECT_EQ(PairwiseScore(corpus[0], corpus[4], model, stats), 0);
}

TEST(PairwiseScore, SymmetricOnRandomPairs) {
  std::mt19937 g(11);
  const std::vector<std::string> names = {"John Smith", "J. Smith", "Smith",
                                          "Jon Smyth",  "Ann Lee",  "A Lee"};
  std::vector<Mention> corpus;
  for (MentionId i = 0; i < 60; ++i) {
    std::string ctx;
    for (int k = 0; k < 5; ++k) ctx += "w" + std::to_string(g() % 15) + " ";
    if (g() % 3 == 0) ctx += "smith ";
    std::vector<std::string> kw;
    if (g() % 4 == 0) kw.push_back("k" + std::to_string(g() % 3));
    corpus.push_back(M(i, names[g() % names.size()], ctx,
                       "d" + std::to_string(g() % 10), kw));
  }
  const CorpusStats stats = ComputeStats(corpus);
  const FeatureModel model = DefaultFeatureModel();
  std::vector<MentionFeatures> f;
  for (const Mention& m : corpus) {
    f.push_back(ExtractFeatures(m, stats, g() % 5 != 0));
  }
  for (int t = 0; t < 1000; ++t) {
    const auto& a = f[g() % f.size()];
    const auto& b = f[g() % f.size()];
    EXPECT_EQ(PairwiseScore(a, b, model), PairwiseScore(b, a, model));
  }
}

TEST(EntityScore, DefaultRows) {
  const FeatureModel model = DefaultFeatureModel();
  std::vector<Mention> corpus = {M(0, "A", "bronx pennant", "d1"),
                                 M(1, "B", "queens shea", "d1"),
                                 M(2, "C", "ebbets field", "d2"),
                                 M(3, "D", "bronx pennant", "d3")};
  const CorpusStats stats = ComputeStats(corpus);
  EXPECT_EQ(EntityScore(std::vector<Mention>{corpus[0]}, model, stats), 0);
  EXPECT_EQ(EntityScore(std::vector<Mention>{}, model, stats), 0);
  // Same document, contexts unrelated.
  EXPECT_EQ(EntityScore(std::vector<Mention>{corpus[0], corpus[1]}, model, stats),
            350 - 5);
  // Different documents, no similar neighbor.
  EXPECT_EQ(EntityScore(std::vector<Mention>{corpus[1], corpus[2]}, model, stats),
            -5 - 15);
  // Different documents, identical contexts.
  EXPECT_EQ(EntityScore(std::vector<Mention>{corpus[0], corpus[3]}, model, stats),
            100 - 15);
}

TEST(ScoreDelta, MatchesFullRescore) {
  std::mt19937 g(5);
  const FeatureModel model = DefaultFeatureModel();
  for (int t = 0; t < 300; ++t) {
    auto inst = RandomInstance(g(), 2 + g() % 11);
    for (const std::size_t dense_limit : {std::size_t{0}, std::size_t{64}}) {
      const Scorer scorer(inst.nodes, model, Parallelism::kSerial,
                          dense_limit);
      const MentionId m = g() % inst.state.num_mentions();
      const EntityId src = inst.state.EntityOf(m);
      std::vector<EntityId> targets = inst.state.Entities();
      targets.push_back(kFreshEntity);
      const Move move{m, src, targets[g() % targets.size()]};
      const ScoreDelta d = scorer.Delta(inst.state, move);
      const double before = FullModelScore(inst.nodes, inst.state.Partition(), model);
      const double after = FullModelScore(
          inst.nodes, ApplyMove(inst.state, move).Partition(), model);
      EXPECT_NEAR(d.value, after - before, 1e-6);
      EXPECT_LE(d.touched_entities.size(), 2u);
      EXPECT_NEAR(scorer.ModelScore(inst.state), before, 1e-6);
    }
  }
}

TEST(ScoreDelta, SameEntityIsZero) {
  auto inst = RandomInstance(9, 6);
  const Scorer scorer(inst.nodes, DefaultFeatureModel());
  const EntityId e = inst.state.EntityOf(0);
  EXPECT_EQ(scorer.Delta(inst.state, Move{0, e, e}).value, 0.0);
}

TEST(ScoreDelta, SplittingAPairRemovesItsScore) {
  const FeatureModel model = OneRow(FeatureKind::kEqualStrings, 20, -15);
  std::vector<Mention> corpus = {M(0, "Yankees", "a"), M(1, "Yankees", "b")};
  const CorpusStats stats = ComputeStats(corpus);
  std::vector<MentionFeatures> f = {ExtractFeatures(corpus[0], stats),
                                    ExtractFeatures(corpus[1], stats)};
  const Scorer scorer(f, model);
  const std::vector<MentionId> ids = {0, 1};
  const EntityState s = EntityState::SingleCluster(ids);
  EXPECT_EQ(scorer.ModelScore(s), 20);
  EXPECT_EQ(scorer.ModelScore(EntityState::Singletons(ids)), 0);
  EXPECT_EQ(scorer.Delta(s, Move{1, s.EntityOf(1), kFreshEntity}).value, -20);
}

TEST(ScoreDelta, MentionOutsideSourceIsAContractError) {
  auto inst = RandomInstance(2, 8);
  const Scorer scorer(inst.nodes, DefaultFeatureModel());
  EntityId other = kNoEntity;
  for (EntityId e : inst.state.Entities()) {
    if (e != inst.state.EntityOf(0)) other = e;
  }
  if (other == kNoEntity) GTEST_SKIP();
  EXPECT_THROW(scorer.Delta(inst.state, Move{0, other, kFreshEntity}),
               ContractError);
}

TEST(ModelScore, WorkedExampleBeatsSingletons) {
  const auto corpus =
      LoadCorpus(QDER_TEST_DATA "/yankees.jsonl", CorpusFormat::kJsonl);
  const CorpusStats stats = ComputeStats(corpus);
  const FeatureModel model =
      LoadFeatureModel(QDER_TEST_DATA "/worked_example.weights");
  std::vector<MentionFeatures> f;
  for (const Mention& m : corpus) f.push_back(ExtractFeatures(m, stats));
  const Scorer scorer(f, model);
  const EntityState clustered = EntityState::FromEntities(
      {{0, {1, 3, 5}}, {1, {0, 2}}, {2, {4}}});
  const std::vector<MentionId> ids = {0, 1, 2, 3, 4, 5};
  EXPECT_GT(scorer.ModelScore(clustered),
            scorer.ModelScore(EntityState::Singletons(ids)));
}

TEST(PairMatrix, SerialAndParallelAgree) {
  auto inst = RandomInstance(4, 200);
  const FeatureModel model = DefaultFeatureModel();
  const auto serial = PairMatrix(inst.nodes, model, Parallelism::kSerial);
  const auto parallel = PairMatrix(inst.nodes, model, Parallelism::kOpenMP);
  EXPECT_EQ(serial, parallel);
  const Scorer scorer(inst.nodes, model, Parallelism::kOpenMP);
  EXPECT_EQ(scorer.pair_matrix(), serial);
  EXPECT_EQ(scorer.Pair(3, 17), PairwiseScore(inst.nodes[3],
                                              inst.nodes[17], model));
}

TEST(QueryFeatures, DocumentLevelUsesWholeDocument) {
  std::vector<Mention> corpus = {M(0, "Yankees", "bronx", "d1"),
                                 M(1, "Mets", "pennant", "d1"),
                                 M(2, "Giants", "football", "d2")};
  const CorpusStats stats = ComputeStats(corpus);
  QueryNode qn;
  qn.mention.surface = "New York Yankees";
  qn.mention.doc_id = "d1";
  qn.mention.context = BagOfWords("stadium");
  qn.context_level = ContextLevel::kDocument;
  qn.extra_keywords = {"Baseball"};
  const MentionFeatures f = ExtractQueryFeatures(qn, corpus, stats);
  EXPECT_EQ(f.context, (TokenBag{{"bronx", 1}, {"pennant", 1}, {"stadium", 1}}));
  EXPECT_EQ(f.keywords, (std::vector<std::string>{"baseball"}));
  EXPECT_TRUE(f.context_enabled);

  qn.context_level = ContextLevel::kParagraph;
  EXPECT_EQ(ExtractQueryFeatures(qn, corpus, stats).context,
            (TokenBag{{"stadium", 1}}));
  qn.context_level = ContextLevel::kNone;
  EXPECT_FALSE(ExtractQueryFeatures(qn, corpus, stats).context_enabled);
}

}  // namespace
}  // namespace qder
