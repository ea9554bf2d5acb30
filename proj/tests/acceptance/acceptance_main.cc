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


// End-to-end acceptance checks. Prints one PASS/FAIL line per check and
// exits non-zero if any check fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "oracles.h"
#include "qder/blocking.h"
#include "qder/corpus.h"
#include "qder/engine.h"
#include "qder/eval.h"
#include "qder/features.h"
#include "qder/influence.h"
#include "qder/model.h"
#include "qder/rng.h"
#include "qder/samplers.h"
#include "qder/scheduler.h"
#include "synthetic.h"

namespace qder {
namespace {

using Partition = std::vector<std::vector<MentionId>>;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string Format(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), fmt, args...);
  return buf;
}

std::vector<MentionId> Ids(std::size_t n) {
  std::vector<MentionId> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<MentionId>(i);
  return ids;
}

// Owns everything a Workspace points into.
struct Fixture {
  std::vector<Mention> corpus;
  CorpusStats stats;
  std::unique_ptr<QGramIndex> index;
  FeatureModel model;
  Workspace ws;
};

std::unique_ptr<Fixture> Planted(std::vector<testing::CanopySpec> specs,
                                 std::uint64_t seed,
                                 const testing::SyntheticOptions& opt = {},
                                 bool drop_context = false,
                                 bool drop_keywords = false) {
  auto f = std::make_unique<Fixture>();
  auto syn = testing::MakePlantedCorpus(specs, seed, opt);
  for (QueryNode& q : syn.queries) {
    if (drop_context) q.context_level = ContextLevel::kNone;
    if (drop_keywords) q.extra_keywords.clear();
  }
  f->corpus = std::move(syn.mentions);
  f->stats = ComputeStats(f->corpus);
  f->index = std::make_unique<QGramIndex>(f->corpus);
  f->model = DefaultFeatureModel();
  f->ws = BuildWorkspace(f->corpus, f->stats, *f->index, syn.queries,
                         f->model);
  return f;
}

Outcome Stationarity() {
  const auto corpus =
      LoadCorpus(QDER_TEST_DATA "/stationarity.jsonl", CorpusFormat::kJsonl);
  const CorpusStats stats = ComputeStats(corpus);
  const FeatureModel model =
      LoadFeatureModel(QDER_TEST_DATA "/stationarity.weights");
  std::vector<MentionFeatures> f;
  for (const Mention& m : corpus) f.push_back(ExtractFeatures(m, stats));
  const Scorer scorer(f, model);

  const auto parts = testing::EnumeratePartitions(corpus.size());
  std::map<Partition, double> exact;
  double z = 0.0;
  for (const Partition& p : parts) {
    exact[p] = std::exp(testing::FullModelScore(f, p, model));
    z += exact[p];
  }
  for (auto& [p, w] : exact) w /= z;

  double worst = 0.0;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    SamplerConfig cfg;
    cfg.algorithm = Algorithm::kBaseline;
    cfg.acceptance = AcceptanceMode::kMetropolis;
    cfg.samples = 1000000;
    cfg.seed = seed;
    cfg.record_trace = false;
    SamplingContext ctx;
    ctx.scorer = &scorer;
    std::map<Partition, double> seen;
    RunSampler(EntityState::Singletons(Ids(corpus.size())), ctx, cfg,
               [&](std::uint64_t, const EntityState& s) {
                 seen[s.Partition()] += 1;
               });
    double tv = 0.0;
    for (const auto& [p, w] : exact) {
      tv += std::abs(seen[p] / static_cast<double>(cfg.samples) - w);
    }
    worst = std::max(worst, tv / 2);
  }
  return {parts.size() == 15 && worst < 0.02,
          Format("%zu partitions, worst TV %.4f", parts.size(), worst)};
}

Outcome AliasFidelity() {
  std::mt19937_64 g(2026);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double decode_err = 0.0;
  double freq_err = 0.0;
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 1 + g() % 1000;
    std::vector<double> masses(n);
    double total = 0.0;
    for (double& m : masses) {
      m = g() % 7 == 0 ? 0.0 : u(g) * u(g);
      total += m;
    }
    if (total == 0.0) masses[0] = total = 1.0;
    for (double& m : masses) m /= total;
    const AliasTable table(Ids(n), masses);
    const auto decoded = table.Decode();
    for (std::size_t i = 0; i < n; ++i) {
      decode_err = std::max(decode_err, std::abs(decoded[i] - masses[i]));
    }
    Rng rng(static_cast<std::uint64_t>(t));
    std::vector<double> hits(n, 0.0);
    const int draws = 1000000;
    for (int i = 0; i < draws; ++i) hits[table.Draw(rng)] += 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      freq_err = std::max(freq_err, std::abs(hits[i] / draws - masses[i]));
    }
  }
  return {decode_err <= 1e-9 && freq_err < 0.005,
          Format("max decode error %.2e, max frequency error %.4f",
                 decode_err, freq_err)};
}

Outcome WorkedExample() {
  Fixture f;
  f.corpus = LoadCorpus(QDER_TEST_DATA "/yankees.jsonl", CorpusFormat::kJsonl);
  f.stats = ComputeStats(f.corpus);
  f.index = std::make_unique<QGramIndex>(f.corpus);
  f.model = LoadFeatureModel(QDER_TEST_DATA "/worked_example.weights");
  QueryNode qn;
  qn.mention.surface = "New York Yankees";
  qn.mention.context_text = "pinstripes pennant bronx stadium baseball";
  qn.mention.context = BagOfWords(qn.mention.context_text);
  WorkspaceOptions opt;
  opt.min_jaccard = 0.0;
  f.ws = BuildWorkspace(f.corpus, f.stats, *f.index, std::span(&qn, 1),
                        f.model, opt);
  const std::vector<MentionId> expect = {1, 3, 5};
  int good = 0;
  int runs = 0;
  for (Algorithm a : {Algorithm::kTargetFixed, Algorithm::kHybridAttract,
                      Algorithm::kHybridRepel}) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      SamplerConfig cfg;
      cfg.algorithm = a;
      cfg.samples = 2000;
      cfg.seed = seed;
      const SamplerResult r = ResolveQuery(f.ws, 0, cfg);
      good += f.ws.QueryEntity(r.state, 0) == expect ? 1 : 0;
      ++runs;
    }
  }
  return {good == runs, Format("%d/%d runs give {m2, m4, m6}", good, runs)};
}

Outcome ConvergenceOrdering() {
  const std::uint64_t budget = 100000;
  const std::vector<testing::CanopySpec> specs = {
      {11, 500}, {46, 500}, {130, 500}};
  const Algorithm order[] = {Algorithm::kHybridAttract,
                             Algorithm::kQueryProportional,
                             Algorithm::kTargetFixed, Algorithm::kBaseline};
  const int seeds = 20;
  int ordered = 0;
  int pair_ok[3] = {0, 0, 0};
  double total[4] = {0, 0, 0, 0};
  int censored[4] = {0, 0, 0, 0};
  for (int seed = 0; seed < seeds; ++seed) {
    auto f = Planted(specs, static_cast<std::uint64_t>(seed));
    double steps[4] = {0, 0, 0, 0};
    for (int a = 0; a < 4; ++a) {
      for (std::size_t q = 0; q < specs.size(); ++q) {
        SamplerConfig cfg;
        cfg.algorithm = order[a];
        cfg.samples = budget;
        cfg.seed = static_cast<std::uint64_t>(seed);
        const SamplerResult r = ResolveQuery(f->ws, q, cfg);
        const auto hit = StepsToThreshold(F1Series(r.trace), 0.95);
        // A run that never reaches the threshold counts as the full budget.
        if (!hit) ++censored[a];
        steps[a] += static_cast<double>(hit.value_or(budget));
      }
      total[a] += steps[a];
    }
    for (int a = 0; a < 3; ++a) {
      pair_ok[a] += steps[a] <= steps[a + 1] ? 1 : 0;
    }
    ordered += steps[0] <= steps[1] && steps[1] <= steps[2] &&
                       steps[2] <= steps[3]
                   ? 1
                   : 0;
  }
  const double ratio = total[0] / total[3];
  return {ordered >= 16 && ratio <= 0.2,
          Format("ordered %d/%d seeds (HA<=QP %d, QP<=TF %d, TF<=baseline "
                 "%d); mean steps HA %.0f QP %.0f TF %.0f "
                 "baseline %.0f; censored %d/%d/%d/%d; HA/baseline %.3f",
                 ordered, seeds, pair_ok[0], pair_ok[1], pair_ok[2],
                 total[0] / seeds, total[1] / seeds,
                 total[2] / seeds, total[3] / seeds, censored[0],
                 censored[1], censored[2], censored[3], ratio)};
}

Outcome Scheduling() {
  const std::vector<std::size_t> sizes = {130, 63, 68, 7, 12, 12, 301, 11, 46};
  const std::uint64_t budget = 40000;
  const SchedulePolicy policies[] = {
      SchedulePolicy::kRandom, SchedulePolicy::kSelectivity,
      SchedulePolicy::kClosestFirst, SchedulePolicy::kFarthestFirst};
  const int seeds = 10;
  int sel_wins = 0;
  int closest_wins = 0;
  std::string peaks;
  for (int seed = 0; seed < seeds; ++seed) {
    std::vector<testing::CanopySpec> specs;
    for (std::size_t s : sizes) specs.push_back({s, 2 * s + 20});
    auto f = Planted(specs, 100 + static_cast<std::uint64_t>(seed));
    double mid[4];
    std::uint64_t peak_at[4];
    for (int p = 0; p < 4; ++p) {
      WatchlistConfig cfg;
      cfg.policy = policies[p];
      cfg.k_slice = 500;
      cfg.budget = budget;
      cfg.sampler.seed = static_cast<std::uint64_t>(seed);
      const WatchlistResult r = RunWatchlist(f->ws, cfg);
      mid[p] = 0.0;
      double peak = -1.0;
      peak_at[p] = 0;
      for (const AggregateRow& row : r.trace) {
        if (row.cumulative_proposals <= budget / 2) mid[p] = row.mean_f1;
        if (row.mean_f1 > peak + 1e-12) {
          peak = row.mean_f1;
          peak_at[p] = row.cumulative_proposals;
        }
      }
    }
    sel_wins += mid[1] >= mid[0] ? 1 : 0;
    bool earliest = true;
    for (int p : {0, 1, 3}) earliest &= peak_at[2] <= peak_at[p];
    closest_wins += earliest ? 1 : 0;
    peaks += Format(" %llu/%llu/%llu/%llu",
                    static_cast<unsigned long long>(peak_at[0]),
                    static_cast<unsigned long long>(peak_at[1]),
                    static_cast<unsigned long long>(peak_at[2]),
                    static_cast<unsigned long long>(peak_at[3]));
  }
  return {sel_wins * 10 >= 7 * seeds && closest_wins * 2 > seeds,
          Format("selectivity >= random at mid-run %d/%d; closest-first "
                 "peaks earliest %d/%d; peak proposals "
                 "random/selectivity/closest/farthest:",
                 sel_wins, seeds, closest_wins, seeds) +
              peaks};
}

Outcome ContextLevels() {
  testing::SyntheticOptions opt;
  opt.surname_query = true;
  opt.keyword_rate = 1.0;
  opt.confusion = 0.2;
  opt.topic_draws = 12;
  opt.noise_draws = 1;
  opt.max_distractor = 30;
  const int seeds = 10;
  int good = 0;
  double sum[3] = {0, 0, 0};
  for (int seed = 0; seed < seeds; ++seed) {
    double f1[3];
    for (int level = 0; level < 3; ++level) {
      auto f = Planted({{20, 120}}, static_cast<std::uint64_t>(seed), opt,
                       level == 0, level < 2);
      SamplerConfig cfg;
      cfg.samples = 20000;
      cfg.seed = static_cast<std::uint64_t>(seed);
      const SamplerResult r = ResolveQuery(f->ws, 0, cfg);
      f1[level] = r.trace.records.back().f1;
      sum[level] += f1[level];
    }
    good += f1[0] <= f1[1] && f1[1] <= f1[2] && f1[0] < f1[2] ? 1 : 0;
  }
  return {good * 2 > seeds,
          Format("ordered with strict gain %d/%d; mean f1 none %.3f "
                 "paragraph %.3f keywords %.3f",
                 good, seeds, sum[0] / seeds, sum[1] / seeds,
                 sum[2] / seeds)};
}

// Runs the engine on another thread and reports a stall as a deadlock.
std::optional<ParallelResult> Watched(const std::vector<EngineQuery>& queries,
                                      EntityState& state,
                                      const Scorer& scorer,
                                      const ParallelConfig& cfg) {
  auto fut = std::async(std::launch::async, [&] {
    return RunParallel(queries, state, scorer, cfg);
  });
  if (fut.wait_for(std::chrono::seconds(120)) != std::future_status::ready) {
    std::printf("FAIL engine stalled past the watchdog limit\n");
    std::fflush(stdout);
    std::_Exit(3);
  }
  return fut.get();
}

Outcome ParallelSafety() {
  auto f = Planted({{11, 120}, {46, 200}, {130, 400}, {7, 40}}, 17);
  bool identical = true;
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    SamplerConfig scfg;
    scfg.samples = 20000;
    scfg.seed = seed;
    const SamplerResult serial = ResolveQuery(f->ws, 0, scfg);
    // One worker serves query 0 only when it is the sole engine query.
    const std::vector<EngineQuery> one = {EngineQueries(f->ws)[0]};
    ParallelConfig pcfg;
    pcfg.workers = 1;
    pcfg.tau_alpha = scfg.tau_alpha;
    pcfg.budget_per_worker = scfg.samples;
    pcfg.seed = seed;
    EntityState state = f->ws.InitialState(Algorithm::kHybridAttract);
    const ParallelResult par = RunParallel(one, state, *f->ws.scorer, pcfg);
    const auto& a = par.workers[0].records;
    const auto& b = serial.trace.records;
    bool same = !par.aborted && a.size() == b.size() &&
                state.Partition() == serial.state.Partition();
    for (std::size_t i = 0; same && i < a.size(); ++i) {
      same = a[i].accepted == b[i].accepted && a[i].delta == b[i].delta;
    }
    identical &= same;
  }

  bool safe = true;
  std::string detail;
  for (int workers : {4, 16}) {
    ParallelConfig cfg;
    cfg.workers = workers;
    cfg.budget_per_worker = 1000000 / static_cast<std::uint64_t>(workers);
    cfg.seed = 9;
    EntityState state = f->ws.InitialState(Algorithm::kHybridAttract);
    const auto r = Watched(EngineQueries(f->ws), state, *f->ws.scorer, cfg);
    std::string why;
    const bool ok = !r->aborted && state.CheckInvariants(&why) &&
                    state.num_mentions() == f->ws.size() &&
                    r->totals.proposals == 1000000;
    safe &= ok;
    detail += Format("; %d workers: %llu proposals, %llu lock failures%s",
                     workers,
                     static_cast<unsigned long long>(r->totals.proposals),
                     static_cast<unsigned long long>(r->totals.lock_failures),
                     ok ? "" : (" INVALID " + why + r->error).c_str());
  }
  return {identical && safe,
          std::string(identical ? "1 worker bit-identical to serial"
                                : "1 worker DIFFERS from serial") +
              detail};
}

Outcome BlockingOracle() {
  const auto corpus = testing::NameCorpus(200, 77);
  const QGramIndex index(corpus);
  int checked = 0;
  int equal = 0;
  for (double thr : {0.2, 0.3, 0.5, 1.0}) {
    for (const Mention& m : corpus) {
      ++checked;
      equal += index.ApproximateMatch(m.surface, thr) ==
                       testing::BruteForceMatch(corpus, m.surface, 3, thr)
                   ? 1
                   : 0;
    }
  }
  return {equal == checked,
          Format("%d/%d (query, threshold) pairs equal", equal, checked)};
}

Outcome DeltaOracle() {
  std::mt19937 g(99);
  const FeatureModel model = DefaultFeatureModel();
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const auto inst = testing::RandomInstance(g(), 2 + g() % 11);
    const Scorer scorer(inst.nodes, model);
    const MentionId m = g() % inst.state.num_mentions();
    std::vector<EntityId> targets = inst.state.Entities();
    targets.push_back(kFreshEntity);
    const Move move{m, inst.state.EntityOf(m),
                    targets[g() % targets.size()]};
    const double d = scorer.Delta(inst.state, move).value;
    const double full =
        testing::FullModelScore(inst.nodes,
                                ApplyMove(inst.state, move).Partition(),
                                model) -
        testing::FullModelScore(inst.nodes, inst.state.Partition(), model);
    worst = std::max(worst, std::abs(d - full));
  }
  return {worst <= 1e-6, Format("1000 cases, max error %.2e", worst)};
}

struct Check {
  int id;
  const char* name;
  double limit_seconds;
  std::function<Outcome()> run;
};

}  // namespace
}  // namespace qder

int main() {
  using namespace qder;
  const Check checks[] = {
      {1, "stationarity", 30, Stationarity},
      {2, "alias-table", 60, AliasFidelity},
      {3, "worked-example", 5, WorkedExample},
      {4, "convergence-ordering", 300, ConvergenceOrdering},
      {5, "scheduling", 300, Scheduling},
      {6, "context-levels", 120, ContextLevels},
      {7, "parallel-safety", 180, ParallelSafety},
      {8, "blocking-oracle", 5, BlockingOracle},
      {9, "delta-oracle", 10, DeltaOracle},
  };
  int failed = 0;
  for (const Check& c : checks) {
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - start)
                            .count();
    const bool in_time = secs < c.limit_seconds;
    const bool pass = out.pass && in_time;
    failed += pass ? 0 : 1;
    std::printf("%s [%d] %s (%s) %.1fs of %.0fs%s\n", pass ? "PASS" : "FAIL",
                c.id, c.name, out.detail.c_str(), secs, c.limit_seconds,
                in_time ? "" : " TOO SLOW");
    std::fflush(stdout);
  }
  std::printf("%d/9 passed\n", 9 - failed);
  return failed == 0 ? 0 : 1;
}
