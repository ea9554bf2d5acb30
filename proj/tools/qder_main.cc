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

#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "qder/blocking.h"
#include "qder/config.h"
#include "qder/corpus.h"
#include "qder/engine.h"
#include "qder/eval.h"
#include "qder/features.h"
#include "qder/log.h"
#include "qder/samplers.h"
#include "qder/scheduler.h"

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace qder;

constexpr int kExitOk = 0;
constexpr int kExitEmpty = 2;
constexpr int kExitUsage = 64;
constexpr int kExitData = 65;
constexpr int kExitFailure = 1;

// Thrown for flag combinations CLI11 cannot express.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CorpusFlags {
  std::string corpus;
  std::string format = "jsonl";
  int q = kDefaultQ;
};

struct SamplingFlags {
  std::string algorithm = "hybrid-attract";
  std::string acceptance = "greedy";
  double tau_alpha = 0.9;
  std::size_t samples = 10000;
  double min_jaccard = kDefaultMinJaccard;
  double decay_p = kDefaultDecayP;
  std::size_t window = kDefaultWindow;
  bool adaptive_stop = false;
  std::uint64_t seed = 0;
  int workers = 1;
  std::string contention = "resample";
  std::string weights;
  std::string context_level = "paragraph";
};

struct QueryFlags {
  std::string surface;
  std::string context;
  std::string doc_id;
  std::vector<std::string> keywords;
  std::string truth;
  bool exhaustive = false;
  std::string out;
};

struct WatchlistFlags {
  std::string watchlist;
  std::string schedule = "random";
  std::size_t k_slice = kDefaultSlice;
  std::string out = "watchlist.csv";
};

struct SpecFlags {
  std::string spec;
  std::vector<int> workers;
  std::string contention = "resample";
};

const std::vector<std::string> kAlgorithms = {
    "baseline", "target-fixed", "query-proportional", "hybrid-attract",
    "hybrid-repel"};

void AddCorpusFlags(CLI::App* app, CorpusFlags& f) {
  app->add_option("--corpus", f.corpus, "Mention corpus file")
      ->required()
      ->check(CLI::ExistingFile);
  app->add_option("--format", f.format, "Corpus format")
      ->check(CLI::IsMember({"jsonl", "tsv"}))
      ->capture_default_str();
  app->add_option("--q", f.q, "q-gram length for blocking")
      ->check(CLI::Range(1, 16))
      ->capture_default_str();
}

void AddSamplingFlags(CLI::App* app, SamplingFlags& f) {
  app->add_option("--algorithm", f.algorithm, "Sampler")
      ->check(CLI::IsMember(kAlgorithms))
      ->capture_default_str();
  app->add_option("--acceptance", f.acceptance, "Acceptance rule")
      ->check(CLI::IsMember({"greedy", "metropolis"}))
      ->capture_default_str();
  app->add_option("--tau-alpha", f.tau_alpha,
                  "Probability of a query-focused proposal")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  app->add_option("--samples", f.samples, "Proposal budget")
      ->capture_default_str();
  app->add_option("--min-jaccard", f.min_jaccard,
                  "q-gram Jaccard threshold of the canopy")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  app->add_option("--decay-p", f.decay_p,
                  "Rank decay of the influence tables")
      ->check(CLI::Range(1e-9, 1.0 - 1e-9))
      ->capture_default_str();
  app->add_option("--window", f.window, "Convergence window length")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app->add_flag("--adaptive-stop", f.adaptive_stop,
                "Stop after 5 windows without an accepted proposal");
  app->add_option("--seed", f.seed, "Random seed")->capture_default_str();
  app->add_option("--workers", f.workers,
                  "Threads sharing one state (hybrid-attract only)")
      ->check(CLI::Range(1, 1024))
      ->capture_default_str();
  app->add_option("--contention-policy", f.contention,
                  "What a worker does when a lock is taken")
      ->check(CLI::IsMember({"resample", "baseline-fallback"}))
      ->capture_default_str();
  app->add_option("--weights", f.weights, "Feature weight file")
      ->check(CLI::ExistingFile);
  app->add_option("--context-level", f.context_level,
                  "Context used by the query template")
      ->check(CLI::IsMember({"none", "paragraph", "document"}))
      ->capture_default_str();
}

SamplerConfig ToSamplerConfig(const SamplingFlags& f) {
  SamplerConfig cfg;
  cfg.algorithm = *ParseAlgorithm(f.algorithm);
  cfg.acceptance = f.acceptance == "metropolis" ? AcceptanceMode::kMetropolis
                                                : AcceptanceMode::kGreedy;
  cfg.tau_alpha = f.tau_alpha;
  cfg.samples = f.samples;
  cfg.seed = f.seed;
  cfg.window = f.window;
  cfg.adaptive_stop = f.adaptive_stop;
  cfg.Validate();
  if (f.workers > 1 && cfg.algorithm != Algorithm::kHybridAttract) {
    throw UsageError("--workers > 1 requires --algorithm hybrid-attract");
  }
  return cfg;
}

double Since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t)
      .count();
}

struct Loaded {
  std::vector<Mention> corpus;
  CorpusStats stats;
  QGramIndex index;
  FeatureModel model;
};

Loaded Load(const CorpusFlags& c, const std::string& weights) {
  Loaded l;
  l.corpus = LoadCorpus(c.corpus, *ParseCorpusFormat(c.format));
  if (l.corpus.empty()) throw ParseError(0, "corpus " + c.corpus + " is empty");
  l.stats = ComputeStats(l.corpus);
  l.index = QGramIndex(l.corpus, c.q);
  l.model = weights.empty() ? DefaultFeatureModel() : LoadFeatureModel(weights);
  return l;
}

void PrintRows(const std::vector<Mention>& corpus,
               const std::vector<MentionId>& ids) {
  for (MentionId id : ids) {
    const Mention& m = corpus[id];
    std::cout << m.doc_id << '\t' << m.start_pos << '\t' << m.surface << '\n';
  }
}

// Runs the query entity resolution either serially or on the engine.
struct Resolution {
  std::vector<MentionId> members;
  std::uint64_t proposals = 0;
  std::uint64_t accepted = 0;
  std::optional<double> f1;
  json contention;
};

Resolution Resolve(const Workspace& ws, const SamplerConfig& cfg,
                   const SamplingFlags& f, const std::string& trace_path) {
  Resolution r;
  if (f.workers > 1) {
    EntityState state = ws.InitialState(cfg.algorithm);
    ParallelConfig pc;
    pc.workers = f.workers;
    pc.tau_alpha = cfg.tau_alpha;
    pc.budget_per_worker =
        (cfg.samples + static_cast<std::size_t>(f.workers) - 1) /
        static_cast<std::size_t>(f.workers);
    pc.contention = *ParseContentionPolicy(f.contention);
    pc.acceptance = cfg.acceptance;
    pc.seed = cfg.seed;
    const ParallelResult pr = RunParallel(EngineQueries(ws), state,
                                          *ws.scorer, pc);
    if (pr.aborted) throw std::runtime_error("engine aborted: " + pr.error);
    r.members = ws.QueryEntity(state, 0);
    r.proposals = pr.totals.proposals;
    r.accepted = pr.totals.accepted;
    r.contention = json::parse(pr.StatsJson());
    return r;
  }
  const SamplerResult res = ResolveQuery(ws, 0, cfg);
  r.members = ws.QueryEntity(res.state, 0);
  r.proposals = res.trace.proposals;
  r.accepted = res.trace.accepted;
  const std::vector<double> series = F1Series(res.trace);
  if (!series.empty() && !std::isnan(series.back())) r.f1 = series.back();
  if (!trace_path.empty()) {
    std::ofstream out(trace_path);
    if (!out) throw std::runtime_error("cannot write " + trace_path);
    res.trace.WriteCsv(out);
  }
  return r;
}

int CmdIndex(const CorpusFlags& c, const std::string& out_path) {
  const auto t0 = std::chrono::steady_clock::now();
  const Loaded l = Load(c, "");
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot write " + out_path);
    WriteCorpusJsonl(out, l.corpus);
  }
  std::size_t postings = 0;
  for (const Mention& m : l.corpus) postings += l.index.GramCountOf(m.id);
  json j;
  j["mentions"] = l.corpus.size();
  j["documents"] = l.stats.doc_count();
  j["vocabulary"] = l.stats.vocabulary_size();
  j["q"] = c.q;
  j["gram_postings"] = postings;
  if (!out_path.empty()) j["canonical"] = out_path;
  j["seconds"] = Since(t0);
  std::cout << j.dump() << '\n';
  return kExitOk;
}

int CmdStats(const CorpusFlags& c, const std::string& surface,
             double min_jaccard) {
  const Loaded l = Load(c, "");
  std::size_t labelled = 0;
  std::size_t with_keywords = 0;
  std::set<std::string> labels;
  for (const Mention& m : l.corpus) {
    if (m.truth) {
      ++labelled;
      labels.insert(*m.truth);
    }
    if (m.keywords) ++with_keywords;
  }
  json j;
  j["mentions"] = l.corpus.size();
  j["documents"] = l.stats.doc_count();
  j["vocabulary"] = l.stats.vocabulary_size();
  j["labelled"] = labelled;
  j["labels"] = labels.size();
  j["with_keywords"] = with_keywords;
  if (!surface.empty()) {
    j["surface"] = surface;
    j["selectivity"] =
        l.index.ApproximateMatch(surface, min_jaccard).size();
  }
  std::cout << j.dump() << '\n';
  return kExitOk;
}

QueryNode MakeTemplate(const QueryFlags& q, const SamplingFlags& f) {
  QueryNode qn;
  qn.mention.surface = q.surface;
  qn.mention.doc_id = q.doc_id;
  qn.mention.context_text = q.context;
  qn.mention.context = BagOfWords(q.context);
  if (!q.truth.empty()) qn.mention.truth = q.truth;
  qn.extra_keywords = q.keywords;
  qn.context_level = *ParseContextLevel(f.context_level);
  return qn;
}

WorkspaceOptions ToWorkspaceOptions(const SamplingFlags& f, bool exhaustive) {
  WorkspaceOptions o;
  o.min_jaccard = f.min_jaccard;
  o.decay_p = f.decay_p;
  o.exhaustive = exhaustive;
  return o;
}

int CmdQuery(const CorpusFlags& c, const SamplingFlags& f, const QueryFlags& q) {
  const SamplerConfig cfg = ToSamplerConfig(f);
  if (q.surface.empty()) throw UsageError("--surface must not be empty");
  const auto t0 = std::chrono::steady_clock::now();
  const Loaded l = Load(c, f.weights);
  const QueryNode qn = MakeTemplate(q, f);
  const Workspace ws =
      BuildWorkspace(l.corpus, l.stats, l.index, std::span(&qn, 1), l.model,
                     ToWorkspaceOptions(f, q.exhaustive));
  if (!ws.queries[0].resolvable) {
    std::cerr << "qder: no mention matches '" << q.surface << "'\n";
    return kExitEmpty;
  }
  const auto t1 = std::chrono::steady_clock::now();
  const Resolution r = Resolve(ws, cfg, f, q.out);
  const double inference = Since(t1);

  PrintRows(l.corpus, r.members);
  json j;
  j["query"] = q.surface;
  j["algorithm"] = AlgorithmName(cfg.algorithm);
  j["seed"] = cfg.seed;
  j["canopy"] = ws.queries[0].selectivity;
  j["proposals"] = r.proposals;
  j["accepted"] = r.accepted;
  j["retrieved"] = r.members.size();
  if (!q.truth.empty()) {
    try {
      j["f1_q"] = F1Q(r.members, l.corpus, q.truth).f1;
    } catch (const std::invalid_argument&) {
      j["f1_q"] = nullptr;
    }
  }
  if (!r.contention.is_null()) j["contention"] = r.contention;
  if (!q.out.empty() && f.workers == 1) j["trace"] = q.out;
  j["timing"] = {{"blocking_s", ws.blocking_seconds},
                 {"table_build_s", ws.table_seconds},
                 {"inference_s", inference},
                 {"total_s", Since(t0)}};
  std::cout << j.dump() << '\n';
  if (r.members.empty()) {
    std::cerr << "qder: the query entity holds no corpus mention\n";
    return kExitEmpty;
  }
  return kExitOk;
}

int CmdWatchlist(const CorpusFlags& c, const SamplingFlags& f,
                 const WatchlistFlags& w, bool level_given) {
  SamplerConfig cfg = ToSamplerConfig(f);
  if (f.workers > 1) throw UsageError("watchlist runs are single-threaded");
  const auto t0 = std::chrono::steady_clock::now();
  const Loaded l = Load(c, f.weights);
  std::vector<QueryNode> queries = LoadWatchlist(w.watchlist);
  if (queries.empty()) {
    std::cerr << "qder: watchlist " << w.watchlist << " is empty\n";
    return kExitEmpty;
  }
  if (level_given) {
    for (QueryNode& qn : queries) {
      qn.context_level = *ParseContextLevel(f.context_level);
    }
  }
  const Workspace ws = BuildWorkspace(l.corpus, l.stats, l.index, queries,
                                      l.model, ToWorkspaceOptions(f, false));
  bool any = false;
  for (const WorkspaceQuery& wq : ws.queries) any = any || wq.resolvable;
  if (!any) {
    std::cerr << "qder: no watchlist query has a non-empty canopy\n";
    return kExitEmpty;
  }
  WatchlistConfig wc;
  wc.policy = *ParsePolicy(w.schedule);
  wc.k_slice = w.k_slice;
  wc.budget = cfg.samples;
  wc.adaptive_stop = f.adaptive_stop;
  wc.sampler = cfg;
  const WatchlistResult res = RunWatchlist(ws, wc);
  {
    std::ofstream out(w.out);
    if (!out) throw std::runtime_error("cannot write " + w.out);
    WriteAggregateCsv(out, res);
  }
  bool empty = true;
  for (std::size_t i = 0; i < ws.queries.size(); ++i) {
    const WorkspaceQuery& wq = ws.queries[i];
    std::cout << "# query " << i << ": " << wq.query.mention.surface
              << " (canopy " << wq.selectivity << ")\n";
    if (!wq.resolvable) continue;
    const std::vector<MentionId> members = ws.QueryEntity(res.state, i);
    empty = empty && members.empty();
    PrintRows(l.corpus, members);
  }
  json j;
  j["queries"] = ws.queries.size();
  j["schedule"] = PolicyName(wc.policy);
  j["algorithm"] = AlgorithmName(cfg.algorithm);
  j["seed"] = cfg.seed;
  j["proposals"] = res.proposals;
  j["accepted"] = res.accepted;
  j["terminated_early"] = res.terminated_early;
  j["trace"] = w.out;
  j["total_s"] = Since(t0);
  std::cout << j.dump() << '\n';
  return empty ? kExitEmpty : kExitOk;
}

int CmdEval(const SpecFlags& s) {
  const ExperimentSpec spec = LoadExperimentSpec(s.spec);
  const ExperimentBundle b = RunExperiment(spec);
  json j;
  j["runs"] = b.runs.size();
  j["summary"] = b.summary_file;
  std::cout << j.dump() << '\n';
  return kExitOk;
}

int CmdBench(const SpecFlags& s, const CLI::App& app) {
  ExperimentSpec spec = LoadExperimentSpec(s.spec);
  if (app.count("--workers") > 0) spec.workers = s.workers;
  if (spec.workers.empty()) spec.workers = {1};
  const ExperimentBundle b = RunExperiment(spec);

  const std::vector<Mention> corpus = LoadCorpus(spec.corpus, spec.format);
  const CorpusStats stats = ComputeStats(corpus);
  const QGramIndex index(corpus);
  const FeatureModel model = spec.weights.empty()
                                 ? DefaultFeatureModel()
                                 : LoadFeatureModel(spec.weights);
  std::vector<QueryNode> queries;
  if (!spec.queries.empty()) {
    queries = LoadWatchlist(spec.queries);
  } else {
    QueryNode qn;
    qn.mention.surface = spec.query;
    qn.context_level = spec.context_level;
    queries.push_back(qn);
  }
  WorkspaceOptions options;
  options.min_jaccard = spec.min_jaccard;
  options.decay_p = spec.decay_p;
  const Workspace ws =
      BuildWorkspace(corpus, stats, index, queries, model, options);
  const std::vector<EngineQuery> eq = EngineQueries(ws);
  if (eq.empty()) {
    std::cerr << "qder: no query has a non-empty canopy\n";
    return kExitEmpty;
  }
  json records = json::array();
  for (int workers : spec.workers) {
    EntityState state = ws.InitialState(Algorithm::kHybridAttract);
    ParallelConfig pc;
    pc.workers = workers;
    pc.budget_per_worker =
        std::max<std::uint64_t>(1, spec.budget / static_cast<unsigned>(workers));
    pc.contention = *ParseContentionPolicy(s.contention);
    pc.acceptance = spec.acceptance;
    pc.seed = spec.seeds.empty() ? 0 : spec.seeds.front();
    const auto t0 = std::chrono::steady_clock::now();
    const ParallelResult pr = RunParallel(eq, state, *ws.scorer, pc);
    json rec = json::parse(pr.StatsJson());
    rec["seconds"] = Since(t0);
    rec["invariants_ok"] = state.CheckInvariants();
    if (pr.aborted) rec["error"] = pr.error;
    std::cout << rec.dump() << '\n';
    records.push_back(rec);
  }
  const std::string path = (fs::path(spec.out) / "bench.json").string();
  std::ofstream out(path);
  out << records.dump(2) << '\n';
  json j;
  j["runs"] = b.runs.size();
  j["summary"] = b.summary_file;
  j["bench"] = path;
  std::cout << j.dump() << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Query-driven entity resolution over a mention corpus.", "qder"};
  app.require_subcommand(1);
  bool verbose = false;
  bool quiet = false;
  app.add_flag("-v,--verbose", verbose, "Log progress to stderr");
  app.add_flag("--quiet", quiet, "Suppress warnings");

  CorpusFlags corpus;
  SamplingFlags sampling;
  QueryFlags query;
  WatchlistFlags watch;
  SpecFlags spec;
  std::string index_out;
  std::string stats_surface;
  double stats_jaccard = kDefaultMinJaccard;

  CLI::App* index = app.add_subcommand("index", "Validate and index a corpus");
  AddCorpusFlags(index, corpus);
  index->add_option("--out", index_out, "Write the corpus as canonical jsonl");

  CLI::App* stats = app.add_subcommand("stats", "Print corpus statistics");
  AddCorpusFlags(stats, corpus);
  stats->add_option("--surface", stats_surface,
                    "Also report the canopy size of this surface");
  stats->add_option("--min-jaccard", stats_jaccard, "Canopy threshold")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();

  CLI::App* q = app.add_subcommand("query", "Resolve the entity of one query");
  AddCorpusFlags(q, corpus);
  AddSamplingFlags(q, sampling);
  q->add_option("--surface", query.surface, "Query surface string")
      ->required();
  q->add_option("--context", query.context, "Context text of the query");
  q->add_option("--doc-id", query.doc_id,
                "Document of the query, used by --context-level document");
  q->add_option("--keywords", query.keywords, "Comma separated keywords")
      ->delimiter(',');
  q->add_option("--truth", query.truth, "Gold label, enables f1_q");
  q->add_flag("--exhaustive", query.exhaustive,
              "Sample over the whole corpus instead of the canopy");
  q->add_option("--out", query.out, "Write the proposal trace as csv");

  CLI::App* wl =
      app.add_subcommand("watchlist", "Resolve a list of queries together");
  AddCorpusFlags(wl, corpus);
  AddSamplingFlags(wl, sampling);
  wl->add_option("--watchlist", watch.watchlist, "Watchlist jsonl file")
      ->required()
      ->check(CLI::ExistingFile);
  wl->add_option("--schedule", watch.schedule, "Scheduling policy")
      ->check(CLI::IsMember({"random", "selectivity", "closest", "farthest"}))
      ->capture_default_str();
  wl->add_option("--k-slice", watch.k_slice, "Proposals per scheduling slice")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  wl->add_option("--out", watch.out, "Aggregate trace csv")
      ->capture_default_str();

  CLI::App* ev = app.add_subcommand("eval", "Run an experiment file");
  ev->add_option("spec", spec.spec, "Experiment file")->required();

  CLI::App* bench =
      app.add_subcommand("bench", "Run an experiment file and time the engine");
  bench->add_option("spec", spec.spec, "Experiment file")->required();
  bench->add_option("--workers", spec.workers, "Comma separated thread counts")
      ->delimiter(',')
      ->check(CLI::Range(1, 1024));
  bench->add_option("--contention-policy", spec.contention,
                    "What a worker does when a lock is taken")
      ->check(CLI::IsMember({"resample", "baseline-fallback"}))
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }
  if (quiet) SetLogLevel(LogLevel::kQuiet);
  if (verbose) SetLogLevel(LogLevel::kInfo);

  const bool spec_command = ev->parsed() || bench->parsed();
  try {
    if (index->parsed()) return CmdIndex(corpus, index_out);
    if (stats->parsed()) return CmdStats(corpus, stats_surface, stats_jaccard);
    if (q->parsed()) return CmdQuery(corpus, sampling, query);
    if (wl->parsed()) {
      return CmdWatchlist(corpus, sampling, watch,
                          wl->count("--context-level") > 0);
    }
    if (ev->parsed()) return CmdEval(spec);
    if (bench->parsed()) return CmdBench(spec, *bench);
  } catch (const UsageError& e) {
    std::cerr << "qder: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "qder: " << e.what() << '\n';
    return kExitData;
  } catch (const ParseError& e) {
    std::cerr << "qder: " << e.what() << '\n';
    return kExitData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "qder: " << e.what() << '\n';
    return spec_command ? kExitData : kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "qder: " << e.what() << '\n';
    return spec_command ? kExitData : kExitFailure;
  }
  return kExitUsage;
}
