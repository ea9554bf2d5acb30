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


#include "qder/eval.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <set>

#include "json.hpp"
#include "qder/blocking.h"
#include "qder/features.h"
#include "qder/log.h"

namespace qder {

namespace fs = std::filesystem;

F1Report F1Q(std::span<const MentionId> retrieved,
             std::span<const Mention> corpus, const std::string& label) {
  F1Report r;
  for (const Mention& m : corpus) {
    if (m.truth && *m.truth == label) ++r.relevant;
  }
  if (r.relevant == 0) {
    throw std::invalid_argument("no corpus mention is labelled '" + label + "'");
  }
  std::set<MentionId> unique(retrieved.begin(), retrieved.end());
  r.retrieved = unique.size();
  for (MentionId id : unique) {
    if (id < corpus.size() && corpus[id].truth && *corpus[id].truth == label) {
      ++r.intersection;
    }
  }
  r.precision = r.retrieved == 0 ? 0.0
                                 : static_cast<double>(r.intersection) /
                                       static_cast<double>(r.retrieved);
  r.recall =
      static_cast<double>(r.intersection) / static_cast<double>(r.relevant);
  r.f1 = r.precision + r.recall > 0.0
             ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
             : 0.0;
  return r;
}

MeanTrace AverageRuns(std::span<const std::vector<double>> series) {
  MeanTrace out;
  if (series.empty()) return out;
  std::size_t shortest = series.front().size();
  std::size_t longest = shortest;
  for (const auto& s : series) {
    shortest = std::min(shortest, s.size());
    longest = std::max(longest, s.size());
  }
  if (shortest != longest) {
    LogWarning("average_runs: traces differ in length, cut to " +
               std::to_string(shortest) + " steps");
    out.truncated_from = longest;
  }
  out.mean.assign(shortest, 0.0);
  out.min.assign(shortest, 0.0);
  out.max.assign(shortest, 0.0);
  for (std::size_t i = 0; i < shortest; ++i) {
    // Sum in sorted order so the mean does not depend on run order.
    std::vector<double> column;
    column.reserve(series.size());
    for (const auto& s : series) column.push_back(s[i]);
    std::sort(column.begin(), column.end());
    double sum = 0.0;
    for (double v : column) sum += v;
    out.mean[i] = sum / static_cast<double>(column.size());
    out.min[i] = column.front();
    out.max[i] = column.back();
  }
  return out;
}

std::vector<double> F1Series(const RunTrace& trace) {
  std::vector<double> out;
  out.reserve(trace.records.size());
  for (const TraceRecord& r : trace.records) out.push_back(r.f1);
  return out;
}

std::optional<std::uint64_t> StepsToThreshold(std::span<const double> series,
                                              double threshold) {
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (series[i] >= threshold) return i + 1;
  }
  return std::nullopt;
}

namespace {

std::string Resolve(const std::string& base, const std::string& path) {
  if (path.empty() || base.empty() || fs::path(path).is_absolute()) return path;
  return (fs::path(base) / path).string();
}

std::uint64_t ToCount(double v, const std::string& key) {
  if (!(v >= 0.0) || v != std::floor(v) || v > 1e18) {
    throw ConfigError(key + " must be a non-negative integer");
  }
  return static_cast<std::uint64_t>(v);
}

}  // namespace

ExperimentSpec ParseExperimentSpec(std::istream& in,
                                   const std::string& base_dir) {
  ConfigDocument doc = ParseConfig(in);
  if (!doc.arrays.empty()) {
    throw ConfigError("experiment file: unexpected [[" +
                      doc.arrays.begin()->first + "]]");
  }
  const ConfigTable& t = doc.root;
  static const std::set<std::string, std::less<>> kKeys = {
      "corpus", "format",  "queries", "query",       "algorithms",
      "seeds",  "budget",  "tau_alpha", "policy",    "K",
      "N",      "weights", "out",     "decay_p",     "min_jaccard",
      "acceptance", "context_level", "workers"};
  for (const auto& [key, value] : t.entries()) {
    if (kKeys.count(key) == 0) {
      throw ConfigError("experiment file line " +
                        std::to_string(t.LineOf(key)) + ": unknown key " + key);
    }
  }
  ExperimentSpec spec;
  spec.corpus = Resolve(base_dir, t.GetString("corpus"));
  if (t.Has("format")) {
    auto f = ParseCorpusFormat(t.GetString("format"));
    if (!f) throw ConfigError("unknown corpus format " + t.GetString("format"));
    spec.format = *f;
  }
  spec.queries = Resolve(base_dir, t.GetString("queries", ""));
  spec.query = t.GetString("query", "");
  if (spec.queries.empty() && spec.query.empty()) {
    throw ConfigError("experiment file needs queries or query");
  }
  for (const std::string& name : t.GetStringList("algorithms")) {
    auto a = ParseAlgorithm(name);
    if (!a) throw ConfigError("unknown algorithm " + name);
    spec.algorithms.push_back(*a);
  }
  for (double s : t.GetNumberList("seeds")) spec.seeds.push_back(ToCount(s, "seeds"));
  if (spec.seeds.empty()) spec.seeds.push_back(0);
  spec.budget = ToCount(t.GetNumber("budget", 10000), "budget");
  spec.tau_alpha = t.GetNumber("tau_alpha", 0.9);
  if (!(spec.tau_alpha >= 0.0 && spec.tau_alpha <= 1.0)) {
    throw ConfigError("tau_alpha must be in [0, 1]");
  }
  if (t.Has("policy")) {
    auto p = ParsePolicy(t.GetString("policy"));
    if (!p) throw ConfigError("unknown policy " + t.GetString("policy"));
    spec.policy = *p;
  }
  spec.k_slice = ToCount(t.GetNumber("K", kDefaultSlice), "K");
  spec.window = ToCount(t.GetNumber("N", kDefaultWindow), "N");
  if (spec.k_slice == 0 || spec.window == 0) {
    throw ConfigError("K and N must be positive");
  }
  spec.weights = Resolve(base_dir, t.GetString("weights", ""));
  spec.out = Resolve(base_dir, t.GetString("out", "results"));
  spec.decay_p = t.GetNumber("decay_p", kDefaultDecayP);
  if (!(spec.decay_p > 0.0 && spec.decay_p < 1.0)) {
    throw ConfigError("decay_p must be in (0, 1)");
  }
  spec.min_jaccard = t.GetNumber("min_jaccard", kDefaultMinJaccard);
  if (!(spec.min_jaccard > 0.0 && spec.min_jaccard <= 1.0)) {
    throw ConfigError("min_jaccard must be in (0, 1]");
  }
  const std::string acceptance = t.GetString("acceptance", "greedy");
  if (acceptance == "greedy") {
    spec.acceptance = AcceptanceMode::kGreedy;
  } else if (acceptance == "metropolis") {
    spec.acceptance = AcceptanceMode::kMetropolis;
  } else {
    throw ConfigError("unknown acceptance mode " + acceptance);
  }
  if (t.Has("context_level")) {
    auto level = ParseContextLevel(t.GetString("context_level"));
    if (!level) throw ConfigError("unknown context level");
    spec.context_level = *level;
  }
  for (double w : t.GetNumberList("workers")) {
    const auto n = ToCount(w, "workers");
    if (n == 0) throw ConfigError("workers must be positive");
    spec.workers.push_back(static_cast<int>(n));
  }
  return spec;
}

ExperimentSpec LoadExperimentSpec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open experiment file " + path);
  return ParseExperimentSpec(in, fs::path(path).parent_path().string());
}

std::vector<QueryNode> ParseWatchlist(std::istream& in) {
  std::vector<QueryNode> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      QueryNode qn;
      qn.mention.surface = j.at("surface").get<std::string>();
      if (qn.mention.surface.empty()) throw ParseError(lineno, "empty surface");
      if (j.contains("context") && j["context"].is_string()) {
        qn.mention.context_text = j["context"].get<std::string>();
        qn.mention.context = BagOfWords(qn.mention.context_text);
      }
      if (j.contains("doc_id") && j["doc_id"].is_string()) {
        qn.mention.doc_id = j["doc_id"].get<std::string>();
      }
      if (j.contains("keywords") && j["keywords"].is_array()) {
        qn.extra_keywords = j["keywords"].get<std::vector<std::string>>();
      }
      if (j.contains("truth") && j["truth"].is_string()) {
        qn.mention.truth = j["truth"].get<std::string>();
      }
      if (j.contains("context_level")) {
        auto level = ParseContextLevel(j["context_level"].get<std::string>());
        if (!level) throw ParseError(lineno, "unknown context_level");
        qn.context_level = *level;
      }
      out.push_back(std::move(qn));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(lineno, e.what());
    }
  }
  return out;
}

std::vector<QueryNode> LoadWatchlist(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open watchlist " + path);
  return ParseWatchlist(in);
}

namespace {

double Since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t)
      .count();
}

nlohmann::ordered_json ToJson(const RunSummary& r) {
  nlohmann::ordered_json j;
  j["algorithm"] = r.algorithm;
  j["seed"] = r.seed;
  j["query"] = r.query;
  j["proposals"] = r.proposals;
  j["accepted"] = r.accepted;
  j["final_f1_q"] = std::isnan(r.final_f1) ? nlohmann::ordered_json(nullptr)
                                           : nlohmann::ordered_json(r.final_f1);
  j["steps_to_f1_0.95"] = r.steps_to_095 ? nlohmann::ordered_json(*r.steps_to_095)
                                         : nlohmann::ordered_json(nullptr);
  j["timing"] = {{"blocking_s", r.blocking_seconds},
                 {"mentions", r.mentions},
                 {"table_build_s", r.table_seconds},
                 {"inference_s", r.inference_seconds},
                 {"total_s", r.total_seconds}};
  j["trace"] = r.trace_file;
  return j;
}

}  // namespace

ExperimentBundle RunExperiment(const ExperimentSpec& spec) {
  ExperimentBundle bundle;
  if (spec.algorithms.empty()) return bundle;

  const std::vector<Mention> corpus = LoadCorpus(spec.corpus, spec.format);
  if (corpus.empty()) throw ConfigError("corpus " + spec.corpus + " is empty");
  const CorpusStats stats = ComputeStats(corpus);
  const QGramIndex index(corpus);
  const FeatureModel model =
      spec.weights.empty() ? DefaultFeatureModel() : LoadFeatureModel(spec.weights);
  std::vector<QueryNode> queries;
  if (!spec.queries.empty()) {
    queries = LoadWatchlist(spec.queries);
  } else {
    QueryNode qn;
    qn.mention.surface = spec.query;
    qn.context_level = spec.context_level;
    queries.push_back(qn);
  }
  fs::create_directories(spec.out);

  WorkspaceOptions options;
  options.min_jaccard = spec.min_jaccard;
  options.decay_p = spec.decay_p;

  SamplerConfig base;
  base.tau_alpha = spec.tau_alpha;
  base.samples = spec.budget;
  base.acceptance = spec.acceptance;
  base.window = spec.window;

  struct Job {
    std::size_t query;  // kNoQuery: watchlist run
    Algorithm algorithm;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  std::vector<Workspace> spaces;
  if (spec.policy) {
    spaces.push_back(BuildWorkspace(corpus, stats, index, queries, model, options));
    for (Algorithm a : spec.algorithms) {
      for (std::uint64_t s : spec.seeds) jobs.push_back({kNoQuery, a, s});
    }
  } else {
    for (std::size_t q = 0; q < queries.size(); ++q) {
      spaces.push_back(BuildWorkspace(corpus, stats, index,
                                      std::span(&queries[q], 1), model, options));
      if (!spaces.back().queries[0].resolvable) {
        LogWarning("query '" + queries[q].mention.surface +
                   "' has an empty canopy, skipped");
        continue;
      }
      for (Algorithm a : spec.algorithms) {
        for (std::uint64_t s : spec.seeds) jobs.push_back({q, a, s});
      }
    }
  }

  bundle.runs.resize(jobs.size());
  const auto njobs = static_cast<std::int64_t>(jobs.size());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t ji = 0; ji < njobs; ++ji) {
    const Job& job = jobs[static_cast<std::size_t>(ji)];
    const bool watchlist = job.query == kNoQuery;
    const Workspace& ws = spaces[watchlist ? 0 : job.query];
    RunSummary& r = bundle.runs[static_cast<std::size_t>(ji)];
    r.algorithm = std::string(AlgorithmName(job.algorithm));
    r.seed = job.seed;
    r.blocking_seconds = ws.blocking_seconds;
    r.table_seconds = ws.table_seconds;
    r.mentions = ws.size();

    SamplerConfig cfg = base;
    cfg.algorithm = job.algorithm;
    cfg.seed = job.seed;
    const auto t0 = std::chrono::steady_clock::now();
    std::string name = r.algorithm;
    if (watchlist) {
      WatchlistConfig wc;
      wc.policy = *spec.policy;
      wc.k_slice = spec.k_slice;
      wc.budget = spec.budget;
      wc.sampler = cfg;
      const WatchlistResult res = RunWatchlist(ws, wc);
      r.inference_seconds = Since(t0);
      r.query = "watchlist";
      r.proposals = res.proposals;
      r.accepted = res.accepted;
      r.final_f1 = res.trace.empty() ? std::nan("") : res.trace.back().mean_f1;
      for (const AggregateRow& row : res.trace) {
        if (row.mean_f1 >= 0.95) {
          r.steps_to_095 = row.cumulative_proposals;
          break;
        }
      }
      name += "_watchlist_s" + std::to_string(job.seed) + ".csv";
      std::ofstream out(fs::path(spec.out) / name);
      WriteAggregateCsv(out, res);
    } else {
      const SamplerResult res = ResolveQuery(ws, 0, cfg);
      r.inference_seconds = Since(t0);
      r.query = ws.queries[0].query.mention.surface;
      r.mentions = ws.queries[0].selectivity;
      r.proposals = res.trace.proposals;
      r.accepted = res.trace.accepted;
      const std::vector<double> f1 = F1Series(res.trace);
      r.final_f1 = f1.empty() ? std::nan("") : f1.back();
      r.steps_to_095 = StepsToThreshold(f1, 0.95);
      name += "_q" + std::to_string(job.query) + "_s" +
              std::to_string(job.seed) + ".csv";
      std::ofstream out(fs::path(spec.out) / name);
      res.trace.WriteCsv(out);
    }
    r.total_seconds = r.blocking_seconds + r.table_seconds + r.inference_seconds;
    r.trace_file = name;
  }

  nlohmann::ordered_json summary = nlohmann::ordered_json::array();
  for (const RunSummary& r : bundle.runs) {
    summary.push_back(ToJson(r));
    bundle.trace_files.push_back((fs::path(spec.out) / r.trace_file).string());
  }
  bundle.summary_file = (fs::path(spec.out) / "summary.json").string();
  std::ofstream out(bundle.summary_file);
  out << summary.dump(2) << '\n';
  return bundle;
}

}  // namespace qder
