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


#ifndef QDER_EVAL_H_
#define QDER_EVAL_H_

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qder/config.h"
#include "qder/corpus.h"
#include "qder/engine.h"
#include "qder/scheduler.h"
#include "qder/samplers.h"

namespace qder {

struct F1Report {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t retrieved = 0;
  std::size_t relevant = 0;
  std::size_t intersection = 0;
};

// retrieved: the given corpus ids; relevant: corpus mentions labelled
// `label`. Precision is 0 when nothing is retrieved. Throws
// std::invalid_argument when no corpus mention carries the label.
F1Report F1Q(std::span<const MentionId> retrieved,
             std::span<const Mention> corpus, const std::string& label);

struct MeanTrace {
  std::vector<double> mean;
  std::vector<double> min;
  std::vector<double> max;
  // Longest input length when inputs had to be cut to the shortest.
  std::size_t truncated_from = 0;
};

// Per-step mean and envelope of f1 series. Inputs of unequal length are cut
// to the shortest, with a warning.
MeanTrace AverageRuns(std::span<const std::vector<double>> series);
std::vector<double> F1Series(const RunTrace& trace);

// First 1-based step whose value reaches `threshold`.
std::optional<std::uint64_t> StepsToThreshold(std::span<const double> series,
                                              double threshold);

struct ExperimentSpec {
  std::string corpus;
  CorpusFormat format = CorpusFormat::kJsonl;
  std::string queries;  // watchlist jsonl
  std::string query;    // single surface, used when queries is empty
  std::vector<Algorithm> algorithms;
  std::vector<std::uint64_t> seeds;
  std::uint64_t budget = 10000;
  double tau_alpha = 0.9;
  std::optional<SchedulePolicy> policy;
  std::size_t k_slice = kDefaultSlice;
  std::size_t window = kDefaultWindow;
  std::string weights;  // empty: default weights
  std::string out = "results";
  double decay_p = kDefaultDecayP;
  double min_jaccard = kDefaultMinJaccard;
  AcceptanceMode acceptance = AcceptanceMode::kGreedy;
  ContextLevel context_level = ContextLevel::kParagraph;
  // Thread counts for the engine runs of the bench command.
  std::vector<int> workers;
};

// Relative paths in the file resolve against the file's directory. Throws
// ConfigError on unknown keys, unknown algorithms or bad values.
ExperimentSpec ParseExperimentSpec(std::istream& in,
                                   const std::string& base_dir = "");
ExperimentSpec LoadExperimentSpec(const std::string& path);

struct RunSummary {
  std::string algorithm;
  std::uint64_t seed = 0;
  std::string query;  // surface, or "watchlist"
  std::uint64_t proposals = 0;
  std::uint64_t accepted = 0;
  double final_f1 = 0.0;
  std::optional<std::uint64_t> steps_to_095;
  double blocking_seconds = 0.0;
  std::size_t mentions = 0;  // canopy size
  double table_seconds = 0.0;
  double inference_seconds = 0.0;
  double total_seconds = 0.0;
  std::string trace_file;
};

struct ExperimentBundle {
  std::vector<RunSummary> runs;
  std::vector<std::string> trace_files;
  std::string summary_file;
};

// Runs the cross product of queries, algorithms and seeds, writing one
// trace csv per run and summary.json under spec.out.
ExperimentBundle RunExperiment(const ExperimentSpec& spec);

// Reads a watchlist: jsonl of {surface, context, keywords, truth, doc_id,
// context_level}; only surface is required.
std::vector<QueryNode> ParseWatchlist(std::istream& in);
std::vector<QueryNode> LoadWatchlist(const std::string& path);

}  // namespace qder

#endif  // QDER_EVAL_H_
