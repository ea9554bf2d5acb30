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


// Serial reference against the OpenMP kernels, plus the engine at several
// worker counts.

#include <cstdint>
#include <memory>
#include <vector>

#include <benchmark/benchmark.h>

#include "qder/blocking.h"
#include "qder/corpus.h"
#include "qder/engine.h"
#include "qder/features.h"
#include "qder/influence.h"
#include "qder/samplers.h"
#include "synthetic.h"

namespace qder {
namespace {

struct Data {
  std::vector<Mention> corpus;
  CorpusStats stats;
  std::vector<MentionFeatures> features;
  std::unique_ptr<QGramIndex> index;
  FeatureModel model;
  Workspace ws;
};

// Built once; roughly 2000 mentions over four planted canopies.
const Data& Shared() {
  static const Data* data = [] {
    auto* d = new Data;
    const std::vector<testing::CanopySpec> specs = {
        {11, 300}, {46, 500}, {130, 600}, {60, 600}};
    auto syn = testing::MakePlantedCorpus(specs, 1);
    d->corpus = std::move(syn.mentions);
    d->stats = ComputeStats(d->corpus);
    for (const Mention& m : d->corpus) {
      d->features.push_back(ExtractFeatures(m, d->stats));
    }
    d->index = std::make_unique<QGramIndex>(d->corpus);
    d->model = DefaultFeatureModel();
    d->ws = BuildWorkspace(d->corpus, d->stats, *d->index, syn.queries,
                           d->model);
    return d;
  }();
  return *data;
}

Parallelism Mode(const benchmark::State& state) {
  return state.range(1) == 0 ? Parallelism::kSerial : Parallelism::kOpenMP;
}

void BM_PairMatrix(benchmark::State& state) {
  const Data& d = Shared();
  const auto n = static_cast<std::size_t>(state.range(0));
  const std::span<const MentionFeatures> nodes(d.features.data(), n);
  for (auto _ : state) {
    benchmark::DoNotOptimize(PairMatrix(nodes, d.model, Mode(state)));
  }
  state.SetItemsProcessed(state.iterations() *
                          static_cast<std::int64_t>(n * (n - 1) / 2));
}
BENCHMARK(BM_PairMatrix)
    ->ArgsProduct({{250, 1000}, {0, 1}})
    ->ArgNames({"n", "omp"})
    ->Unit(benchmark::kMillisecond);

void BM_Influence(benchmark::State& state) {
  const Data& d = Shared();
  const auto n = static_cast<std::size_t>(state.range(0));
  const std::span<const MentionFeatures> nodes(d.features.data(), n);
  std::vector<MentionId> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<MentionId>(i);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        ComputeInfluence(nodes, ids, d.features[0], d.model, Mode(state)));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_Influence)
    ->ArgsProduct({{500, 2000}, {0, 1}})
    ->ArgNames({"n", "omp"})
    ->Unit(benchmark::kMicrosecond);

// range(0) = 0 runs the serial hybrid sampler; otherwise the engine with
// that many workers. Total proposals are the same either way.
void BM_Engine(benchmark::State& state) {
  const Data& d = Shared();
  const std::uint64_t total = 200000;
  const int workers = static_cast<int>(state.range(0));
  const auto queries = EngineQueries(d.ws);
  for (auto _ : state) {
    if (workers == 0) {
      for (std::size_t q = 0; q < d.ws.queries.size(); ++q) {
        SamplerConfig cfg;
        cfg.samples = total / d.ws.queries.size();
        cfg.tau_alpha = 1.0;
        cfg.record_trace = false;
        benchmark::DoNotOptimize(ResolveQuery(d.ws, q, cfg));
      }
    } else {
      ParallelConfig cfg;
      cfg.workers = workers;
      cfg.budget_per_worker = total / static_cast<std::uint64_t>(workers);
      EntityState s = d.ws.InitialState(Algorithm::kHybridAttract);
      benchmark::DoNotOptimize(RunParallel(queries, s, *d.ws.scorer, cfg));
    }
  }
  state.SetItemsProcessed(state.iterations() *
                          static_cast<std::int64_t>(total));
}
BENCHMARK(BM_Engine)
    ->Arg(0)
    ->Arg(1)
    ->Arg(4)
    ->Arg(16)
    ->ArgName("workers")
    ->Unit(benchmark::kMillisecond)
    ->UseRealTime();

}  // namespace
}  // namespace qder

BENCHMARK_MAIN();
