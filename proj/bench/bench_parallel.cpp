// SPDX-License-Identifier: Apache-2.0
// Serial reference vs OpenMP kernels on a small synthetic experiment.

#include <benchmark/benchmark.h>

#include <memory>

#include "dkrn/pipeline.hpp"
#include "dkrn/simulator.hpp"

namespace {

const dkrn::Experiment& experiment() {
  static const std::unique_ptr<dkrn::Experiment> ex = [] {
    auto cfg = dkrn::ExperimentConfig::desk_scale();
    cfg.predictor_train.epochs = 1;
    cfg.retrieval_train.base.epochs = 1;
    return dkrn::run_synthetic_experiment(cfg);
  }();
  return *ex;
}

void BM_EvaluateKeywordsSerial(benchmark::State& state) {
  const auto& ex = experiment();
  for (auto _ : state) benchmark::DoNotOptimize(dkrn::evaluate_keywords_serial(ex.dkrn, ex.split.test, &ex.graph));
}

void BM_EvaluateKeywordsParallel(benchmark::State& state) {
  const auto& ex = experiment();
  for (auto _ : state) benchmark::DoNotOptimize(dkrn::evaluate_keywords(ex.dkrn, ex.split.test, &ex.graph));
}

void BM_RankSerial(benchmark::State& state) {
  const auto& ex = experiment();
  const auto& conv = ex.split.test.front().utterances;
  const std::span<const dkrn::Utterance> history(conv.data(), 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(ex.retrieval_keyword.rank_serial(history, "topic001", ex.bank.keyword_features));
  }
}

void BM_RankParallel(benchmark::State& state) {
  const auto& ex = experiment();
  const auto& conv = ex.split.test.front().utterances;
  const std::span<const dkrn::Utterance> history(conv.data(), 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(ex.retrieval_keyword.rank(history, "topic001", ex.bank.keyword_features));
  }
}

void BM_SelfPlaySerial(benchmark::State& state) {
  const auto& ex = experiment();
  dkrn::SelfPlayConfig cfg;
  cfg.pool_size = 200;
  for (auto _ : state) benchmark::DoNotOptimize(dkrn::run_batch_serial(ex.resources(), cfg, ex.starts, 32, 1));
}

void BM_SelfPlayParallel(benchmark::State& state) {
  const auto& ex = experiment();
  dkrn::SelfPlayConfig cfg;
  cfg.pool_size = 200;
  for (auto _ : state) benchmark::DoNotOptimize(dkrn::run_batch(ex.resources(), cfg, ex.starts, 32, 1));
}

}  // namespace

BENCHMARK(BM_EvaluateKeywordsSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EvaluateKeywordsParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RankSerial)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_RankParallel)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_SelfPlaySerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SelfPlayParallel)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
