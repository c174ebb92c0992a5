/*
 * Copyright 2026 The temporec Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Parallel kernels against their serial references. Thread count follows
// OMP_NUM_THREADS.

#include <benchmark/benchmark.h>

#include <numeric>
#include <random>
#include <vector>

#include "temporec/kernels.hpp"

namespace {

using namespace temporec;

struct Problem {
  ScorerParams params;
  UserFeatures features;
  Matrix items;
  std::vector<Example> batch;
  std::vector<std::uint8_t> keep;
};

Problem make_problem(std::size_t d, std::size_t h, std::size_t n_users, std::size_t n_items,
                     std::size_t batch) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 0.3);
  Problem p;
  p.params = ScorerParams::init(ModelShape{d, h, ScoringVariant::kFull}, 2);
  auto fill = [&](Matrix& m, std::size_t rows) {
    m = Matrix(rows, d);
    for (double& x : m.flat()) x = g(rng);
  };
  fill(p.features.short_term, n_users);
  fill(p.features.long_term, n_users);
  fill(p.features.general, n_users);
  fill(p.items, n_items);
  for (std::size_t e = 0; e < batch; ++e) {
    p.batch.push_back({static_cast<std::uint32_t>(rng() % n_users),
                       static_cast<std::uint32_t>(rng() % n_items),
                       static_cast<std::uint8_t>(e % 5 == 0)});
  }
  p.keep.resize(batch * h);
  for (auto& k : p.keep) k = rng() % 5 != 0;
  return p;
}

template <auto Fn>
void BM_Gradient(benchmark::State& state) {
  const auto p = make_problem(384, 128, 1000, 2000, static_cast<std::size_t>(state.range(0)));
  const kernels::Batch b{p.batch, p.keep, 0.2};
  ScorerParams grad;
  for (auto _ : state) {
    benchmark::DoNotOptimize(Fn(p.params, p.features, p.items, b, grad));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <auto Fn>
void BM_ScoreCatalog(benchmark::State& state) {
  const auto p = make_problem(384, 128, 256, static_cast<std::size_t>(state.range(0)), 1);
  std::vector<std::uint32_t> users(64);
  std::iota(users.begin(), users.end(), 0u);
  std::vector<double> out;
  for (auto _ : state) {
    Fn(p.params, p.features, p.items, users, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * 64 * state.range(0));
}

BENCHMARK(BM_Gradient<kernels::batch_gradient_serial>)->Name("gradient/serial")->Arg(2048);
BENCHMARK(BM_Gradient<kernels::batch_gradient>)->Name("gradient/parallel")->Arg(2048);
BENCHMARK(BM_ScoreCatalog<kernels::score_catalog_serial>)->Name("score_catalog/serial")->Arg(500);
BENCHMARK(BM_ScoreCatalog<kernels::score_catalog>)->Name("score_catalog/parallel")->Arg(500);

}  // namespace

BENCHMARK_MAIN();
