// Copyright 2026 The DialEdit Authors
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

#include <benchmark/benchmark.h>

#include "dialedit/simulator.h"

namespace dialedit {
namespace {

void BM_SimulateDialogue(benchmark::State& state) {
  const auto records = SyntheticRecords(256, 9);
  const SimulatorConfig config;
  std::uint64_t seed = 0;
  for (auto _ : state) {
    Dialogue d = SimulateDialogue(records[seed % records.size()], UtteranceBank::Default(), config, seed);
    ++seed;
    benchmark::DoNotOptimize(d.turns.size());
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_SimulateDialogue);

void BM_BuildDataset(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto records = SyntheticRecords(n, 9);
  DatasetConfig config;
  config.train_size = n - 2 * (n / 12);
  config.valid_size = n / 12;
  config.test_size = n / 12;
  config.jobs = static_cast<int>(state.range(1));
  for (auto _ : state) {
    DatasetBundle bundle = BuildDataset(records, config);
    benchmark::DoNotOptimize(bundle.train.size());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_BuildDataset)->Args({1200, 1})->Args({1200, 4})->Unit(benchmark::kMillisecond)->UseRealTime();

}  // namespace
}  // namespace dialedit
