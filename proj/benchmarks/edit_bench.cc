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

#include "dialedit/editor.h"
#include "dialedit/metrics.h"
#include "dialedit/simulator.h"

namespace dialedit {
namespace {

const Backends& Toy() {
  static const Backends backends = MakeToyBackends({});
  return backends;
}

void BM_EditSingleTurn(benchmark::State& state) {
  EditHyperparams hyper;
  hyper.steps = static_cast<int>(state.range(0));
  const Image source = ToyCatalogImage(*Toy().generator, "bench");
  const std::string prompt = "a face with blond hair, a smiling expression";
  std::uint64_t seed = 0;
  for (auto _ : state) {
    EditResult r = Edit(Toy(), source, prompt, hyper, seed++);
    benchmark::DoNotOptimize(r.final_loss.total);
  }
  state.SetItemsProcessed(state.iterations() * hyper.steps);
}
BENCHMARK(BM_EditSingleTurn)->Arg(50)->Arg(300);

void BM_ObjectiveGradient(benchmark::State& state) {
  const Image source = ToyCatalogImage(*Toy().generator, "bench");
  const LatentCode ws = Toy().generator->Invert(source, 0);
  EditObjective objective(Toy(), ws, "a face with bangs", EditHyperparams{});
  LatentCode w = ws;
  for (double& v : w.values) v += 0.1;
  std::vector<double> grad;
  for (auto _ : state) {
    LossTerms terms = objective.EvaluateWithGradient(w, &grad);
    benchmark::DoNotOptimize(terms.total);
  }
}
BENCHMARK(BM_ObjectiveGradient);

void BM_EditDialogue(benchmark::State& state) {
  const auto records = SyntheticRecords(1, 5);
  const Dialogue d = SimulateDialogue(records[0], UtteranceBank::Default(), SimulatorConfig{}, 5);
  const EditMode mode = state.range(0) == 0 ? EditMode::kMultiTurn : EditMode::kCascade;
  EditHyperparams hyper;
  hyper.steps = 100;
  for (auto _ : state) {
    EditState s{SourceImage(Toy(), d.record), {}, {}, 1};
    for (const auto& t : d.turns) {
      if (!t.gold_belief.empty()) EditTurn(s, t.gold_belief, mode, Toy(), hyper);
    }
    benchmark::DoNotOptimize(s.outputs.size());
  }
  state.SetLabel(std::string(EditModeName(mode)));
}
BENCHMARK(BM_EditDialogue)->Arg(0)->Arg(1);

}  // namespace
}  // namespace dialedit
