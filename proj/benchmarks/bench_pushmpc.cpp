// Copyright 2026 The pushmpc Authors
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

#include "pushmpc/controller.hpp"
#include "pushmpc/model.hpp"
#include "pushmpc/qp.hpp"

namespace {

using namespace pushmpc;

const ModelParams& params() {
  static const ModelParams p = compute_limit_surface(PhysicalParams{});
  return p;
}

MpcConfig horizon(int N) {
  MpcConfig c;
  c.N = N;
  return c;
}

// A perturbed state like the one right after the straight-line disturbance.
const SliderState kPerturbed{0.075, 0.01, 0.26, 0.0};

void BM_ModelStep(benchmark::State& state) {
  const SliderState s{0.1, 0.01, 0.2, 0.01};
  const PusherInput u{0.05, 0.02};
  for (auto _ : state) benchmark::DoNotOptimize(step(s, u, 0.03, params()));
}
BENCHMARK(BM_ModelStep);

void BM_LimitSurface(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(compute_limit_surface(PhysicalParams{}));
}
BENCHMARK(BM_LimitSurface)->Unit(benchmark::kMicrosecond);

void BM_QpSolve(benchmark::State& state) {
  const MpcConfig c = horizon(static_cast<int>(state.range(0)));
  const NominalTrajectory nom = NominalTrajectory::straight_line(0.05, 5.0);
  const qp::QpProblem problem =
      build_qp(default_family(c.N).schedules.back(), kPerturbed, 1.5, nom, c, params());
  for (auto _ : state) benchmark::DoNotOptimize(qp::solve(problem));
  state.SetLabel(std::to_string(problem.n_vars()) + " vars");
}
BENCHMARK(BM_QpSolve)->Arg(10)->Arg(35)->Unit(benchmark::kMillisecond);

void BM_FomStep(benchmark::State& state) {
  const MpcConfig c = horizon(static_cast<int>(state.range(0)));
  const NominalTrajectory nom = NominalTrajectory::straight_line(0.05, 5.0);
  const FamilyOfModes family = default_family(c.N);
  for (auto _ : state) {
    benchmark::DoNotOptimize(fom_step(kPerturbed, 1.5, family, nom, c, params()));
  }
}
BENCHMARK(BM_FomStep)->Arg(35)->Unit(benchmark::kMillisecond);

void BM_MiqpStep(benchmark::State& state) {
  const MpcConfig c = horizon(static_cast<int>(state.range(0)));
  const NominalTrajectory nom = NominalTrajectory::straight_line(0.05, 5.0);
  for (auto _ : state) benchmark::DoNotOptimize(miqp_step(kPerturbed, 1.5, nom, c, params()));
}
BENCHMARK(BM_MiqpStep)->DenseRange(3, 6)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
