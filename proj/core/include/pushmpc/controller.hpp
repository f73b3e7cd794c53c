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

#pragma once

#include <Eigen/Core>

#include <string>
#include <vector>

#include "pushmpc/linearize.hpp"
#include "pushmpc/model.hpp"
#include "pushmpc/qp.hpp"

namespace pushmpc {

struct MpcConfig {
  int N = 35;
  double h = 0.03;
  Eigen::Matrix4d Q = 10.0 * Eigen::Vector4d(1.0, 3.0, 0.1, 0.0).asDiagonal().toDenseMatrix();
  Eigen::Matrix4d Q_N = 200.0 * Eigen::Vector4d(1.0, 3.0, 0.1, 0.0).asDiagonal().toDenseMatrix();
  Eigen::Matrix2d R = 0.5 * Eigen::Matrix2d::Identity();
  double v_n_max = 0.1;
  double v_t_max = 0.1;
  double big_M = 10.0;
  double epsilon = kDefaultConeEpsilon;

  /// Throws ParameterError when an invariant does not hold.
  void validate() const;
};

class ControllerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ModeSchedule {
  std::vector<ContactMode> modes;
  std::string label;

  /// One letter per step (S, U, D).
  static ModeSchedule from_modes(std::vector<ContactMode> modes, std::string label = {});
};

struct FamilyOfModes {
  std::vector<ModeSchedule> schedules;
};

/// M1 = [Up, Stick...], M2 = [Down, Stick...], M3 = [Stick...].
FamilyOfModes default_family(int N);

enum class ControlStatus { Ok, Fault };

struct ScheduleCost {
  std::string label;
  double cost = 0.0;
  bool feasible = false;
};

struct ControlResult {
  PusherInput u_applied;
  Eigen::VectorXd u_bar;  // stacked perturbation inputs of the winning program
  double cost = 0.0;
  std::string chosen_schedule;
  std::vector<ContactMode> chosen_modes;
  std::vector<ScheduleCost> per_schedule_costs;
  double solve_time = 0.0;  // s, wall clock
  double max_kkt_residual = 0.0;
  int qp_solves = 0;
  bool big_M_tight = false;
  ControlStatus status = ControlStatus::Fault;

  bool ok() const { return status == ControlStatus::Ok; }
};

/// Decision vector layout of the per-schedule program:
///   [x_bar_1 .. x_bar_N (4 each), u_bar_0 .. u_bar_{N-1} (2 each)].
/// Equalities: 4 rows per step, in step order. Inequalities per step: the
/// cone rows of the scheduled mode followed by the four input-bound rows
/// (v_n <= max, -v_n <= 0, v_t <= max, -v_t <= max) on u* + u_bar.
struct QpLayout {
  int N = 0;
  Eigen::Index state(int n) const { return 4 * (n - 1); }  // n = 1..N
  Eigen::Index input(int n) const { return 4 * N + 2 * n; }  // n = 0..N-1
  Eigen::Index size() const { return 6 * N; }
};

qp::QpProblem build_qp(const ModeSchedule& schedule, const SliderState& x0, double t0,
                       const NominalTrajectory& nominal, const MpcConfig& config,
                       const ModelParams& params);

/// Big-M program with one binary triple per step appended after the
/// continuous variables ([.., z_S0, z_U0, z_D0, z_S1, ...]). Steps in
/// `fixed_prefix` have their binaries pinned; the rest are relaxed to [0, 1].
qp::QpProblem build_big_m_relaxation(const std::vector<ContactMode>& fixed_prefix,
                                     const SliderState& x0, double t0,
                                     const NominalTrajectory& nominal, const MpcConfig& config,
                                     const ModelParams& params);

/// Solves one program per schedule and applies u* + u_bar_0 of the cheapest
/// feasible one; ties within 1e-9 go to the lowest index.
ControlResult fom_step(const SliderState& x, double t, const FamilyOfModes& family,
                       const NominalTrajectory& nominal, const MpcConfig& config,
                       const ModelParams& params);

/// Exact hybrid optimum over all 3^N schedules by depth-first branch and
/// bound on the mode tree, using big-M relaxations as node bounds.
ControlResult miqp_step(const SliderState& x, double t, const NominalTrajectory& nominal,
                        const MpcConfig& config, const ModelParams& params);

inline constexpr int kMaxEnumerationHorizon = 8;

/// Brute force over all 3^N schedules. Refuses N > kMaxEnumerationHorizon.
ControlResult enumerate_step(const SliderState& x, double t, const NominalTrajectory& nominal,
                             const MpcConfig& config, const ModelParams& params);

}  // namespace pushmpc
