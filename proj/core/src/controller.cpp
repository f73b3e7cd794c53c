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

#include "pushmpc/controller.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <limits>
#include <string>

namespace pushmpc {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Mat42 = Eigen::Matrix<double, 4, 2>;

constexpr double kTieTolerance = 1e-9;

std::size_t idx(ContactMode mode) { return static_cast<std::size_t>(mode); }

// Everything the program builders need, evaluated once per control period.
struct HorizonData {
  int N = 0;
  double h = 0.0;
  std::vector<PusherInput> u_star;             // n = 0..N-1
  std::array<Mat42, 3> B0;                     // input matrices at the measured x0
  std::array<ConeRows, 3> rows0;               // cone rows with slopes at x0
  std::array<Eigen::Vector4d, 3> f0;           // n = 0 offset per mode
  std::vector<std::array<LinearizedMode, 3>> lin;  // n = 1..N-1 (index n - 1)
};

HorizonData prepare(const SliderState& x0, double t0, const NominalTrajectory& nominal,
                    const MpcConfig& config, const ModelParams& params) {
  config.validate();
  HorizonData data;
  data.N = config.N;
  data.h = config.h;
  data.u_star.reserve(static_cast<std::size_t>(config.N));

  const NominalPoint nom0 = nominal.at(t0);
  const Eigen::Vector4d x_bar0 = x0.vec() - nom0.x_star.vec();
  const ContactMode nominal_mode =
      classify_mode(nom0.u_star, motion_cone(nom0.x_star, params));
  const Eigen::Vector4d f_nominal =
      input_matrix(nom0.x_star, nominal_mode, params) * nom0.u_star.vec();
  const NominalPoint measured{x0, nom0.u_star, t0};
  for (ContactMode mode : kAllModes) {
    data.B0[idx(mode)] = input_matrix(x0, mode, params);
    data.rows0[idx(mode)] = cone_rows(mode, measured, params, config.epsilon);
    data.f0[idx(mode)] =
        x_bar0 + config.h * (data.B0[idx(mode)] * nom0.u_star.vec() - f_nominal);
  }
  data.u_star.push_back(nom0.u_star);

  data.lin.reserve(static_cast<std::size_t>(std::max(0, config.N - 1)));
  for (int n = 1; n < config.N; ++n) {
    const NominalPoint nom = nominal.at(t0 + n * config.h);
    data.u_star.push_back(nom.u_star);
    std::array<LinearizedMode, 3> modes;
    for (ContactMode mode : kAllModes) {
      modes[idx(mode)] = linearize(mode, nom, params, config.epsilon);
    }
    data.lin.push_back(std::move(modes));
  }
  return data;
}

Eigen::Index cone_row_count(ContactMode mode) { return mode == ContactMode::Sticking ? 2 : 1; }

void fill_cost(qp::QpProblem& problem, const QpLayout& layout, const MpcConfig& config) {
  for (int n = 1; n <= layout.N; ++n) {
    const Eigen::Matrix4d weight = n == layout.N ? Eigen::Matrix4d(config.Q + config.Q_N) : config.Q;
    problem.H.block<4, 4>(layout.state(n), layout.state(n)) = 2.0 * weight;
  }
  for (int n = 0; n < layout.N; ++n) {
    problem.H.block<2, 2>(layout.input(n), layout.input(n)) = 2.0 * config.R;
  }
}

// Four input-bound rows on u* + u_bar starting at `row`.
void fill_bounds(qp::QpProblem& problem, Eigen::Index row, Eigen::Index col,
                 const PusherInput& u_star, const MpcConfig& config) {
  problem.A_in(row, col) = 1.0;
  problem.b_in[row] = config.v_n_max - u_star.v_n;
  problem.A_in(row + 1, col) = -1.0;
  problem.b_in[row + 1] = u_star.v_n;
  problem.A_in(row + 2, col + 1) = 1.0;
  problem.b_in[row + 2] = config.v_t_max - u_star.v_t;
  problem.A_in(row + 3, col + 1) = -1.0;
  problem.b_in[row + 3] = config.v_t_max + u_star.v_t;
}

qp::QpProblem assemble_schedule(const HorizonData& data, const std::vector<ContactMode>& modes,
                                const MpcConfig& config) {
  const int N = data.N;
  const QpLayout layout{N};
  Eigen::Index n_in = 4 * N;
  for (ContactMode m : modes) n_in += cone_row_count(m);
  qp::QpProblem problem(layout.size(), 4 * N, n_in);
  fill_cost(problem, layout, config);

  const Eigen::Matrix4d eye = Eigen::Matrix4d::Identity();
  Eigen::Index row = 0;
  for (int n = 0; n < N; ++n) {
    const ContactMode mode = modes[static_cast<std::size_t>(n)];
    const Eigen::Index eq = 4 * n;
    problem.A_eq.block<4, 4>(eq, layout.state(n + 1)) = eye;
    if (n == 0) {
      problem.A_eq.block<4, 2>(eq, layout.input(0)) = -data.h * data.B0[idx(mode)];
      problem.b_eq.segment<4>(eq) = data.f0[idx(mode)];
      const ConeRows& cone = data.rows0[idx(mode)];
      problem.A_in.block(row, layout.input(0), cone.D.rows(), 2) = cone.D;
      problem.b_in.segment(row, cone.g.size()) = cone.g;
      row += cone.g.size();
    } else {
      const LinearizedMode& lin = data.lin[static_cast<std::size_t>(n - 1)][idx(mode)];
      problem.A_eq.block<4, 4>(eq, layout.state(n)) = -(eye + data.h * lin.A);
      problem.A_eq.block<4, 2>(eq, layout.input(n)) = -data.h * lin.B;
      problem.A_in.block(row, layout.state(n), lin.E.rows(), 4) = lin.E;
      problem.A_in.block(row, layout.input(n), lin.D.rows(), 2) = lin.D;
      problem.b_in.segment(row, lin.g.size()) = lin.g;
      row += lin.g.size();
    }
    fill_bounds(problem, row, layout.input(n), data.u_star[static_cast<std::size_t>(n)], config);
    row += 4;
  }
  return problem;
}

qp::QpProblem assemble_big_m(const HorizonData& data, const std::vector<ContactMode>& prefix,
                             const MpcConfig& config) {
  const int N = data.N;
  const QpLayout layout{N};
  const Eigen::Index n_cont = layout.size();
  const Eigen::Index n_vars = n_cont + 3 * N;
  const auto binary = [&](int n, ContactMode m) {
    return n_cont + 3 * n + static_cast<Eigen::Index>(idx(m));
  };
  // Per step: 3 modes x 8 dynamics rows, 2 + 1 + 1 cone rows, 4 input
  // bounds, 6 binary bounds.
  const Eigen::Index per_step = 24 + 4 + 4 + 6;
  const Eigen::Index n_eq = N + 3 * static_cast<Eigen::Index>(prefix.size());
  qp::QpProblem problem(n_vars, n_eq, per_step * N);
  fill_cost(problem, layout, config);

  const double M = config.big_M;
  const Eigen::Matrix4d eye = Eigen::Matrix4d::Identity();
  Eigen::Index row = 0;
  Eigen::Index eq = 0;
  for (int n = 0; n < N; ++n) {
    for (ContactMode mode : kAllModes) {
      // Dynamics residual e = x_{n+1} - F x_n - G u_n - offset, as +-e <= M (1 - z).
      Eigen::Matrix4d F = Eigen::Matrix4d::Zero();
      Mat42 G;
      Eigen::Vector4d offset = Eigen::Vector4d::Zero();
      Eigen::Matrix<double, Eigen::Dynamic, 4> E;
      Eigen::Matrix<double, Eigen::Dynamic, 2> D;
      VectorXd g;
      if (n == 0) {
        G = data.h * data.B0[idx(mode)];
        offset = data.f0[idx(mode)];
        D = data.rows0[idx(mode)].D;
        g = data.rows0[idx(mode)].g;
      } else {
        const LinearizedMode& lin = data.lin[static_cast<std::size_t>(n - 1)][idx(mode)];
        F = eye + data.h * lin.A;
        G = data.h * lin.B;
        E = lin.E;
        D = lin.D;
        g = lin.g;
      }
      for (double sign : {1.0, -1.0}) {
        problem.A_in.block<4, 4>(row, layout.state(n + 1)) = sign * eye;
        if (n > 0) problem.A_in.block<4, 4>(row, layout.state(n)) = -sign * F;
        problem.A_in.block<4, 2>(row, layout.input(n)) = -sign * G;
        problem.A_in.block<4, 1>(row, binary(n, mode)).setConstant(M);
        problem.b_in.segment<4>(row) = Eigen::Vector4d::Constant(M) + sign * offset;
        row += 4;
      }
      const Eigen::Index k = g.size();
      if (n > 0) problem.A_in.block(row, layout.state(n), k, 4) = E;
      problem.A_in.block(row, layout.input(n), k, 2) = D;
      problem.A_in.block(row, binary(n, mode), k, 1).setConstant(M);
      problem.b_in.segment(row, k) = g.array() + M;
      row += k;
    }
    fill_bounds(problem, row, layout.input(n), data.u_star[static_cast<std::size_t>(n)], config);
    row += 4;
    for (ContactMode mode : kAllModes) {
      problem.A_in(row, binary(n, mode)) = -1.0;
      problem.b_in[row] = 0.0;
      problem.A_in(row + 1, binary(n, mode)) = 1.0;
      problem.b_in[row + 1] = 1.0;
      row += 2;
    }
    for (ContactMode mode : kAllModes) problem.A_eq(eq, binary(n, mode)) = 1.0;
    problem.b_eq[eq++] = 1.0;
  }
  for (std::size_t n = 0; n < prefix.size(); ++n) {
    for (ContactMode mode : kAllModes) {
      problem.A_eq(eq, binary(static_cast<int>(n), mode)) = 1.0;
      problem.b_eq[eq++] = mode == prefix[n] ? 1.0 : 0.0;
    }
  }
  return problem;
}

// True when some inactive mode's big-M row would have bound within 1% of M.
bool big_m_tight(const HorizonData& data, const std::vector<ContactMode>& modes,
                 const VectorXd& z, const MpcConfig& config) {
  const QpLayout layout{data.N};
  const double limit = 0.99 * config.big_M;
  const Eigen::Matrix4d eye = Eigen::Matrix4d::Identity();
  for (int n = 0; n < data.N; ++n) {
    const Eigen::Vector4d x_next = z.segment<4>(layout.state(n + 1));
    const Eigen::Vector2d u = z.segment<2>(layout.input(n));
    const Eigen::Vector4d x_now =
        n == 0 ? Eigen::Vector4d::Zero() : Eigen::Vector4d(z.segment<4>(layout.state(n)));
    for (ContactMode mode : kAllModes) {
      if (mode == modes[static_cast<std::size_t>(n)]) continue;
      Eigen::Vector4d e;
      VectorXd cone;
      if (n == 0) {
        e = x_next - data.h * data.B0[idx(mode)] * u - data.f0[idx(mode)];
        cone = data.rows0[idx(mode)].D * u - data.rows0[idx(mode)].g;
      } else {
        const LinearizedMode& lin = data.lin[static_cast<std::size_t>(n - 1)][idx(mode)];
        e = x_next - (eye + data.h * lin.A) * x_now - data.h * lin.B * u;
        cone = lin.E * x_now + lin.D * u - lin.g;
      }
      if (e.cwiseAbs().maxCoeff() >= limit || cone.maxCoeff() >= limit) return true;
    }
  }
  return false;
}

std::string schedule_string(const std::vector<ContactMode>& modes) {
  std::string s;
  s.reserve(modes.size());
  for (ContactMode m : modes) s.push_back(mode_letter(m));
  return s;
}

PusherInput applied_input(const PusherInput& u_star, const VectorXd& z, const QpLayout& layout,
                          const MpcConfig& config) {
  PusherInput u{u_star.v_n + z[layout.input(0)], u_star.v_t + z[layout.input(0) + 1]};
  // Remove solver round-off at the bounds.
  u.v_n = std::clamp(u.v_n, 0.0, config.v_n_max);
  u.v_t = std::clamp(u.v_t, -config.v_t_max, config.v_t_max);
  return u;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void finalize(ControlResult& result, const HorizonData& data, const MpcConfig& config,
              const VectorXd& z) {
  const QpLayout layout{data.N};
  result.u_applied = applied_input(data.u_star.front(), z, layout, config);
  result.u_bar = z.segment(layout.input(0), 2 * data.N);
  result.status = ControlStatus::Ok;
}

}  // namespace

void MpcConfig::validate() const {
  if (N < 1) throw ParameterError("MPC horizon N must be >= 1");
  if (!(h > 0.0)) throw ParameterError("MPC step h must be positive");
  if (!(big_M > 0.0)) throw ParameterError("big_M must be positive");
  if (!(v_n_max > 0.0) || !(v_t_max > 0.0)) throw ParameterError("input bounds must be positive");
  if (!(epsilon >= 0.0)) throw ParameterError("epsilon must be non-negative");
  const auto psd = [](const auto& m, double floor) {
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, m.cwiseAbs().maxCoeff())) {
      return false;
    }
    const Eigen::SelfAdjointEigenSolver<std::decay_t<decltype(m)>> eig(m);
    return eig.eigenvalues().minCoeff() >= floor;
  };
  if (!psd(Q, -1e-12) || !psd(Q_N, -1e-12)) throw ParameterError("Q and Q_N must be PSD");
  if (!psd(R, 1e-12)) throw ParameterError("R must be positive definite");
}

ModeSchedule ModeSchedule::from_modes(std::vector<ContactMode> modes, std::string label) {
  ModeSchedule s;
  s.label = label.empty() ? schedule_string(modes) : std::move(label);
  s.modes = std::move(modes);
  return s;
}

FamilyOfModes default_family(int N) {
  if (N < 1) throw ParameterError("family horizon must be >= 1");
  std::vector<ContactMode> stick(static_cast<std::size_t>(N), ContactMode::Sticking);
  std::vector<ContactMode> up = stick;
  std::vector<ContactMode> down = stick;
  up.front() = ContactMode::SlidingUp;
  down.front() = ContactMode::SlidingDown;
  return {{ModeSchedule::from_modes(up, "M1"), ModeSchedule::from_modes(down, "M2"),
           ModeSchedule::from_modes(stick, "M3")}};
}

qp::QpProblem build_qp(const ModeSchedule& schedule, const SliderState& x0, double t0,
                       const NominalTrajectory& nominal, const MpcConfig& config,
                       const ModelParams& params) {
  if (static_cast<int>(schedule.modes.size()) != config.N) {
    throw ControllerError("schedule length " + std::to_string(schedule.modes.size()) +
                          " does not match horizon " + std::to_string(config.N));
  }
  return assemble_schedule(prepare(x0, t0, nominal, config, params), schedule.modes, config);
}

qp::QpProblem build_big_m_relaxation(const std::vector<ContactMode>& fixed_prefix,
                                     const SliderState& x0, double t0,
                                     const NominalTrajectory& nominal, const MpcConfig& config,
                                     const ModelParams& params) {
  if (static_cast<int>(fixed_prefix.size()) > config.N) {
    throw ControllerError("fixed prefix longer than the horizon");
  }
  return assemble_big_m(prepare(x0, t0, nominal, config, params), fixed_prefix, config);
}

ControlResult fom_step(const SliderState& x, double t, const FamilyOfModes& family,
                       const NominalTrajectory& nominal, const MpcConfig& config,
                       const ModelParams& params) {
  if (family.schedules.empty()) throw ControllerError("family of modes is empty");
  const auto start = std::chrono::steady_clock::now();
  const HorizonData data = prepare(x, t, nominal, config, params);

  ControlResult result;
  result.cost = std::numeric_limits<double>::infinity();
  VectorXd best_z;
  std::size_t best = family.schedules.size();
  for (std::size_t i = 0; i < family.schedules.size(); ++i) {
    const ModeSchedule& schedule = family.schedules[i];
    if (static_cast<int>(schedule.modes.size()) != config.N) {
      throw ControllerError("schedule " + schedule.label + " does not match the horizon");
    }
    const qp::QpSolution sol = qp::solve(assemble_schedule(data, schedule.modes, config));
    ++result.qp_solves;
    result.per_schedule_costs.push_back({schedule.label, sol.ok() ? sol.cost : 0.0, sol.ok()});
    if (!sol.ok()) continue;
    result.max_kkt_residual = std::max(result.max_kkt_residual, sol.kkt_residual);
    if (best == family.schedules.size() || sol.cost < result.cost - kTieTolerance) {
      best = i;
      result.cost = sol.cost;
      best_z = sol.z;
    }
  }
  if (best < family.schedules.size()) {
    const ModeSchedule& winner = family.schedules[best];
    result.chosen_schedule = winner.label;
    result.chosen_modes = winner.modes;
    result.big_M_tight = false;
    finalize(result, data, config, best_z);
  } else {
    result.cost = 0.0;
  }
  result.solve_time = seconds_since(start);
  return result;
}

ControlResult miqp_step(const SliderState& x, double t, const NominalTrajectory& nominal,
                        const MpcConfig& config, const ModelParams& params) {
  const auto start = std::chrono::steady_clock::now();
  const HorizonData data = prepare(x, t, nominal, config, params);

  ControlResult result;
  double incumbent = std::numeric_limits<double>::infinity();
  VectorXd best_z;
  std::vector<ContactMode> best_modes;
  bool root_infeasible = false;

  std::vector<ContactMode> prefix;
  prefix.reserve(static_cast<std::size_t>(data.N));
  const auto search = [&](const auto& self) -> void {
    if (static_cast<int>(prefix.size()) == data.N) {
      const qp::QpSolution leaf = qp::solve(assemble_schedule(data, prefix, config));
      ++result.qp_solves;
      if (!leaf.ok()) return;
      result.max_kkt_residual = std::max(result.max_kkt_residual, leaf.kkt_residual);
      if (leaf.cost < incumbent) {
        incumbent = leaf.cost;
        best_z = leaf.z;
        best_modes = prefix;
      }
      return;
    }
    const qp::QpSolution bound = qp::solve(assemble_big_m(data, prefix, config));
    ++result.qp_solves;
    if (bound.status == qp::QpStatus::Infeasible) {
      if (prefix.empty()) root_infeasible = true;
      return;
    }
    // A numerically uncertified relaxation gives no bound; keep branching.
    if (bound.ok() && bound.cost >= incumbent) return;
    for (ContactMode mode : kAllModes) {
      prefix.push_back(mode);
      self(self);
      prefix.pop_back();
    }
  };
  search(search);

  if (!root_infeasible && !best_modes.empty()) {
    result.cost = incumbent;
    result.chosen_modes = best_modes;
    result.chosen_schedule = schedule_string(best_modes);
    result.per_schedule_costs.push_back({result.chosen_schedule, incumbent, true});
    result.big_M_tight = big_m_tight(data, best_modes, best_z, config);
    finalize(result, data, config, best_z);
  }
  result.solve_time = seconds_since(start);
  return result;
}

ControlResult enumerate_step(const SliderState& x, double t, const NominalTrajectory& nominal,
                             const MpcConfig& config, const ModelParams& params) {
  if (config.N > kMaxEnumerationHorizon) {
    throw ControllerError("enumeration refused for N = " + std::to_string(config.N) +
                          " (limit " + std::to_string(kMaxEnumerationHorizon) + ")");
  }
  const auto start = std::chrono::steady_clock::now();
  const HorizonData data = prepare(x, t, nominal, config, params);

  ControlResult result;
  result.cost = std::numeric_limits<double>::infinity();
  VectorXd best_z;
  std::vector<ContactMode> modes(static_cast<std::size_t>(config.N), ContactMode::Sticking);
  int total = 1;
  for (int n = 0; n < config.N; ++n) total *= 3;
  for (int code = 0; code < total; ++code) {
    // Lexicographic with the first step most significant: S < U < D.
    int rest = code;
    for (int n = config.N - 1; n >= 0; --n) {
      modes[static_cast<std::size_t>(n)] = static_cast<ContactMode>(rest % 3);
      rest /= 3;
    }
    const qp::QpSolution sol = qp::solve(assemble_schedule(data, modes, config));
    ++result.qp_solves;
    const std::string label = schedule_string(modes);
    result.per_schedule_costs.push_back({label, sol.ok() ? sol.cost : 0.0, sol.ok()});
    if (!sol.ok()) continue;
    result.max_kkt_residual = std::max(result.max_kkt_residual, sol.kkt_residual);
    if (sol.cost < result.cost) {
      result.cost = sol.cost;
      result.chosen_modes = modes;
      result.chosen_schedule = label;
      best_z = sol.z;
    }
  }
  if (!result.chosen_modes.empty()) {
    finalize(result, data, config, best_z);
  } else {
    result.cost = 0.0;
  }
  result.solve_time = seconds_since(start);
  return result;
}

}  // namespace pushmpc
