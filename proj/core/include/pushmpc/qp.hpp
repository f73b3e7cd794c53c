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

#include <filesystem>
#include <string_view>

/// Dense convex QP:
///
///   minimize    0.5 z'Hz + f'z + constant
///   subject to  A_eq z  = b_eq
///               A_in z <= b_in
///
/// Solved with a Goldfarb-Idnani dual active-set method on the null space of
/// the equality constraints. Reduced Hessians that are only semidefinite are
/// handled with proximal-point outer iterations.
namespace pushmpc::qp {

struct QpProblem {
  Eigen::MatrixXd H;
  Eigen::VectorXd f;
  double constant = 0.0;
  Eigen::MatrixXd A_eq;
  Eigen::VectorXd b_eq;
  Eigen::MatrixXd A_in;
  Eigen::VectorXd b_in;

  QpProblem() = default;
  QpProblem(Eigen::Index n_vars, Eigen::Index n_eq, Eigen::Index n_in);

  Eigen::Index n_vars() const { return H.rows(); }
  Eigen::Index n_eq() const { return A_eq.rows(); }
  Eigen::Index n_in() const { return A_in.rows(); }

  double objective(const Eigen::VectorXd& z) const;

  /// Throws std::invalid_argument on inconsistent dimensions, non-finite data
  /// or an asymmetric H.
  void validate() const;
};

enum class QpStatus { Optimal, Infeasible, MaxIter, Numeric };

std::string_view status_name(QpStatus status);

struct Multipliers {
  Eigen::VectorXd eq;  // free sign
  Eigen::VectorXd in;  // >= 0 at a KKT point
};

struct QpSolution {
  Eigen::VectorXd z;
  Multipliers multipliers;
  double cost = 0.0;
  QpStatus status = QpStatus::Numeric;
  double kkt_residual = 0.0;
  double max_violation = 0.0;  // max(A_in z - b_in, |A_eq z - b_eq|, 0)
  int iterations = 0;          // active-set changes summed over outer iterations
  int outer_iterations = 0;
  bool regularized = false;    // proximal outer loop was needed

  bool ok() const { return status == QpStatus::Optimal; }
};

struct QpOptions {
  int max_outer_iterations = 200;
  int max_active_set_iterations = 20000;
  double tol_feasibility = 1e-8;
  double tol_kkt = 1e-6;
};

QpSolution solve(const QpProblem& problem, const QpOptions& options = {});

/// Infinity norm over stationarity, primal feasibility, dual feasibility and
/// complementarity.
double kkt_residual(const QpProblem& problem, const Eigen::VectorXd& z, const Multipliers& mult);

/// Dump / load with dense row-major matrices under the keys
/// n_vars, n_eq, n_in, H, f, constant, A_eq, b_eq, A_in, b_in.
void dump_json(const QpProblem& problem, const std::filesystem::path& path);
QpProblem load_json(const std::filesystem::path& path);

}  // namespace pushmpc::qp
