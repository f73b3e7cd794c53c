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

// Independent reference implementations used only by the tests.

#include <Eigen/Core>

#include <nlohmann/json.hpp>

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "pushmpc/qp.hpp"

namespace pushmpc::oracle {

/// Closed-form integral of r = sqrt(x^2 + y^2) over [0, X] x [0, Y].
double quarter_rectangle_distance_integral(double X, double Y);

/// Closed-form mean distance from the centroid over an a x b rectangle.
double rectangle_mean_distance(double a, double b);

/// (sqrt(2) + ln(1 + sqrt(2))) / 6.
double unit_square_mean_distance();

/// Central-difference Jacobian of f at x with step h (per coordinate).
Eigen::MatrixXd central_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                                 const Eigen::VectorXd& x, double h);

struct AdmmResult {
  Eigen::VectorXd z;
  double cost = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Operator-splitting (OSQP-style ADMM) first-order QP solver, run to tight
/// residuals. Slow but structurally unrelated to the active-set solver.
AdmmResult admm_solve(const qp::QpProblem& problem, double tol = 1e-11, int max_iter = 2'000'000);

/// Random feasible 6-variable (or n-variable) QP with PSD Hessian of the
/// given rank, a box, random halfspaces through a slack margin around an
/// interior point, and `n_eq` random equalities.
qp::QpProblem random_qp(std::mt19937_64& rng, int n, int rank, int n_in, int n_eq);

/// Minimal JSON-schema validator (type, const, enum, required, properties,
/// additionalProperties=false, items, maxItems, uniqueItems, oneOf,
/// minimum, maxLength). Returns the violations, empty when valid.
std::vector<std::string> validate_schema(const nlohmann::json& schema, const nlohmann::json& doc,
                                         const std::string& path = "$");

}  // namespace pushmpc::oracle
