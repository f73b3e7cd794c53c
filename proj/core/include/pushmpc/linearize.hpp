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

#include <vector>

#include "pushmpc/model.hpp"

namespace pushmpc {

class LinearizationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NominalPoint {
  SliderState x_star;
  PusherInput u_star;
  double t = 0.0;
};

/// Linearized dynamics and motion-cone rows of one mode about a nominal
/// point. Cone rows read E x_bar + D u_bar <= g; two rows for sticking, one
/// for either sliding mode.
struct LinearizedMode {
  ContactMode mode = ContactMode::Sticking;
  Eigen::Matrix4d A = Eigen::Matrix4d::Zero();
  Eigen::Matrix<double, 4, 2> B = Eigen::Matrix<double, 4, 2>::Zero();
  Eigen::Matrix<double, Eigen::Dynamic, 4> E;
  Eigen::Matrix<double, Eigen::Dynamic, 2> D;
  Eigen::VectorXd g;
  Eigen::RowVector4d C_t = Eigen::RowVector4d::Zero();
  Eigen::RowVector4d C_b = Eigen::RowVector4d::Zero();
  double epsilon = 0.0;
};

/// Strict-inequality margin used in the sliding rows, m/s.
inline constexpr double kDefaultConeEpsilon = 1e-3;

struct ConeGradient {
  MotionCone cone;
  double dgamma_t = 0.0;  // d gamma_t / d p_y
  double dgamma_b = 0.0;  // d gamma_b / d p_y
};

/// Slopes and their p_y derivatives (the only state entry they depend on).
ConeGradient cone_gradient(const SliderState& state, const ModelParams& params);

/// Analytic A_j = df_j/dx and B_j = df_j/du at the nominal point.
std::pair<Eigen::Matrix4d, Eigen::Matrix<double, 4, 2>> jacobians(ContactMode mode,
                                                                   const NominalPoint& nom,
                                                                   const ModelParams& params);

struct ConeRows {
  Eigen::Matrix<double, Eigen::Dynamic, 4> E;
  Eigen::Matrix<double, Eigen::Dynamic, 2> D;
  Eigen::VectorXd g;
};

ConeRows cone_rows(ContactMode mode, const NominalPoint& nom, const ModelParams& params,
                   double epsilon = kDefaultConeEpsilon);

LinearizedMode linearize(ContactMode mode, const NominalPoint& nom, const ModelParams& params,
                         double epsilon = kDefaultConeEpsilon);

/// Reference trajectory (x*, u*) stored as knots and linearly interpolated;
/// queries outside the knot span hold the nearest end point.
class NominalTrajectory {
 public:
  explicit NominalTrajectory(std::vector<NominalPoint> knots);

  /// x*(t) = x0 + [speed * t, 0, 0, 0], u* = (speed, 0) on [0, t_end].
  static NominalTrajectory straight_line(double speed, double t_end);

  NominalPoint at(double t) const;
  double t_begin() const { return knots_.front().t; }
  double t_end() const { return knots_.back().t; }

 private:
  std::vector<NominalPoint> knots_;
};

}  // namespace pushmpc
