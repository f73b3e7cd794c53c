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

#include "pushmpc/model.hpp"

#include <array>
#include <cmath>
#include <string>

namespace pushmpc {
namespace {

// 8-point Gauss-Legendre rule on [-1, 1].
constexpr std::array<double, 8> kGaussNodes = {
    -0.9602898564975363, -0.7966664774136267, -0.5255324099163290, -0.1834346424956498,
    0.1834346424956498,  0.5255324099163290,  0.7966664774136267,  0.9602898564975363};
constexpr std::array<double, 8> kGaussWeights = {
    0.1012285362903763, 0.2223810344533745, 0.3137066458778873, 0.3626837833783620,
    0.3626837833783620, 0.3137066458778873, 0.2223810344533745, 0.1012285362903763};

// Integral of sqrt(x^2 + y^2) over [0, hx] x [0, hy] on a 2^level grid.
double quadrant_distance_integral(double hx, double hy, int level) {
  const int cells = 1 << level;
  const double dx = hx / cells;
  const double dy = hy / cells;
  double total = 0.0;
  for (int i = 0; i < cells; ++i) {
    const double cx = (i + 0.5) * dx;
    for (int j = 0; j < cells; ++j) {
      const double cy = (j + 0.5) * dy;
      double cell = 0.0;
      for (std::size_t a = 0; a < kGaussNodes.size(); ++a) {
        const double x = cx + 0.5 * dx * kGaussNodes[a];
        double row = 0.0;
        for (std::size_t b = 0; b < kGaussNodes.size(); ++b) {
          const double y = cy + 0.5 * dy * kGaussNodes[b];
          row += kGaussWeights[b] * std::hypot(x, y);
        }
        cell += kGaussWeights[a] * row;
      }
      total += cell;
    }
  }
  return total * 0.25 * dx * dy;
}

void require_positive(double value, const char* name) {
  if (!(value > 0.0) || !std::isfinite(value)) {
    throw ParameterError(std::string(name) + " must be finite and strictly positive");
  }
}

}  // namespace

char mode_letter(ContactMode mode) {
  switch (mode) {
    case ContactMode::Sticking:
      return 'S';
    case ContactMode::SlidingUp:
      return 'U';
    case ContactMode::SlidingDown:
      return 'D';
  }
  return '?';
}

std::string_view mode_name(ContactMode mode) {
  switch (mode) {
    case ContactMode::Sticking:
      return "sticking";
    case ContactMode::SlidingUp:
      return "sliding_up";
    case ContactMode::SlidingDown:
      return "sliding_down";
  }
  return "unknown";
}

double mean_center_distance(double side_a, double side_b, int level) {
  require_positive(side_a, "side_a");
  require_positive(side_b, "side_b");
  if (level < 0 || level > 12) throw ParameterError("quadrature level out of range [0, 12]");
  // Four congruent quadrants about the centroid.
  const double integral = 4.0 * quadrant_distance_integral(0.5 * side_a, 0.5 * side_b, level);
  return integral / (side_a * side_b);
}

double mean_center_distance(double side_a, double side_b) {
  constexpr double kRelTol = 1e-11;
  constexpr int kMaxLevel = 9;
  double previous = mean_center_distance(side_a, side_b, 0);
  for (int level = 1; level <= kMaxLevel; ++level) {
    const double current = mean_center_distance(side_a, side_b, level);
    if (std::abs(current - previous) <= kRelTol * std::abs(current)) return current;
    previous = current;
  }
  return previous;
}

ModelParams compute_limit_surface(const PhysicalParams& physical) {
  require_positive(physical.mu_g, "mu_g");
  require_positive(physical.mass, "mass");
  require_positive(physical.gravity, "gravity");
  require_positive(physical.side_a, "side_a");
  require_positive(physical.side_b, "side_b");
  if (!(physical.mu_p >= 0.0) || !std::isfinite(physical.mu_p)) {
    throw ParameterError("mu_p must be finite and non-negative");
  }

  ModelParams params;
  params.physical = physical;
  params.area = physical.side_a * physical.side_b;
  params.f_max = physical.mu_g * physical.mass * physical.gravity;
  // m_max = (f_max / A) * integral ||r|| dA = f_max * mean distance.
  params.m_max = params.f_max * mean_center_distance(physical.side_a, physical.side_b);
  params.c = params.m_max / params.f_max;
  params.p_x = -0.5 * physical.side_a;
  return params;
}

MotionCone motion_cone(const SliderState& state, const ModelParams& params) {
  if (!(params.c > 0.0)) throw ParameterError("limit-surface ratio c must be positive");
  const double mu = params.mu_p();
  const double c2 = params.c * params.c;
  const double px = params.p_x;
  const double py = state.p_y;

  const double den_t = c2 + py * py - mu * px * py;
  const double den_b = c2 + py * py + mu * px * py;
  if (!(den_t > 0.0) || !(den_b > 0.0)) {
    throw SingularityError("motion cone denominator is not positive at p_y = " +
                           std::to_string(py));
  }
  return {(mu * c2 - px * py + mu * px * px) / den_t,
          (-mu * c2 - px * py - mu * px * px) / den_b};
}

ContactMode classify_mode(const PusherInput& u, const MotionCone& mc) {
  if (u.v_t > mc.gamma_t * u.v_n) return ContactMode::SlidingUp;
  if (u.v_t < mc.gamma_b * u.v_n) return ContactMode::SlidingDown;
  return ContactMode::Sticking;
}

Eigen::Matrix<double, 4, 2> input_matrix(const SliderState& state, ContactMode mode,
                                         const ModelParams& params) {
  const double c2 = params.c * params.c;
  const double px = params.p_x;
  const double py = state.p_y;
  const double den = c2 + px * px + py * py;

  Eigen::Matrix2d q;
  q << c2 + px * px, px * py, px * py, c2 + py * py;
  q /= den;

  // Rotation body -> world, i.e. C(theta)^T.
  const double ct = std::cos(state.theta);
  const double st = std::sin(state.theta);
  Eigen::Matrix2d rot;
  rot << ct, -st, st, ct;

  // P_j maps the pusher input onto the effective contact velocity; b_j and
  // c_j give the rotation rate and the contact slip rate.
  Eigen::Matrix2d p = Eigen::Matrix2d::Identity();
  Eigen::RowVector2d b(-py / den, px / den);
  Eigen::RowVector2d slip(0.0, 0.0);
  if (mode != ContactMode::Sticking) {
    const MotionCone mc = motion_cone(state, params);
    const double gamma = mode == ContactMode::SlidingUp ? mc.gamma_t : mc.gamma_b;
    p << 1.0, 0.0, gamma, 0.0;
    b << (-py + gamma * px) / den, 0.0;
    slip << -gamma, 1.0;
  }

  Eigen::Matrix<double, 4, 2> out;
  out.topRows<2>() = rot * q * p;
  out.row(2) = b;
  out.row(3) = slip;
  return out;
}

Eigen::Vector4d mode_dynamics(const SliderState& state, const PusherInput& u, ContactMode mode,
                              const ModelParams& params) {
  return input_matrix(state, mode, params) * u.vec();
}

StepOutcome step(const SliderState& state, const PusherInput& u, double dt,
                 const ModelParams& params, std::optional<ContactMode> forced) {
  if (!(dt > 0.0)) throw ParameterError("step dt must be positive");
  StepOutcome out;
  out.state = state;
  const double sub = dt / kPlantSubsteps;
  const double edge = params.half_face();
  for (int k = 0; k < kPlantSubsteps; ++k) {
    const ContactMode mode =
        forced ? *forced : classify_mode(u, motion_cone(out.state, params));
    if (k == 0) out.mode = mode;
    const Eigen::Vector4d next = out.state.vec() + sub * mode_dynamics(out.state, u, mode, params);
    out.state = SliderState::from(next);
    if (out.state.p_y > edge) {
      out.state.p_y = edge;
      out.clamped = true;
    } else if (out.state.p_y < -edge) {
      out.state.p_y = -edge;
      out.clamped = true;
    }
  }
  if (!out.state.vec().allFinite()) throw NumericError("plant state is not finite after step");
  return out;
}

}  // namespace pushmpc
