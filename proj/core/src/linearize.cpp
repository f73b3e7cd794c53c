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

#include "pushmpc/linearize.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

namespace pushmpc {

ConeGradient cone_gradient(const SliderState& state, const ModelParams& params) {
  ConeGradient out;
  out.cone = motion_cone(state, params);
  const double mu = params.mu_p();
  const double c2 = params.c * params.c;
  const double px = params.p_x;
  const double py = state.p_y;

  const double num_t = mu * c2 - px * py + mu * px * px;
  const double den_t = c2 + py * py - mu * px * py;
  const double num_b = -mu * c2 - px * py - mu * px * px;
  const double den_b = c2 + py * py + mu * px * py;
  // Quotient rule; both numerators have derivative -p_x.
  out.dgamma_t = (-px * den_t - num_t * (2.0 * py - mu * px)) / (den_t * den_t);
  out.dgamma_b = (-px * den_b - num_b * (2.0 * py + mu * px)) / (den_b * den_b);
  return out;
}

std::pair<Eigen::Matrix4d, Eigen::Matrix<double, 4, 2>> jacobians(ContactMode mode,
                                                                   const NominalPoint& nom,
                                                                   const ModelParams& params) {
  const SliderState& x = nom.x_star;
  const PusherInput& u = nom.u_star;
  const double c2 = params.c * params.c;
  const double px = params.p_x;
  const double py = x.p_y;
  const double den = c2 + px * px + py * py;
  const double dden = 2.0 * py;

  // Effective contact velocity w = P_j u and its p_y derivative.
  Eigen::Vector2d w = u.vec();
  Eigen::Vector2d dw = Eigen::Vector2d::Zero();
  double dslip = 0.0;
  if (mode != ContactMode::Sticking) {
    const ConeGradient cg = cone_gradient(x, params);
    const bool up = mode == ContactMode::SlidingUp;
    const double gamma = up ? cg.cone.gamma_t : cg.cone.gamma_b;
    const double dgamma = up ? cg.dgamma_t : cg.dgamma_b;
    w = {u.v_n, gamma * u.v_n};
    dw = {0.0, dgamma * u.v_n};
    dslip = -dgamma * u.v_n;
  }

  Eigen::Matrix2d num;
  num << c2 + px * px, px * py, px * py, c2 + py * py;
  Eigen::Matrix2d dnum;
  dnum << 0.0, px, px, 2.0 * py;
  const Eigen::Matrix2d q = num / den;
  const Eigen::Matrix2d dq = dnum / den - num * (dden / (den * den));

  const Eigen::Vector2d body_vel = q * w;
  const Eigen::Vector2d dbody_vel = dq * w + q * dw;

  const double omega_num = -py * w[0] + px * w[1];
  const double domega = (-w[0] + px * dw[1]) / den - omega_num * dden / (den * den);

  const double ct = std::cos(x.theta);
  const double st = std::sin(x.theta);
  Eigen::Matrix2d rot;
  rot << ct, -st, st, ct;
  Eigen::Matrix2d drot;
  drot << -st, -ct, ct, -st;

  Eigen::Matrix4d a = Eigen::Matrix4d::Zero();
  a.block<2, 1>(0, 2) = drot * body_vel;
  a.block<2, 1>(0, 3) = rot * dbody_vel;
  a(2, 3) = domega;
  a(3, 3) = dslip;

  Eigen::Matrix<double, 4, 2> b = input_matrix(x, mode, params);
  if (!a.allFinite() || !b.allFinite()) {
    throw LinearizationError("non-finite Jacobian entry at the nominal point");
  }
  return {a, b};
}

ConeRows cone_rows(ContactMode mode, const NominalPoint& nom, const ModelParams& params,
                   double epsilon) {
  const ConeGradient cg = cone_gradient(nom.x_star, params);
  const double gt = cg.cone.gamma_t;
  const double gb = cg.cone.gamma_b;
  Eigen::RowVector4d ct = Eigen::RowVector4d::Zero();
  Eigen::RowVector4d cb = Eigen::RowVector4d::Zero();
  ct[3] = cg.dgamma_t;
  cb[3] = cg.dgamma_b;
  const double vn = nom.u_star.v_n;
  const double vt = nom.u_star.v_t;

  ConeRows rows;
  switch (mode) {
    case ContactMode::Sticking:
      rows.E.resize(2, 4);
      rows.D.resize(2, 2);
      rows.g.resize(2);
      rows.E.row(0) = -vn * ct;
      rows.E.row(1) = vn * cb;
      rows.D << -gt, 1.0, gb, -1.0;
      rows.g << -vt + gt * vn, vt - gb * vn;
      break;
    case ContactMode::SlidingUp:
      rows.E.resize(1, 4);
      rows.D.resize(1, 2);
      rows.g.resize(1);
      rows.E.row(0) = vn * ct;
      rows.D << gt, -1.0;
      rows.g << vt - gt * vn - epsilon;
      break;
    case ContactMode::SlidingDown:
      rows.E.resize(1, 4);
      rows.D.resize(1, 2);
      rows.g.resize(1);
      rows.E.row(0) = -vn * cb;
      rows.D << -gb, 1.0;
      rows.g << -vt + gb * vn - epsilon;
      break;
  }
  return rows;
}

LinearizedMode linearize(ContactMode mode, const NominalPoint& nom, const ModelParams& params,
                         double epsilon) {
  LinearizedMode out;
  out.mode = mode;
  std::tie(out.A, out.B) = jacobians(mode, nom, params);
  ConeRows rows = cone_rows(mode, nom, params, epsilon);
  out.E = std::move(rows.E);
  out.D = std::move(rows.D);
  out.g = std::move(rows.g);
  const ConeGradient cg = cone_gradient(nom.x_star, params);
  out.C_t[3] = cg.dgamma_t;
  out.C_b[3] = cg.dgamma_b;
  out.epsilon = mode == ContactMode::Sticking ? 0.0 : epsilon;
  return out;
}

NominalTrajectory::NominalTrajectory(std::vector<NominalPoint> knots) : knots_(std::move(knots)) {
  if (knots_.empty()) throw ParameterError("nominal trajectory needs at least one knot");
  for (std::size_t i = 1; i < knots_.size(); ++i) {
    if (!(knots_[i].t > knots_[i - 1].t)) {
      throw ParameterError("nominal knots must have strictly increasing time");
    }
  }
}

NominalTrajectory NominalTrajectory::straight_line(double speed, double t_end) {
  if (!(t_end > 0.0)) throw ParameterError("straight-line nominal needs t_end > 0");
  NominalPoint start{{0.0, 0.0, 0.0, 0.0}, {speed, 0.0}, 0.0};
  NominalPoint end{{speed * t_end, 0.0, 0.0, 0.0}, {speed, 0.0}, t_end};
  return NominalTrajectory({start, end});
}

NominalPoint NominalTrajectory::at(double t) const {
  if (t <= knots_.front().t) {
    NominalPoint p = knots_.front();
    p.t = t;
    return p;
  }
  if (t >= knots_.back().t) {
    NominalPoint p = knots_.back();
    p.t = t;
    return p;
  }
  const auto hi = std::upper_bound(knots_.begin(), knots_.end(), t,
                                   [](double value, const NominalPoint& k) { return value < k.t; });
  const auto lo = hi - 1;
  const double s = (t - lo->t) / (hi->t - lo->t);
  NominalPoint p;
  p.t = t;
  const Eigen::Vector4d x0 = lo->x_star.vec();
  const Eigen::Vector4d x1 = hi->x_star.vec();
  const Eigen::Vector2d u0 = lo->u_star.vec();
  const Eigen::Vector2d u1 = hi->u_star.vec();
  // std::lerp is exact when both ends agree, so constant inputs stay constant.
  p.x_star = {std::lerp(x0[0], x1[0], s), std::lerp(x0[1], x1[1], s), std::lerp(x0[2], x1[2], s),
              std::lerp(x0[3], x1[3], s)};
  p.u_star = {std::lerp(u0[0], u1[0], s), std::lerp(u0[1], u1[1], s)};
  return p;
}

}  // namespace pushmpc
