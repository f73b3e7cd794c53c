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

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "pushmpc/linearize.hpp"

namespace pushmpc {
namespace {

ModelParams table1() { return compute_limit_surface(PhysicalParams{}); }

double rel_err(const Eigen::MatrixXd& a, const Eigen::MatrixXd& ref) {
  const double scale = ref.cwiseAbs().maxCoeff();
  const double diff = (a - ref).cwiseAbs().maxCoeff();
  return scale > 1e-12 ? diff / scale : diff;
}

NominalPoint random_nominal(std::mt19937_64& rng, ContactMode mode, const ModelParams& p) {
  std::uniform_real_distribution<double> th(-3.0, 3.0), py(-0.04, 0.04), vn(0.01, 0.1),
      unit(0.0, 1.0);
  NominalPoint nom;
  nom.x_star = {unit(rng), unit(rng), th(rng), py(rng)};
  const double v_n = vn(rng);
  const MotionCone mc = motion_cone(nom.x_star, p);
  double v_t = 0.0;
  switch (mode) {
    case ContactMode::Sticking:
      v_t = v_n * (mc.gamma_b + unit(rng) * (mc.gamma_t - mc.gamma_b));
      break;
    case ContactMode::SlidingUp:
      v_t = v_n * mc.gamma_t + 0.01 + 0.1 * unit(rng);
      break;
    case ContactMode::SlidingDown:
      v_t = v_n * mc.gamma_b - 0.01 - 0.1 * unit(rng);
      break;
  }
  nom.u_star = {v_n, v_t};
  return nom;
}

TEST(Jacobians, TranslationColumnsVanish) {
  const ModelParams p = table1();
  std::mt19937_64 rng(1);
  for (ContactMode m : kAllModes) {
    const auto [A, B] = jacobians(m, random_nominal(rng, m, p), p);
    EXPECT_EQ(A.col(0).norm(), 0.0);
    EXPECT_EQ(A.col(1).norm(), 0.0);
  }
}

TEST(Jacobians, CentredStickingInputMatrix) {
  const ModelParams p = table1();
  const NominalPoint nom{{0, 0, 0, 0}, {0.05, 0}, 0};
  const auto [A, B] = jacobians(ContactMode::Sticking, nom, p);
  EXPECT_NEAR(B(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(B(1, 0), 0.0, 1e-15);
}

TEST(Jacobians, MatchCentralDifferences) {
  const ModelParams p = table1();
  std::mt19937_64 rng(7);
  for (ContactMode m : kAllModes) {
    for (int k = 0; k < 20; ++k) {
      const NominalPoint nom = random_nominal(rng, m, p);
      const auto [A, B] = jacobians(m, nom, p);
      const auto fx = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
        return mode_dynamics(SliderState::from(x), nom.u_star, m, p);
      };
      const auto fu = [&](const Eigen::VectorXd& u) -> Eigen::VectorXd {
        return mode_dynamics(nom.x_star, PusherInput::from(u), m, p);
      };
      const Eigen::MatrixXd A_fd = oracle::central_jacobian(fx, nom.x_star.vec(), 1e-6);
      const Eigen::MatrixXd B_fd = oracle::central_jacobian(fu, nom.u_star.vec(), 1e-6);
      EXPECT_LE(rel_err(A, A_fd), 1e-5) << mode_name(m) << " sample " << k;
      EXPECT_LE(rel_err(B, B_fd), 1e-5) << mode_name(m) << " sample " << k;
    }
  }
}

TEST(Jacobians, FiniteDifferenceConvergesAtTwoStepSizes) {
  const ModelParams p = table1();
  const NominalPoint nom{{0, 0, 0.4, 0.017}, {0.05, 0.2}, 0};
  const auto [A, B] = jacobians(ContactMode::SlidingUp, nom, p);
  const auto fx = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    return mode_dynamics(SliderState::from(x), nom.u_star, ContactMode::SlidingUp, p);
  };
  const double e1 = rel_err(A, oracle::central_jacobian(fx, nom.x_star.vec(), 1e-3));
  const double e2 = rel_err(A, oracle::central_jacobian(fx, nom.x_star.vec(), 5e-4));
  // Central differences are second order: halving h quarters the error.
  EXPECT_NEAR(e1 / e2, 4.0, 0.2);
}

TEST(ConeGradient, MatchesScalarFiniteDifference) {
  const ModelParams p = table1();
  for (double py : {-0.04, -0.01, 0.0, 0.02, 0.044}) {
    const ConeGradient cg = cone_gradient({0, 0, 0, py}, p);
    const double h = 1e-7;
    const MotionCone up = motion_cone({0, 0, 0, py + h}, p);
    const MotionCone dn = motion_cone({0, 0, 0, py - h}, p);
    EXPECT_NEAR(cg.dgamma_t, (up.gamma_t - dn.gamma_t) / (2 * h), 1e-6);
    EXPECT_NEAR(cg.dgamma_b, (up.gamma_b - dn.gamma_b) / (2 * h), 1e-6);
  }
}

TEST(ConeRows, StickingAtCentredNominal) {
  const ModelParams p = table1();
  const NominalPoint nom{{0, 0, 0, 0}, {0.05, 0}, 0};
  const ConeRows rows = cone_rows(ContactMode::Sticking, nom, p);
  const MotionCone mc = motion_cone(nom.x_star, p);
  ASSERT_EQ(rows.g.size(), 2);
  EXPECT_NEAR(rows.g[0], mc.gamma_t * 0.05, 1e-15);
  EXPECT_NEAR(rows.g[1], -mc.gamma_b * 0.05, 1e-15);
  EXPECT_GT(rows.g.minCoeff(), 0.0);
}

TEST(ConeRows, RowCountsPerMode) {
  const ModelParams p = table1();
  const NominalPoint nom{{0, 0, 0, 0.01}, {0.05, 0.01}, 0};
  EXPECT_EQ(cone_rows(ContactMode::Sticking, nom, p).E.rows(), 2);
  EXPECT_EQ(cone_rows(ContactMode::SlidingUp, nom, p).E.rows(), 1);
  EXPECT_EQ(cone_rows(ContactMode::SlidingDown, nom, p).E.rows(), 1);
}

TEST(ConeRows, ExactOnTheNonlinearConeForUbar) {
  // With x_bar = 0 the rows are exact: E*0 + D*u_bar <= g  <=>  u in cone.
  const ModelParams p = table1();
  const NominalPoint nom{{0, 0, 0, 0.01}, {0.05, 0.0}, 0};
  const MotionCone mc = motion_cone(nom.x_star, p);
  const ConeRows rows = cone_rows(ContactMode::Sticking, nom, p, 0.0);
  for (double vt : {-0.1, -0.02, 0.0, 0.02, 0.1}) {
    const Eigen::Vector2d u_bar(0.0, vt);
    const bool inside = ((rows.D * u_bar - rows.g).array() <= 1e-15).all();
    const PusherInput u{0.05, vt};
    EXPECT_EQ(inside, classify_mode(u, mc) == ContactMode::Sticking) << vt;
  }
}

TEST(ConeRows, SlidingRowsCarryEpsilonMargin) {
  const ModelParams p = table1();
  const NominalPoint nom{{0, 0, 0, 0}, {0.05, 0.0}, 0};
  const ConeRows a = cone_rows(ContactMode::SlidingUp, nom, p, 0.0);
  const ConeRows b = cone_rows(ContactMode::SlidingUp, nom, p, 1e-3);
  EXPECT_NEAR(a.g[0] - b.g[0], 1e-3, 1e-15);
}

TEST(LinearModel, SecondOrderRemainder) {
  const ModelParams p = table1();
  const NominalPoint nom{{0.1, 0.0, 0.3, 0.01}, {0.05, 0.005}, 0};
  const auto [A, B] = jacobians(ContactMode::Sticking, nom, p);
  const Eigen::Vector4d f0 = mode_dynamics(nom.x_star, nom.u_star, ContactMode::Sticking, p);
  const Eigen::Vector4d dx(0.3, -0.2, 0.5, 0.4);
  const Eigen::Vector2d du(0.4, -0.3);
  const auto remainder = [&](double s) {
    const SliderState x = SliderState::from(nom.x_star.vec() + s * dx);
    const PusherInput u = PusherInput::from(nom.u_star.vec() + s * du);
    return (mode_dynamics(x, u, ContactMode::Sticking, p) - f0 - A * (s * dx) - B * (s * du))
        .norm();
  };
  const double r1 = remainder(1e-3);
  const double r2 = remainder(5e-4);
  EXPECT_NEAR(r1 / r2, 4.0, 0.2);
}

TEST(Nominal, StraightLineAndHold) {
  const NominalTrajectory nom = NominalTrajectory::straight_line(0.05, 2.0);
  const NominalPoint mid = nom.at(1.0);
  EXPECT_NEAR(mid.x_star.x, 0.05, 1e-15);
  EXPECT_EQ(mid.u_star.v_n, 0.05);
  EXPECT_EQ(mid.u_star.v_t, 0.0);
  const NominalPoint after = nom.at(5.0);
  EXPECT_EQ(after.x_star.x, 0.1);
  EXPECT_EQ(after.t, 5.0);
}

TEST(Nominal, RejectsUnorderedKnots) {
  EXPECT_THROW(NominalTrajectory({}), ParameterError);
  NominalPoint a{{}, {0.05, 0}, 1.0};
  NominalPoint b{{}, {0.05, 0}, 1.0};
  EXPECT_THROW(NominalTrajectory({a, b}), ParameterError);
}

TEST(Linearize, BundlesAllPieces) {
  const ModelParams p = table1();
  const NominalPoint nom{{0, 0, 0, 0.01}, {0.05, 0.0}, 0};
  const LinearizedMode lm = linearize(ContactMode::SlidingDown, nom, p);
  const ConeGradient cg = cone_gradient(nom.x_star, p);
  EXPECT_EQ(lm.C_t[3], cg.dgamma_t);
  EXPECT_EQ(lm.C_b[3], cg.dgamma_b);
  EXPECT_EQ(lm.epsilon, kDefaultConeEpsilon);
  EXPECT_EQ(lm.E.rows(), 1);
}

}  // namespace
}  // namespace pushmpc
