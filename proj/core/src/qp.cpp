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

#include "pushmpc/qp.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace pushmpc::qp {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kInf = std::numeric_limits<double>::infinity();

struct DualResult {
  VectorXd w;
  VectorXd lambda;
  QpStatus status = QpStatus::Numeric;
  int iterations = 0;
};

// Goldfarb-Idnani for  min 0.5 w'Gw + g'w  s.t.  C w <= d  with G = L L'
// positive definite and the rows of C of unit norm.
//
// J holds an orthogonal factorization of G^{-1} such that the first iq
// columns span the normals of the active set: J(:, 0:iq)' N = R with R upper
// triangular.
class DualActiveSet {
 public:
  DualActiveSet(const Eigen::LLT<MatrixXd>& llt, const VectorXd& g, const MatrixXd& C,
                const VectorXd& d, int max_iterations)
      : C_(C), d_(d), max_iterations_(max_iterations) {
    const Eigen::Index n = g.size();
    J_ = llt.matrixU().solve(MatrixXd::Identity(n, n));
    R_ = MatrixXd::Zero(n, n);
    w_ = -llt.solve(g);
    active_.reserve(static_cast<std::size_t>(n));
    is_active_.assign(static_cast<std::size_t>(C.rows()), false);
  }

  DualResult run() {
    DualResult out;
    const Eigen::Index n = w_.size();
    const Eigen::Index m = C_.rows();
    VectorXd dvec(n);
    while (true) {
      const VectorXd slack = d_ - C_ * w_;
      Eigen::Index p = -1;
      double worst = 0.0;
      for (Eigen::Index i = 0; i < m; ++i) {
        if (is_active_[static_cast<std::size_t>(i)]) continue;
        const double tol = 1e-12 * (1.0 + std::abs(d_[i]));
        if (slack[i] < -tol && slack[i] < worst) {
          worst = slack[i];
          p = i;
        }
      }
      if (p < 0) {
        out.status = QpStatus::Optimal;
        break;
      }

      // a is the inward normal of constraint p written as a'w >= -d_p.
      const VectorXd a = -C_.row(p).transpose();
      double u_p = 0.0;
      bool added = false;
      while (!added) {
        if (++iterations_ > max_iterations_) {
          out.status = QpStatus::MaxIter;
          return finish(out);
        }
        const Eigen::Index iq = active_size();
        dvec.noalias() = J_.transpose() * a;
        const VectorXd z = J_.rightCols(n - iq) * dvec.tail(n - iq);
        VectorXd r(iq);
        if (iq > 0) {
          r = R_.topLeftCorner(iq, iq).triangularView<Eigen::Upper>().solve(dvec.head(iq));
        }

        double t1 = kInf;
        Eigen::Index drop = -1;
        for (Eigen::Index k = 0; k < iq; ++k) {
          if (r[k] > 0.0) {
            const double ratio = u_[static_cast<std::size_t>(k)] / r[k];
            if (ratio < t1) {
              t1 = ratio;
              drop = k;
            }
          }
        }

        double t2 = kInf;
        const double curvature = z.dot(a);
        if (n - iq > 0 && dvec.tail(n - iq).norm() > 1e-12 * dvec.norm() && curvature > 0.0) {
          const double slack_p = d_[p] - C_.row(p).dot(w_);
          t2 = std::max(0.0, -slack_p / curvature);
        }

        if (t1 == kInf && t2 == kInf) {
          out.status = QpStatus::Infeasible;
          return finish(out);
        }
        if (t2 == kInf) {
          // Dual step only: the new normal is a combination of active ones.
          for (Eigen::Index k = 0; k < iq; ++k) u_[static_cast<std::size_t>(k)] -= t1 * r[k];
          u_p += t1;
          remove_active(drop);
          continue;
        }

        const double t = std::min(t1, t2);
        w_ += t * z;
        for (Eigen::Index k = 0; k < iq; ++k) u_[static_cast<std::size_t>(k)] -= t * r[k];
        u_p += t;

        if (t2 <= t1) {
          if (!append_active(p, u_p, dvec)) {
            out.status = QpStatus::Numeric;
            return finish(out);
          }
          added = true;
        } else {
          remove_active(drop);
        }
      }
    }
    return finish(out);
  }

 private:
  Eigen::Index active_size() const { return static_cast<Eigen::Index>(active_.size()); }

  DualResult finish(DualResult& out) {
    out.w = w_;
    out.lambda = VectorXd::Zero(C_.rows());
    for (std::size_t k = 0; k < active_.size(); ++k) out.lambda[active_[k]] = std::max(0.0, u_[k]);
    out.iterations = iterations_;
    return out;
  }

  // Rotates d = J'a so that entries past iq vanish, then stores the head as
  // the new column of R.
  bool append_active(Eigen::Index p, double u_p, VectorXd& dvec) {
    const Eigen::Index n = w_.size();
    const Eigen::Index iq = active_size();
    for (Eigen::Index j = n - 1; j > iq; --j) {
      const double h = std::hypot(dvec[j - 1], dvec[j]);
      if (h == 0.0) continue;
      const double c = dvec[j - 1] / h;
      const double s = dvec[j] / h;
      dvec[j - 1] = h;
      dvec[j] = 0.0;
      const VectorXd left = J_.col(j - 1);
      J_.col(j - 1) = c * left + s * J_.col(j);
      J_.col(j) = -s * left + c * J_.col(j);
    }
    R_.col(iq).head(iq + 1) = dvec.head(iq + 1);
    r_norm_ = std::max(r_norm_, std::abs(dvec[iq]));
    if (std::abs(dvec[iq]) <= std::numeric_limits<double>::epsilon() * r_norm_) return false;
    active_.push_back(p);
    u_.push_back(u_p);
    is_active_[static_cast<std::size_t>(p)] = true;
    return true;
  }

  void remove_active(Eigen::Index position) {
    const Eigen::Index iq = active_size();
    is_active_[static_cast<std::size_t>(active_[static_cast<std::size_t>(position)])] = false;
    active_.erase(active_.begin() + position);
    u_.erase(u_.begin() + position);
    for (Eigen::Index k = position; k < iq - 1; ++k) R_.col(k).head(iq) = R_.col(k + 1).head(iq);
    R_.col(iq - 1).setZero();
    // R is now upper Hessenberg from `position` on; restore the triangle.
    for (Eigen::Index j = position; j < iq - 1; ++j) {
      const double h = std::hypot(R_(j, j), R_(j + 1, j));
      if (h == 0.0) continue;
      const double c = R_(j, j) / h;
      const double s = R_(j + 1, j) / h;
      for (Eigen::Index k = j; k < iq - 1; ++k) {
        const double top = R_(j, k);
        const double bottom = R_(j + 1, k);
        R_(j, k) = c * top + s * bottom;
        R_(j + 1, k) = -s * top + c * bottom;
      }
      R_(j + 1, j) = 0.0;
      const VectorXd left = J_.col(j);
      J_.col(j) = c * left + s * J_.col(j + 1);
      J_.col(j + 1) = -s * left + c * J_.col(j + 1);
    }
  }

  const MatrixXd& C_;
  const VectorXd& d_;
  int max_iterations_;
  int iterations_ = 0;
  MatrixXd J_;
  MatrixXd R_;
  VectorXd w_;
  std::vector<Eigen::Index> active_;
  std::vector<double> u_;
  std::vector<bool> is_active_;
  double r_norm_ = 1.0;
};

double inf_norm(const VectorXd& v) { return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>(); }

double primal_violation(const QpProblem& problem, const VectorXd& z) {
  double worst = 0.0;
  if (problem.n_eq() > 0) worst = inf_norm(problem.A_eq * z - problem.b_eq);
  if (problem.n_in() > 0) worst = std::max(worst, (problem.A_in * z - problem.b_in).maxCoeff());
  return std::max(worst, 0.0);
}

nlohmann::json matrix_to_json(const MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

nlohmann::json vector_to_json(const VectorXd& v) {
  return nlohmann::json(std::vector<double>(v.data(), v.data() + v.size()));
}

MatrixXd matrix_from_json(const nlohmann::json& j, Eigen::Index rows, Eigen::Index cols) {
  MatrixXd m(rows, cols);
  if (static_cast<Eigen::Index>(j.size()) != rows) throw std::invalid_argument("matrix row count");
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = j.at(static_cast<std::size_t>(i));
    if (static_cast<Eigen::Index>(row.size()) != cols) {
      throw std::invalid_argument("matrix column count");
    }
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = row.at(static_cast<std::size_t>(c));
  }
  return m;
}

VectorXd vector_from_json(const nlohmann::json& j, Eigen::Index size) {
  if (static_cast<Eigen::Index>(j.size()) != size) throw std::invalid_argument("vector length");
  VectorXd v(size);
  for (Eigen::Index i = 0; i < size; ++i) v[i] = j.at(static_cast<std::size_t>(i));
  return v;
}

}  // namespace

QpProblem::QpProblem(Eigen::Index n_vars, Eigen::Index n_eq, Eigen::Index n_in)
    : H(MatrixXd::Zero(n_vars, n_vars)),
      f(VectorXd::Zero(n_vars)),
      A_eq(MatrixXd::Zero(n_eq, n_vars)),
      b_eq(VectorXd::Zero(n_eq)),
      A_in(MatrixXd::Zero(n_in, n_vars)),
      b_in(VectorXd::Zero(n_in)) {}

double QpProblem::objective(const VectorXd& z) const {
  return 0.5 * z.dot(H * z) + f.dot(z) + constant;
}

void QpProblem::validate() const {
  const Eigen::Index n = H.rows();
  if (H.cols() != n || f.size() != n) throw std::invalid_argument("H and f dimensions differ");
  if (A_eq.cols() != n || A_eq.rows() != b_eq.size()) {
    throw std::invalid_argument("equality constraint dimensions are inconsistent");
  }
  if (A_in.cols() != n || A_in.rows() != b_in.size()) {
    throw std::invalid_argument("inequality constraint dimensions are inconsistent");
  }
  if (!H.allFinite() || !f.allFinite() || !A_eq.allFinite() || !b_eq.allFinite() ||
      !A_in.allFinite() || !b_in.allFinite() || !std::isfinite(constant)) {
    throw std::invalid_argument("QP data contains non-finite entries");
  }
  if (n > 0) {
    const double scale = std::max(1.0, H.cwiseAbs().maxCoeff());
    if ((H - H.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
      throw std::invalid_argument("H is not symmetric");
    }
  }
}

std::string_view status_name(QpStatus status) {
  switch (status) {
    case QpStatus::Optimal:
      return "optimal";
    case QpStatus::Infeasible:
      return "infeasible";
    case QpStatus::MaxIter:
      return "max_iter";
    case QpStatus::Numeric:
      return "numeric";
  }
  return "unknown";
}

double kkt_residual(const QpProblem& problem, const VectorXd& z, const Multipliers& mult) {
  if (z.size() != problem.n_vars() || mult.eq.size() != problem.n_eq() ||
      mult.in.size() != problem.n_in()) {
    throw std::invalid_argument("kkt_residual: dimension mismatch");
  }
  VectorXd grad = problem.H * z + problem.f;
  if (problem.n_eq() > 0) grad += problem.A_eq.transpose() * mult.eq;
  if (problem.n_in() > 0) grad += problem.A_in.transpose() * mult.in;
  double residual = inf_norm(grad);
  residual = std::max(residual, primal_violation(problem, z));
  if (problem.n_in() > 0) {
    const VectorXd gap = problem.A_in * z - problem.b_in;
    residual = std::max(residual, (-mult.in).maxCoeff());
    residual = std::max(residual, inf_norm(mult.in.cwiseProduct(gap)));
  }
  return residual;
}

QpSolution solve(const QpProblem& problem, const QpOptions& options) {
  problem.validate();
  const Eigen::Index n = problem.n_vars();
  const Eigen::Index n_eq = problem.n_eq();
  const Eigen::Index n_in = problem.n_in();

  QpSolution sol;
  sol.z = VectorXd::Zero(n);
  sol.multipliers.eq = VectorXd::Zero(n_eq);
  sol.multipliers.in = VectorXd::Zero(n_in);

  // Equality null space: z = z_p + Z w.
  MatrixXd Z;
  VectorXd z_p = VectorXd::Zero(n);
  Eigen::ColPivHouseholderQR<MatrixXd> qr;
  Eigen::Index rank = 0;
  MatrixXd Q;
  if (n_eq > 0) {
    qr.compute(problem.A_eq.transpose());
    rank = qr.rank();
    Q = qr.householderQ();
    Z = Q.rightCols(n - rank);
    const VectorXd b_perm = qr.colsPermutation().transpose() * problem.b_eq;
    const MatrixXd R11 = qr.matrixR().topLeftCorner(rank, rank);
    const VectorXd y = R11.transpose().triangularView<Eigen::Lower>().solve(b_perm.head(rank));
    z_p = Q.leftCols(rank) * y;
    const double eq_scale = 1.0 + inf_norm(problem.b_eq);
    if (inf_norm(problem.A_eq * z_p - problem.b_eq) > options.tol_feasibility * eq_scale) {
      sol.status = QpStatus::Infeasible;
      return sol;
    }
  } else {
    Z = MatrixXd::Identity(n, n);
  }
  const Eigen::Index nr = Z.cols();

  const MatrixXd HZ = problem.H * Z;
  MatrixXd G = Z.transpose() * HZ;
  G = 0.5 * (G + G.transpose());
  const VectorXd g = Z.transpose() * (problem.H * z_p + problem.f);

  // Reduced, row-normalized inequalities. Rows that vanish on the null space
  // are constant and only need a feasibility check.
  MatrixXd C_full = problem.A_in * Z;
  VectorXd d_full = problem.b_in - problem.A_in * z_p;
  std::vector<Eigen::Index> kept;
  std::vector<double> norms;
  for (Eigen::Index i = 0; i < n_in; ++i) {
    const double norm = C_full.row(i).norm();
    const double row_scale = problem.A_in.row(i).norm();
    if (norm <= 1e-13 * std::max(1.0, row_scale)) {
      if (d_full[i] < -options.tol_feasibility * (1.0 + std::abs(problem.b_in[i]))) {
        sol.status = QpStatus::Infeasible;
        return sol;
      }
      continue;
    }
    kept.push_back(i);
    norms.push_back(norm);
  }
  const Eigen::Index m = static_cast<Eigen::Index>(kept.size());
  MatrixXd C(m, nr);
  VectorXd d(m);
  for (Eigen::Index k = 0; k < m; ++k) {
    C.row(k) = C_full.row(kept[k]) / norms[k];
    d[k] = d_full[kept[k]] / norms[k];
  }

  VectorXd w = VectorXd::Zero(nr);
  VectorXd lambda = VectorXd::Zero(m);
  if (nr > 0) {
    const Eigen::SelfAdjointEigenSolver<MatrixXd> eig(G, Eigen::EigenvaluesOnly);
    const double lam_min = eig.eigenvalues().minCoeff();
    const double lam_max = std::max(1.0, eig.eigenvalues().maxCoeff());
    const bool definite = lam_min > 1e-9 * lam_max;
    sol.regularized = !definite;

    if (lam_min < -1e-8 * lam_max) {
      sol.status = QpStatus::Numeric;  // not convex
      return sol;
    }

    if (definite) {
      const Eigen::LLT<MatrixXd> llt(G);
      DualActiveSet solver(llt, g, C, d, options.max_active_set_iterations);
      DualResult res = solver.run();
      sol.iterations = res.iterations;
      sol.outer_iterations = 1;
      if (res.status != QpStatus::Optimal) {
        sol.status = res.status;
        return sol;
      }
      w = res.w;
      lambda = res.lambda;
    } else {
      const double rho = 1e-6 * lam_max;
      const Eigen::LLT<MatrixXd> llt(G + rho * MatrixXd::Identity(nr, nr));
      bool converged = false;
      for (int outer = 0; outer < options.max_outer_iterations; ++outer) {
        DualActiveSet solver(llt, g - rho * w, C, d, options.max_active_set_iterations);
        DualResult res = solver.run();
        sol.iterations += res.iterations;
        sol.outer_iterations = outer + 1;
        if (res.status != QpStatus::Optimal) {
          sol.status = res.status;
          return sol;
        }
        const double change = inf_norm(res.w - w);
        w = res.w;
        lambda = res.lambda;
        // rho * change is the stationarity residual of the unregularized
        // problem; along flat directions w itself may keep drifting at
        // roundoff level without affecting optimality.
        if (change <= 1e-11 * (1.0 + inf_norm(w)) ||
            rho * change <= 1e-3 * options.tol_kkt) {
          converged = true;
          break;
        }
      }
      if (!converged) {
        sol.status = QpStatus::MaxIter;
        sol.z = z_p + Z * w;
        return sol;
      }
    }
  } else if (m > 0 && (d.array() < -options.tol_feasibility).any()) {
    sol.status = QpStatus::Infeasible;
    return sol;
  }

  sol.z = z_p + Z * w;
  for (Eigen::Index k = 0; k < m; ++k) sol.multipliers.in[kept[k]] = lambda[k] / norms[k];

  if (n_eq > 0 && rank > 0) {
    VectorXd residual = problem.H * sol.z + problem.f;
    if (n_in > 0) residual += problem.A_in.transpose() * sol.multipliers.in;
    const VectorXd rhs = -(Q.leftCols(rank).transpose() * residual);
    const MatrixXd R11 = qr.matrixR().topLeftCorner(rank, rank);
    VectorXd nu_perm = VectorXd::Zero(n_eq);
    nu_perm.head(rank) = R11.triangularView<Eigen::Upper>().solve(rhs);
    sol.multipliers.eq = qr.colsPermutation() * nu_perm;
  }

  sol.cost = problem.objective(sol.z);
  sol.max_violation = primal_violation(problem, sol.z);
  sol.kkt_residual = kkt_residual(problem, sol.z, sol.multipliers);
  const bool certified =
      sol.kkt_residual <= options.tol_kkt && sol.max_violation <= options.tol_feasibility;
  sol.status = certified ? QpStatus::Optimal : QpStatus::Numeric;
  return sol;
}

void dump_json(const QpProblem& problem, const std::filesystem::path& path) {
  nlohmann::json j;
  j["n_vars"] = problem.n_vars();
  j["n_eq"] = problem.n_eq();
  j["n_in"] = problem.n_in();
  j["H"] = matrix_to_json(problem.H);
  j["f"] = vector_to_json(problem.f);
  j["constant"] = problem.constant;
  j["A_eq"] = matrix_to_json(problem.A_eq);
  j["b_eq"] = vector_to_json(problem.b_eq);
  j["A_in"] = matrix_to_json(problem.A_in);
  j["b_in"] = vector_to_json(problem.b_in);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << j.dump(1) << '\n';
}

QpProblem load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  const nlohmann::json j = nlohmann::json::parse(in);
  const Eigen::Index n = j.at("n_vars").get<Eigen::Index>();
  const Eigen::Index n_eq = j.at("n_eq").get<Eigen::Index>();
  const Eigen::Index n_in = j.at("n_in").get<Eigen::Index>();
  QpProblem p;
  p.H = matrix_from_json(j.at("H"), n, n);
  p.f = vector_from_json(j.at("f"), n);
  p.constant = j.value("constant", 0.0);
  p.A_eq = matrix_from_json(j.at("A_eq"), n_eq, n);
  p.b_eq = vector_from_json(j.at("b_eq"), n_eq);
  p.A_in = matrix_from_json(j.at("A_in"), n_in, n);
  p.b_in = vector_from_json(j.at("b_in"), n_in);
  p.validate();
  return p;
}

}  // namespace pushmpc::qp
