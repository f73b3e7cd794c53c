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

// Acceptance checks: one PASS/FAIL line per primary criterion, exit status 1
// when any of them fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Geometry>

#include "oracles.hpp"
#include "pushmpc/controller.hpp"
#include "pushmpc/linearize.hpp"
#include "pushmpc/model.hpp"
#include "pushmpc/qp.hpp"
#include "pushmpc/sim.hpp"
#ifdef PUSHMPC_HAVE_SERVICE
#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "pushmpc/service.hpp"
#endif

namespace {

using namespace pushmpc;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Verdict {
  bool pass = true;
  std::string detail;
};

int g_failures = 0;

void report(int id, const char* name, const Verdict& v) {
  std::printf("%s [%d] %s: %s\n", v.pass ? "PASS" : "FAIL", id, name, v.detail.c_str());
  std::fflush(stdout);
  if (!v.pass) ++g_failures;
}

template <typename... Args>
std::string format(const char* fmt, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

ModelParams table1() { return compute_limit_surface(PhysicalParams{}); }

double rel_err(const Eigen::MatrixXd& a, const Eigen::MatrixXd& ref) {
  const double scale = ref.cwiseAbs().maxCoeff();
  const double diff = (a - ref).cwiseAbs().maxCoeff();
  return scale > 1e-12 ? diff / scale : diff;
}

// ---- 1. model property suite ---------------------------------------------

Verdict model_properties() {
  const auto start = Clock::now();
  const ModelParams p = table1();
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> pos(-1.0, 1.0), ang(-std::numbers::pi, std::numbers::pi),
      face(-p.half_face(), p.half_face()), vn(0.0, 0.1), vt(-0.3, 0.3);

  double continuity = 0.0;
  double symmetry = 0.0;
  double equivariance = 0.0;
  int partition_failures = 0;
  const int samples = 1000;
  for (int k = 0; k < samples; ++k) {
    const SliderState s{pos(rng), pos(rng), ang(rng), face(rng)};
    const MotionCone mc = motion_cone(s, p);
    const double v = vn(rng);

    // Boundary continuity across S/U, S/D and U/D (the latter meet at v_n = 0).
    const PusherInput on_t{v, mc.gamma_t * v};
    const PusherInput on_b{v, mc.gamma_b * v};
    const PusherInput apex{0.0, vt(rng)};
    const auto f = [&](const PusherInput& u, ContactMode m) { return mode_dynamics(s, u, m, p); };
    continuity = std::max(
        {continuity,
         (f(on_t, ContactMode::Sticking) - f(on_t, ContactMode::SlidingUp)).cwiseAbs().maxCoeff(),
         (f(on_b, ContactMode::Sticking) - f(on_b, ContactMode::SlidingDown)).cwiseAbs().maxCoeff(),
         (f(apex, ContactMode::SlidingUp) - f(apex, ContactMode::SlidingDown))
             .cwiseAbs()
             .maxCoeff()});

    // Partition totality: exactly one region holds and classify agrees.
    for (const PusherInput& u : {PusherInput{v, vt(rng)}, on_t, on_b, PusherInput{0.0, 0.0}}) {
      const bool stick = mc.gamma_b * u.v_n <= u.v_t && u.v_t <= mc.gamma_t * u.v_n;
      const bool up = u.v_t > mc.gamma_t * u.v_n;
      const bool down = u.v_t < mc.gamma_b * u.v_n;
      const ContactMode expect =
          stick ? ContactMode::Sticking : (up ? ContactMode::SlidingUp : ContactMode::SlidingDown);
      if (int(stick) + int(up) + int(down) != 1 || classify_mode(u, mc) != expect) {
        ++partition_failures;
      }
    }

    // Mirror symmetry: (y, theta, p_y, v_t) -> negated maps U onto D.
    const PusherInput u{v, vt(rng)};
    const SliderState m{s.x, -s.y, -s.theta, -s.p_y};
    const PusherInput mu{u.v_n, -u.v_t};
    const Eigen::Vector4d flip(1.0, -1.0, -1.0, -1.0);
    for (const auto& [a, b] : {std::pair{ContactMode::SlidingUp, ContactMode::SlidingDown},
                               std::pair{ContactMode::SlidingDown, ContactMode::SlidingUp},
                               std::pair{ContactMode::Sticking, ContactMode::Sticking}}) {
      symmetry = std::max(symmetry, (flip.cwiseProduct(mode_dynamics(s, u, a, p)) -
                                     mode_dynamics(m, mu, b, p))
                                        .cwiseAbs()
                                        .maxCoeff());
    }
    const MotionCone mm = motion_cone(m, p);
    symmetry = std::max({symmetry, std::abs(mm.gamma_t + mc.gamma_b),
                         std::abs(mm.gamma_b + mc.gamma_t)});

    // Frame equivariance: rotating theta by phi rotates (xdot, ydot).
    const double phi = ang(rng);
    const SliderState r{s.x, s.y, s.theta + phi, s.p_y};
    const Eigen::Rotation2Dd rot(phi);
    for (ContactMode mode : kAllModes) {
      const Eigen::Vector4d d0 = mode_dynamics(s, u, mode, p);
      const Eigen::Vector4d d1 = mode_dynamics(r, u, mode, p);
      const Eigen::Vector2d rotated = rot * d0.head<2>();
      equivariance = std::max({equivariance, (d1.head<2>() - rotated).cwiseAbs().maxCoeff(),
                               (d1.tail<2>() - d0.tail<2>()).cwiseAbs().maxCoeff()});
    }
  }
  const double runtime = seconds_since(start);
  Verdict v;
  v.pass = continuity <= 1e-10 && partition_failures == 0 && symmetry <= 1e-12 &&
           equivariance <= 1e-12 && runtime < 10.0;
  v.detail = format(
      "%d samples, continuity %.2e (<= 1e-10), partition failures %d, symmetry %.2e, "
      "equivariance %.2e, %.3f s (< 10 s)",
      samples, continuity, partition_failures, symmetry, equivariance, runtime);
  return v;
}

// ---- 2. limit surface -----------------------------------------------------

Verdict limit_surface() {
  const auto start = Clock::now();
  const ModelParams p = table1();
  const double l3 = mean_center_distance(0.09, 0.09, 3);
  const double l4 = mean_center_distance(0.09, 0.09, 4);
  const double runtime = seconds_since(start);
  const double stability = std::abs(l3 - l4) / l4;
  const double closed = oracle::unit_square_mean_distance() * 0.09;
  const double scaling = std::abs(p.c - closed) / closed;
  Verdict v;
  v.pass = stability <= 1e-6 && scaling <= 1e-6 && runtime < 1.0;
  v.detail = format("c = %.12f m, levels 3/4 differ by %.2e (<= 1e-6), closed-form scaling error "
                    "%.2e, %.4f s (< 1 s)",
                    p.c, stability, scaling, runtime);
  return v;
}

// ---- 3. linearization -----------------------------------------------------

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

Verdict linearization() {
  const ModelParams p = table1();
  std::mt19937_64 rng(3);
  double worst = 0.0;
  int count = 0;
  for (ContactMode m : kAllModes) {
    for (int k = 0; k < 100; ++k) {
      const NominalPoint nom = random_nominal(rng, m, p);
      const LinearizedMode lm = linearize(m, nom, p);
      const auto fx = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
        return mode_dynamics(SliderState::from(x), nom.u_star, m, p);
      };
      const auto fu = [&](const Eigen::VectorXd& u) -> Eigen::VectorXd {
        return mode_dynamics(nom.x_star, PusherInput::from(u), m, p);
      };
      const auto gt = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
        return Eigen::VectorXd::Constant(1, motion_cone(SliderState::from(x), p).gamma_t);
      };
      const auto gb = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
        return Eigen::VectorXd::Constant(1, motion_cone(SliderState::from(x), p).gamma_b);
      };
      const Eigen::VectorXd x = nom.x_star.vec();
      worst = std::max({worst, rel_err(lm.A, oracle::central_jacobian(fx, x, 1e-6)),
                        rel_err(lm.B, oracle::central_jacobian(fu, nom.u_star.vec(), 1e-6)),
                        rel_err(lm.C_t, oracle::central_jacobian(gt, x, 1e-6)),
                        rel_err(lm.C_b, oracle::central_jacobian(gb, x, 1e-6))});
      ++count;
    }
  }
  Verdict v;
  v.pass = worst <= 1e-5;
  v.detail = format("%d nominals (100 per mode), worst relative error over A, B, C_t, C_b "
                    "%.2e (<= 1e-5)",
                    count, worst);
  return v;
}

// ---- 4. QP solver ---------------------------------------------------------

Verdict qp_solver(const RunLog& straight, const SimConfig& straight_config) {
  // KKT on the MPC programs met along the straight-line benchmark.
  const ModelParams p = compute_limit_surface(straight_config.physical);
  const NominalTrajectory nominal = NominalTrajectory::straight_line(
      straight_config.scenario.v_nominal,
      straight_config.scenario.duration + (straight_config.mpc.N + 2) * straight_config.mpc.h);
  const FamilyOfModes family = default_family(straight_config.mpc.N);
  double worst_kkt = 0.0;
  int solved = 0;
  int unsolved = 0;
  for (std::size_t i = 0; i < straight.records.size(); i += 3) {
    const StepRecord& r = straight.records[i];
    if (r.flags & kFlagDone) continue;
    for (const ModeSchedule& s : family.schedules) {
      const qp::QpSolution sol = qp::solve(
          build_qp(s, r.state, r.t, nominal, straight_config.mpc, p));
      if (sol.ok()) {
        ++solved;
        worst_kkt = std::max(worst_kkt, sol.kkt_residual);
      } else {
        ++unsolved;
      }
    }
  }

  // First-order oracle agreement.
  std::mt19937_64 rng(2024);
  double worst_gap = 0.0;
  int agree_failures = 0;
  for (int k = 0; k < 50; ++k) {
    const qp::QpProblem prob = oracle::random_qp(rng, 6, 1 + k % 6, k % 7, k % 3);
    const qp::QpSolution sol = qp::solve(prob);
    const oracle::AdmmResult ref = oracle::admm_solve(prob);
    if (!sol.ok() || !ref.converged) {
      ++agree_failures;
      continue;
    }
    worst_kkt = std::max(worst_kkt, sol.kkt_residual);
    worst_gap = std::max(worst_gap, std::abs(sol.cost - ref.cost) / std::max(1.0, std::abs(ref.cost)));
  }
  Verdict v;
  v.pass = worst_kkt <= 1e-6 && agree_failures == 0 && worst_gap <= 1e-6 && unsolved == 0;
  v.detail = format("%d MPC programs (worst KKT %.2e <= 1e-6, %d unsolved); 50 random 6-var "
                    "problems vs ADMM oracle: worst cost gap %.2e (<= 1e-6), %d failures",
                    solved, worst_kkt, unsolved, worst_gap, agree_failures);
  return v;
}

// ---- 5. MIQP exactness ----------------------------------------------------

Verdict miqp_exactness() {
  const ModelParams p = table1();
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> dy(-0.01, 0.01), dth(-0.26, 0.26), dpy(-0.015, 0.015);
  double worst_gap = 0.0;
  double worst_kkt = 0.0;
  int fom_below = 0;
  int mismatched_status = 0;
  int instances = 0;
  for (int N : {3, 4, 5, 6}) {
    MpcConfig c;
    c.N = N;
    const NominalTrajectory nom = NominalTrajectory::straight_line(0.05, 5.0);
    for (int k = 0; k < 10; ++k) {
      const SliderState x{0.0, dy(rng), dth(rng), dpy(rng)};
      const ControlResult mi = miqp_step(x, 0.0, nom, c, p);
      const ControlResult en = enumerate_step(x, 0.0, nom, c, p);
      const ControlResult fom = fom_step(x, 0.0, default_family(N), nom, c, p);
      ++instances;
      if (mi.ok() != en.ok() || !fom.ok()) {
        ++mismatched_status;
        continue;
      }
      if (!en.ok()) continue;
      worst_kkt = std::max({worst_kkt, mi.max_kkt_residual, en.max_kkt_residual});
      worst_gap = std::max(worst_gap, std::abs(mi.cost - en.cost) / std::max(1e-12, std::abs(en.cost)));
      if (fom.cost < mi.cost - 1e-9 * std::max(1.0, mi.cost)) ++fom_below;
    }
  }
  Verdict v;
  v.pass = worst_gap <= 1e-6 && fom_below == 0 && mismatched_status == 0 && worst_kkt <= 1e-6;
  v.detail = format("%d instances (N = 3..6, 10 each): worst relative gap to enumeration %.2e "
                    "(<= 1e-6), FOM below MIQP %d, status mismatches %d, worst KKT %.2e",
                    instances, worst_gap, fom_below, mismatched_status, worst_kkt);
  return v;
}

// ---- 6. straight line -----------------------------------------------------

Verdict straight_line(const RunLog& log) {
  double last_out = 0.0;
  double perturbed_at = -1.0;
  for (const StepRecord& r : log.records) {
    if ((r.flags & kFlagPerturbed) && perturbed_at < 0.0) perturbed_at = r.t;
    if (std::abs(r.state.y) >= 0.002 || std::abs(r.state.theta) >= 0.05) last_out = r.t;
  }
  const double t_end = log.records.back().t;

  SimConfig zero = SimConfig::paper(ScenarioKind::StraightLine);
  zero.scenario.perturbations.clear();
  const RunLog nominal = run_straight_line(zero);
  double drift = 0.0;
  for (const StepRecord& r : nominal.records) {
    drift = std::max(drift, (r.state.vec() - Eigen::Vector4d(0.05 * r.t, 0, 0, 0))
                                .cwiseAbs()
                                .maxCoeff());
  }
  Verdict v;
  v.pass = perturbed_at >= 0.0 && last_out < 6.0 && t_end >= 6.0 && drift <= 1e-6 &&
           log.wall_time < 60.0 && log.fault_count() == 0;
  v.detail = format("perturbed at t = %.2f s, last out-of-band sample t = %.2f s (< 6 s, run to "
                    "%.2f s), zero-perturbation drift %.2e (<= 1e-6), %d faults, wall %.2f s "
                    "(< 60 s)",
                    perturbed_at, last_out, t_end, drift, log.fault_count(), log.wall_time);
  return v;
}

// ---- 7. target tracking ---------------------------------------------------

Verdict target_tracking(const RunLog& log, double tolerance) {
  const double reorientation = 45.0 * std::numbers::pi / 180.0;
  // The k-th reach event must happen within tolerance of target k.
  std::vector<int> reached_order;
  for (const StepRecord& r : log.records) {
    if (!(r.flags & kFlagTargetReached)) continue;
    const std::size_t k = reached_order.size();
    const bool near = k < log.targets.size() &&
                      std::hypot(log.targets[k].x - r.state.x, log.targets[k].y - r.state.y) <=
                          tolerance;
    reached_order.push_back(near ? static_cast<int>(k) : -1);
  }
  // Per target: |theta_rel| at activation and whether a sliding schedule was chosen.
  const int n = static_cast<int>(log.targets.size());
  std::vector<double> activation(n, -1.0);
  std::vector<bool> sliding(n, false);
  for (const StepRecord& r : log.records) {
    if (r.target_index < 0 || r.target_index >= n || (r.flags & kFlagDone)) continue;
    if (activation[r.target_index] < 0.0) activation[r.target_index] = std::abs(r.theta_rel);
    if (!r.chosen_schedule.empty() && r.chosen_schedule != "M3") sliding[r.target_index] = true;
  }
  int major = 0;
  int major_with_sliding = 0;
  std::string per_target;
  for (int i = 0; i < n; ++i) {
    const bool is_major = activation[i] > reorientation;
    major += is_major;
    major_with_sliding += is_major && sliding[i];
    per_target += format("%s%d:%.0fdeg%s", i ? " " : "", i + 1, activation[i] * 180 / std::numbers::pi,
                         is_major ? (sliding[i] ? "/sliding" : "/NO-SLIDING") : "");
  }
  bool in_order = static_cast<int>(reached_order.size()) == n;
  for (int i = 0; in_order && i < n; ++i) in_order = reached_order[i] == i;
  const double t_final = log.records.back().t;
  Verdict v;
  v.pass = log.targets_reached == n && in_order && t_final <= 60.0 &&
           log.status == RunStatus::Completed && major_with_sliding == major;
  v.detail = format("%d/%d targets reached in order=%s by t = %.2f s (<= 60 s); major "
                    "reorientations with sliding selection %d/%d [%s]",
                    log.targets_reached, n, in_order ? "yes" : "no", t_final, major_with_sliding,
                    major, per_target.c_str());
  return v;
}

// ---- 8. latency -----------------------------------------------------------

Verdict latency(const std::vector<const RunLog*>& logs) {
  std::vector<double> ms;
  for (const RunLog* log : logs) {
    for (const StepRecord& r : log->records) {
      if (!(r.flags & (kFlagDone | kFlagFault))) ms.push_back(1e3 * r.solve_time);
    }
  }
  std::sort(ms.begin(), ms.end());
  const auto quantile = [&](double q) {
    return ms[static_cast<std::size_t>(std::ceil(q * static_cast<double>(ms.size()))) - 1];
  };
  const double median = quantile(0.5);
  const double p99 = quantile(0.99);
  Verdict v;
  v.pass = median < 50.0 && p99 < 150.0;
  v.detail = format("%zu fom_step calls at N = 35: median %.2f ms (< 50), p99 %.2f ms (< 150), "
                    "max %.2f ms",
                    ms.size(), median, p99, ms.back());
  return v;
}

// ---- 9. service equivalence -----------------------------------------------

Verdict service_equivalence(const RunLog& batch, const SimConfig& config) {
#ifdef PUSHMPC_HAVE_SERVICE
  namespace beast = boost::beast;
  namespace net = boost::asio;
  using tcp = net::ip::tcp;

  ServiceOptions options;
  options.address = "127.0.0.1";
  options.port = 0;
  options.speed = 1000.0;
  options.max_client_queue = 1u << 20;
  options.wait_for_client = true;
  SessionServer server(config, options);
  server.start();

  net::io_context ioc;
  beast::websocket::stream<tcp::socket> ws(ioc);
  tcp::resolver resolver(ioc);
  net::connect(ws.next_layer(), resolver.resolve("127.0.0.1", std::to_string(server.port())));
  ws.handshake("127.0.0.1", "/ws");

  std::size_t mismatches = 0;
  for (const StepRecord& r : batch.records) {
    beast::flat_buffer buffer;
    ws.read(buffer);
    const Snapshot s = decode_snapshot(beast::buffers_to_string(buffer.data()));
    if (!(s.t == r.t && s.state == r.state)) ++mismatches;
  }
  ws.close(beast::websocket::close_code::normal);
  server.stop();
  const ServiceStats stats = server.stats();

  // The same check on the in-process engine, without the network.
  SessionEngine engine(config);
  std::size_t engine_mismatches = 0;
  for (const StepRecord& r : batch.records) {
    const Snapshot s = engine.tick();
    if (!(s.t == r.t && s.state == r.state)) ++engine_mismatches;
  }
  Verdict v;
  v.pass = mismatches == 0 && engine_mismatches == 0 && stats.frames_dropped == 0;
  v.detail = format("%zu periods over /ws: %zu state mismatches, %zu engine mismatches, %llu "
                    "frames dropped",
                    batch.records.size(), mismatches, engine_mismatches,
                    static_cast<unsigned long long>(stats.frames_dropped));
  return v;
#else
  (void)batch;
  (void)config;
  return {false, "service not built (PUSHMPC_BUILD_SERVICE=OFF)"};
#endif
}

}  // namespace

int main() {
  report(1, "model property suite", model_properties());
  report(2, "limit surface", limit_surface());
  report(3, "linearization", linearization());

  const SimConfig straight_config = SimConfig::paper(ScenarioKind::StraightLine);
  const RunLog straight = run_straight_line(straight_config);
  const SimConfig targets_config = SimConfig::paper(ScenarioKind::TargetTracking);
  const RunLog targets = run_target_tracking(targets_config);

  report(4, "QP solver", qp_solver(straight, straight_config));
  report(5, "MIQP exactness", miqp_exactness());
  report(6, "straight-line recovery", straight_line(straight));
  report(7, "target tracking", target_tracking(targets, targets_config.scenario.target_tolerance));
  report(8, "latency", latency({&straight, &targets}));
  report(9, "service equivalence", service_equivalence(straight, straight_config));

  std::printf("%s: %d of 9 criteria failed\n", g_failures ? "FAIL" : "PASS", g_failures);
  return g_failures ? 1 : 0;
}
