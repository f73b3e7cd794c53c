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

#include "pushmpc/sim.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

namespace pushmpc {

namespace {

constexpr std::pair<RecordFlag, std::string_view> kFlagNames[] = {
    {kFlagFault, "fault"},   {kFlagClamped, "clamped"}, {kFlagPerturbed, "perturbed"},
    {kFlagTargetReached, "target_reached"}, {kFlagDone, "done"}, {kFlagReset, "reset"},
    {kFlagPaused, "paused"},
};

double distance(const SliderState& s, const Target& target) {
  return std::hypot(target.x - s.x, target.y - s.y);
}

}  // namespace

std::string_view scenario_name(ScenarioKind kind) {
  return kind == ScenarioKind::StraightLine ? "straight" : "targets";
}

std::string_view controller_name(ControllerKind kind) {
  return kind == ControllerKind::Fom ? "fom" : "miqp";
}

ScenarioKind parse_scenario_kind(std::string_view name) {
  if (name == "straight") return ScenarioKind::StraightLine;
  if (name == "targets") return ScenarioKind::TargetTracking;
  throw ParameterError("unknown scenario '" + std::string(name) + "' (straight|targets)");
}

ControllerKind parse_controller_kind(std::string_view name) {
  if (name == "fom") return ControllerKind::Fom;
  if (name == "miqp") return ControllerKind::Miqp;
  throw ParameterError("unknown controller '" + std::string(name) + "' (fom|miqp)");
}

Scenario Scenario::paper_straight_line() {
  Scenario s;
  s.kind = ScenarioKind::StraightLine;
  s.duration = 10.0;
  s.v_nominal = 0.05;
  Perturbation p;
  p.trigger = Perturbation::Trigger::XPosition;
  p.at = 0.075;
  p.delta = {0.0, 0.01, 15.0 * std::numbers::pi / 180.0, 0.0};
  s.perturbations.push_back(p);
  return s;
}

Scenario Scenario::paper_targets() {
  Scenario s;
  s.kind = ScenarioKind::TargetTracking;
  s.duration = 60.0;
  s.v_nominal = 0.05;
  s.targets = {{0.23, -0.11}, {0.23, 0.11}, {0.30, 0.08}};
  s.target_tolerance = 0.01;
  return s;
}

void Scenario::validate() const {
  if (!(duration > 0.0)) throw ParameterError("scenario duration must be positive");
  if (!(v_nominal > 0.0)) throw ParameterError("nominal speed must be positive");
  if (!(target_tolerance > 0.0)) throw ParameterError("target tolerance must be positive");
  if (kind == ScenarioKind::TargetTracking && targets.empty()) {
    throw ParameterError("target tracking needs at least one target");
  }
  if (!(initial_noise >= 0.0)) throw ParameterError("initial_noise must be non-negative");
  for (const Perturbation& p : perturbations) {
    if (!p.delta.allFinite() || !std::isfinite(p.at)) {
      throw ParameterError("perturbation must be finite");
    }
  }
}

SimConfig SimConfig::paper(ScenarioKind kind) {
  SimConfig c;
  if (kind == ScenarioKind::StraightLine) {
    c.scenario = Scenario::paper_straight_line();
  } else {
    c.scenario = Scenario::paper_targets();
    c.mpc.v_t_max = 0.3;
  }
  return c;
}

void SimConfig::validate() const {
  mpc.validate();
  scenario.validate();
  (void)compute_limit_surface(physical);
  if (scenario.v_nominal > mpc.v_n_max) {
    throw ParameterError("nominal speed exceeds v_n_max");
  }
  if (controller == ControllerKind::Miqp && mpc.N > kMaxEnumerationHorizon) {
    throw ParameterError("the MIQP controller is limited to N <= " +
                         std::to_string(kMaxEnumerationHorizon));
  }
}

double wrap_angle(double angle) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double a = std::remainder(angle, two_pi);  // [-pi, pi]
  if (a <= -std::numbers::pi) a += two_pi;
  return a;
}

TargetFrame target_frame(const SliderState& state, const Target& target) {
  const double dx = target.x - state.x;
  const double dy = target.y - state.y;
  if (std::hypot(dx, dy) == 0.0 || !std::isfinite(dx) || !std::isfinite(dy)) {
    throw DegenerateFrameError("target coincides with the slider centre");
  }
  TargetFrame f;
  f.theta_c = std::atan2(dy, dx);
  f.theta_rel = wrap_angle(state.theta - f.theta_c);
  f.origin_x = state.x;
  f.origin_y = state.y;
  return f;
}

std::vector<std::string> flag_names(std::uint32_t flags) {
  std::vector<std::string> out;
  for (const auto& [bit, name] : kFlagNames) {
    if (flags & bit) out.emplace_back(name);
  }
  return out;
}

std::uint32_t parse_flag(std::string_view name) {
  for (const auto& [bit, flag_name] : kFlagNames) {
    if (flag_name == name) return bit;
  }
  throw std::invalid_argument("unknown flag '" + std::string(name) + "'");
}

int RunLog::fault_count() const {
  return static_cast<int>(std::count_if(records.begin(), records.end(),
                                        [](const StepRecord& r) { return r.flags & kFlagFault; }));
}

double RunLog::fault_fraction() const {
  const auto controlled = std::count_if(records.begin(), records.end(),
                                        [](const StepRecord& r) { return !(r.flags & kFlagDone); });
  return controlled == 0 ? 0.0 : static_cast<double>(fault_count()) / static_cast<double>(controlled);
}

double RunLog::max_solve_time() const {
  double m = 0.0;
  for (const StepRecord& r : records) m = std::max(m, r.solve_time);
  return m;
}

// ---------------------------------------------------------------------------
// ClosedLoop

ClosedLoop::ClosedLoop(SimConfig config) : config_(std::move(config)) {
  config_.validate();
  params_ = compute_limit_surface(config_.physical);
  family_ = default_family(config_.mpc.N);
  log_.kind = config_.scenario.kind;
  log_.controller = config_.controller;
  start();
}

void ClosedLoop::start() {
  state_ = config_.scenario.initial_state;
  if (config_.scenario.initial_noise > 0.0) {
    std::mt19937_64 rng(config_.seed);
    std::normal_distribution<double> noise(0.0, config_.scenario.initial_noise);
    state_.x += noise(rng);
    state_.y += noise(rng);
    state_.theta += noise(rng);
  }
  last_input_ = {};
  period_ = 0;
  max_periods_ = std::lround(config_.scenario.duration / config_.mpc.h);
  target_index_ = 0;
  fired_.assign(config_.scenario.perturbations.size(), false);
  done_ = false;
  log_.targets = config_.scenario.targets;
  log_.targets_reached = 0;
  log_.status = RunStatus::Completed;
  rebuild_nominal();
}

void ClosedLoop::rebuild_nominal() {
  const double v = config_.scenario.v_nominal;
  const double lookahead = (config_.mpc.N + 2) * config_.mpc.h;
  if (config_.scenario.kind == ScenarioKind::TargetTracking) {
    // F_c nominal: x_c*(tbar) = [v_x tbar, 0, 0, 0], re-initialized at tbar = 0.
    nominal_.emplace(NominalTrajectory::straight_line(v, lookahead));
    return;
  }
  const double t_end = config_.scenario.duration + lookahead;
  if (!nominal_ || period_ == 0) {
    nominal_.emplace(NominalTrajectory::straight_line(v, t_end));
    return;
  }
  // Speed change mid-run: continue the line from the current nominal point.
  const double now = t();
  const NominalPoint here = nominal_->at(now);
  NominalPoint a{here.x_star, {v, 0.0}, now};
  NominalPoint b{here.x_star, {v, 0.0}, now + t_end};
  b.x_star.x += v * t_end;
  nominal_.emplace(std::vector<NominalPoint>{a, b});
}

double ClosedLoop::t() const { return static_cast<double>(period_) * config_.mpc.h; }

std::optional<Target> ClosedLoop::active_target() const {
  if (config_.scenario.kind != ScenarioKind::TargetTracking) return std::nullopt;
  const auto& targets = config_.scenario.targets;
  if (target_index_ >= targets.size()) return targets.back();
  return targets[target_index_];
}

RunLog ClosedLoop::take_log() {
  RunLog out = std::move(log_);
  log_ = RunLog{};
  log_.kind = config_.scenario.kind;
  log_.controller = config_.controller;
  log_.targets = config_.scenario.targets;
  return out;
}

ControlResult ClosedLoop::control(const SliderState& x, double t, StepRecord& rec) {
  const SliderState* measured = &x;
  double t_query = t;
  SliderState in_frame;
  if (config_.scenario.kind == ScenarioKind::TargetTracking) {
    const TargetFrame frame = target_frame(x, *active_target());
    rec.theta_rel = frame.theta_rel;
    // Position error vanishes in F_c (origin at the slider centre); the
    // nominal restarts at tbar = 0 every period. The input is body-frame,
    // so it needs no rotation back.
    in_frame = {0.0, 0.0, frame.theta_rel, x.p_y};
    measured = &in_frame;
    t_query = 0.0;
  }
  if (config_.controller == ControllerKind::Miqp) {
    return miqp_step(*measured, t_query, *nominal_, config_.mpc, params_);
  }
  return fom_step(*measured, t_query, family_, *nominal_, config_.mpc, params_);
}

const StepRecord& ClosedLoop::advance() {
  if (done_) throw std::logic_error("ClosedLoop::advance called after completion");
  StepRecord rec;
  rec.t = t();
  rec.flags = pending_flags_;
  pending_flags_ = 0;

  // Scheduled perturbations fire at the start of the period they are crossed in.
  const auto& perturbations = config_.scenario.perturbations;
  for (std::size_t i = 0; i < perturbations.size(); ++i) {
    if (fired_[i]) continue;
    const Perturbation& p = perturbations[i];
    const double probe = p.trigger == Perturbation::Trigger::XPosition ? state_.x : rec.t;
    if (probe >= p.at) {
      fired_[i] = true;
      state_ = SliderState::from(state_.vec() + p.delta);
      state_.p_y = std::clamp(state_.p_y, -params_.half_face(), params_.half_face());
      rec.flags |= kFlagPerturbed;
    }
  }

  if (config_.scenario.kind == ScenarioKind::TargetTracking) {
    const auto& targets = config_.scenario.targets;
    while (target_index_ < targets.size() &&
           distance(state_, targets[target_index_]) <= config_.scenario.target_tolerance) {
      ++target_index_;
      ++log_.targets_reached;
      rec.flags |= kFlagTargetReached;
    }
    rec.target_index = static_cast<int>(std::min(target_index_, targets.size() - 1));
    if (target_index_ >= targets.size()) {
      rec.state = state_;
      rec.cone = motion_cone(state_, params_);
      rec.flags |= kFlagDone;
      if (!retain_log_) log_.records.clear();
      log_.records.push_back(std::move(rec));
      done_ = true;
      log_.status = RunStatus::Completed;
      return log_.records.back();
    }
  }

  rec.state = state_;
  rec.cone = motion_cone(state_, params_);

  ControlResult result;
  try {
    result = control(state_, rec.t, rec);
  } catch (const ControllerError&) {
    result.status = ControlStatus::Fault;
  } catch (const LinearizationError&) {
    result.status = ControlStatus::Fault;
  } catch (const SingularityError&) {
    result.status = ControlStatus::Fault;
  } catch (const DegenerateFrameError&) {
    result.status = ControlStatus::Fault;
  }

  PusherInput u = last_input_;
  if (result.ok()) {
    u = result.u_applied;
    last_input_ = u;
    rec.chosen_schedule = result.chosen_schedule;
    rec.cost = result.cost;
  } else {
    rec.flags |= kFlagFault;
  }
  rec.per_schedule_costs = std::move(result.per_schedule_costs);
  rec.solve_time = result.solve_time;
  rec.u_applied = u;

  const StepOutcome out = step(state_, u, config_.mpc.h, params_);
  rec.mode_realized = out.mode;
  if (out.clamped) rec.flags |= kFlagClamped;
  state_ = out.state;
  ++period_;
  if (!retain_log_) log_.records.clear();
      log_.records.push_back(std::move(rec));

  if (period_ >= max_periods_) {
    done_ = true;
    const bool all_reached = config_.scenario.kind != ScenarioKind::TargetTracking ||
                             target_index_ >= config_.scenario.targets.size();
    log_.status = all_reached ? RunStatus::Completed : RunStatus::Timeout;
  }
  return log_.records.back();
}

void ClosedLoop::set_target(const Target& target) {
  if (!std::isfinite(target.x) || !std::isfinite(target.y)) {
    throw ParameterError("target must be finite");
  }
  const bool was_tracking = config_.scenario.kind == ScenarioKind::TargetTracking;
  config_.scenario.kind = ScenarioKind::TargetTracking;
  config_.scenario.targets = {target};
  log_.kind = config_.scenario.kind;
  log_.targets = config_.scenario.targets;
  target_index_ = 0;
  if (!was_tracking) rebuild_nominal();
  // A new target gives the session a fresh time budget from now.
  max_periods_ = period_ + std::lround(config_.scenario.duration / config_.mpc.h);
  done_ = false;
}

void ClosedLoop::poke(double dx, double dy, double dtheta) {
  state_.x += dx;
  state_.y += dy;
  state_.theta += dtheta;
  pending_flags_ |= kFlagPerturbed;
}

void ClosedLoop::reset(std::optional<SliderState> initial) {
  if (initial) {
    SliderState s = *initial;
    if (!std::isfinite(s.x) || !std::isfinite(s.y) || !std::isfinite(s.theta) ||
        !std::isfinite(s.p_y) || std::abs(s.p_y) > params_.half_face()) {
      throw ParameterError("reset state must be finite with |p_y| <= side_b/2");
    }
    config_.scenario.initial_state = s;
    config_.scenario.initial_noise = 0.0;
  }
  nominal_.reset();
  log_ = RunLog{};
  log_.kind = config_.scenario.kind;
  log_.controller = config_.controller;
  start();
  pending_flags_ = kFlagReset;
}

void ClosedLoop::set_speed(double v) {
  if (!std::isfinite(v) || !(v > 0.0)) throw ParameterError("speed must be positive");
  config_.scenario.v_nominal = std::min(v, config_.mpc.v_n_max);
  rebuild_nominal();
}

RunLog run_closed_loop(const SimConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  ClosedLoop loop(config);
  while (!loop.done()) loop.advance();
  RunLog log = loop.take_log();
  log.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return log;
}

RunLog run_straight_line(const SimConfig& config) {
  if (config.scenario.kind != ScenarioKind::StraightLine) {
    throw ParameterError("run_straight_line needs a straight-line scenario");
  }
  return run_closed_loop(config);
}

RunLog run_target_tracking(const SimConfig& config) {
  if (config.scenario.kind != ScenarioKind::TargetTracking) {
    throw ParameterError("run_target_tracking needs a target-tracking scenario");
  }
  return run_closed_loop(config);
}

// ---------------------------------------------------------------------------
// Outputs

OutputPaths OutputPaths::in_directory(const std::filesystem::path& dir) {
  return {dir / "run.csv", dir / "summary.json"};
}

std::string summary_json(const RunLog& log, const SimConfig& config) {
  using nlohmann::json;
  json j;
  j["scenario"] = scenario_name(log.kind);
  j["controller"] = controller_name(log.controller);
  j["seed"] = config.seed;
  j["periods"] = log.records.size();
  j["status"] = log.status == RunStatus::Completed ? "completed" : "timeout";
  j["fault_count"] = log.fault_count();
  j["fault_fraction"] = log.fault_fraction();
  j["exit_code"] = exit_code(log);
  j["max_solve_ms"] = 1e3 * log.max_solve_time();
  std::vector<double> solve;
  for (const StepRecord& r : log.records) {
    if (!(r.flags & kFlagDone)) solve.push_back(r.solve_time);
  }
  if (!solve.empty()) {
    std::sort(solve.begin(), solve.end());
    j["median_solve_ms"] = 1e3 * solve[solve.size() / 2];
  }
  j["wall_time_s"] = log.wall_time;
  j["targets_total"] = log.targets.size();
  j["targets_reached"] = log.targets_reached;

  if (!log.records.empty()) {
    const StepRecord& last = log.records.back();
    json fe;
    if (log.kind == ScenarioKind::StraightLine) {
      // Error against x*(t) = [v t, 0, 0, 0] at the last logged period.
      const double x_star = config.scenario.v_nominal * last.t;
      fe["x"] = last.state.x - x_star;
      fe["y"] = last.state.y;
      fe["theta"] = last.state.theta;
      fe["p_y"] = last.state.p_y;
    } else if (!log.targets.empty()) {
      const Target& tgt =
          log.targets[static_cast<std::size_t>(std::max(0, last.target_index))];
      fe["target_index"] = last.target_index;
      fe["distance"] = distance(last.state, tgt);
    }
    j["final_error"] = fe;
    j["t_final"] = last.t;
  }
  return j.dump(2);
}

void emit_outputs(const RunLog& log, const SimConfig& config, const OutputPaths& paths) {
  if (log.records.empty()) throw std::invalid_argument("refusing to emit an empty run log");
  for (const auto& p : {paths.csv, paths.summary}) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  }
  std::ofstream csv(paths.csv);
  if (!csv) throw std::runtime_error("cannot write " + paths.csv.string());
  csv << kCsvHeader << '\n';
  csv.precision(17);
  for (const StepRecord& r : log.records) {
    std::string flags;
    for (const std::string& name : flag_names(r.flags)) {
      if (!flags.empty()) flags += '|';
      flags += name;
    }
    csv << r.t << ',' << r.state.x << ',' << r.state.y << ',' << r.state.theta << ','
        << r.state.p_y << ',' << r.u_applied.v_n << ',' << r.u_applied.v_t << ','
        << r.chosen_schedule << ',' << r.cost << ',' << 1e3 * r.solve_time << ',' << flags
        << '\n';
  }
  if (!csv) throw std::runtime_error("failed writing " + paths.csv.string());

  std::ofstream summary(paths.summary);
  if (!summary) throw std::runtime_error("cannot write " + paths.summary.string());
  summary << summary_json(log, config) << '\n';
  if (!summary) throw std::runtime_error("failed writing " + paths.summary.string());
}

std::vector<CsvRow> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) {
    throw std::runtime_error("unexpected CSV header in " + path.string());
  }
  std::vector<CsvRow> rows;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (cells.size() != 11) throw std::runtime_error("malformed CSV row: " + line);
    CsvRow r{};
    double* numeric[] = {&r.t, &r.x, &r.y, &r.theta, &r.p_y, &r.v_n, &r.v_t};
    for (std::size_t i = 0; i < 7; ++i) *numeric[i] = std::stod(cells[i]);
    r.schedule = cells[7];
    r.cost = std::stod(cells[8]);
    r.solve_ms = std::stod(cells[9]);
    r.flags = 0;
    std::stringstream fs(cells[10]);
    std::string name;
    while (std::getline(fs, name, '|')) {
      if (!name.empty()) r.flags |= parse_flag(name);
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

int exit_code(const RunLog& log) {
  if (log.fault_fraction() > 0.10) return 2;
  if (log.status == RunStatus::Timeout) return 3;
  return 0;
}

}  // namespace pushmpc
