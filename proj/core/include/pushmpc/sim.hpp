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

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pushmpc/controller.hpp"
#include "pushmpc/linearize.hpp"
#include "pushmpc/model.hpp"

/// Closed-loop simulation: the plant (model::step) driven by an MPC
/// controller at period h, the straight-line and target-tracking scenarios,
/// perturbation injection, run logs and their CSV / JSON outputs.
namespace pushmpc {

enum class ScenarioKind { StraightLine, TargetTracking };
enum class ControllerKind { Fom, Miqp };

std::string_view scenario_name(ScenarioKind kind);
std::string_view controller_name(ControllerKind kind);
ScenarioKind parse_scenario_kind(std::string_view name);      // "straight" | "targets"
ControllerKind parse_controller_kind(std::string_view name);  // "fom" | "miqp"

struct Perturbation {
  enum class Trigger { XPosition, Time };
  Trigger trigger = Trigger::XPosition;
  double at = 0.0;  // m for XPosition, s for Time
  Eigen::Vector4d delta = Eigen::Vector4d::Zero();
};

struct Target {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Target&, const Target&) = default;
};

struct Scenario {
  ScenarioKind kind = ScenarioKind::StraightLine;
  double duration = 10.0;     // s
  double v_nominal = 0.05;    // m/s; straight-line speed or target approach speed v_x
  std::vector<Target> targets;
  double target_tolerance = 0.01;  // m
  std::vector<Perturbation> perturbations;
  SliderState initial_state;
  double initial_noise = 0.0;  // std-dev of seeded Gaussian noise on (x, y, theta); 0 = off

  /// Straight-line benchmark: 10 s at 0.05 m/s, delta = [0, 0.01, 15 deg, 0] at x = 0.075 m.
  static Scenario paper_straight_line();
  /// Target-tracking benchmark: targets (0.23, -0.11), (0.23, 0.11), (0.30, 0.08), 0.01 m, 60 s.
  static Scenario paper_targets();

  void validate() const;
};

struct SimConfig {
  PhysicalParams physical;
  MpcConfig mpc;
  Scenario scenario;
  ControllerKind controller = ControllerKind::Fom;
  std::uint64_t seed = 0;

  /// Paper defaults for a scenario kind (target tracking uses |v_t| <= 0.3).
  static SimConfig paper(ScenarioKind kind);

  void validate() const;
};

/// Loads {"model": {...}, "mpc": {...}, "scenario": {...}} on top of
/// SimConfig::paper(kind). Unknown keys are rejected.
SimConfig load_config(const std::filesystem::path& path, ScenarioKind kind);
SimConfig parse_config(std::string_view json_text, ScenarioKind kind);

struct TargetFrame {
  double theta_c = 0.0;    // orientation of c_x in the world frame
  double theta_rel = 0.0;  // theta - theta_c wrapped to (-pi, pi]
  double origin_x = 0.0;   // slider centre
  double origin_y = 0.0;
};

class DegenerateFrameError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Wraps an angle into (-pi, pi].
double wrap_angle(double angle);

TargetFrame target_frame(const SliderState& state, const Target& target);

/// Per-record status bits.
enum RecordFlag : std::uint32_t {
  kFlagFault = 1u << 0,          // controller fault, previous input held
  kFlagClamped = 1u << 1,        // p_y hit the face edge during the period
  kFlagPerturbed = 1u << 2,      // perturbation / poke applied at the period start
  kFlagTargetReached = 1u << 3,  // active target reached at the period start
  kFlagDone = 1u << 4,           // terminal record: no control applied
  kFlagReset = 1u << 5,          // first record after a reset
  kFlagPaused = 1u << 6,         // session paused (service only)
};

std::vector<std::string> flag_names(std::uint32_t flags);
std::uint32_t parse_flag(std::string_view name);

struct StepRecord {
  double t = 0.0;
  SliderState state;  // at the start of the period, after any perturbation
  PusherInput u_applied;
  std::string chosen_schedule;
  double cost = 0.0;
  std::vector<ScheduleCost> per_schedule_costs;
  double solve_time = 0.0;  // s
  ContactMode mode_realized = ContactMode::Sticking;
  std::uint32_t flags = 0;
  int target_index = -1;   // active target, -1 for straight-line
  double theta_rel = 0.0;  // target tracking only
  MotionCone cone;         // at the recorded state
};

enum class RunStatus { Completed, Timeout };

struct RunLog {
  ScenarioKind kind = ScenarioKind::StraightLine;
  ControllerKind controller = ControllerKind::Fom;
  std::vector<StepRecord> records;
  std::vector<Target> targets;
  int targets_reached = 0;
  RunStatus status = RunStatus::Completed;
  double wall_time = 0.0;  // s

  int fault_count() const;
  double fault_fraction() const;  // over controlled (non-terminal) periods
  double max_solve_time() const;
};

/// The simulation owner: one call to advance() runs one controller period.
/// Batch runs and the live service drive the same stepper, so a session
/// without commands reproduces the batch log exactly.
class ClosedLoop {
 public:
  explicit ClosedLoop(SimConfig config);

  /// Runs one period and returns its record. Must not be called once done().
  const StepRecord& advance();

  bool done() const { return done_; }
  double t() const;
  long period() const { return period_; }
  const SliderState& state() const { return state_; }
  const SimConfig& config() const { return config_; }
  const ModelParams& params() const { return params_; }
  std::optional<Target> active_target() const;
  const RunLog& log() const { return log_; }
  RunLog take_log();
  /// When false only the latest record is kept (long-running sessions).
  void set_retain_log(bool retain) { retain_log_ = retain; }

  // Steering (service commands). Each takes effect at the next period start.
  /// Switches to target tracking towards a single target.
  void set_target(const Target& target);
  /// Adds a world-frame increment to (x, y, theta) of the slider.
  void poke(double dx, double dy, double dtheta);
  /// Restarts from `initial` (or the scenario's initial state) at t = 0.
  void reset(std::optional<SliderState> initial = std::nullopt);
  /// Changes the nominal / approach speed (clamped to (0, v_n_max]).
  void set_speed(double v);

 private:
  void rebuild_nominal();
  void start();
  ControlResult control(const SliderState& x, double t, StepRecord& rec);

  SimConfig config_;
  ModelParams params_;
  FamilyOfModes family_;
  std::optional<NominalTrajectory> nominal_;  // world frame (straight line) or F_c
  SliderState state_;
  PusherInput last_input_;
  long period_ = 0;
  long max_periods_ = 0;
  std::size_t target_index_ = 0;
  std::vector<bool> fired_;
  std::uint32_t pending_flags_ = 0;
  bool done_ = false;
  bool retain_log_ = true;
  RunLog log_;
};

/// Runs to completion: duration exceeded, or the last target reached.
RunLog run_closed_loop(const SimConfig& config);
RunLog run_straight_line(const SimConfig& config);
RunLog run_target_tracking(const SimConfig& config);

struct OutputPaths {
  std::filesystem::path csv;
  std::filesystem::path summary;
  static OutputPaths in_directory(const std::filesystem::path& dir);
};

inline constexpr std::string_view kCsvHeader =
    "t,x,y,theta,p_y,v_n,v_t,schedule,cost,solve_ms,flags";

/// Writes run.csv (columns per kCsvHeader, flags joined with '|') and
/// summary.json. Throws std::invalid_argument on an empty log and
/// std::runtime_error when a file cannot be written.
void emit_outputs(const RunLog& log, const SimConfig& config, const OutputPaths& paths);

/// Summary document written to summary.json.
std::string summary_json(const RunLog& log, const SimConfig& config);

/// One parsed CSV row (test oracle for the emit_outputs round trip).
struct CsvRow {
  double t, x, y, theta, p_y, v_n, v_t;
  std::string schedule;
  double cost, solve_ms;
  std::uint32_t flags;
};
std::vector<CsvRow> read_csv(const std::filesystem::path& path);

/// Exit code of the simulate CLI: 0 ok, 2 fault storm (> 10% faulted
/// periods), 3 timeout.
int exit_code(const RunLog& log);

}  // namespace pushmpc
