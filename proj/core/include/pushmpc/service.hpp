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

#include <atomic>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "pushmpc/sim.hpp"

/// Live session host: one simulation owner stepping a ClosedLoop at the
/// controller period, streaming a Snapshot per period to websocket
/// subscribers and applying steering commands between periods.
namespace pushmpc {

inline constexpr unsigned short kDefaultPort = 8787;
inline constexpr int kSnapshotVersion = 1;

// Poke clamps keep the perturbation inside the linearization regime.
inline constexpr double kPokeMaxTranslation = 0.05;  // m, per axis
inline constexpr double kPokeMaxRotation = 30.0 * 3.14159265358979323846 / 180.0;  // rad

/// Immutable per-period view of the session.
struct Snapshot {
  double t = 0.0;
  SliderState state;
  std::optional<Target> target;
  PusherInput u;
  std::string schedule;
  std::vector<ScheduleCost> costs;
  MotionCone cone;
  std::vector<std::string> flags;

  friend bool operator==(const Snapshot&, const Snapshot&);
};

/// Builds a snapshot from a period record.
Snapshot make_snapshot(const StepRecord& rec, std::optional<Target> target);

/// {"v":1, "t", "state":{x,y,theta,p_y}, "target":{x,y}|null, "u":{vn,vt},
///  "schedule", "costs":[{label,cost,feasible}], "cone":{gt,gb}, "flags":[...]}
std::string encode_snapshot(const Snapshot& s);
Snapshot decode_snapshot(std::string_view text);

namespace cmd {
struct SetTarget { double x = 0.0, y = 0.0; };
struct Poke { double dx = 0.0, dy = 0.0, dtheta = 0.0; };
struct Pause {};
struct Resume {};
struct Reset { std::optional<SliderState> initial; };
struct SetSpeed { double v_x = 0.0; };
}  // namespace cmd

using Command = std::variant<cmd::SetTarget, cmd::Poke, cmd::Pause, cmd::Resume, cmd::Reset,
                             cmd::SetSpeed>;

class CommandError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Parses {"cmd": "...", "args": {...}}. Poke magnitudes are clamped.
/// Throws CommandError on malformed input.
Command decode_command(std::string_view text);
std::string encode_command(const Command& c);

/// Pause / Resume only toggle pacing; everything else mutates sim state.
bool is_state_mutating(const Command& c);

/// The single owner of the simulation state. enqueue() may be called from
/// any thread; tick() only from the owner.
class SessionEngine {
 public:
  explicit SessionEngine(SimConfig config);

  void enqueue(Command c);
  std::size_t pending() const;

  /// Applies queued commands in FIFO order, stopping after the first
  /// state-mutating one, then runs one period unless paused or done, and
  /// returns the resulting snapshot.
  Snapshot tick();

  bool paused() const { return paused_; }
  const ClosedLoop& loop() const { return loop_; }

 private:
  void apply(const Command& c);

  ClosedLoop loop_;
  bool paused_ = false;
  mutable std::mutex mutex_;
  std::deque<Command> queue_;
};

struct ServiceOptions {
  std::string address = "0.0.0.0";
  unsigned short port = kDefaultPort;  // 0 picks a free port
  std::filesystem::path static_dir;    // cockpit bundle; empty disables the route
  double speed = 1.0;                  // real-time factor for the pacing clock
  std::size_t max_client_queue = 64;   // frames buffered per client before dropping
  bool wait_for_client = false;        // hold the first period until someone subscribes
};

struct ServiceStats {
  std::uint64_t periods = 0;
  std::uint64_t overruns = 0;        // periods that finished after their deadline
  std::uint64_t frames_sent = 0;
  std::uint64_t frames_dropped = 0;  // back-pressure drops across all clients
  std::uint64_t clients = 0;
  std::uint64_t bad_commands = 0;
};

/// Websocket server (/ws), static files and GET /stats around a
/// SessionEngine. Network I/O runs on its own thread; the simulation loop on
/// another. Throws std::runtime_error when the address cannot be bound.
class SessionServer {
 public:
  SessionServer(SimConfig config, ServiceOptions options);
  ~SessionServer();
  SessionServer(const SessionServer&) = delete;
  SessionServer& operator=(const SessionServer&) = delete;

  void start();
  void stop();
  /// Blocks until stop() is called (or SIGINT / SIGTERM when enabled).
  void wait(bool handle_signals = false);

  unsigned short port() const;
  ServiceStats stats() const;

  /// Called on the sim thread after every period (tests, logging).
  void on_snapshot(std::function<void(const Snapshot&)> callback);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Runs a session until SIGINT / SIGTERM. Returns the process exit code.
int run_session(const SimConfig& config, const ServiceOptions& options);

}  // namespace pushmpc
