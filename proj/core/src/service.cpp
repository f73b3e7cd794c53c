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

#include "pushmpc/service.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>

namespace pushmpc {

namespace {

using nlohmann::json;

template <typename... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <typename... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

double finite_number(const json& args, const char* key, double fallback, bool required) {
  if (!args.contains(key)) {
    if (required) throw CommandError(std::string("missing argument '") + key + "'");
    return fallback;
  }
  const json& v = args.at(key);
  if (!v.is_number()) throw CommandError(std::string("argument '") + key + "' must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw CommandError(std::string("argument '") + key + "' must be finite");
  return d;
}

}  // namespace

bool operator==(const Snapshot& a, const Snapshot& b) {
  const auto same_costs = [&] {
    if (a.costs.size() != b.costs.size()) return false;
    for (std::size_t i = 0; i < a.costs.size(); ++i) {
      if (a.costs[i].label != b.costs[i].label || a.costs[i].cost != b.costs[i].cost ||
          a.costs[i].feasible != b.costs[i].feasible) {
        return false;
      }
    }
    return true;
  };
  return a.t == b.t && a.state == b.state && a.target == b.target && a.u == b.u &&
         a.schedule == b.schedule && same_costs() && a.cone.gamma_t == b.cone.gamma_t &&
         a.cone.gamma_b == b.cone.gamma_b && a.flags == b.flags;
}

Snapshot make_snapshot(const StepRecord& rec, std::optional<Target> target) {
  Snapshot s;
  s.t = rec.t;
  s.state = rec.state;
  s.target = target;
  s.u = rec.u_applied;
  s.schedule = rec.chosen_schedule;
  s.costs = rec.per_schedule_costs;
  s.cone = rec.cone;
  s.flags = flag_names(rec.flags);
  return s;
}

std::string encode_snapshot(const Snapshot& s) {
  json j;
  j["v"] = kSnapshotVersion;
  j["t"] = s.t;
  j["state"] = {{"x", s.state.x}, {"y", s.state.y}, {"theta", s.state.theta}, {"p_y", s.state.p_y}};
  j["target"] = s.target ? json{{"x", s.target->x}, {"y", s.target->y}} : json(nullptr);
  j["u"] = {{"vn", s.u.v_n}, {"vt", s.u.v_t}};
  j["schedule"] = s.schedule;
  json costs = json::array();
  for (const ScheduleCost& c : s.costs) {
    costs.push_back({{"label", c.label}, {"cost", c.cost}, {"feasible", c.feasible}});
  }
  j["costs"] = std::move(costs);
  j["cone"] = {{"gt", s.cone.gamma_t}, {"gb", s.cone.gamma_b}};
  j["flags"] = s.flags;
  return j.dump();
}

Snapshot decode_snapshot(std::string_view text) {
  const json j = json::parse(text);
  if (j.at("v").get<int>() != kSnapshotVersion) {
    throw std::invalid_argument("unsupported snapshot version");
  }
  Snapshot s;
  s.t = j.at("t").get<double>();
  const json& st = j.at("state");
  s.state = {st.at("x").get<double>(), st.at("y").get<double>(), st.at("theta").get<double>(),
             st.at("p_y").get<double>()};
  if (!j.at("target").is_null()) {
    s.target = Target{j.at("target").at("x").get<double>(), j.at("target").at("y").get<double>()};
  }
  s.u = {j.at("u").at("vn").get<double>(), j.at("u").at("vt").get<double>()};
  s.schedule = j.at("schedule").get<std::string>();
  for (const json& c : j.at("costs")) {
    s.costs.push_back(
        {c.at("label").get<std::string>(), c.at("cost").get<double>(), c.at("feasible").get<bool>()});
  }
  s.cone = {j.at("cone").at("gt").get<double>(), j.at("cone").at("gb").get<double>()};
  s.flags = j.at("flags").get<std::vector<std::string>>();
  return s;
}

Command decode_command(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error&) {
    throw CommandError("command is not valid JSON");
  }
  if (!j.is_object() || !j.contains("cmd") || !j.at("cmd").is_string()) {
    throw CommandError("command needs a string 'cmd' field");
  }
  const std::string name = j.at("cmd").get<std::string>();
  const json args = j.contains("args") ? j.at("args") : json::object();
  if (!args.is_object()) throw CommandError("'args' must be an object");

  if (name == "set_target") {
    return cmd::SetTarget{finite_number(args, "x", 0.0, true), finite_number(args, "y", 0.0, true)};
  }
  if (name == "poke") {
    const auto clamp = [](double v, double limit) { return std::clamp(v, -limit, limit); };
    return cmd::Poke{clamp(finite_number(args, "dx", 0.0, false), kPokeMaxTranslation),
                     clamp(finite_number(args, "dy", 0.0, false), kPokeMaxTranslation),
                     clamp(finite_number(args, "dtheta", 0.0, false), kPokeMaxRotation)};
  }
  if (name == "pause") return cmd::Pause{};
  if (name == "resume") return cmd::Resume{};
  if (name == "reset") {
    cmd::Reset r;
    if (!args.empty()) {
      r.initial = SliderState{finite_number(args, "x", 0.0, false),
                              finite_number(args, "y", 0.0, false),
                              finite_number(args, "theta", 0.0, false),
                              finite_number(args, "p_y", 0.0, false)};
    }
    return r;
  }
  if (name == "set_speed") {
    const double v = finite_number(args, "v_x", 0.0, true);
    if (!(v > 0.0)) throw CommandError("set_speed needs v_x > 0");
    return cmd::SetSpeed{v};
  }
  throw CommandError("unknown command '" + name + "'");
}

std::string encode_command(const Command& c) {
  json j = std::visit(
      Overloaded{
          [](const cmd::SetTarget& v) { return json{{"cmd", "set_target"}, {"args", {{"x", v.x}, {"y", v.y}}}}; },
          [](const cmd::Poke& v) {
            return json{{"cmd", "poke"}, {"args", {{"dx", v.dx}, {"dy", v.dy}, {"dtheta", v.dtheta}}}};
          },
          [](const cmd::Pause&) { return json{{"cmd", "pause"}, {"args", json::object()}}; },
          [](const cmd::Resume&) { return json{{"cmd", "resume"}, {"args", json::object()}}; },
          [](const cmd::Reset& v) {
            json args = json::object();
            if (v.initial) {
              args = {{"x", v.initial->x}, {"y", v.initial->y}, {"theta", v.initial->theta},
                      {"p_y", v.initial->p_y}};
            }
            return json{{"cmd", "reset"}, {"args", args}};
          },
          [](const cmd::SetSpeed& v) { return json{{"cmd", "set_speed"}, {"args", {{"v_x", v.v_x}}}}; },
      },
      c);
  return j.dump();
}

bool is_state_mutating(const Command& c) {
  return !std::holds_alternative<cmd::Pause>(c) && !std::holds_alternative<cmd::Resume>(c);
}

SessionEngine::SessionEngine(SimConfig config) : loop_(std::move(config)) {
  loop_.set_retain_log(false);
}

void SessionEngine::enqueue(Command c) {
  std::lock_guard lock(mutex_);
  queue_.push_back(std::move(c));
}

std::size_t SessionEngine::pending() const {
  std::lock_guard lock(mutex_);
  return queue_.size();
}

void SessionEngine::apply(const Command& c) {
  std::visit(Overloaded{
                 [&](const cmd::SetTarget& v) { loop_.set_target({v.x, v.y}); },
                 [&](const cmd::Poke& v) { loop_.poke(v.dx, v.dy, v.dtheta); },
                 [&](const cmd::Pause&) { paused_ = true; },
                 [&](const cmd::Resume&) { paused_ = false; },
                 [&](const cmd::Reset& v) { loop_.reset(v.initial); },
                 [&](const cmd::SetSpeed& v) { loop_.set_speed(v.v_x); },
             },
             c);
}

Snapshot SessionEngine::tick() {
  for (;;) {
    std::optional<Command> next;
    {
      std::lock_guard lock(mutex_);
      if (queue_.empty()) break;
      next = std::move(queue_.front());
      queue_.pop_front();
    }
    try {
      apply(*next);
    } catch (const ParameterError&) {
      // Rejected (e.g. a reset state off the contact face); the session
      // carries on unchanged.
    }
    if (is_state_mutating(*next)) break;
  }

  if (paused_ || loop_.done()) {
    // Hold: no physics, the pusher is at rest.
    StepRecord rec;
    rec.t = loop_.t();
    rec.state = loop_.state();
    rec.cone = motion_cone(loop_.state(), loop_.params());
    Snapshot s = make_snapshot(rec, loop_.active_target());
    s.flags.emplace_back(paused_ ? "paused" : "done");
    return s;
  }
  const StepRecord& rec = loop_.advance();
  return make_snapshot(rec, loop_.active_target());
}

}  // namespace pushmpc
