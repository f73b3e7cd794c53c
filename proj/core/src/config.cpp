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

#include <nlohmann/json.hpp>

#include <fstream>
#include <set>
#include <sstream>

#include "pushmpc/sim.hpp"

namespace pushmpc {

namespace {

using nlohmann::json;

void reject_unknown(const json& section, std::string_view where,
                    std::initializer_list<std::string_view> allowed) {
  if (!section.is_object()) {
    throw ParameterError("config section '" + std::string(where) + "' must be an object");
  }
  for (const auto& item : section.items()) {
    if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end()) {
      throw ParameterError("unknown key '" + item.key() + "' in config section '" +
                           std::string(where) + "'");
    }
  }
}

template <typename T>
void read(const json& section, const char* key, T& out) {
  if (section.contains(key)) out = section.at(key).get<T>();
}

/// Accepts a full row-major matrix or, under `<key>_diag`, its diagonal.
template <int Rows>
void read_matrix(const json& section, const std::string& key,
                 Eigen::Matrix<double, Rows, Rows>& out) {
  if (section.contains(key)) {
    const auto rows = section.at(key).get<std::vector<std::vector<double>>>();
    if (rows.size() != Rows) throw ParameterError("matrix '" + key + "' has the wrong size");
    for (int r = 0; r < Rows; ++r) {
      if (rows[r].size() != Rows) throw ParameterError("matrix '" + key + "' has the wrong size");
      for (int c = 0; c < Rows; ++c) out(r, c) = rows[r][c];
    }
  }
  const std::string diag_key = key + "_diag";
  if (section.contains(diag_key)) {
    if (section.contains(key)) throw ParameterError("give either '" + key + "' or '" + diag_key + "'");
    const auto d = section.at(diag_key).get<std::vector<double>>();
    if (d.size() != Rows) throw ParameterError("'" + diag_key + "' has the wrong size");
    out.setZero();
    for (int i = 0; i < Rows; ++i) out(i, i) = d[i];
  }
}

SliderState read_state(const json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 4) throw ParameterError("states are [x, y, theta, p_y]");
  return {v[0], v[1], v[2], v[3]};
}

}  // namespace

SimConfig parse_config(std::string_view json_text, ScenarioKind kind) {
  SimConfig config = SimConfig::paper(kind);
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParameterError(std::string("config is not valid JSON: ") + e.what());
  }
  try {
    reject_unknown(root, "<root>", {"model", "mpc", "scenario", "controller", "seed"});
    read(root, "seed", config.seed);
    if (root.contains("controller")) {
      config.controller = parse_controller_kind(root.at("controller").get<std::string>());
    }
    if (root.contains("model")) {
      const json& m = root.at("model");
      reject_unknown(m, "model", {"mu_p", "mu_g", "mass", "gravity", "side_a", "side_b"});
      PhysicalParams& p = config.physical;
      read(m, "mu_p", p.mu_p);
      read(m, "mu_g", p.mu_g);
      read(m, "mass", p.mass);
      read(m, "gravity", p.gravity);
      read(m, "side_a", p.side_a);
      read(m, "side_b", p.side_b);
    }
    if (root.contains("mpc")) {
      const json& m = root.at("mpc");
      reject_unknown(m, "mpc", {"N", "h", "Q", "Q_diag", "Q_N", "Q_N_diag", "R", "R_diag",
                                "v_n_max", "v_t_max", "big_M", "epsilon"});
      MpcConfig& c = config.mpc;
      read(m, "N", c.N);
      read(m, "h", c.h);
      read_matrix<4>(m, "Q", c.Q);
      read_matrix<4>(m, "Q_N", c.Q_N);
      read_matrix<2>(m, "R", c.R);
      read(m, "v_n_max", c.v_n_max);
      read(m, "v_t_max", c.v_t_max);
      read(m, "big_M", c.big_M);
      read(m, "epsilon", c.epsilon);
    }
    if (root.contains("scenario")) {
      const json& s = root.at("scenario");
      reject_unknown(s, "scenario", {"duration", "v_nominal", "targets", "target_tolerance",
                                     "perturbations", "initial_state", "initial_noise"});
      Scenario& sc = config.scenario;
      read(s, "duration", sc.duration);
      read(s, "v_nominal", sc.v_nominal);
      read(s, "target_tolerance", sc.target_tolerance);
      read(s, "initial_noise", sc.initial_noise);
      if (s.contains("initial_state")) sc.initial_state = read_state(s.at("initial_state"));
      if (s.contains("targets")) {
        sc.targets.clear();
        for (const json& t : s.at("targets")) {
          const auto xy = t.get<std::vector<double>>();
          if (xy.size() != 2) throw ParameterError("targets are [x, y] pairs");
          sc.targets.push_back({xy[0], xy[1]});
        }
      }
      if (s.contains("perturbations")) {
        sc.perturbations.clear();
        for (const json& p : s.at("perturbations")) {
          reject_unknown(p, "scenario.perturbations[]", {"trigger", "at", "delta"});
          Perturbation pert;
          const std::string trigger = p.value("trigger", std::string("x"));
          if (trigger == "x") {
            pert.trigger = Perturbation::Trigger::XPosition;
          } else if (trigger == "t") {
            pert.trigger = Perturbation::Trigger::Time;
          } else {
            throw ParameterError("perturbation trigger must be 'x' or 't'");
          }
          pert.at = p.at("at").get<double>();
          pert.delta = read_state(p.at("delta")).vec();
          sc.perturbations.push_back(pert);
        }
      }
    }
  } catch (const json::exception& e) {
    throw ParameterError(std::string("bad config value: ") + e.what());
  }
  config.validate();
  return config;
}

SimConfig load_config(const std::filesystem::path& path, ScenarioKind kind) {
  std::ifstream in(path);
  if (!in) throw ParameterError("cannot read config file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str(), kind);
}

}  // namespace pushmpc
