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

// pushctl: command-line front end for the pusher-slider MPC simulator.
//
//   pushctl simulate --scenario straight|targets --controller fom|miqp
//                    --config <file> --out <dir> [--duration S] [--seed K]
//   pushctl serve    --scenario straight|targets --config <file>
//                    [--port P] [--static <dir>] [--speed F]
//
// simulate exits 0 on success, 2 on a controller fault storm (> 10% of
// periods faulted), 3 on timeout, 1 on usage or configuration errors.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>

#include "pushmpc/sim.hpp"
#ifdef PUSHMPC_HAVE_SERVICE
#include "pushmpc/service.hpp"
#endif

namespace {

pushmpc::SimConfig make_config(const std::string& scenario, const std::string& config_path) {
  const pushmpc::ScenarioKind kind = pushmpc::parse_scenario_kind(scenario);
  if (config_path.empty()) return pushmpc::SimConfig::paper(kind);
  return pushmpc::load_config(config_path, kind);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid MPC for a planar pusher-slider"};
  app.require_subcommand(1);

  std::string scenario;
  std::string controller = "fom";
  std::string config_path;
  std::string out_dir;
  std::optional<double> duration;
  std::optional<std::uint64_t> seed;

  CLI::App* sim = app.add_subcommand("simulate", "Run a closed-loop simulation");
  sim->add_option("--scenario", scenario, "straight | targets")
      ->required()
      ->check(CLI::IsMember({"straight", "targets"}));
  sim->add_option("--controller", controller, "fom | miqp")
      ->check(CLI::IsMember({"fom", "miqp"}));
  sim->add_option("--config", config_path, "JSON config with model, mpc, scenario sections")
      ->required()
      ->check(CLI::ExistingFile);
  sim->add_option("--out", out_dir, "Output directory for run.csv and summary.json")->required();
  sim->add_option("--duration", duration, "Simulated duration override, s")
      ->check(CLI::PositiveNumber);
  sim->add_option("--seed", seed, "Seed for the optional initial-state noise");

#ifdef PUSHMPC_HAVE_SERVICE
  int port = pushmpc::kDefaultPort;
  std::string static_dir;
  double speed = 1.0;
  CLI::App* serve = app.add_subcommand("serve", "Host a live session over websocket");
  serve->add_option("--scenario", scenario, "straight | targets")
      ->required()
      ->check(CLI::IsMember({"straight", "targets"}));
  serve->add_option("--controller", controller, "fom | miqp")
      ->check(CLI::IsMember({"fom", "miqp"}));
  serve->add_option("--config", config_path, "JSON config")->check(CLI::ExistingFile);
  serve->add_option("--port", port, "Listen port (0 picks a free one)")
      ->check(CLI::Range(0, 65535));
  serve->add_option("--static", static_dir, "Directory served for the cockpit bundle");
  serve->add_option("--speed", speed, "Real-time factor (> 1 runs faster than wall clock)")
      ->check(CLI::PositiveNumber);
#endif

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // --help / --version exit 0; every usage error maps to 1.
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    pushmpc::SimConfig config = make_config(scenario, config_path);
    config.controller = pushmpc::parse_controller_kind(controller);
    if (duration) config.scenario.duration = *duration;
    if (seed) config.seed = *seed;
    config.validate();

    if (sim->parsed()) {
      const pushmpc::RunLog log = pushmpc::run_closed_loop(config);
      pushmpc::emit_outputs(log, config, pushmpc::OutputPaths::in_directory(out_dir));
      const int code = pushmpc::exit_code(log);
      std::printf("%s/%s: %zu periods, %d/%zu targets, %d faults, max solve %.1f ms, wall %.2f s -> exit %d\n",
                  std::string(pushmpc::scenario_name(log.kind)).c_str(),
                  std::string(pushmpc::controller_name(log.controller)).c_str(),
                  log.records.size(), log.targets_reached, log.targets.size(), log.fault_count(),
                  1e3 * log.max_solve_time(), log.wall_time, code);
      return code;
    }
#ifdef PUSHMPC_HAVE_SERVICE
    if (serve->parsed()) {
      pushmpc::ServiceOptions options;
      options.port = static_cast<unsigned short>(port);
      options.static_dir = static_dir;
      options.speed = speed;
      return pushmpc::run_session(config, options);
    }
#endif
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
