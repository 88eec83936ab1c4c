// mfpmp: scenario-driven particle solver for controlled non-local transport,
// with forward simulation, exact optimal transport, Pontryagin condition
// checks and a direct control optimizer.

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "mfpmp/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"particle toolkit for optimal control of non-local transport equations"};
  app.require_subcommand(1);

  std::string scenario;
  mfpmp::RunOptions opts;

  const auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--scenario", scenario, "problem description file (JSON)")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--out", opts.out_dir, "output directory for artifacts");
    cmd->add_option("--dt", opts.dt_override, "override the scenario time step");
    cmd->add_option("--seed", opts.seed_override, "override the scenario seed");
    cmd->add_flag("--json", opts.json_only, "suppress human-readable output");
    return cmd;
  };

  auto* sim = add_common(app.add_subcommand("simulate", "forward run, trajectory CSV"));
  auto* ot = add_common(app.add_subcommand("ot", "Wasserstein distances between two measures"));
  ot->add_option("--other", opts.other_scenario, "second scenario file")
      ->required()
      ->check(CLI::ExistingFile);
  auto* needle =
      add_common(app.add_subcommand("needle", "first-order condition over a needle grid"));
  needle->add_option("--control", opts.control_path, "control file to evaluate");
  auto* extremal =
      add_common(app.add_subcommand("extremal", "forward-backward sweep with K and H reports"));
  extremal->add_option("--control", opts.control_path, "control file to evaluate");
  auto* check = add_common(app.add_subcommand("check", "full PMP condition report"));
  check->add_option("--control", opts.control_path, "control file to check");
  auto* opt = add_common(app.add_subcommand("optimize", "gradient descent, then check"));
  opt->add_option("--control", opts.control_path, "warm-start control file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (sim->parsed()) return mfpmp::run_simulate(scenario, opts);
    if (ot->parsed()) return mfpmp::run_ot(scenario, opts);
    if (needle->parsed()) return mfpmp::run_needle(scenario, opts);
    if (extremal->parsed()) return mfpmp::run_extremal(scenario, opts);
    if (check->parsed()) return mfpmp::run_check(scenario, opts);
    if (opt->parsed()) return mfpmp::run_optimize(scenario, opts);
  } catch (const mfpmp::ScenarioError& e) {
    std::cerr << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
