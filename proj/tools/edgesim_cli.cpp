// Command line front end.
//
//   edgesim run --scenario <file> --seed <n> --out <dir>
//               [--no-duplication] [--threshold <k>]
//   edgesim validate --scenario <file>
//
// Exit codes: 0 success, 2 scenario validation error, 3 the scripted
// disaster was never recovered from.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "edgesim/harness/experiment.hpp"
#include "edgesim/harness/scenario.hpp"

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitUnrecovered = 3;

int load_scenario(const std::string& path, edgesim::harness::Scenario& out) {
  std::ifstream f(path, std::ios::binary);
  if (!f) {
    std::cerr << "error: cannot open scenario file '" << path << "'\n";
    return kExitValidation;
  }
  std::stringstream ss;
  ss << f.rdbuf();
  auto res = edgesim::harness::parse_scenario(ss.str());
  if (!res.ok()) {
    std::cerr << "scenario '" << path << "' is invalid:\n";
    for (const auto& e : res.errors) std::cerr << "  " << e << "\n";
    return kExitValidation;
  }
  out = std::move(res.scenario);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deterministic edge disaster-recovery simulator"};
  app.require_subcommand(1);

  std::string scenario_path;
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  bool seed_set = false;
  bool no_duplication = false;
  int threshold = 0;
  bool threshold_set = false;

  CLI::App* run = app.add_subcommand("run", "run a scenario and write artifacts");
  run->add_option("--scenario", scenario_path, "scenario file")->required();
  run->add_option("--out", out_dir, "output directory (trace.csv, conn_stats.csv, metrics.json)");
  run->add_option("--seed", seed, "override the scenario seed")
      ->each([&](const std::string&) { seed_set = true; });
  run->add_flag("--no-duplication", no_duplication,
                "disable inline flow duplication for critical services");
  run->add_option("--threshold", threshold, "override the disaster detector threshold")
      ->each([&](const std::string&) { threshold_set = true; });

  CLI::App* validate = app.add_subcommand("validate", "check a scenario file");
  validate->add_option("--scenario", scenario_path, "scenario file")->required();

  CLI11_PARSE(app, argc, argv);

  edgesim::harness::Scenario sc;
  if (int rc = load_scenario(scenario_path, sc); rc != 0) return rc;

  if (app.got_subcommand(validate)) {
    std::cout << "scenario '" << scenario_path << "' is valid\n";
    return 0;
  }

  edgesim::harness::RunOverrides ov;
  if (seed_set) ov.seed = seed;
  ov.no_duplication = no_duplication;
  if (threshold_set) ov.threshold = threshold;

  edgesim::harness::Experiment exp(std::move(sc), ov);
  exp.run();
  exp.write(out_dir);

  const auto& m = exp.metrics();
  std::cout << exp.metrics_json();
  if (exp.disaster_scripted() && !m.recovered) {
    std::cerr << "error: the scripted disaster was not recovered from\n";
    return kExitUnrecovered;
  }
  return 0;
}
