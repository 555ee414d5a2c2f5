#include <cstdint>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "torusmix/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"torusmix: nonautonomous torus-map experiments"};
  app.require_subcommand(1);

  CLI::App* run = app.add_subcommand("run", "run one experiment to CSV + manifest");
  std::string config_path, preset_name, out_dir;
  std::uint64_t seed = 0;
  int threads = 0;
  run->add_option("--config", config_path, "JSON config file");
  run->add_option("--preset", preset_name, "named preset (see list-presets)");
  run->add_option("--seed", seed, "override the config seed");
  run->add_option("--threads", threads, "override the worker count");
  run->add_option("--out", out_dir, "override the output directory");

  app.add_subcommand("list-presets", "print the preset table");

  CLI::App* report = app.add_subcommand("report", "digest existing run artifacts");
  std::string report_dir;
  report->add_option("dir", report_dir, "directory holding results.csv and manifest.json")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (app.got_subcommand("list-presets")) {
    std::cout << torusmix::preset_listing();
    return 0;
  }

  if (app.got_subcommand("report")) {
    try {
      std::string digest = torusmix::emit_report(report_dir);
      std::cout << digest;
      return digest.rfind("PASS", 0) == 0 ? 0 : 1;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 2;
    }
  }

  if (config_path.empty() == preset_name.empty()) {
    std::cerr << "error: provide exactly one of --config or --preset\n";
    return 2;
  }
  try {
    torusmix::ExperimentConfig cfg =
        preset_name.empty() ? torusmix::load_config(config_path)
                            : torusmix::find_preset(preset_name).config;
    if (run->count("--seed")) cfg.seed = seed;
    if (run->count("--threads")) cfg.threads = threads;
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    torusmix::validate_config(cfg);
    torusmix::RunResult result = torusmix::run_experiment(cfg);
    torusmix::write_artifacts(result);
    std::cout << torusmix::emit_report(cfg.out_dir);
    return result.table.all_pass() ? 0 : 1;
  } catch (const torusmix::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "run failed: " << e.what() << "\n";
    return 1;
  }
}
