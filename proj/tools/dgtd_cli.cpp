#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dgtd/harness.hpp"
#include "dgtd/serialize.hpp"

namespace {

dgtd::ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config file: " + path);
  nlohmann::json j;
  f >> j;
  return j.get<dgtd::ExperimentConfig>();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributional gradient TD experiment runner"};
  app.require_subcommand(1);

  std::string preset_name;
  std::string config_path;
  std::string seeds_spec;
  std::string out_dir = "out";
  std::vector<std::string> overrides;

  CLI::App* run_cmd = app.add_subcommand("run", "Execute an experiment");
  run_cmd->add_option("--preset", preset_name, "Preset name");
  run_cmd->add_option("--config", config_path, "JSON config file");
  run_cmd->add_option("--seeds", seeds_spec,
                      "Seed list, e.g. 0..4 or 0,2,5");
  run_cmd->add_option("--out", out_dir, "Output directory");
  run_cmd->add_option("--override", overrides,
                      "Dotted-path assignment, e.g. alpha.a0=0.5");

  std::string validate_path;
  CLI::App* validate_cmd =
      app.add_subcommand("validate", "Check a JSON config file");
  validate_cmd->add_option("--config", validate_path, "JSON config file")
      ->required();

  CLI::App* list_cmd = app.add_subcommand("list-presets", "List preset names");

  CLI11_PARSE(app, argc, argv);

  try {
    if (list_cmd->parsed()) {
      for (const std::string& name : dgtd::preset_names())
        std::cout << name << "\n";
      return 0;
    }
    if (validate_cmd->parsed()) {
      const dgtd::ExperimentConfig config = load_config_file(validate_path);
      dgtd::validate(config);
      std::cout << "OK\n";
      return 0;
    }

    // run
    if (preset_name.empty() && config_path.empty())
      throw std::runtime_error("run: need --preset or --config");
    dgtd::ExperimentConfig config = preset_name.empty()
                                        ? load_config_file(config_path)
                                        : dgtd::preset(preset_name);
    if (!preset_name.empty() && !config_path.empty())
      throw std::runtime_error("run: pass either --preset or --config");
    for (const std::string& assignment : overrides)
      dgtd::apply_override(config, assignment);
    if (!seeds_spec.empty()) config.seeds = dgtd::parse_seed_list(seeds_spec);
    dgtd::validate(config);

    const dgtd::RunLog log = dgtd::run(config);
    dgtd::emit_csv(log, out_dir);
    if (!log.checkpoints.empty()) {
      nlohmann::json arr = nlohmann::json::array();
      for (const dgtd::ThetaCheckpoint& cp : log.checkpoints)
        arr.push_back({{"seed", cp.seed},
                       {"step", cp.step},
                       {"metric", cp.metric},
                       {"value", cp.value},
                       {"theta", dgtd::vector_to_json(cp.theta)}});
      std::ofstream f(std::filesystem::path(out_dir) / "checkpoints.json",
                      std::ios::binary);
      if (!f)
        throw std::runtime_error("cannot write checkpoints.json in " +
                                 out_dir);
      f << arr.dump() << "\n";
    }
    {
      std::ofstream f(std::filesystem::path(out_dir) / "config-resolved.json",
                      std::ios::binary);
      if (!f)
        throw std::runtime_error("cannot write config-resolved.json in " +
                                 out_dir);
      const nlohmann::json j = config;
      f << j.dump(2) << "\n";
    }
    std::cout << "wrote " << log.rows.size() << " rows to " << out_dir
              << "/runlog.csv\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
