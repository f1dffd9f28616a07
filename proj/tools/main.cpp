#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "commands.hpp"
#include "config.hpp"

using namespace nqce;
using namespace nqce::cli;

int main(int argc, char** argv) {
  CLI::App app{"Quantile causal effects under partial interference"};
  app.require_subcommand(1);
  std::string config_path;
  std::vector<std::string> sets;
  std::string out_dir, input;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  bool print_config = false;

  const char* names[][2] = {
      {"simulate", "Write a simulated study as a long-format CSV"},
      {"estimate", "NP and IPW estimates, intervals and effects for a dataset"},
      {"band", "Uniform band over a q or policy-parameter grid"},
      {"truth", "Super-population truth for the configured estimands"},
      {"replicate", "Monte Carlo study of bias, spread and coverage"},
  };
  for (auto& [name, help] : names) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("-c,--config", config_path, "JSON config file");
    sub->add_option("--set", sets, "Override one key: a.b=value (repeatable)");
    sub->add_option("-o,--out", out_dir, "Output directory (output_dir)");
    sub->add_option("-i,--input", input, "Dataset CSV (input)");
    sub->add_option("--seed", seed, "Master seed (seed)");
    sub->add_option("--threads", threads, "Worker threads, 0 = OpenMP default (threads)");
    sub->add_flag("--print-config", print_config, "Print the resolved config and exit");
  }
  CLI11_PARSE(app, argc, argv);
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    Json file;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) fail(ErrorKind::Io, "cannot open config '" + config_path + "'");
      try {
        file = Json::parse(in);
      } catch (const std::exception& e) {
        fail(ErrorKind::Config, "config is not valid JSON: " + std::string(e.what()));
      }
    }
    // dedicated flags win over --set, which wins over the file
    if (!out_dir.empty()) sets.push_back("output_dir=\"" + out_dir + "\"");
    if (!input.empty()) sets.push_back("input=\"" + input + "\"");
    if (seed) sets.push_back("seed=" + std::to_string(*seed));
    if (threads) sets.push_back("threads=" + std::to_string(*threads));
    const Json resolved = resolve_config(file, sets);
    if (print_config) {
      std::cout << resolved.dump(2) << "\n";
      return 0;
    }
    run_command({command, resolved});
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
