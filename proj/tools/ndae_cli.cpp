#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ndae/io_util.hpp"
#include "ndae/pipeline.hpp"

namespace {

/// Attaches the shared --config / --out options to one subcommand.
void add_common_options(CLI::App* cmd, std::string& config_path,
                        std::string& out_override) {
  cmd->add_option("--config", config_path, "Run configuration JSON")
      ->required();
  cmd->add_option("--out", out_override,
                  "Output directory (overrides the configured one)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulation, identification, and certification of "
               "index-1 power-system models"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_override;
  std::string phase = "algebraic";

  CLI::App* generate =
      app.add_subcommand("generate", "Build and simulate the synthetic model");
  add_common_options(generate, config_path, out_override);

  CLI::App* train =
      app.add_subcommand("train", "Train one identification phase");
  add_common_options(train, config_path, out_override);
  train->add_option("--phase", phase, "Phase: algebraic or dynamic")
      ->required()
      ->check(CLI::IsMember({"algebraic", "dynamic"}));

  CLI::App* evaluate = app.add_subcommand(
      "evaluate", "Measure held-out errors of the identified model");
  add_common_options(evaluate, config_path, out_override);

  CLI::App* certify = app.add_subcommand(
      "certify", "Certify the asymptotic identification-error bound");
  add_common_options(certify, config_path, out_override);

  CLI11_PARSE(app, argc, argv);

  try {
    ndae::RunConfig config =
        ndae::run_config_from_json(ndae::read_file(config_path, "ndae_cli"));
    if (!out_override.empty()) {
      config.out_dir = out_override;
    }
    if (generate->parsed()) {
      return ndae::cmd_generate(config);
    }
    if (train->parsed()) {
      return ndae::cmd_train(config, phase);
    }
    if (evaluate->parsed()) {
      return ndae::cmd_evaluate(config);
    }
    return ndae::cmd_certify(config);
  } catch (const ndae::IoError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 4;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
}
