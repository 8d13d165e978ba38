// dcir command-line front end.
//
//   dcir train  --config F [--seeds K]
//   dcir eval   --checkpoint P [--episodes E] [--seed S] [--config F]
//   dcir ablate --config F --axis divergence|alpha_mode|beta
//   dcir pilot  --config F --study 1|2
//   dcir plot   --out P CSV...
//
// DCIR_OUTPUT_DIR overrides output_dir. Exit codes: 0 ok, 2 config error,
// 3 numeric abort, 4 I/O error.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dcir/harness/commands.hpp"

namespace h = dcir::harness;

namespace {

h::RunConfig load_config(const std::string& path) { return h::parse_config(h::read_text_file(path)); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Consistency-shaped multi-agent SAC with meta-learned scale factors"};
  app.require_subcommand(1);

  std::string config_path, checkpoint_path, axis, out_path;
  std::size_t seeds = 0, episodes = 20;
  std::uint64_t seed = 1;
  int study = 1;
  std::vector<std::string> csvs;

  auto* train = app.add_subcommand("train", "train DCIR (or SPARSE) agents for each seed");
  train->add_option("--config", config_path, "config file")->required();
  train->add_option("--seeds", seeds, "number of seeds (defaults to n_seeds)");

  auto* eval = app.add_subcommand("eval", "greedy evaluation of a checkpoint");
  eval->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  eval->add_option("--episodes", episodes, "evaluation episodes");
  eval->add_option("--seed", seed, "evaluation seed");
  eval->add_option("--config", config_path, "config the checkpoint must match");
  eval->add_option("--out", out_path, "output directory");

  auto* ablate = app.add_subcommand("ablate", "train every variant along one ablation axis");
  ablate->add_option("--config", config_path, "config file")->required();
  ablate->add_option("--axis", axis, "divergence | alpha_mode | beta")->required();

  auto* pilot = app.add_subcommand("pilot", "pilot study: DCIR vs SPARSE behavior proportions");
  pilot->add_option("--config", config_path, "config file")->required();
  pilot->add_option("--study", study, "1 or 2")->required()->check(CLI::Range(1, 2));

  auto* plot = app.add_subcommand("plot", "SVG return curves from training logs");
  plot->add_option("--out", out_path, "output SVG path")->required();
  plot->add_option("csv", csvs, "training log CSVs")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      const auto cfg = load_config(config_path);
      h::cmd_train(cfg, seeds ? seeds : cfg.n_seeds, h::resolve_output_dir(cfg));
    } else if (*eval) {
      std::optional<h::RunConfig> expected;
      if (!config_path.empty()) expected = load_config(config_path);
      std::string dir = out_path;
      if (dir.empty()) dir = expected ? h::resolve_output_dir(*expected) : h::resolve_output_dir(h::RunConfig{});
      h::cmd_eval(checkpoint_path, episodes, seed, expected, dir);
    } else if (*ablate) {
      const auto cfg = load_config(config_path);
      h::cmd_ablate(cfg, h::parse_axis(axis), h::resolve_output_dir(cfg));
    } else if (*pilot) {
      const auto cfg = load_config(config_path);
      h::cmd_pilot(cfg, study, h::resolve_output_dir(cfg));
    } else if (*plot) {
      h::cmd_plot(csvs, out_path);
    }
  } catch (const h::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return h::kConfigError;
  } catch (const h::HashMismatch& e) {
    std::cerr << "refusing checkpoint: " << e.what() << "\n";
    return h::kConfigError;
  } catch (const dcir::NumericError& e) {
    std::cerr << "numeric abort: " << e.what() << "\n";
    return h::kNumericAbort;
  } catch (const h::IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return h::kIoError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return h::kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return h::kIoError;
  }
  return h::kOk;
}
