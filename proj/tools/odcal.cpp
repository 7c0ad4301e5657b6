// Command-line front end: generate, pretrain, compare, sensitivity, export.
#include "odcal/harness.hpp"
#include "odcal/scenario.hpp"

#include <CLI11.hpp>

#include <iomanip>
#include <iostream>

namespace {

std::vector<std::uint64_t> seeds_or_default(const std::vector<std::uint64_t>& given, const std::string& scenario,
                                            int replications) {
  if (!given.empty()) return given;
  return odcal::default_seeds(odcal::load_scenario(scenario), replications);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"odcal: online OD demand calibration with a surrogate-trained predictor"};
  app.require_subcommand(1);

  std::string scenario, out, dataset, params, runs;
  int days = 10, epochs = -1, replications = 5;
  std::uint64_t seed = 1;
  std::vector<std::uint64_t> seeds;
  std::vector<double> deltas{0.0, 0.001, 0.1, 1.0};

  auto* gen = app.add_subcommand("generate", "simulate incident-free training days");
  gen->add_option("--scenario", scenario, "scenario file")->required()->check(CLI::ExistingFile);
  gen->add_option("--days", days, "number of days")->check(CLI::NonNegativeNumber);
  gen->add_option("--seed", seed, "base seed");
  gen->add_option("--out", out, "output directory")->required();

  auto* pre = app.add_subcommand("pretrain", "train the predictor through the surrogate");
  pre->add_option("--dataset", dataset, "dataset directory")->required()->check(CLI::ExistingDirectory);
  pre->add_option("--scenario", scenario, "scenario file")->required()->check(CLI::ExistingFile);
  pre->add_option("--epochs", epochs, "epochs (default from scenario)");
  pre->add_option("--out", out, "output directory")->required();

  auto* cmp = app.add_subcommand("compare", "run models I-IV against the scenario");
  cmp->add_option("--scenario", scenario, "scenario file")->required()->check(CLI::ExistingFile);
  cmp->add_option("--params", params, "pretrained model directory")->required()->check(CLI::ExistingDirectory);
  cmp->add_option("--seeds", seeds, "replication seeds")->delimiter(',');
  cmp->add_option("--replications", replications, "seed count when --seeds is omitted")->check(CLI::PositiveNumber);
  cmp->add_option("--out", out, "output directory")->required();

  auto* sen = app.add_subcommand("sensitivity", "sweep the demand-regularization weight");
  sen->add_option("--scenario", scenario, "scenario file")->required()->check(CLI::ExistingFile);
  sen->add_option("--params", params, "pretrained model directory")->required()->check(CLI::ExistingDirectory);
  sen->add_option("--deltas", deltas, "comma-separated weights")->delimiter(',');
  sen->add_option("--seeds", seeds, "replication seeds")->delimiter(',');
  sen->add_option("--replications", replications, "seed count when --seeds is omitted")->check(CLI::PositiveNumber);
  sen->add_option("--out", out, "output directory")->required();

  auto* exp = app.add_subcommand("export", "long-format tables for plotting");
  exp->add_option("--runs", runs, "compare or sensitivity output directory")->required()->check(CLI::ExistingDirectory);
  exp->add_option("--out", out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      odcal::cmd_generate(scenario, days, seed, out);
      std::cout << "wrote " << days << " days to " << out << "\n";
    } else if (pre->parsed()) {
      const auto rep = odcal::cmd_pretrain(dataset, scenario, epochs, out);
      std::cout << "fitted c = " << rep.model.metamodel.c << "\n";
      if (!rep.result.epoch_loss.empty()) std::cout << "final epoch loss = " << rep.result.epoch_loss.back() << "\n";
      std::cout << std::setprecision(3) << "surrogate epoch " << rep.metamodel_epoch_s << " s, plant-in-loop epoch "
                << rep.simulator_epoch_s << " s\n";
    } else if (cmp->parsed()) {
      const auto res = odcal::cmd_compare(scenario, params, seeds_or_default(seeds, scenario, replications), out);
      std::cout << "median density MSE by location\nlocation";
      for (const auto& c : res.mse.columns) std::cout << "\t" << c;
      std::cout << "\n" << std::fixed << std::setprecision(2);
      for (std::size_t r = 0; r < res.mse.locations.size(); ++r) {
        std::cout << res.mse.locations[r];
        for (Eigen::Index c = 0; c < res.mse.median.cols(); ++c)
          std::cout << "\t" << res.mse.median(static_cast<Eigen::Index>(r), c);
        std::cout << "\n";
      }
    } else if (sen->parsed()) {
      const auto res =
          odcal::cmd_sensitivity(scenario, params, deltas, seeds_or_default(seeds, scenario, replications), out);
      std::cout << "adaptation interval per seed x delta\n" << res.adaptation << "\n";
    } else if (exp->parsed()) {
      odcal::cmd_export(runs, out);
      std::cout << "exported to " << out << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
