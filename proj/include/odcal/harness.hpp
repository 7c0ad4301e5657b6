#ifndef ODCAL_HARNESS_HPP
#define ODCAL_HARNESS_HPP

#include "odcal/calib.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace odcal {

struct ModelVariant {
  std::string id;
  bool uses_finetune = false;
  bool online_update = false;
};

/// I: finetune + update, II: finetune only, III: update only, IV: neither.
const std::array<ModelVariant, 4>& model_variants();

/// Pre-trained artifacts consumed by compare and sensitivity.
struct TrainedModel {
  PredictorParams params;
  Normalizer normalizer;
  Metamodel metamodel;
};

void save_trained(const std::filesystem::path& dir, const TrainedModel& model);
TrainedModel load_trained(const std::filesystem::path& dir);

/// Density MSE per [detector location x column], (veh/km)^2.
struct MseTable {
  std::vector<std::string> locations;
  std::vector<std::string> columns;
  std::vector<std::uint64_t> seeds;
  /// Median over seeds.
  MatrixXd median;
  /// One [location x column] matrix per seed.
  std::vector<MatrixXd> per_seed;

  int replications() const { return static_cast<int>(seeds.size()); }
};

/// Per-detector MSE between simulated and observed density over records with
/// interval >= from_interval.
VectorXd location_mse(const RunLog& log, int from_interval = 0);

/// Intervals whose total a priori demand is at least `fraction` of the daily maximum.
std::vector<int> peak_intervals(const DemandProfile& profile, double fraction = 0.8);

/// Mean L_f over the records whose interval is in `intervals`.
double mean_loss_f(const RunLog& log, const std::vector<int>& intervals);

/// First interval at or after `onset` where the trailing `window`-interval mean
/// of L_f drops below the median L_f of the `baseline` intervals before onset;
/// -1 if it never does.
int adaptation_interval(const RunLog& log, int onset, int window = 6, int baseline = 24);

/// Runs fn(0..n-1) on a small thread pool; results keep index order.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

// ---- generate ----

struct Dataset {
  std::vector<Day> days;
  std::vector<std::uint64_t> day_seeds;
};

/// Incident-free simulated days with sampled true demand.
Dataset generate_dataset(const ScenarioConfig& cfg, int days, std::uint64_t seed);
void cmd_generate(const std::filesystem::path& scenario, int days, std::uint64_t seed,
                  const std::filesystem::path& out);
std::vector<Day> load_dataset(const std::filesystem::path& dir);

// ---- pretrain ----

struct PretrainReport {
  TrainedModel model;
  PretrainResult result;
  /// Mean wall-clock of one surrogate epoch and of one plant-in-the-loop epoch.
  double metamodel_epoch_s = 0.0;
  double simulator_epoch_s = 0.0;
};

PretrainReport train_model(const std::vector<Day>& days, const ScenarioConfig& cfg, int epochs,
                           std::uint64_t seed, bool time_simulator_epoch = true);
PretrainReport cmd_pretrain(const std::filesystem::path& dataset, const std::filesystem::path& scenario,
                            int epochs, const std::filesystem::path& out);

// ---- compare ----

struct CompareResult {
  MseTable mse;
  /// [seed x variant] mean L_f over peak intervals.
  MatrixXd peak_loss;
  std::vector<int> peak;
  /// [seed][variant]
  std::vector<std::vector<RunLog>> logs;
};

/// Fine-tunes once on a typical day, then runs every variant against the
/// same truth realization per seed.
CompareResult run_compare(const ScenarioConfig& cfg, const TrainedModel& model,
                          const std::vector<std::uint64_t>& seeds);
CompareResult cmd_compare(const std::filesystem::path& scenario, const std::filesystem::path& params,
                          const std::vector<std::uint64_t>& seeds, const std::filesystem::path& out);

/// Default seed list derived from the scenario seed.
std::vector<std::uint64_t> default_seeds(const ScenarioConfig& cfg, int replications);

// ---- sensitivity ----

struct SensitivityResult {
  std::vector<double> deltas;
  /// Full-horizon and post-adaptation MSE, columns are deltas.
  MseTable full;
  MseTable post;
  /// [seed x delta] adaptation interval, -1 if never.
  Eigen::MatrixXi adaptation;
  std::vector<std::vector<RunLog>> logs;  // [seed][delta]
};

SensitivityResult run_sensitivity(const ScenarioConfig& cfg, const TrainedModel& model,
                                  const std::vector<double>& deltas,
                                  const std::vector<std::uint64_t>& seeds);
SensitivityResult cmd_sensitivity(const std::filesystem::path& scenario,
                                  const std::filesystem::path& params,
                                  const std::vector<double>& deltas,
                                  const std::vector<std::uint64_t>& seeds,
                                  const std::filesystem::path& out);

// ---- export ----

/// Long-format analysis tables from every run directory under `runs`.
void cmd_export(const std::filesystem::path& runs, const std::filesystem::path& out);

std::vector<std::string> od_names(const ScenarioConfig& cfg);

}  // namespace odcal

#endif  // ODCAL_HARNESS_HPP
