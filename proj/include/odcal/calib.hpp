#ifndef ODCAL_CALIB_HPP
#define ODCAL_CALIB_HPP

#include "odcal/metamodel.hpp"
#include "odcal/predictor.hpp"
#include "odcal/sim.hpp"

#include <cstdint>
#include <vector>

namespace odcal {

/// Mean squared density gap over detectors, (veh/km)^2.
double measurement_loss(const VectorXd& observed, const VectorXd& simulated);

/// Mean squared gap to the a priori demand over OD pairs, (veh/h)^2.
double demand_loss(const DemandVector& predicted, const DemandVector& apriori);

/// dL/dD for L = measurement_loss + delta * demand_loss, with the measurement
/// term chained through the surrogate Jacobian:
///
///   (2/|K|) J^T (f - f_obs) + delta (2/|OD|) (D - D_prior).
///
/// `simulated` may come from the plant or the surrogate; J is always the surrogate's.
DemandVector assemble_gradient(const VectorXd& observed, const VectorXd& simulated,
                               const MatrixXd& jacobian, const DemandVector& predicted,
                               const DemandVector& apriori, double delta);

/// Next-interval demand predictor as seen by the online loop.
class DemandPredictor {
 public:
  virtual ~DemandPredictor() = default;
  /// Demand for interval+1 from the measurements of `interval`.
  virtual DemandVector predict(int interval, const MeasurementFrame& measurements) = 0;
  /// One update from dL/dD at the most recent prediction. False if rejected.
  virtual bool learn(const DemandVector& grad_demand) = 0;
  /// Flat parameter values at the given indices (empty for parameter-free predictors).
  virtual VectorXd trace(const std::vector<Eigen::Index>& indices) const = 0;
};

/// The neural predictor: encode -> forward -> clip, backward straight through the clip.
class MlpPredictor final : public DemandPredictor {
 public:
  MlpPredictor(PredictorParams params, FeatureEncoder encoder, double clip_max, double learning_rate);

  DemandVector predict(int interval, const MeasurementFrame& measurements) override;
  bool learn(const DemandVector& grad_demand) override;
  VectorXd trace(const std::vector<Eigen::Index>& indices) const override;

  const PredictorParams& params() const { return params_; }
  const FeatureEncoder& encoder() const { return encoder_; }
  long long updates() const { return updates_; }
  long long rejected() const { return rejected_; }

 private:
  PredictorParams params_;
  FeatureEncoder encoder_;
  double clip_max_;
  double learning_rate_;
  Tape<double> tape_;
  bool have_tape_ = false;
  long long updates_ = 0;
  long long rejected_ = 0;
};

/// Returns recorded true demand for interval+1; never learns. Loss-floor reference.
class OraclePredictor final : public DemandPredictor {
 public:
  explicit OraclePredictor(std::vector<DemandVector> true_demand) : truth_(std::move(true_demand)) {}
  DemandVector predict(int interval, const MeasurementFrame&) override { return truth_.at(interval + 1); }
  bool learn(const DemandVector&) override { return false; }
  VectorXd trace(const std::vector<Eigen::Index>&) const override { return {}; }

 private:
  std::vector<DemandVector> truth_;
};

struct RunRecord {
  /// Interval the prediction is for (t + 1).
  int interval = 0;
  DemandVector predicted;
  DemandVector true_demand;
  VectorXd observed;   // truth-plant density
  VectorXd simulated;  // sim-plant density
  VectorXd surrogate;  // metamodel density at the prediction
  double loss_f = 0.0;
  double loss_d = 0.0;
  double total = 0.0;
  bool update_rejected = false;
  long long updates = 0;
  VectorXd trace;
};

struct RunLog {
  std::vector<std::string> detector_ids;
  std::vector<Eigen::Index> trace_indices;
  std::vector<RunRecord> records;
  /// Hash of the truth density series; equal across runs that share a truth realization.
  std::uint64_t truth_hash = 0;

  /// [record x detector] matrices.
  MatrixXd observed_matrix() const;
  MatrixXd simulated_matrix() const;
};

enum class OnlineMode { update, frozen };

struct OnlineOptions {
  OnlineMode mode = OnlineMode::update;
  double delta = 0.001;
  int steps_per_interval = 1;
  std::uint64_t sim_seed = 0;
  /// Incidents the simulated twin knows about (normally none).
  std::vector<IncidentSpec> sim_incidents;
};

/// Evolving calibration state: predictor, surrogate, and progress counters.
struct CalibState {
  MlpPredictor predictor;
  Metamodel metamodel;
  int interval = 0;
  MeasurementFrame last_frame;
};

/// Per-interval online calibration against a recorded truth series. The
/// simulated twin keeps its traffic state across intervals.
RunLog run_online(DemandPredictor& predictor, const Metamodel& metamodel,
                  const MeasurementSeries& truth, const SimPlant& sim_plant,
                  const ScenarioConfig& scenario, const OnlineOptions& options);

/// Same, generating the truth day from truth_plant with the scenario's
/// incidents. Truth and twin use distinct streams derived from seed.
RunLog run_online(CalibState& state, const SimPlant& truth_plant, const SimPlant& sim_plant,
                  const ScenarioConfig& scenario, OnlineMode mode, std::uint64_t seed);

/// Seed of the truth realization used by the plant-driven run_online overload.
std::uint64_t truth_seed(std::uint64_t seed);
std::uint64_t twin_seed(std::uint64_t seed);

std::vector<Eigen::Index> trace_indices(const PredictorParams& params, int count);

/// One training day: recorded measurements plus the demand that produced them.
using Day = MeasurementSeries;

struct PretrainResult {
  PredictorParams params;
  Normalizer normalizer;
  std::vector<double> epoch_loss;
  std::vector<double> epoch_seconds;
};

/// Fits c on (true demand, observed density) pairs from every day.
double fit_metamodel_c(const Metamodel& structure, const std::vector<Day>& days);

/// Offline training through the surrogate: every (t -> t+1) sample runs
/// encode, forward, clip, surrogate density, loss, gradient, backward, SGD.
/// Throws NonFiniteError if a loss or update goes non-finite.
PretrainResult pretrain(const std::vector<Day>& days, const Metamodel& metamodel,
                        const ScenarioConfig& cfg, int epochs, std::uint64_t seed);

/// One typical (incident-free) simulated day through the online loop with updates.
PredictorParams finetune_typical_day(const PredictorParams& params, const FeatureEncoder& encoder,
                                     const Metamodel& metamodel, const SimPlant& plant,
                                     const ScenarioConfig& scenario, std::uint64_t seed,
                                     double learning_rate);

/// One epoch where each dataset day is replayed as truth while the plant is
/// in the loop. Used as the cost baseline for surrogate pre-training.
PredictorParams simulator_in_loop_epoch(const PredictorParams& params, const FeatureEncoder& encoder,
                                        const Metamodel& metamodel, const std::vector<Day>& days,
                                        const SimPlant& plant, const ScenarioConfig& scenario,
                                        std::uint64_t seed);

FeatureEncoder make_encoder(const ScenarioConfig& cfg, Normalizer normalizer);
std::vector<int> predictor_sizes(const ScenarioConfig& cfg);

}  // namespace odcal

#endif  // ODCAL_CALIB_HPP
