#include "odcal/calib.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

namespace odcal {

double measurement_loss(const VectorXd& observed, const VectorXd& simulated) {
  require_same_size(observed.size(), simulated.size(), "measurement_loss");
  if (observed.size() == 0) return 0.0;
  return (observed - simulated).squaredNorm() / static_cast<double>(observed.size());
}

double demand_loss(const DemandVector& predicted, const DemandVector& apriori) {
  require_same_size(predicted.size(), apriori.size(), "demand_loss");
  if (predicted.size() == 0) return 0.0;
  return (predicted - apriori).squaredNorm() / static_cast<double>(predicted.size());
}

DemandVector assemble_gradient(const VectorXd& observed, const VectorXd& simulated,
                               const MatrixXd& jacobian, const DemandVector& predicted,
                               const DemandVector& apriori, double delta) {
  require_same_size(observed.size(), simulated.size(), "assemble_gradient densities");
  require_same_size(jacobian.rows(), observed.size(), "assemble_gradient jacobian rows");
  require_same_size(jacobian.cols(), predicted.size(), "assemble_gradient jacobian cols");
  require_same_size(predicted.size(), apriori.size(), "assemble_gradient demand");
  DemandVector g = DemandVector::Zero(predicted.size());
  if (observed.size() > 0) {
    g += (2.0 / static_cast<double>(observed.size())) * jacobian.transpose() * (simulated - observed);
  }
  if (predicted.size() > 0) {
    g += delta * (2.0 / static_cast<double>(predicted.size())) * (predicted - apriori);
  }
  return g;
}

MlpPredictor::MlpPredictor(PredictorParams params, FeatureEncoder encoder, double clip_max,
                           double learning_rate)
    : params_(std::move(params)),
      encoder_(std::move(encoder)),
      clip_max_(clip_max),
      learning_rate_(learning_rate) {
  require_same_size(params_.input_size(), encoder_.size(), "MlpPredictor input");
}

DemandVector MlpPredictor::predict(int interval, const MeasurementFrame& measurements) {
  auto [raw, tape] = forward(params_, encoder_.encode(interval, measurements));
  tape_ = std::move(tape);
  have_tape_ = true;
  return clip_demand(raw, clip_max_);
}

bool MlpPredictor::learn(const DemandVector& grad_demand) {
  if (!have_tape_) throw std::logic_error("MlpPredictor::learn before predict");
  try {
    params_ = sgd_step(params_, backward(params_, tape_, grad_demand), learning_rate_);
  } catch (const NonFiniteError&) {
    ++rejected_;
    return false;
  }
  if (!params_.all_finite()) {
    // Cannot happen with finite gradients and finite lr, but keep theta sane.
    ++rejected_;
    return false;
  }
  have_tape_ = false;
  ++updates_;
  return true;
}

VectorXd MlpPredictor::trace(const std::vector<Eigen::Index>& indices) const {
  const VectorXd flat = params_.flatten();
  VectorXd out(static_cast<Eigen::Index>(indices.size()));
  for (std::size_t i = 0; i < indices.size(); ++i) out[static_cast<Eigen::Index>(i)] = flat[indices[i]];
  return out;
}

MatrixXd RunLog::observed_matrix() const {
  const Eigen::Index k = records.empty() ? 0 : records.front().observed.size();
  MatrixXd m(static_cast<Eigen::Index>(records.size()), k);
  for (std::size_t r = 0; r < records.size(); ++r) m.row(r) = records[r].observed.transpose();
  return m;
}

MatrixXd RunLog::simulated_matrix() const {
  const Eigen::Index k = records.empty() ? 0 : records.front().simulated.size();
  MatrixXd m(static_cast<Eigen::Index>(records.size()), k);
  for (std::size_t r = 0; r < records.size(); ++r) m.row(r) = records[r].simulated.transpose();
  return m;
}

std::vector<Eigen::Index> trace_indices(const PredictorParams& params, int count) {
  std::vector<Eigen::Index> idx;
  const Eigen::Index n = params.num_params();
  for (int i = 0; i < count && i < n; ++i) idx.push_back((static_cast<Eigen::Index>(i) * n) / count + n / (2 * count));
  return idx;
}

namespace {

std::uint64_t hash_density(const MeasurementSeries& s) {
  std::string bytes;
  for (const auto& f : s.frames) {
    bytes.append(reinterpret_cast<const char*>(f.density.data()),
                 static_cast<std::size_t>(f.density.size()) * sizeof(double));
  }
  return fnv1a64(bytes);
}

}  // namespace

RunLog run_online(DemandPredictor& predictor, const Metamodel& metamodel,
                  const MeasurementSeries& truth, const SimPlant& sim_plant,
                  const ScenarioConfig& scenario, const OnlineOptions& options) {
  const int horizon = truth.horizon();
  if (horizon < 2) throw ValidationError("run_online: truth series needs at least two intervals");
  const MatrixXd jac = jacobian(metamodel);

  RunLog log;
  log.detector_ids = truth.detector_ids;
  log.truth_hash = hash_density(truth);
  if (auto* mlp = dynamic_cast<MlpPredictor*>(&predictor)) {
    log.trace_indices = trace_indices(mlp->params(), scenario.hyper.trace_params);
  }
  log.records.reserve(static_cast<std::size_t>(horizon - 1));

  Rng sim_rng(options.sim_seed);
  SimState sim = initial_state(sim_plant);
  update_incidents(sim_plant, sim, options.sim_incidents, 0);
  // The twin's first interval runs on the a priori demand; predictions start at t=1.
  step_interval(sim_plant, sim, apriori_demand(scenario.demand_profile, 0), 0, sim_rng);

  long long updates = 0;
  for (int t = 0; t + 1 < horizon; ++t) {
    const int next = t + 1;
    DemandVector demand = predictor.predict(t, truth.frames[t]);
    update_incidents(sim_plant, sim, options.sim_incidents, next);
    const MeasurementFrame sim_frame = step_interval(sim_plant, sim, demand, next, sim_rng);

    RunRecord rec;
    rec.interval = next;
    rec.predicted = demand;
    if (static_cast<int>(truth.true_demand.size()) > next) rec.true_demand = truth.true_demand[next];
    rec.observed = truth.frames[next].density;
    rec.simulated = sim_frame.density;
    rec.surrogate = predict_density(metamodel, demand);
    const DemandVector prior = apriori_demand(scenario.demand_profile, next);
    rec.loss_f = measurement_loss(rec.observed, rec.simulated);
    rec.loss_d = demand_loss(demand, prior);
    rec.total = rec.loss_f + options.delta * rec.loss_d;

    if (options.mode == OnlineMode::update) {
      DemandVector current = demand;
      for (int step = 0; step < options.steps_per_interval; ++step) {
        if (step > 0) current = predictor.predict(t, truth.frames[t]);
        // The surrogate error is held fixed, so the twin density moves with J.
        const VectorXd f_est = rec.simulated + jac * (current - demand);
        const DemandVector g = assemble_gradient(rec.observed, f_est, jac, current, prior, options.delta);
        if (!predictor.learn(g)) {
          rec.update_rejected = true;
          break;
        }
        ++updates;
      }
    }
    rec.updates = updates;
    rec.trace = predictor.trace(log.trace_indices);
    log.records.push_back(std::move(rec));
  }
  return log;
}

std::uint64_t truth_seed(std::uint64_t seed) { return derive_seed(seed, 101); }
std::uint64_t twin_seed(std::uint64_t seed) { return derive_seed(seed, 202); }

RunLog run_online(CalibState& state, const SimPlant& truth_plant, const SimPlant& sim_plant,
                  const ScenarioConfig& scenario, OnlineMode mode, std::uint64_t seed) {
  const MeasurementSeries truth = run_day(truth_plant, sampled_demand(scenario.demand_profile),
                                          scenario.incidents, scenario.horizon, truth_seed(seed));
  OnlineOptions opt;
  opt.mode = mode;
  opt.delta = scenario.hyper.delta;
  opt.steps_per_interval = scenario.hyper.online_steps_per_interval;
  opt.sim_seed = twin_seed(seed);
  RunLog log = run_online(state.predictor, state.metamodel, truth, sim_plant, scenario, opt);
  state.interval = truth.horizon() - 1;
  state.last_frame = truth.frames.back();
  return log;
}

double fit_metamodel_c(const Metamodel& structure, const std::vector<Day>& days) {
  std::vector<DensityObservation> obs;
  for (const auto& day : days) {
    for (int t = 0; t < day.horizon(); ++t) obs.push_back({day.true_demand.at(t), day.frames[t].density});
  }
  return fit_c(structure, obs);
}

FeatureEncoder make_encoder(const ScenarioConfig& cfg, Normalizer normalizer) {
  FeatureEncoder e;
  e.horizon = cfg.horizon;
  e.time_bins = cfg.time_bins();
  e.normalizer = std::move(normalizer);
  return e;
}

std::vector<int> predictor_sizes(const ScenarioConfig& cfg) {
  std::vector<int> sizes{cfg.time_bins() + 2 * cfg.num_detectors()};
  for (int l = 0; l < cfg.hyper.hidden_layers; ++l) sizes.push_back(cfg.hyper.hidden_nodes);
  sizes.push_back(cfg.num_od());
  return sizes;
}

PretrainResult pretrain(const std::vector<Day>& days, const Metamodel& metamodel,
                        const ScenarioConfig& cfg, int epochs, std::uint64_t seed) {
  if (days.empty()) throw ValidationError("pretrain: empty dataset");
  std::vector<MeasurementFrame> all_frames;
  std::vector<std::pair<int, int>> samples;
  for (std::size_t d = 0; d < days.size(); ++d) {
    if (days[d].horizon() != cfg.horizon) throw ValidationError("pretrain: day horizon differs from scenario");
    all_frames.insert(all_frames.end(), days[d].frames.begin(), days[d].frames.end());
    for (int t = 0; t + 1 < days[d].horizon(); ++t) samples.emplace_back(static_cast<int>(d), t);
  }

  PretrainResult result;
  result.normalizer = fit_normalizer(all_frames);
  const FeatureEncoder encoder = make_encoder(cfg, result.normalizer);
  result.params = init_params<double>(predictor_sizes(cfg), derive_seed(seed, 0), cfg.hyper.demand_scale_vph);
  const MatrixXd jac = jacobian(metamodel);
  const double lr = cfg.hyper.learning_rate;

  for (int epoch = 0; epoch < epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    Rng shuffle_rng(derive_seed(seed, 1000 + static_cast<std::uint64_t>(epoch)));
    std::shuffle(samples.begin(), samples.end(), shuffle_rng);
    double loss_sum = 0.0;
    for (const auto& [d, t] : samples) {
      const auto& day = days[static_cast<std::size_t>(d)];
      auto [raw, tape] = forward(result.params, encoder.encode(t, day.frames[t]));
      const DemandVector demand = clip_demand(raw, cfg.hyper.demand_clip_max);
      const VectorXd surrogate = predict_density(metamodel, demand);
      const VectorXd& observed = day.frames[t + 1].density;
      const DemandVector prior = apriori_demand(cfg.demand_profile, t + 1);
      const double loss = measurement_loss(observed, surrogate) + cfg.hyper.delta * demand_loss(demand, prior);
      if (!std::isfinite(loss)) {
        std::ostringstream msg;
        msg << "pretrain: non-finite loss at epoch " << epoch << ", day " << d << ", interval " << t;
        throw NonFiniteError(msg.str());
      }
      loss_sum += loss;
      const DemandVector g = assemble_gradient(observed, surrogate, jac, demand, prior, cfg.hyper.delta);
      result.params = sgd_step(result.params, backward(result.params, tape, g), lr);
    }
    result.epoch_loss.push_back(loss_sum / static_cast<double>(samples.size()));
    result.epoch_seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count());
  }
  return result;
}

PredictorParams finetune_typical_day(const PredictorParams& params, const FeatureEncoder& encoder,
                                     const Metamodel& metamodel, const SimPlant& plant,
                                     const ScenarioConfig& scenario, std::uint64_t seed,
                                     double learning_rate) {
  const MeasurementSeries truth = run_day(plant, sampled_demand(scenario.demand_profile), {},
                                          scenario.horizon, truth_seed(seed));
  MlpPredictor predictor(params, encoder, scenario.hyper.demand_clip_max, learning_rate);
  OnlineOptions opt;
  opt.mode = OnlineMode::update;
  opt.delta = scenario.hyper.delta;
  opt.steps_per_interval = scenario.hyper.online_steps_per_interval;
  opt.sim_seed = twin_seed(seed);
  run_online(predictor, metamodel, truth, plant, scenario, opt);
  return predictor.params();
}

PredictorParams simulator_in_loop_epoch(const PredictorParams& params, const FeatureEncoder& encoder,
                                        const Metamodel& metamodel, const std::vector<Day>& days,
                                        const SimPlant& plant, const ScenarioConfig& scenario,
                                        std::uint64_t seed) {
  MlpPredictor predictor(params, encoder, scenario.hyper.demand_clip_max, scenario.hyper.learning_rate);
  OnlineOptions opt;
  opt.mode = OnlineMode::update;
  opt.delta = scenario.hyper.delta;
  opt.steps_per_interval = 1;
  for (std::size_t d = 0; d < days.size(); ++d) {
    opt.sim_seed = derive_seed(seed, d);
    run_online(predictor, metamodel, days[d], plant, scenario, opt);
  }
  return predictor.params();
}

}  // namespace odcal
