#include "odcal/calib.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <limits>
#include <random>

using namespace odcal;

namespace {

VectorXd vec(std::initializer_list<double> v) {
  VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

double full_loss(const VectorXd& observed, const Metamodel& m, const VectorXd& d, const VectorXd& prior,
                 double delta) {
  return measurement_loss(observed, predict_density(m, d)) + delta * demand_loss(d, prior);
}

Metamodel random_metamodel(std::mt19937_64& gen, int k, int n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Metamodel m;
  m.c = 0.5 + u(gen);
  m.jam_density = VectorXd::Constant(k, 150.0);
  m.capacity = VectorXd::Constant(k, 1800.0);
  m.lanes.resize(k);
  m.incidence.resize(k, n);
  for (int i = 0; i < k; ++i) {
    m.lanes[i] = 1 + i % 3;
    for (int j = 0; j < n; ++j) m.incidence(i, j) = u(gen) < 0.6;
  }
  return m;
}

struct Small {
  ScenarioConfig cfg;
  SimPlant plant;
  Metamodel meta;
  MeasurementSeries truth;
  FeatureEncoder encoder;
  PredictorParams params;

  explicit Small(const std::string& hyper = "demand_scale_vph = 100\nlearning_rate = 0.00001\n")
      : cfg(test::small(12, hyper)), plant(build_plant(cfg)), meta(metamodel_from_scenario(cfg, 1.0)) {
    truth = run_day(plant, sampled_demand(cfg.demand_profile), {}, cfg.horizon, 3);
    encoder = make_encoder(cfg, fit_normalizer(truth.frames));
    params = init_params<double>(predictor_sizes(cfg), 5, cfg.hyper.demand_scale_vph);
  }

  OnlineOptions options(OnlineMode mode) const {
    OnlineOptions o;
    o.mode = mode;
    o.delta = cfg.hyper.delta;
    o.steps_per_interval = cfg.hyper.online_steps_per_interval;
    o.sim_seed = 99;
    return o;
  }
};

class ConstantPredictor final : public DemandPredictor {
 public:
  explicit ConstantPredictor(DemandVector d) : d_(std::move(d)) {}
  DemandVector predict(int, const MeasurementFrame&) override { return d_; }
  bool learn(const DemandVector&) override { return false; }
  VectorXd trace(const std::vector<Eigen::Index>&) const override { return {}; }

 private:
  DemandVector d_;
};

double mean_lf(const RunLog& log) {
  double s = 0.0;
  for (const auto& r : log.records) s += r.loss_f;
  return s / static_cast<double>(log.records.size());
}

}  // namespace

TEST(Loss, MeasurementExamples) {
  EXPECT_EQ(measurement_loss(vec({3, 4}), vec({3, 4})), 0.0);
  EXPECT_DOUBLE_EQ(measurement_loss(vec({10, 20}), vec({12, 24})), 10.0);
  EXPECT_DOUBLE_EQ(measurement_loss(vec({20, 10}), vec({24, 12})), 10.0);
  EXPECT_THROW(measurement_loss(vec({1}), vec({1, 2})), DimensionError);
}

TEST(Loss, DemandExamples) {
  EXPECT_EQ(demand_loss(vec({5, 6}), vec({5, 6})), 0.0);
  EXPECT_DOUBLE_EQ(demand_loss(vec({100}), vec({90})), 100.0);
  const VectorXd a = vec({100, 30, 7}), b = vec({90, 40, 1});
  EXPECT_DOUBLE_EQ(demand_loss(VectorXd(3.0 * a), VectorXd(3.0 * b)), 9.0 * demand_loss(a, b));
  EXPECT_THROW(demand_loss(vec({1}), vec({1, 2})), DimensionError);
}

TEST(Gradient, StationaryPointIsZero) {
  const MatrixXd j = MatrixXd::Constant(2, 3, 0.02);
  EXPECT_TRUE(assemble_gradient(vec({5, 6}), vec({5, 6}), j, vec({1, 2, 3}), vec({1, 2, 3}), 0.5).isZero(0.0));
}

TEST(Gradient, ScalarChainRule) {
  const MatrixXd j = MatrixXd::Constant(1, 1, 0.02778);
  const auto g = assemble_gradient(vec({10}), vec({15}), j, vec({100}), vec({100}), 0.0);
  EXPECT_NEAR(g[0], 2 * 0.02778 * 5, 1e-12);
  EXPECT_NEAR(g[0], 0.2778, 1e-12);
}

TEST(Gradient, MatchesFiniteDifferencesThroughMetamodel) {
  std::mt19937_64 gen(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    const int k = 1 + trial % 4, n = 1 + trial % 7;
    const auto m = random_metamodel(gen, k, n);
    VectorXd d(n), prior(n), obs(k);
    for (int i = 0; i < n; ++i) {
      d[i] = 2000 * u(gen);
      prior[i] = 2000 * u(gen);
    }
    for (int i = 0; i < k; ++i) obs[i] = 80 * u(gen);
    for (double delta : {0.0, 0.001, 1.0}) {
      const auto g = assemble_gradient(obs, predict_density(m, d), jacobian(m), d, prior, delta);
      for (int l = 0; l < n; ++l) {
        const double h = 1e-3;
        VectorXd up = d, dn = d;
        up[l] += h;
        dn[l] -= h;
        const double fd = (full_loss(obs, m, up, prior, delta) - full_loss(obs, m, dn, prior, delta)) / (2 * h);
        if (std::abs(fd) < 1e-12 && std::abs(g[l]) < 1e-12) continue;
        EXPECT_LT(test::rel_err(fd, g[l]), 1e-6) << "trial " << trial << " delta " << delta;
      }
    }
  }
}

TEST(Gradient, AtThePriorOnlyTheMeasurementTermRemains) {
  std::mt19937_64 gen(4);
  const auto m = random_metamodel(gen, 3, 5);
  const VectorXd d = VectorXd::Constant(5, 400.0);
  const VectorXd obs = vec({10, 30, 5});
  const VectorXd f = predict_density(m, d);
  const auto a = assemble_gradient(obs, f, jacobian(m), d, d, 1e6);
  const auto b = assemble_gradient(obs, f, jacobian(m), d, d, 0.0);
  EXPECT_TRUE((a - b).isZero(0.0));
}

TEST(Gradient, DimensionChecks) {
  const MatrixXd j = MatrixXd::Zero(2, 3);
  EXPECT_THROW(assemble_gradient(vec({1, 2}), vec({1}), j, vec({1, 2, 3}), vec({1, 2, 3}), 0), DimensionError);
  EXPECT_THROW(assemble_gradient(vec({1, 2}), vec({1, 2}), j, vec({1, 2}), vec({1, 2}), 0), DimensionError);
}

TEST(Online, LogCoversEveryPredictedInterval) {
  Small s;
  MlpPredictor p(s.params, s.encoder, s.cfg.hyper.demand_clip_max, s.cfg.hyper.learning_rate);
  const auto log = run_online(p, s.meta, s.truth, s.plant, s.cfg, s.options(OnlineMode::update));
  ASSERT_EQ(static_cast<int>(log.records.size()), s.cfg.horizon - 1);
  for (std::size_t i = 0; i < log.records.size(); ++i) {
    const auto& r = log.records[i];
    EXPECT_EQ(r.interval, static_cast<int>(i) + 1);
    EXPECT_EQ(r.updates, static_cast<long long>(i) + 1);  // one step per interval, none skipped
    EXPECT_EQ(r.observed, s.truth.frames[i + 1].density);
    EXPECT_DOUBLE_EQ(r.total, r.loss_f + s.cfg.hyper.delta * r.loss_d);
    EXPECT_GE(r.predicted.minCoeff(), 0.0);
  }
  EXPECT_EQ(p.updates(), s.cfg.horizon - 1);
}

TEST(Online, FrozenNeverTouchesParameters) {
  Small s;
  MlpPredictor p(s.params, s.encoder, s.cfg.hyper.demand_clip_max, s.cfg.hyper.learning_rate);
  const auto log = run_online(p, s.meta, s.truth, s.plant, s.cfg, s.options(OnlineMode::frozen));
  EXPECT_EQ(p.params().flatten(), s.params.flatten());
  ASSERT_FALSE(log.trace_indices.empty());
  for (const auto& r : log.records) {
    EXPECT_EQ(r.trace, log.records.front().trace);
    EXPECT_EQ(r.updates, 0);
  }
}

TEST(Online, WarmStartCarriesParametersForward) {
  Small s;
  MlpPredictor p(s.params, s.encoder, s.cfg.hyper.demand_clip_max, s.cfg.hyper.learning_rate);
  auto opt = s.options(OnlineMode::update);
  opt.steps_per_interval = 3;
  const auto log = run_online(p, s.meta, s.truth, s.plant, s.cfg, opt);
  EXPECT_EQ(log.records.back().updates, 3 * (s.cfg.horizon - 1));

  // Replaying the same updates by hand reproduces the final parameters.
  MlpPredictor q(s.params, s.encoder, s.cfg.hyper.demand_clip_max, s.cfg.hyper.learning_rate);
  const auto again = run_online(q, s.meta, s.truth, s.plant, s.cfg, opt);
  EXPECT_EQ(q.params().flatten(), p.params().flatten());
  EXPECT_NE(p.params().flatten(), s.params.flatten());
}

TEST(Online, NonFiniteUpdateIsRejectedAndLogged) {
  Small s;
  s.truth.frames[5].density[0] = std::numeric_limits<double>::quiet_NaN();
  MlpPredictor p(s.params, s.encoder, s.cfg.hyper.demand_clip_max, s.cfg.hyper.learning_rate);
  const auto log = run_online(p, s.meta, s.truth, s.plant, s.cfg, s.options(OnlineMode::update));
  EXPECT_TRUE(log.records[4].update_rejected);
  EXPECT_EQ(p.rejected(), 1);
  EXPECT_TRUE(p.params().all_finite());
  EXPECT_EQ(log.records.back().updates, s.cfg.horizon - 2);
}

TEST(Online, OracleSitsNearTheLossFloor) {
  Small s;
  OraclePredictor oracle(s.truth.true_demand);
  auto opt = s.options(OnlineMode::frozen);
  const double floor = mean_lf(run_online(oracle, s.meta, s.truth, s.plant, s.cfg, opt));
  ConstantPredictor empty(DemandVector::Zero(s.cfg.num_od()));
  const double none = mean_lf(run_online(empty, s.meta, s.truth, s.plant, s.cfg, opt));
  EXPECT_LT(floor, 0.1 * none);
}

TEST(Online, PlantDrivenOverloadSharesTruthAcrossModes) {
  Small s;
  CalibState a{MlpPredictor(s.params, s.encoder, 3000, 1e-5), s.meta, 0, {}};
  CalibState b{MlpPredictor(s.params, s.encoder, 3000, 1e-5), s.meta, 0, {}};
  const auto la = run_online(a, s.plant, s.plant, s.cfg, OnlineMode::update, 7);
  const auto lb = run_online(b, s.plant, s.plant, s.cfg, OnlineMode::frozen, 7);
  EXPECT_EQ(la.truth_hash, lb.truth_hash);
  EXPECT_EQ(a.interval, s.cfg.horizon - 1);
  EXPECT_NE(truth_seed(7), twin_seed(7));
}

TEST(Pretrain, ZeroEpochsReturnsInitialParameters) {
  Small s;
  const auto r = pretrain({s.truth}, s.meta, s.cfg, 0, 8);
  EXPECT_TRUE(r.epoch_loss.empty());
  const auto init = init_params<double>(predictor_sizes(s.cfg), derive_seed(8, 0), s.cfg.hyper.demand_scale_vph);
  EXPECT_EQ(r.params.flatten(), init.flatten());
  EXPECT_THROW(pretrain({}, s.meta, s.cfg, 1, 8), ValidationError);
}

TEST(Pretrain, ConsistentDatasetConvergesToPrior) {
  // Observed density is exactly h(prior); with delta = 1 the optimum is D = prior.
  Small s("demand_scale_vph = 100\nlearning_rate = 0.00001\ndelta = 1\nhidden_nodes = 16\n");
  std::vector<Day> days;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    Day d = run_day(s.plant, sampled_demand(s.cfg.demand_profile), {}, s.cfg.horizon, seed);
    for (int t = 0; t < d.horizon(); ++t) {
      d.frames[t].density = predict_density(s.meta, apriori_demand(s.cfg.demand_profile, t));
    }
    days.push_back(d);
  }
  const auto r = pretrain(days, s.meta, s.cfg, 300, 2);
  EXPECT_LT(r.epoch_loss.back(), 1e-3 * r.epoch_loss.front());
  const auto enc = make_encoder(s.cfg, r.normalizer);
  for (int t = 0; t + 1 < s.cfg.horizon; ++t) {
    const VectorXd d = clip_demand(forward(r.params, enc.encode(t, days[0].frames[t])).first, 3000.0);
    const VectorXd prior = apriori_demand(s.cfg.demand_profile, t + 1);
    EXPECT_LT((d - prior).cwiseAbs().maxCoeff(), 0.02 * prior.maxCoeff()) << t;
  }
}

TEST(Pretrain, DeterministicForSeed) {
  Small s;
  const auto a = pretrain({s.truth}, s.meta, s.cfg, 3, 4);
  const auto b = pretrain({s.truth}, s.meta, s.cfg, 3, 4);
  EXPECT_EQ(a.params.flatten(), b.params.flatten());
  EXPECT_EQ(a.epoch_loss, b.epoch_loss);
}

TEST(Finetune, ZeroRateIsIdentityAndPositiveRateMoves) {
  Small s;
  EXPECT_EQ(finetune_typical_day(s.params, s.encoder, s.meta, s.plant, s.cfg, 1, 0.0).flatten(),
            s.params.flatten());
  EXPECT_NE(finetune_typical_day(s.params, s.encoder, s.meta, s.plant, s.cfg, 1, 1e-5).flatten(),
            s.params.flatten());
}

TEST(FitC, UsesEveryIntervalOfEveryDay) {
  Small s;
  auto day = s.truth;
  for (int t = 0; t < day.horizon(); ++t) day.frames[t].density = 1.3 * predict_density(s.meta, day.true_demand[t]);
  EXPECT_NEAR(fit_metamodel_c(s.meta, {day, day}), 1.3, 1e-12);
}
