#include "odcal/metamodel.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace odcal;

namespace {

Metamodel worked_example() {
  Metamodel m;
  m.c = 1.0;
  m.jam_density = VectorXd::Constant(1, 150.0);
  m.capacity = VectorXd::Constant(1, 1800.0);
  m.lanes = VectorXd::Constant(1, 3.0);
  m.incidence = Metamodel::BoolMatrix::Constant(1, 2, true);
  return m;
}

Metamodel random_metamodel(std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int k = 1 + static_cast<int>(u(gen) * 6);
  const int n = 1 + static_cast<int>(u(gen) * 10);
  Metamodel m;
  m.c = 0.2 + 2.0 * u(gen);
  m.jam_density.resize(k);
  m.capacity.resize(k);
  m.lanes.resize(k);
  m.incidence.resize(k, n);
  for (int i = 0; i < k; ++i) {
    m.jam_density[i] = 100.0 + 80.0 * u(gen);
    m.capacity[i] = 1200.0 + 1000.0 * u(gen);
    m.lanes[i] = 1.0 + static_cast<int>(u(gen) * 4);
    for (int j = 0; j < n; ++j) m.incidence(i, j) = u(gen) < 0.5;
  }
  return m;
}

}  // namespace

TEST(Metamodel, ZeroDemandGivesZeroDensity) {
  const auto m = worked_example();
  EXPECT_TRUE(predict_density(m, VectorXd::Zero(2)).isZero(0.0));
}

TEST(Metamodel, WorkedExample) {
  const auto m = worked_example();
  VectorXd d(2);
  d << 300.0, 240.0;
  EXPECT_NEAR(predict_density(m, d)[0], 150.0 / 1800.0 * 540.0 / 3.0, 1e-12);
  EXPECT_NEAR(predict_density(m, d)[0], 15.0, 1e-12);
  EXPECT_NEAR(jacobian(m)(0, 0), 150.0 / (1800.0 * 3.0), 1e-15);
  EXPECT_NEAR(jacobian(m)(0, 0), 0.02778, 1e-5);
}

TEST(Metamodel, LinearAndHomogeneous) {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(0.0, 2000.0);
  for (int trial = 0; trial < 20; ++trial) {
    const auto m = random_metamodel(gen);
    VectorXd d1(m.num_od()), d2(m.num_od());
    for (Eigen::Index i = 0; i < d1.size(); ++i) {
      d1[i] = u(gen);
      d2[i] = u(gen);
    }
    const VectorXd h1 = predict_density(m, d1);
    EXPECT_TRUE((predict_density(m, VectorXd(2.0 * d1)) - 2.0 * h1).isZero(1e-9));
    EXPECT_TRUE((predict_density(m, VectorXd(d1 + d2)) - h1 - predict_density(m, d2)).isZero(1e-9));
    EXPECT_GE(h1.minCoeff(), 0.0);
  }
}

TEST(Metamodel, EmptyIncidenceRowGivesZeroJacobianRow) {
  auto m = worked_example();
  m.incidence(0, 0) = false;
  m.incidence(0, 1) = false;
  EXPECT_TRUE(jacobian(m).row(0).isZero(0.0));
}

TEST(Metamodel, JacobianMatchesCentralDifferences) {
  std::mt19937_64 gen(17);
  std::uniform_real_distribution<double> u(0.0, 3000.0);
  for (int trial = 0; trial < 100; ++trial) {
    const auto m = random_metamodel(gen);
    VectorXd d(m.num_od());
    for (Eigen::Index i = 0; i < d.size(); ++i) d[i] = u(gen);
    const MatrixXd j = jacobian(m);
    const double h = 1.0;
    for (Eigen::Index l = 0; l < d.size(); ++l) {
      VectorXd up = d, dn = d;
      up[l] += h;
      dn[l] -= h;
      const VectorXd fd = (predict_density(m, up) - predict_density(m, dn)) / (2 * h);
      for (Eigen::Index k = 0; k < fd.size(); ++k) {
        if (j(k, l) == 0.0) {
          EXPECT_EQ(fd[k], 0.0);
        } else {
          EXPECT_LT(test::rel_err(fd[k], j(k, l)), 1e-10);
        }
      }
    }
  }
}

TEST(Metamodel, DimensionMismatchThrows) {
  EXPECT_THROW(predict_density(worked_example(), VectorXd::Zero(3)), DimensionError);
}

TEST(Metamodel, FitCRecoversKnownScale) {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(0.0, 1500.0);
  auto m = random_metamodel(gen);
  m.incidence.row(0).setConstant(true);
  m.c = 1.7;
  std::vector<DensityObservation> data;
  for (int i = 0; i < 50; ++i) {
    VectorXd d(m.num_od());
    for (Eigen::Index j = 0; j < d.size(); ++j) d[j] = u(gen);
    data.push_back({d, predict_density(m, d)});
  }
  m.c = 1.0;
  EXPECT_NEAR(fit_c(m, data), 1.7, 1e-9);

  // Scaling every observation scales c.
  for (auto& o : data) o.density *= 3.0;
  EXPECT_NEAR(fit_c(m, data), 5.1, 1e-9);
}

TEST(Metamodel, FitCSinglePoint) {
  // One detector, structural term 2 at D = 2 / gain.
  auto m = worked_example();
  m.incidence(0, 1) = false;
  const double gain = 150.0 / (1800.0 * 3.0);
  VectorXd d(2);
  d << 2.0 / gain, 999.0;
  EXPECT_NEAR(fit_c(m, {{d, VectorXd::Constant(1, 3.0)}}), 1.5, 1e-12);
}

TEST(Metamodel, FitCRejectsDegenerateData) {
  const auto m = worked_example();
  EXPECT_THROW(fit_c(m, {{VectorXd::Zero(2), VectorXd::Constant(1, 4.0)}}), ValidationError);
  EXPECT_THROW(fit_c(m, {}), ValidationError);
}

TEST(Metamodel, IncidenceFollowsOdPaths) {
  const auto cfg = test::toy();
  const auto m = metamodel_from_scenario(cfg);
  ASSERT_EQ(m.num_detectors(), 4);
  ASSERT_EQ(m.num_od(), 9);
  // Rows: detectors on L1..L4; columns in [od] order of the file.
  const int expected[4][9] = {{1, 1, 1, 1, 0, 0, 0, 0, 0},
                              {0, 1, 1, 1, 1, 1, 0, 0, 0},
                              {0, 0, 1, 1, 0, 1, 1, 1, 0},
                              {0, 0, 0, 1, 0, 1, 0, 1, 1}};
  for (int k = 0; k < 4; ++k) {
    for (int l = 0; l < 9; ++l) EXPECT_EQ(m.incidence(k, l), expected[k][l] == 1) << k << "," << l;
    EXPECT_EQ(m.lanes[k], 3.0);
    EXPECT_EQ(m.jam_density[k], 150.0);
    EXPECT_EQ(m.capacity[k], 1800.0);
  }
}

TEST(Metamodel, JsonRoundTrip) {
  auto m = metamodel_from_scenario(test::toy(), 1.2345678901234567);
  const auto back = metamodel_from_json(metamodel_to_json(m));
  EXPECT_EQ(back.c, m.c);
  EXPECT_EQ(back.incidence, m.incidence);
  EXPECT_EQ(back.jam_density, m.jam_density);
  EXPECT_EQ(back.capacity, m.capacity);
  EXPECT_EQ(back.lanes, m.lanes);
  EXPECT_THROW(metamodel_from_json("{not json"), ParseError);
}
