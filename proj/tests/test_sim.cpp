#include "odcal/sim.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <random>
#include <set>

using namespace odcal;

namespace {

NetworkSpec one_link(double length_m, int lanes = 3, double vf = 50.0) {
  NetworkSpec net;
  net.nodes = {{"A"}, {"B"}};
  LinkSpec l;
  l.id = "L";
  l.from = "A";
  l.to = "B";
  l.length_m = length_m;
  l.lanes = lanes;
  l.free_speed_kmh = vf;
  net.links.push_back(l);
  net.od_paths[0] = {"L"};
  return net;
}

DemandVector demand1(double q) { return DemandVector::Constant(1, q); }

void expect_conserved(const SimState& s) {
  ASSERT_EQ(s.entered - s.exited - s.vehicles_in_network(), 0);
}

}  // namespace

TEST(Sim, CellsFollowFreeSpeedTimesTick) {
  const SimPlant plant = build_plant(one_link(100.0), {}, 1.0, 300.0);
  ASSERT_EQ(plant.cells().size(), 7u);
  const double cell_km = 50.0 / 3600.0;  // 13.9 m
  for (int c = 0; c < 6; ++c) EXPECT_NEAR(plant.cells()[c].length_km, cell_km, 1e-12);
  EXPECT_GT(plant.cells()[6].length_km, cell_km);
  EXPECT_NEAR(plant.link_length_km(0), 0.1, 1e-12);
  EXPECT_EQ(plant.cells()[6].next, -1);
}

TEST(Sim, TickMustDivideInterval) {
  EXPECT_THROW(build_plant(one_link(500.0), {}, 7.0, 300.0), ValidationError);
}

TEST(Sim, TickTooCoarseForShortLink) {
  EXPECT_THROW(build_plant(one_link(10.0), {}, 1.0, 300.0), ValidationError);
}

TEST(Sim, SingleLinkHasOneSourceAndOneSink) {
  const SimPlant plant = build_plant(one_link(100.0), {}, 1.0, 300.0);
  EXPECT_EQ(plant.num_sources(), 1);
  EXPECT_EQ(plant.num_sinks(), 1);
  EXPECT_EQ(plant.next_link(0, 0), -1);
}

TEST(Sim, ZeroDemandLeavesEmptyNetworkEmpty) {
  const SimPlant plant = build_plant(one_link(300.0), {{"k", "L", 0.5}}, 1.0, 300.0);
  SimState s = initial_state(plant);
  Rng rng(1);
  const auto f = step_interval(plant, s, demand1(0.0), 0, rng);
  EXPECT_EQ(f.density[0], 0.0);
  EXPECT_EQ(f.flow[0], 0.0);
  EXPECT_EQ(f.speed[0], 50.0);
  EXPECT_EQ(s.elapsed_ticks, 300);
  EXPECT_EQ(s.entered, 0);
  EXPECT_EQ(s.vehicles_in_network(), 0);
}

TEST(Sim, FreeFlowDensityIsFlowOverSpeed) {
  // 72 cells of exactly v_f * tick.
  const SimPlant plant = build_plant(one_link(1000.0), {{"k", "L", 0.5}}, 1.0, 300.0);
  SimState s = initial_state(plant);
  Rng rng(3);
  const double q = 1800.0;
  for (int t = 0; t < 2; ++t) step_interval(plant, s, demand1(q), t, rng);  // warm-up
  double sum = 0.0;
  const int n = 40;
  for (int t = 0; t < n; ++t) sum += step_interval(plant, s, demand1(q), t, rng).density[0];
  EXPECT_NEAR(sum / n, q / 50.0, 0.05 * q / 50.0);
}

TEST(Sim, OversaturatedSignalBuildsQueue) {
  NetworkSpec net = one_link(500.0, 1);
  net.nodes.push_back({"C"});
  LinkSpec down = net.links[0];
  down.id = "L2";
  down.from = "B";
  down.to = "C";
  down.length_m = 200.0;
  net.links.push_back(down);
  net.od_paths[0] = {"L", "L2"};
  SignalSpec sig;
  sig.node_id = "B";
  sig.cycle_s = 60.0;
  sig.phases = {{{"L"}, 10.0}, {{}, 50.0}};
  net.signals.push_back(sig);
  const SimPlant plant = build_plant(net, {{"k", "L", 0.5}}, 1.0, 300.0);
  SimState s = initial_state(plant);
  Rng rng(5);
  const double q = 900.0;  // green share supports 300 veh/h
  std::vector<double> k;
  for (int t = 0; t < 8; ++t) k.push_back(step_interval(plant, s, demand1(q), t, rng).density[0]);
  EXPECT_GT(k.back(), k.front());
  EXPECT_GT(k.back(), 3.0 * q / 50.0);
  EXPECT_LE(k.back(), 150.0 + 1e-9);
}

TEST(Sim, IncidentScalesLanesCapacityAndStorage) {
  const SimPlant plant = build_plant(one_link(1000.0), {{"k", "L", 0.5}}, 1.0, 300.0);
  SimState s = initial_state(plant);
  apply_incident(plant, s, {"L", 0, 10, 0});
  EXPECT_DOUBLE_EQ(s.effective_lanes(plant, 0), 3.0);
  apply_incident(plant, s, {"L", 0, 10, 1});
  EXPECT_DOUBLE_EQ(s.effective_lanes(plant, 0) / plant.links()[0].lanes, 2.0 / 3.0);
  clear_incident(plant, s, {"L", 0, 10, 1});
  EXPECT_DOUBLE_EQ(s.effective_lanes(plant, 0), 3.0);

  // Saturated discharge through the detector cell drops to two lanes' worth.
  auto discharge = [&](int closed) {
    SimState st = initial_state(plant);
    if (closed) apply_incident(plant, st, {"L", 0, 10, closed});
    Rng rng(9);
    for (int t = 0; t < 3; ++t) step_interval(plant, st, demand1(9000.0), t, rng);
    return step_interval(plant, st, demand1(9000.0), 3, rng).flow[0];
  };
  EXPECT_NEAR(discharge(1) / discharge(0), 2.0 / 3.0, 0.05);
}

TEST(Sim, IncidentErrors) {
  const SimPlant plant = build_plant(one_link(300.0), {}, 1.0, 300.0);
  SimState s = initial_state(plant);
  try {
    apply_incident(plant, s, {"nowhere", 0, 1, 1});
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("nowhere"), std::string::npos);
  }
  EXPECT_THROW(apply_incident(plant, s, {"L", 0, 1, 3}), ValidationError);
}

TEST(Sim, ReferenceDayHasFullHorizon) {
  const auto cfg = test::toy();
  const SimPlant plant = build_plant(cfg);
  const auto day = run_day(plant, sampled_demand(cfg.demand_profile), {}, cfg.horizon, 17);
  EXPECT_EQ(day.horizon(), 288);
  EXPECT_EQ(day.true_demand.size(), 288u);
  EXPECT_EQ(day.detector_ids.size(), 4u);
  for (const auto& f : day.frames) EXPECT_EQ(f.density.size(), 4);
}

TEST(Sim, SeedDeterminismAndVariety) {
  const auto cfg = test::toy();
  const SimPlant plant = build_plant(cfg);
  const auto src = sampled_demand(cfg.demand_profile);
  const auto a = run_day(plant, src, {}, cfg.horizon, 4);
  const auto b = run_day(plant, src, {}, cfg.horizon, 4);
  EXPECT_EQ(a.density_matrix(), b.density_matrix());
  for (int t = 0; t < a.horizon(); ++t) {
    EXPECT_EQ(a.frames[t].flow, b.frames[t].flow);
    EXPECT_EQ(a.true_demand[t], b.true_demand[t]);
  }

  std::set<double> peaks;
  for (std::uint64_t seed = 100; seed < 110; ++seed) {
    peaks.insert(run_day(plant, src, {}, cfg.horizon, seed).density_matrix().maxCoeff());
  }
  EXPECT_EQ(peaks.size(), 10u);
}

TEST(Sim, FramesAreSelfConsistent) {
  const auto cfg = test::toy_incident();
  const SimPlant plant = build_plant(cfg);
  const auto day = run_day(plant, sampled_demand(cfg.demand_profile), cfg.incidents, cfg.horizon, 8);
  for (const auto& f : day.frames) {
    for (Eigen::Index d = 0; d < f.density.size(); ++d) {
      const auto& link = plant.links()[plant.detectors()[d].link];
      EXPECT_GE(f.density[d], 0.0);
      EXPECT_LE(f.density[d], link.jam_density_per_lane_vpkm * link.lanes + 1e-9);
      EXPECT_GE(f.flow[d], 0.0);
      if (f.density[d] > 0) {
        EXPECT_NEAR(f.speed[d] * f.density[d], f.flow[d], 1e-9 * (1 + f.flow[d]));
      } else {
        EXPECT_EQ(f.speed[d], link.free_speed_kmh);
      }
    }
  }
}

TEST(Sim, ClosureRaisesDensityAtTheIncidentDetector) {
  const auto cfg = test::toy_incident();
  const SimPlant plant = build_plant(cfg);
  const auto src = sampled_demand(cfg.demand_profile);
  const auto& inc = cfg.incidents.front();
  const int det = 2;  // loc2 sits on L3
  ASSERT_EQ(cfg.detectors[det].link_id, inc.link_id);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto with = run_day(plant, src, cfg.incidents, cfg.horizon, seed).density_matrix();
    const auto without = run_day(plant, src, {}, cfg.horizon, seed).density_matrix();
    const auto rows = inc.end_interval - inc.start_interval + 1;
    EXPECT_GE(with.col(det).segment(inc.start_interval, rows).maxCoeff(),
              without.col(det).segment(inc.start_interval, rows).maxCoeff());
  }
}

// Random corridors, signals, demand and incidents, checked after every tick.
TEST(Sim, ConservationHoldsEveryTick) {
  std::mt19937_64 gen(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  long long ticks = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const int n_links = 1 + static_cast<int>(u(gen) * 4);
    NetworkSpec net;
    for (int i = 0; i <= n_links; ++i) net.nodes.push_back({"N" + std::to_string(i)});
    for (int i = 0; i < n_links; ++i) {
      LinkSpec l;
      l.id = "L" + std::to_string(i);
      l.from = "N" + std::to_string(i);
      l.to = "N" + std::to_string(i + 1);
      l.lanes = 1 + static_cast<int>(u(gen) * 3);
      l.free_speed_kmh = 30.0 + 40.0 * u(gen);
      l.length_m = 40.0 + 300.0 * u(gen);
      net.links.push_back(l);
    }
    int od = 0;
    for (int o = 0; o < n_links; ++o) {
      std::vector<std::string> path;
      for (int i = o; i < n_links; ++i) path.push_back("L" + std::to_string(i));
      net.od_paths[od++] = path;
    }
    if (n_links > 1) {
      SignalSpec sig{"N1", 40.0, 3.0, {{{"L0"}, 15.0}, {{}, 25.0}}};
      net.signals.push_back(sig);
    }
    const SimPlant plant = build_plant(net, {}, 1.0, 1.0);  // one tick per step
    SimState s = initial_state(plant);
    Rng rng(gen());
    DemandVector demand(od);
    for (int step = 0; step < 5000; ++step) {
      if (step % 250 == 0) {
        for (int i = 0; i < od; ++i) demand[i] = 4000.0 * u(gen);
        const int li = static_cast<int>(u(gen) * n_links);
        const IncidentSpec inc{"L" + std::to_string(li), 0, 0, 1};
        if (plant.links()[li].lanes > 1 && s.lanes_closed[li] == 0) apply_incident(plant, s, inc);
        else if (s.lanes_closed[li] > 0) clear_incident(plant, s, inc);
      }
      step_interval(plant, s, demand, step, rng);
      expect_conserved(s);
      for (std::size_t c = 0; c < plant.cells().size(); ++c) {
        const auto& cell = plant.cells()[c];
        const auto& link = plant.links()[cell.link];
        // Closing a lane can leave a cell above its reduced storage until it drains.
        const double full = link.jam_density_per_lane_vpkm * link.lanes * cell.length_km;
        ASSERT_LE(static_cast<double>(s.cells[c].size()), full + 1e-9);
      }
      ++ticks;
    }
  }
  EXPECT_EQ(ticks, 100000);
}
