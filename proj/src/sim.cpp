#include "odcal/sim.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace odcal {

MatrixXd MeasurementSeries::density_matrix() const {
  const Eigen::Index k = frames.empty() ? 0 : frames.front().density.size();
  MatrixXd m(static_cast<Eigen::Index>(frames.size()), k);
  for (std::size_t t = 0; t < frames.size(); ++t) m.row(t) = frames[t].density.transpose();
  return m;
}

int SimPlant::num_sources() const {
  return static_cast<int>(std::set<int>(entry_link_.begin(), entry_link_.end()).size());
}

int SimPlant::num_sinks() const {
  std::set<int> exits;
  for (int od = 0; od < num_od(); ++od) {
    int link = entry_link_[od];
    while (routes_[od][link] >= 0) link = routes_[od][link];
    exits.insert(link);
  }
  return static_cast<int>(exits.size());
}

double SimPlant::backward_wave_ratio(int link) const {
  return backward_wave_kmh_ / links_[link].free_speed_kmh;
}

bool SimPlant::is_green(int link, long long tick) const {
  const auto& g = links_[link].green;
  if (g.empty()) return true;
  const auto n = static_cast<long long>(g.size());
  return g[static_cast<std::size_t>(((tick + links_[link].offset_ticks) % n + n) % n)] != 0;
}

double SimPlant::link_length_km(int link) const {
  double km = 0.0;
  for (int c = links_[link].first_cell; c < links_[link].first_cell + links_[link].num_cells; ++c) {
    km += cells_[c].length_km;
  }
  return km;
}

int SimPlant::link_index(const std::string& id) const {
  for (std::size_t i = 0; i < links_.size(); ++i) {
    if (links_[i].id == id) return static_cast<int>(i);
  }
  return -1;
}

SimPlant build_plant(const NetworkSpec& network, const std::vector<DetectorSpec>& detectors,
                     double tick_s, double interval_s) {
  if (!(tick_s > 0)) throw ValidationError("build_plant: tick_s must be > 0");
  const double ratio = interval_s / tick_s;
  if (std::abs(ratio - std::round(ratio)) > 1e-9 || ratio < 1) {
    throw ValidationError("build_plant: tick_s=" + std::to_string(tick_s) +
                          " does not divide interval_s=" + std::to_string(interval_s));
  }

  SimPlant plant;
  plant.tick_s_ = tick_s;
  plant.interval_s_ = interval_s;
  plant.ticks_per_interval_ = static_cast<int>(std::lround(ratio));
  plant.backward_wave_kmh_ = network.backward_wave_kmh;

  for (const auto& spec : network.links) {
    const double cell_m = spec.free_speed_kmh / 3.6 * tick_s;
    if (cell_m > spec.length_m + 1e-9) {
      throw ValidationError("build_plant: tick too coarse for link '" + spec.id + "' (cell " +
                            std::to_string(cell_m) + " m > length " +
                            std::to_string(spec.length_m) + " m)");
    }
    SimPlant::Link link;
    link.id = spec.id;
    link.lanes = spec.lanes;
    link.free_speed_kmh = spec.free_speed_kmh;
    link.capacity_per_lane_vph = spec.capacity_per_lane_vph;
    link.jam_density_per_lane_vpkm = spec.jam_density_per_lane_vpkm;
    link.first_cell = static_cast<int>(plant.cells_.size());
    link.num_cells = std::max(1, static_cast<int>(std::floor(spec.length_m / cell_m + 1e-9)));
    const int li = static_cast<int>(plant.links_.size());
    for (int c = 0; c < link.num_cells; ++c) {
      SimPlant::Cell cell;
      cell.link = li;
      const bool last = c + 1 == link.num_cells;
      cell.length_km = (last ? spec.length_m - cell_m * (link.num_cells - 1) : cell_m) / 1000.0;
      cell.next = last ? -1 : link.first_cell + c + 1;
      plant.cells_.push_back(cell);
    }
    plant.links_.push_back(std::move(link));
  }

  for (const auto& sig : network.signals) {
    const auto cycle_ticks = static_cast<long long>(std::llround(sig.cycle_s / tick_s));
    if (cycle_ticks < 1) throw ValidationError("build_plant: signal '" + sig.node_id + "' cycle shorter than a tick");
    const auto offset = static_cast<long long>(std::llround(sig.offset_s / tick_s));
    // Every link that ends at the node is gated, green only in listed phases.
    for (auto& link : plant.links_) {
      const LinkSpec* spec = network.find_link(link.id);
      if (spec->to != sig.node_id) continue;
      link.green.assign(static_cast<std::size_t>(cycle_ticks), 0);
      link.offset_ticks = offset;
    }
    for (long long tau = 0; tau < cycle_ticks; ++tau) {
      const double t = (static_cast<double>(tau) + 0.5) * tick_s;
      double start = 0.0;
      for (const auto& phase : sig.phases) {
        if (t >= start && t < start + phase.duration_s) {
          for (const auto& g : phase.green_links) {
            plant.links_[plant.link_index(g)].green[static_cast<std::size_t>(tau)] = 1;
          }
          break;
        }
        start += phase.duration_s;
      }
    }
  }

  const int num_od = static_cast<int>(network.od_paths.size());
  plant.routes_.assign(num_od, std::vector<int>(plant.links_.size(), -1));
  plant.entry_link_.assign(num_od, -1);
  for (const auto& [od, path] : network.od_paths) {
    if (od < 0 || od >= num_od) throw ValidationError("build_plant: OD indices are not contiguous");
    std::vector<int> ids;
    for (const auto& lid : path) {
      const int li = plant.link_index(lid);
      if (li < 0) throw ValidationError("build_plant: unknown link '" + lid + "' in OD path");
      ids.push_back(li);
    }
    plant.entry_link_[od] = ids.front();
    for (std::size_t i = 0; i + 1 < ids.size(); ++i) plant.routes_[od][ids[i]] = ids[i + 1];
  }
  if (num_od > 65535) throw ValidationError("build_plant: too many OD pairs");

  for (const auto& d : detectors) {
    const int li = plant.link_index(d.link_id);
    if (li < 0) throw ValidationError("build_plant: detector '" + d.id + "' on unknown link '" + d.link_id + "'");
    const auto& link = plant.links_[li];
    const int offset = std::min(link.num_cells - 1,
                                static_cast<int>(std::floor(d.position * link.num_cells)));
    plant.detectors_.push_back({d.id, li, link.first_cell + offset});
  }
  return plant;
}

SimPlant build_plant(const ScenarioConfig& cfg) {
  return build_plant(cfg.network, cfg.detectors, cfg.tick_s, cfg.interval_s);
}

long long SimState::vehicles_in_network() const {
  long long n = 0;
  for (const auto& c : cells) n += static_cast<long long>(c.size());
  for (const auto& q : origin_queues) n += static_cast<long long>(q.size());
  return n;
}

double SimState::effective_lanes(const SimPlant& plant, int link) const {
  return static_cast<double>(plant.links()[link].lanes - lanes_closed[link]);
}

SimState initial_state(const SimPlant& plant) {
  SimState s;
  s.cells.resize(plant.cells().size());
  s.origin_queues.resize(plant.links().size());
  s.out_credit.assign(plant.cells().size(), 0.0);
  s.in_credit.assign(plant.cells().size(), 0.0);
  s.lanes_closed.assign(plant.links().size(), 0);
  s.det_count_sum.assign(plant.detectors().size(), 0);
  s.det_outflow.assign(plant.detectors().size(), 0);
  return s;
}

namespace {

void advance_tick(const SimPlant& plant, SimState& s, const DemandVector& demand, Rng& rng,
                  std::vector<long long>& send, std::vector<long long>& recv,
                  std::vector<long long>& moved_out, std::vector<double>& supply) {
  const auto& cells = plant.cells();
  const auto& links = plant.links();
  const double hours_per_tick = plant.tick_s() / 3600.0;

  for (int od = 0; od < plant.num_od(); ++od) {
    const double rate = demand[od] * hours_per_tick;
    if (!(rate > 0)) continue;
    std::poisson_distribution<long long> arrivals(rate);
    const long long k = arrivals(rng);
    auto& q = s.origin_queues[plant.entry_links()[od]];
    for (long long i = 0; i < k; ++i) q.push_back(static_cast<std::uint16_t>(od));
    s.entered += k;
  }

  // Budgets come from start-of-tick counts so vehicles move at most one cell.
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const auto& link = links[cells[c].link];
    const double lanes = s.effective_lanes(plant, cells[c].link);
    const double cap = link.capacity_per_lane_vph * lanes * hours_per_tick;
    const double storage = link.jam_density_per_lane_vpkm * lanes * cells[c].length_km;
    const auto n = static_cast<long long>(s.cells[c].size());

    const bool gated = cells[c].next < 0 && !plant.is_green(cells[c].link, s.elapsed_ticks);
    send[c] = gated ? 0 : std::min(n, static_cast<long long>(std::floor(s.out_credit[c] + cap)));
    // Fractional supply carries over in in_credit, like send capacity does;
    // flooring the wave term alone starves narrow cells forever.
    const double room = storage - static_cast<double>(n);
    supply[c] = std::max(0.0, std::min(cap, plant.backward_wave_ratio(cells[c].link) * room));
    const auto whole_room = static_cast<long long>(std::floor(room + 1e-9));
    recv[c] = std::max(0LL, std::min(whole_room, static_cast<long long>(std::floor(s.in_credit[c] + supply[c]))));
    moved_out[c] = 0;
  }

  std::vector<long long> received(cells.size(), 0);
  for (std::size_t c = 0; c < cells.size(); ++c) {
    auto& here = s.cells[c];
    if (cells[c].next >= 0) {
      const auto next = static_cast<std::size_t>(cells[c].next);
      const long long k = std::min(send[c], recv[next] - received[next]);
      for (long long i = 0; i < k; ++i) {
        s.cells[next].push_back(here.front());
        here.pop_front();
      }
      received[next] += k;
      moved_out[c] = k;
      continue;
    }
    // Link exit: a vehicle whose next link is full waits and holds one lane.
    // Vehicles behind it may pass while at least one lane is still free, so
    // one-lane links stay strictly FIFO.
    const int lanes = static_cast<int>(s.effective_lanes(plant, cells[c].link));
    long long k = 0;
    int blocked = 0;
    std::size_t pos = 0;
    while (k < send[c] && pos < here.size() && blocked < lanes) {
      const int od = here[pos];
      const int next_link = plant.next_link(od, cells[c].link);
      if (next_link >= 0) {
        const auto target = static_cast<std::size_t>(links[next_link].first_cell);
        if (received[target] >= recv[target]) {
          ++blocked;
          ++pos;
          continue;
        }
        s.cells[target].push_back(here[pos]);
        ++received[target];
      } else {
        ++s.exited;
      }
      here.erase(here.begin() + static_cast<std::ptrdiff_t>(pos));
      ++k;
    }
    moved_out[c] = k;
  }

  // Sources load last, behind any upstream link feeding the same cell.
  for (std::size_t li = 0; li < links.size(); ++li) {
    auto& q = s.origin_queues[li];
    if (q.empty()) continue;
    const auto target = static_cast<std::size_t>(links[li].first_cell);
    while (!q.empty() && received[target] < recv[target]) {
      s.cells[target].push_back(q.front());
      q.pop_front();
      ++received[target];
    }
  }

  for (std::size_t c = 0; c < cells.size(); ++c) {
    const auto& link = links[cells[c].link];
    const double cap = link.capacity_per_lane_vph * s.effective_lanes(plant, cells[c].link) * hours_per_tick;
    s.out_credit[c] = std::min(1.0, s.out_credit[c] + cap - static_cast<double>(moved_out[c]));
    s.in_credit[c] = std::min(1.0, s.in_credit[c] + supply[c] - static_cast<double>(received[c]));
    s.out_credit[c] = std::max(0.0, s.out_credit[c]);
    s.in_credit[c] = std::max(0.0, s.in_credit[c]);
  }

  const auto& dets = plant.detectors();
  for (std::size_t d = 0; d < dets.size(); ++d) {
    const auto& link = links[dets[d].link];
    for (int c = link.first_cell; c < link.first_cell + link.num_cells; ++c) {
      s.det_count_sum[d] += static_cast<long long>(s.cells[c].size());
    }
    s.det_outflow[d] += moved_out[dets[d].cell];
  }
  ++s.elapsed_ticks;
}

}  // namespace

MeasurementFrame step_interval(const SimPlant& plant, SimState& state, const DemandVector& demand,
                               int interval, Rng& rng) {
  require_same_size(demand.size(), plant.num_od(), "step_interval demand");
  const int ticks = plant.ticks_per_interval();
  std::vector<long long> send(plant.cells().size()), recv(plant.cells().size()),
      moved(plant.cells().size());
  std::vector<double> supply(plant.cells().size());
  std::fill(state.det_count_sum.begin(), state.det_count_sum.end(), 0);
  std::fill(state.det_outflow.begin(), state.det_outflow.end(), 0);
  for (int i = 0; i < ticks; ++i) advance_tick(plant, state, demand, rng, send, recv, moved, supply);

  const auto& dets = plant.detectors();
  const auto k = static_cast<Eigen::Index>(dets.size());
  MeasurementFrame f;
  f.interval = interval;
  f.density.resize(k);
  f.flow.resize(k);
  f.speed.resize(k);
  for (Eigen::Index d = 0; d < k; ++d) {
    const auto& det = dets[static_cast<std::size_t>(d)];
    const double len = plant.link_length_km(det.link);
    f.density[d] = static_cast<double>(state.det_count_sum[d]) / ticks / len;
    f.flow[d] = static_cast<double>(state.det_outflow[d]) * 3600.0 / plant.interval_s();
    f.speed[d] = f.density[d] > 0 ? f.flow[d] / f.density[d]
                                  : plant.links()[det.link].free_speed_kmh;
  }
  return f;
}

void apply_incident(const SimPlant& plant, SimState& state, const IncidentSpec& incident) {
  const int li = plant.link_index(incident.link_id);
  if (li < 0) throw ValidationError("incident on unknown link '" + incident.link_id + "'");
  const int lanes = plant.links()[li].lanes;
  if (incident.lanes_closed < 0 || state.lanes_closed[li] + incident.lanes_closed >= lanes) {
    throw ValidationError("incident on '" + incident.link_id + "' closes " +
                          std::to_string(incident.lanes_closed) + " of " + std::to_string(lanes) +
                          " lanes (at least one must stay open)");
  }
  state.lanes_closed[li] += incident.lanes_closed;
}

void clear_incident(const SimPlant& plant, SimState& state, const IncidentSpec& incident) {
  const int li = plant.link_index(incident.link_id);
  if (li < 0) throw ValidationError("incident on unknown link '" + incident.link_id + "'");
  state.lanes_closed[li] = std::max(0, state.lanes_closed[li] - incident.lanes_closed);
}

void update_incidents(const SimPlant& plant, SimState& state,
                      const std::vector<IncidentSpec>& incidents, int interval) {
  for (const auto& inc : incidents) {
    if (inc.end_interval + 1 == interval) clear_incident(plant, state, inc);
  }
  for (const auto& inc : incidents) {
    if (inc.start_interval == interval) apply_incident(plant, state, inc);
  }
}

DemandSource sampled_demand(const DemandProfile& profile) {
  return [profile](int interval, Rng& rng) { return sample_true_demand(profile, interval, rng); };
}

DemandSource apriori_source(const DemandProfile& profile) {
  return [profile](int interval, Rng&) { return apriori_demand(profile, interval); };
}

MeasurementSeries run_day(const SimPlant& plant, const DemandSource& demand_source,
                          const std::vector<IncidentSpec>& incidents, int horizon,
                          std::uint64_t seed) {
  Rng demand_rng(derive_seed(seed, 1));
  Rng arrival_rng(derive_seed(seed, 2));
  SimState state = initial_state(plant);
  MeasurementSeries series;
  for (const auto& d : plant.detectors()) series.detector_ids.push_back(d.id);
  series.frames.reserve(static_cast<std::size_t>(horizon));
  for (int t = 0; t < horizon; ++t) {
    update_incidents(plant, state, incidents, t);
    DemandVector demand = demand_source(t, demand_rng);
    series.frames.push_back(step_interval(plant, state, demand, t, arrival_rng));
    series.true_demand.push_back(std::move(demand));
  }
  return series;
}

}  // namespace odcal
