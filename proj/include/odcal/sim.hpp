#ifndef ODCAL_SIM_HPP
#define ODCAL_SIM_HPP

#include "odcal/scenario.hpp"

#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <vector>

namespace odcal {

/// Aggregated detector readings for one measurement interval. Vectors are
/// indexed by detector in scenario order.
struct MeasurementFrame {
  int interval = 0;
  VectorXd density;  // veh/km, all lanes
  VectorXd flow;     // veh/h, all lanes
  VectorXd speed;    // km/h
};

/// A simulated (or recorded) day: one frame and one realized demand vector
/// per interval.
struct MeasurementSeries {
  std::vector<std::string> detector_ids;
  std::vector<MeasurementFrame> frames;
  std::vector<DemandVector> true_demand;

  int horizon() const { return static_cast<int>(frames.size()); }
  /// [interval x detector] density matrix.
  MatrixXd density_matrix() const;
};

/// Immutable, compiled cell-transmission network. One plant can back any
/// number of independent SimStates (truth twin, simulated twin, replications).
class SimPlant {
 public:
  struct Cell {
    int link = 0;
    double length_km = 0.0;
    /// Next cell of the same link, or -1 for the link's last cell.
    int next = -1;
  };
  struct Link {
    std::string id;
    int first_cell = 0;
    int num_cells = 0;
    int lanes = 1;
    double free_speed_kmh = 0.0;
    double capacity_per_lane_vph = 0.0;
    double jam_density_per_lane_vpkm = 0.0;
    /// Green mask over one signal cycle in ticks; empty means never gated.
    std::vector<char> green;
    long long offset_ticks = 0;
  };
  /// Density is the link-wide average; flow is counted leaving `cell`.
  struct Detector {
    std::string id;
    int link = 0;
    int cell = 0;
  };

  const std::vector<Cell>& cells() const { return cells_; }
  const std::vector<Link>& links() const { return links_; }
  const std::vector<Detector>& detectors() const { return detectors_; }
  /// Link index of the first link on each OD path.
  const std::vector<int>& entry_links() const { return entry_link_; }
  int num_od() const { return static_cast<int>(routes_.size()); }
  int num_sources() const;
  int num_sinks() const;
  double tick_s() const { return tick_s_; }
  double interval_s() const { return interval_s_; }
  int ticks_per_interval() const { return ticks_per_interval_; }
  double backward_wave_ratio(int link) const;

  /// Next link index for a vehicle of OD pair `od` leaving `link`; -1 = sink.
  int next_link(int od, int link) const { return routes_[od][link]; }
  bool is_green(int link, long long tick) const;
  int link_index(const std::string& id) const;
  double link_length_km(int link) const;

 private:
  friend SimPlant build_plant(const NetworkSpec&, const std::vector<DetectorSpec>&,
                              double, double);
  std::vector<Cell> cells_;
  std::vector<Link> links_;
  std::vector<Detector> detectors_;
  std::vector<std::vector<int>> routes_;  // [od][link] -> next link
  std::vector<int> entry_link_;
  double tick_s_ = 1.0;
  double interval_s_ = 300.0;
  int ticks_per_interval_ = 300;
  double backward_wave_kmh_ = 20.0;
};

/// Discretizes every link into cells of length free_speed * tick (the last
/// cell absorbs the remainder) and compiles signal plans into per-tick gates.
/// Throws ValidationError if tick_s does not divide interval_s or a link is
/// shorter than one cell.
SimPlant build_plant(const NetworkSpec& network, const std::vector<DetectorSpec>& detectors,
                     double tick_s, double interval_s);
SimPlant build_plant(const ScenarioConfig& cfg);

/// Mutable traffic state. Vehicles are integer and carry their OD index, so
/// conservation is exact.
struct SimState {
  std::vector<std::deque<std::uint16_t>> cells;
  /// Vertical queues at path entries, indexed by link.
  std::vector<std::deque<std::uint16_t>> origin_queues;
  std::vector<double> out_credit;
  std::vector<double> in_credit;
  /// Lanes closed per link by active incidents.
  std::vector<int> lanes_closed;
  long long elapsed_ticks = 0;
  long long entered = 0;
  long long exited = 0;
  std::vector<long long> det_count_sum;
  std::vector<long long> det_outflow;

  long long vehicles_in_network() const;
  double effective_lanes(const SimPlant& plant, int link) const;
};

SimState initial_state(const SimPlant& plant);

/// Advances one measurement interval under the given OD demand (veh/h) with
/// Poisson arrivals at path entries, and returns the interval's detector frame.
MeasurementFrame step_interval(const SimPlant& plant, SimState& state,
                               const DemandVector& demand, int interval, Rng& rng);

/// Closes lanes on the incident link; capacity and storage of its cells scale
/// by (lanes - closed) / lanes.
void apply_incident(const SimPlant& plant, SimState& state, const IncidentSpec& incident);
void clear_incident(const SimPlant& plant, SimState& state, const IncidentSpec& incident);

/// Per-interval demand generator used by run_day.
using DemandSource = std::function<DemandVector(int interval, Rng& rng)>;

DemandSource sampled_demand(const DemandProfile& profile);
DemandSource apriori_source(const DemandProfile& profile);

/// Runs a full horizon from an empty network. Demand sampling and vehicle
/// arrivals use separate streams derived from seed.
MeasurementSeries run_day(const SimPlant& plant, const DemandSource& demand_source,
                          const std::vector<IncidentSpec>& incidents, int horizon,
                          std::uint64_t seed);

/// Starts or ends every incident whose window opens or closes at `interval`.
void update_incidents(const SimPlant& plant, SimState& state,
                      const std::vector<IncidentSpec>& incidents, int interval);

}  // namespace odcal

#endif  // ODCAL_SIM_HPP
