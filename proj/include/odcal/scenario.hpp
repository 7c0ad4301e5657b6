#ifndef ODCAL_SCENARIO_HPP
#define ODCAL_SCENARIO_HPP

#include "odcal/types.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace odcal {

using Rng = std::mt19937_64;

/// Mixes a base seed with a stream id (splitmix64) so that sibling streams
/// derived from one run seed are decorrelated.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

struct LinkSpec {
  std::string id;
  std::string from;
  std::string to;
  double length_m = 0.0;
  int lanes = 1;
  double free_speed_kmh = 50.0;
  double capacity_per_lane_vph = 1800.0;
  double jam_density_per_lane_vpkm = 150.0;
};

struct NodeSpec {
  std::string id;
};

struct PhaseSpec {
  std::vector<std::string> green_links;
  double duration_s = 0.0;
};

struct SignalSpec {
  std::string node_id;
  double cycle_s = 0.0;
  double offset_s = 0.0;
  std::vector<PhaseSpec> phases;
};

struct ODPair {
  std::string origin;
  std::string destination;
  int index = 0;
};

struct DetectorSpec {
  std::string id;
  std::string link_id;
  /// Position along the link as a fraction of its length, in [0, 1).
  double position = 0.5;
};

struct NetworkSpec {
  std::vector<LinkSpec> links;
  std::vector<NodeSpec> nodes;
  std::vector<SignalSpec> signals;
  /// Ordered link ids per OD pair, keyed by ODPair::index.
  std::map<int, std::vector<std::string>> od_paths;
  double backward_wave_kmh = 20.0;

  const LinkSpec* find_link(const std::string& id) const;
  int link_index(const std::string& id) const;
  bool has_node(const std::string& id) const;
};

struct DemandProfile {
  /// [interval x OD pair], veh/h.
  MatrixXd mean;
  double cv = 0.10;
};

struct IncidentSpec {
  std::string link_id;
  int start_interval = 0;
  /// Inclusive.
  int end_interval = 0;
  int lanes_closed = 0;
};

struct HyperParams {
  double delta = 0.001;
  double learning_rate = 1.0;
  int hidden_layers = 2;
  int hidden_nodes = 48;
  int online_steps_per_interval = 1;
  double demand_clip_max = 3000.0;
  /// Fixed multiplier on the predictor's linear head (veh/h per output unit).
  double demand_scale_vph = 1.0;
  /// One-hot time slots; 0 means one slot per interval.
  int time_bins = 0;
  int pretrain_epochs = 50;
  /// Number of predictor weights sampled into parameter traces.
  int trace_params = 6;
};

struct ScenarioConfig {
  std::string name;
  NetworkSpec network;
  std::vector<ODPair> od_pairs;
  DemandProfile demand_profile;
  std::vector<IncidentSpec> incidents;
  std::vector<DetectorSpec> detectors;
  int horizon = 0;
  double interval_s = 300.0;
  double tick_s = 1.0;
  HyperParams hyper;
  std::uint64_t seed = 0;

  int num_od() const { return static_cast<int>(od_pairs.size()); }
  int num_detectors() const { return static_cast<int>(detectors.size()); }
  int time_bins() const { return hyper.time_bins > 0 ? hyper.time_bins : horizon; }
};

/// Parses scenario text. Relative file references resolve against base_dir.
ScenarioConfig parse_scenario(const std::string& text,
                              const std::filesystem::path& base_dir = {});

ScenarioConfig load_scenario(const std::filesystem::path& path);

/// Throws ValidationError naming the offending field.
void validate(const ScenarioConfig& cfg);

/// Copy of cfg with the incident list emptied (typical-day variant).
ScenarioConfig without_incidents(const ScenarioConfig& cfg);

/// Normal(mean, cv*mean) per OD pair, truncated at zero.
DemandVector sample_true_demand(const DemandProfile& profile, int interval, Rng& rng);

/// The mean row for the interval (a priori demand).
DemandVector apriori_demand(const DemandProfile& profile, int interval);

/// Stable 64-bit FNV-1a hash used in run manifests.
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace odcal

#endif  // ODCAL_SCENARIO_HPP
