#include "odcal/metamodel.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

namespace odcal {

double fit_c(const Metamodel& params_without_c, const std::vector<DensityObservation>& dataset) {
  if (dataset.empty()) throw ValidationError("fit_c: empty dataset");
  double num = 0.0;
  double den = 0.0;
  for (const auto& obs : dataset) {
    const VectorXd s = structural_density(params_without_c, obs.demand);
    require_same_size(obs.density.size(), s.size(), "fit_c observed density");
    num += s.dot(obs.density);
    den += s.squaredNorm();
  }
  if (!(den > 0)) throw ValidationError("fit_c: all structural terms are zero, c is undefined");
  return num / den;
}

Metamodel metamodel_from_scenario(const ScenarioConfig& cfg, double c) {
  const auto k = static_cast<Eigen::Index>(cfg.detectors.size());
  const auto n = static_cast<Eigen::Index>(cfg.od_pairs.size());
  Metamodel m;
  m.c = c;
  m.jam_density.resize(k);
  m.capacity.resize(k);
  m.lanes.resize(k);
  m.incidence = Metamodel::BoolMatrix::Constant(k, n, false);
  for (Eigen::Index d = 0; d < k; ++d) {
    const auto& det = cfg.detectors[static_cast<std::size_t>(d)];
    const LinkSpec* link = cfg.network.find_link(det.link_id);
    if (!link) throw ValidationError("metamodel: detector '" + det.id + "' on unknown link");
    m.jam_density[d] = link->jam_density_per_lane_vpkm;
    m.capacity[d] = link->capacity_per_lane_vph;
    m.lanes[d] = link->lanes;
    for (const auto& [od, path] : cfg.network.od_paths) {
      m.incidence(d, od) = std::find(path.begin(), path.end(), det.link_id) != path.end();
    }
  }
  return m;
}

std::string metamodel_to_json(const Metamodel& m) {
  nlohmann::ordered_json j;
  j["c"] = m.c;
  auto vec = [](const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  j["jam_density_per_lane_vpkm"] = vec(m.jam_density);
  j["capacity_per_lane_vph"] = vec(m.capacity);
  j["lanes"] = vec(m.lanes);
  std::vector<std::vector<int>> inc;
  for (Eigen::Index r = 0; r < m.incidence.rows(); ++r) {
    std::vector<int> row;
    for (Eigen::Index c = 0; c < m.incidence.cols(); ++c) row.push_back(m.incidence(r, c) ? 1 : 0);
    inc.push_back(std::move(row));
  }
  j["incidence"] = inc;
  return j.dump(2);
}

Metamodel metamodel_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("metamodel json: ") + e.what());
  }
  auto vec = [&](const char* key) {
    const auto v = j.at(key).get<std::vector<double>>();
    return VectorXd(Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
  };
  Metamodel m;
  try {
    m.c = j.at("c").get<double>();
    m.jam_density = vec("jam_density_per_lane_vpkm");
    m.capacity = vec("capacity_per_lane_vph");
    m.lanes = vec("lanes");
    const auto inc = j.at("incidence").get<std::vector<std::vector<int>>>();
    const auto rows = static_cast<Eigen::Index>(inc.size());
    const auto cols = rows ? static_cast<Eigen::Index>(inc.front().size()) : 0;
    m.incidence.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      if (static_cast<Eigen::Index>(inc[r].size()) != cols) throw ParseError("metamodel json: ragged incidence");
      for (Eigen::Index c = 0; c < cols; ++c) m.incidence(r, c) = inc[r][c] != 0;
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("metamodel json: ") + e.what());
  }
  if (m.jam_density.size() != m.incidence.rows() || m.capacity.size() != m.incidence.rows() ||
      m.lanes.size() != m.incidence.rows()) {
    throw ParseError("metamodel json: per-detector arrays disagree with incidence rows");
  }
  return m;
}

}  // namespace odcal
