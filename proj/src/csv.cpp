#include "odcal/csv.hpp"

#include <array>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace odcal {

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  std::string s(buf);
  if (s == "-0.000000") s = "0.000000";
  return s;
}

int CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int>(i);
  }
  return -1;
}

namespace {

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double cell_double(const std::string& s, const std::filesystem::path& path) {
  try {
    return std::stod(s);
  } catch (const std::logic_error&) {
    throw ParseError(path.string() + ": bad number '" + s + "'");
  }
}

}  // namespace

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path.string() + ": empty file");
  t.header = split_row(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto row = split_row(line);
    if (row.size() != t.header.size()) throw ParseError(path.string() + ": ragged row");
    t.rows.push_back(std::move(row));
  }
  return t;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_series_csv(const std::filesystem::path& path, const MeasurementSeries& series) {
  std::ostringstream out;
  out << "interval,detector_id,density_vpkm,flow_vph,speed_kmh\n";
  for (const auto& f : series.frames) {
    for (Eigen::Index d = 0; d < f.density.size(); ++d) {
      out << f.interval << ',' << series.detector_ids[static_cast<std::size_t>(d)] << ','
          << fmt6(f.density[d]) << ',' << fmt6(f.flow[d]) << ',' << fmt6(f.speed[d]) << '\n';
    }
  }
  write_text(path, out.str());
}

void write_demand_csv(const std::filesystem::path& path, const std::vector<DemandVector>& demand,
                      const std::vector<std::string>& od_names) {
  std::ostringstream out;
  out << "interval";
  for (const auto& n : od_names) out << ',' << n;
  out << '\n';
  for (std::size_t t = 0; t < demand.size(); ++t) {
    out << t;
    for (Eigen::Index l = 0; l < demand[t].size(); ++l) out << ',' << fmt6(demand[t][l]);
    out << '\n';
  }
  write_text(path, out.str());
}

MeasurementSeries read_series(const std::filesystem::path& measurements,
                              const std::filesystem::path& demand) {
  const CsvTable m = read_csv(measurements);
  const int c_int = m.column("interval"), c_det = m.column("detector_id"),
            c_k = m.column("density_vpkm"), c_q = m.column("flow_vph"), c_v = m.column("speed_kmh");
  if (c_int < 0 || c_det < 0 || c_k < 0 || c_q < 0 || c_v < 0) {
    throw ParseError(measurements.string() + ": missing measurement columns");
  }
  MeasurementSeries s;
  std::map<std::string, int> det_index;
  std::map<int, std::vector<std::array<double, 3>>> by_interval;
  for (const auto& row : m.rows) {
    const std::string& det = row[c_det];
    if (!det_index.count(det)) {
      det_index[det] = static_cast<int>(s.detector_ids.size());
      s.detector_ids.push_back(det);
    }
    const int t = static_cast<int>(cell_double(row[c_int], measurements));
    by_interval[t].push_back({cell_double(row[c_k], measurements), cell_double(row[c_q], measurements),
                              cell_double(row[c_v], measurements)});
  }
  const auto k = static_cast<Eigen::Index>(s.detector_ids.size());
  int expected = 0;
  for (const auto& [t, vals] : by_interval) {
    if (t != expected++) throw ParseError(measurements.string() + ": intervals are not contiguous from 0");
    if (static_cast<Eigen::Index>(vals.size()) != k) throw ParseError(measurements.string() + ": missing detector rows");
    MeasurementFrame f;
    f.interval = t;
    f.density.resize(k);
    f.flow.resize(k);
    f.speed.resize(k);
    for (Eigen::Index d = 0; d < k; ++d) {
      f.density[d] = vals[static_cast<std::size_t>(d)][0];
      f.flow[d] = vals[static_cast<std::size_t>(d)][1];
      f.speed[d] = vals[static_cast<std::size_t>(d)][2];
    }
    s.frames.push_back(std::move(f));
  }

  const CsvTable dm = read_csv(demand);
  for (const auto& row : dm.rows) {
    DemandVector v(static_cast<Eigen::Index>(row.size()) - 1);
    for (std::size_t i = 1; i < row.size(); ++i) v[static_cast<Eigen::Index>(i) - 1] = cell_double(row[i], demand);
    s.true_demand.push_back(std::move(v));
  }
  if (s.true_demand.size() != s.frames.size()) {
    throw ParseError(demand.string() + ": demand rows do not match measurement intervals");
  }
  return s;
}

void write_runlog_csv(const std::filesystem::path& path, const RunLog& log,
                      const std::vector<std::string>& od_names) {
  std::ostringstream out;
  out << "interval,L_f,L_d,total";
  for (const auto& d : log.detector_ids) out << ",f_obs_" << d;
  for (const auto& d : log.detector_ids) out << ",f_sim_" << d;
  for (const auto& n : od_names) out << ",D_pred_" << n;
  for (const auto& n : od_names) out << ",D_true_" << n;
  out << '\n';
  for (const auto& r : log.records) {
    out << r.interval << ',' << fmt6(r.loss_f) << ',' << fmt6(r.loss_d) << ',' << fmt6(r.total);
    for (Eigen::Index d = 0; d < r.observed.size(); ++d) out << ',' << fmt6(r.observed[d]);
    for (Eigen::Index d = 0; d < r.simulated.size(); ++d) out << ',' << fmt6(r.simulated[d]);
    for (Eigen::Index l = 0; l < r.predicted.size(); ++l) out << ',' << fmt6(r.predicted[l]);
    for (Eigen::Index l = 0; l < r.predicted.size(); ++l) {
      out << ',' << (r.true_demand.size() > l ? fmt6(r.true_demand[l]) : std::string());
    }
    out << '\n';
  }
  write_text(path, out.str());
}

void write_trace_csv(const std::filesystem::path& path, const RunLog& log) {
  std::ostringstream out;
  out << "interval";
  for (auto idx : log.trace_indices) out << ",p" << idx;
  out << '\n';
  for (const auto& r : log.records) {
    out << r.interval;
    for (Eigen::Index i = 0; i < r.trace.size(); ++i) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.9f", r.trace[i]);
      out << ',' << buf;
    }
    out << '\n';
  }
  write_text(path, out.str());
}

}  // namespace odcal
