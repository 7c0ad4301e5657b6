#ifndef ODCAL_CSV_HPP
#define ODCAL_CSV_HPP

#include "odcal/calib.hpp"
#include "odcal/sim.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace odcal {

/// Fixed 6-decimal rendering used by every CSV writer.
std::string fmt6(double v);

/// Rows of comma-separated cells with a header.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;
};

CsvTable read_csv(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

/// interval,detector_id,density_vpkm,flow_vph,speed_kmh; one row per detector-interval.
void write_series_csv(const std::filesystem::path& path, const MeasurementSeries& series);
/// interval, then one column per OD pair.
void write_demand_csv(const std::filesystem::path& path, const std::vector<DemandVector>& demand,
                      const std::vector<std::string>& od_names);
/// Inverse of the two writers above.
MeasurementSeries read_series(const std::filesystem::path& measurements,
                              const std::filesystem::path& demand);

/// interval, L_f, L_d, total, f_obs_<det>..., f_sim_<det>..., D_pred_<od>..., D_true_<od>...
void write_runlog_csv(const std::filesystem::path& path, const RunLog& log,
                      const std::vector<std::string>& od_names);
/// interval, p<flat index>...
void write_trace_csv(const std::filesystem::path& path, const RunLog& log);

}  // namespace odcal

#endif  // ODCAL_CSV_HPP
