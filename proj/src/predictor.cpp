#include "odcal/predictor.hpp"

#include <algorithm>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

namespace odcal {

Normalizer fit_normalizer(const std::vector<MeasurementFrame>& frames) {
  if (frames.empty()) throw ValidationError("fit_normalizer: no frames");
  const Eigen::Index k = frames.front().flow.size();
  Normalizer n;
  n.min = VectorXd::Constant(2 * k, std::numeric_limits<double>::infinity());
  n.max = VectorXd::Constant(2 * k, -std::numeric_limits<double>::infinity());
  for (const auto& f : frames) {
    require_same_size(f.flow.size(), k, "fit_normalizer detector count");
    VectorXd raw(2 * k);
    raw << f.flow, f.speed;
    n.min = n.min.cwiseMin(raw);
    n.max = n.max.cwiseMax(raw);
  }
  return n;
}

int FeatureEncoder::time_slot(int interval) const {
  if (interval < 0 || interval >= horizon) {
    throw std::out_of_range("encode: interval " + std::to_string(interval) + " outside horizon");
  }
  return static_cast<int>(static_cast<long long>(interval) * time_bins / horizon);
}

VectorXd FeatureEncoder::encode(int interval, const MeasurementFrame& frame) const {
  const Eigen::Index k = normalizer.size() / 2;
  if (frame.flow.size() != k || frame.speed.size() != k) {
    throw DimensionError("encode: frame has " + std::to_string(frame.flow.size()) +
                         " detectors, normalizer covers " + std::to_string(k));
  }
  VectorXd x = VectorXd::Zero(size());
  x[time_slot(interval)] = 1.0;
  VectorXd raw(2 * k);
  raw << frame.flow, frame.speed;
  for (Eigen::Index i = 0; i < raw.size(); ++i) {
    const double span = normalizer.max[i] - normalizer.min[i];
    const double v = span > 0 ? (raw[i] - normalizer.min[i]) / span : 0.0;
    x[time_bins + i] = std::clamp(v, 0.0, 1.0);
  }
  return x;
}

int FeatureEncoder::decode_time(const VectorXd& features, int time_bins) {
  Eigen::Index idx = 0;
  features.head(time_bins).maxCoeff(&idx);
  return static_cast<int>(idx);
}

VectorXd encode_input(int interval, const MeasurementFrame& frame, const FeatureEncoder& encoder) {
  return encoder.encode(interval, frame);
}

namespace {

void expect(std::istream& in, const std::string& word) {
  std::string got;
  if (!(in >> got) || got != word) {
    throw ParseError("snapshot: expected '" + word + "', got '" + got + "'");
  }
}

template <typename T>
T read_value(std::istream& in, const char* what) {
  T v{};
  if (!(in >> v)) throw ParseError(std::string("snapshot: could not read ") + what);
  return v;
}

}  // namespace

void write_params(std::ostream& out, const PredictorParams& p) {
  out << std::setprecision(17);
  out << "odcal-mlp 1\n";
  out << "output_scale " << p.output_scale << "\n";
  out << "layers " << p.num_layers() << "\n";
  for (int l = 0; l < p.num_layers(); ++l) {
    const auto& w = p.weights[l];
    out << "weights " << w.rows() << " " << w.cols() << "\n";
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) out << (c ? " " : "") << w(r, c);
      out << "\n";
    }
    out << "bias " << p.biases[l].size() << "\n";
    for (Eigen::Index i = 0; i < p.biases[l].size(); ++i) out << (i ? " " : "") << p.biases[l][i];
    out << "\n";
  }
}

PredictorParams read_params(std::istream& in) {
  expect(in, "odcal-mlp");
  if (read_value<int>(in, "version") != 1) throw ParseError("snapshot: unsupported version");
  PredictorParams p;
  expect(in, "output_scale");
  p.output_scale = read_value<double>(in, "output_scale");
  expect(in, "layers");
  const int layers = read_value<int>(in, "layer count");
  if (layers < 1) throw ParseError("snapshot: no layers");
  for (int l = 0; l < layers; ++l) {
    expect(in, "weights");
    const auto rows = read_value<Eigen::Index>(in, "rows");
    const auto cols = read_value<Eigen::Index>(in, "cols");
    if (rows < 1 || cols < 1) throw ParseError("snapshot: bad layer shape");
    if (l > 0 && cols != p.weights.back().rows()) throw ParseError("snapshot: layer shapes do not chain");
    MatrixXd w(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) w(r, c) = read_value<double>(in, "weight");
    }
    expect(in, "bias");
    if (read_value<Eigen::Index>(in, "bias size") != rows) throw ParseError("snapshot: bias size mismatch");
    VectorXd b(rows);
    for (Eigen::Index i = 0; i < rows; ++i) b[i] = read_value<double>(in, "bias");
    p.weights.push_back(std::move(w));
    p.biases.push_back(std::move(b));
  }
  if (!p.all_finite()) throw ParseError("snapshot: non-finite parameter");
  return p;
}

void write_normalizer(std::ostream& out, const Normalizer& n) {
  out << std::setprecision(17) << "feature,min,max\n";
  const Eigen::Index k = n.size() / 2;
  for (Eigen::Index i = 0; i < n.size(); ++i) {
    out << (i < k ? "flow_" : "speed_") << (i < k ? i : i - k) << "," << n.min[i] << "," << n.max[i] << "\n";
  }
}

Normalizer read_normalizer(std::istream& in) {
  std::string line;
  std::getline(in, line);
  if (line.rfind("feature,min,max", 0) != 0) throw ParseError("normalizer: bad header");
  std::vector<double> mins, maxs;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string name, lo, hi;
    std::getline(row, name, ',');
    std::getline(row, lo, ',');
    std::getline(row, hi, ',');
    try {
      mins.push_back(std::stod(lo));
      maxs.push_back(std::stod(hi));
    } catch (const std::logic_error&) {
      throw ParseError("normalizer: bad row '" + line + "'");
    }
    if (maxs.back() < mins.back()) throw ParseError("normalizer: max < min for " + name);
  }
  Normalizer n;
  n.min = Eigen::Map<VectorXd>(mins.data(), static_cast<Eigen::Index>(mins.size()));
  n.max = Eigen::Map<VectorXd>(maxs.data(), static_cast<Eigen::Index>(maxs.size()));
  return n;
}

}  // namespace odcal
