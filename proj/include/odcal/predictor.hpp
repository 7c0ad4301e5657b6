#ifndef ODCAL_PREDICTOR_HPP
#define ODCAL_PREDICTOR_HPP

#include "odcal/sim.hpp"

#include <cmath>
#include <iosfwd>
#include <random>
#include <utility>
#include <vector>

namespace odcal {

/// Fully connected net: tanh hidden layers, linear head scaled by a fixed
/// output_scale. Layer l maps sizes[l] -> sizes[l+1]; weights are [out x in].
template <typename Scalar>
struct MlpParams {
  std::vector<Mat<Scalar>> weights;
  std::vector<Vec<Scalar>> biases;
  Scalar output_scale = Scalar(1);

  int num_layers() const { return static_cast<int>(weights.size()); }
  Eigen::Index input_size() const { return weights.front().cols(); }
  Eigen::Index output_size() const { return weights.back().rows(); }

  std::vector<int> sizes() const {
    std::vector<int> s{static_cast<int>(input_size())};
    for (const auto& w : weights) s.push_back(static_cast<int>(w.rows()));
    return s;
  }

  Eigen::Index num_params() const {
    Eigen::Index n = 0;
    for (int l = 0; l < num_layers(); ++l) n += weights[l].size() + biases[l].size();
    return n;
  }

  bool all_finite() const {
    for (int l = 0; l < num_layers(); ++l) {
      if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
    }
    return true;
  }

  bool same_shape(const MlpParams& o) const {
    if (o.num_layers() != num_layers()) return false;
    for (int l = 0; l < num_layers(); ++l) {
      if (o.weights[l].rows() != weights[l].rows() || o.weights[l].cols() != weights[l].cols() ||
          o.biases[l].size() != biases[l].size()) {
        return false;
      }
    }
    return true;
  }

  /// Zero-filled params of the same shape (used as a gradient accumulator).
  MlpParams zeros_like() const {
    MlpParams z;
    z.output_scale = output_scale;
    for (int l = 0; l < num_layers(); ++l) {
      z.weights.push_back(Mat<Scalar>::Zero(weights[l].rows(), weights[l].cols()));
      z.biases.push_back(Vec<Scalar>::Zero(biases[l].size()));
    }
    return z;
  }

  /// Layer by layer: weights row-major, then biases.
  Vec<Scalar> flatten() const {
    Vec<Scalar> out(num_params());
    Eigen::Index i = 0;
    for (int l = 0; l < num_layers(); ++l) {
      for (Eigen::Index r = 0; r < weights[l].rows(); ++r) {
        for (Eigen::Index c = 0; c < weights[l].cols(); ++c) out[i++] = weights[l](r, c);
      }
      out.segment(i, biases[l].size()) = biases[l];
      i += biases[l].size();
    }
    return out;
  }

  void assign_flat(const Vec<Scalar>& flat) {
    require_same_size(flat.size(), num_params(), "MlpParams::assign_flat");
    Eigen::Index i = 0;
    for (int l = 0; l < num_layers(); ++l) {
      for (Eigen::Index r = 0; r < weights[l].rows(); ++r) {
        for (Eigen::Index c = 0; c < weights[l].cols(); ++c) weights[l](r, c) = flat[i++];
      }
      biases[l] = flat.segment(i, biases[l].size());
      i += biases[l].size();
    }
  }
};

/// Gradients share the parameter layout.
template <typename Scalar>
using GradientSet = MlpParams<Scalar>;

using PredictorParams = MlpParams<double>;

/// Activations kept by forward(): inputs[l] is the input to layer l.
template <typename Scalar>
struct Tape {
  std::vector<Vec<Scalar>> inputs;
};

/// Glorot-uniform weights, zero biases.
template <typename Scalar = double>
MlpParams<Scalar> init_params(const std::vector<int>& sizes, std::uint64_t seed,
                              Scalar output_scale = Scalar(1)) {
  if (sizes.size() < 2) throw DimensionError("init_params: need at least input and output sizes");
  for (int s : sizes) {
    if (s < 1) throw DimensionError("init_params: layer sizes must be >= 1");
  }
  std::mt19937_64 rng(seed);
  MlpParams<Scalar> p;
  p.output_scale = output_scale;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const int fan_in = sizes[l];
    const int fan_out = sizes[l + 1];
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> u(-limit, limit);
    Mat<Scalar> w(fan_out, fan_in);
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = Scalar(u(rng));
    }
    p.weights.push_back(std::move(w));
    p.biases.push_back(Vec<Scalar>::Zero(fan_out));
  }
  return p;
}

template <typename Scalar, typename Derived>
std::pair<Vec<Scalar>, Tape<Scalar>> forward(const MlpParams<Scalar>& p,
                                             const Eigen::MatrixBase<Derived>& x) {
  require_same_size(x.size(), p.input_size(), "forward input");
  Tape<Scalar> tape;
  Vec<Scalar> a = x;
  const int last = p.num_layers() - 1;
  for (int l = 0; l < last; ++l) {
    tape.inputs.push_back(a);
    a = (p.weights[l] * a + p.biases[l]).array().tanh().matrix();
  }
  tape.inputs.push_back(a);
  Vec<Scalar> out = p.output_scale * (p.weights[last] * a + p.biases[last]);
  return {std::move(out), std::move(tape)};
}

/// Reverse pass for a given dL/d(output).
template <typename Scalar, typename Derived>
GradientSet<Scalar> backward(const MlpParams<Scalar>& p, const Tape<Scalar>& tape,
                             const Eigen::MatrixBase<Derived>& grad_output) {
  if (static_cast<int>(tape.inputs.size()) != p.num_layers()) {
    throw DimensionError("backward: tape does not match the parameter layout");
  }
  require_same_size(grad_output.size(), p.output_size(), "backward grad_output");
  GradientSet<Scalar> g = p.zeros_like();
  Vec<Scalar> delta = p.output_scale * grad_output;
  for (int l = p.num_layers() - 1; l >= 0; --l) {
    const Vec<Scalar>& in = tape.inputs[l];
    require_same_size(in.size(), p.weights[l].cols(), "backward tape entry");
    g.weights[l].noalias() = delta * in.transpose();
    g.biases[l] = delta;
    if (l > 0) {
      // in = tanh(z) for every hidden layer, so tanh'(z) = 1 - in^2.
      delta = (p.weights[l].transpose() * delta).cwiseProduct(
          (Scalar(1) - in.array().square()).matrix());
    }
  }
  return g;
}

/// theta <- theta - lr * grad. Throws NonFiniteError (params untouched) if any
/// gradient entry is NaN or infinite.
template <typename Scalar>
MlpParams<Scalar> sgd_step(const MlpParams<Scalar>& p, const GradientSet<Scalar>& g, Scalar lr) {
  if (!p.same_shape(g)) throw DimensionError("sgd_step: gradient shape mismatch");
  if (!g.all_finite()) throw NonFiniteError("sgd_step: non-finite gradient entry, update rejected");
  MlpParams<Scalar> out = p;
  for (int l = 0; l < p.num_layers(); ++l) {
    out.weights[l] -= lr * g.weights[l];
    out.biases[l] -= lr * g.biases[l];
  }
  return out;
}

/// Clamp to [0, max_vph]. Gradients pass through unchanged (straight-through).
template <typename Derived>
DemandVector clip_demand(const Eigen::MatrixBase<Derived>& raw, double max_vph) {
  return raw.cwiseMax(0.0).cwiseMin(max_vph);
}

/// Min/max per raw measurement feature: flow per detector, then speed per detector.
struct Normalizer {
  VectorXd min;
  VectorXd max;

  Eigen::Index size() const { return min.size(); }
};

Normalizer fit_normalizer(const std::vector<MeasurementFrame>& frames);

/// Maps (interval, measurements) onto the predictor input: a one-hot time
/// block followed by min-max scaled flow and speed per detector.
struct FeatureEncoder {
  int horizon = 288;
  int time_bins = 288;
  Normalizer normalizer;

  Eigen::Index size() const { return time_bins + normalizer.size(); }
  int time_slot(int interval) const;
  VectorXd encode(int interval, const MeasurementFrame& frame) const;
  /// Index of the hot entry in the time block.
  static int decode_time(const VectorXd& features, int time_bins);
};

VectorXd encode_input(int interval, const MeasurementFrame& frame, const FeatureEncoder& encoder);

void write_params(std::ostream& out, const PredictorParams& p);
PredictorParams read_params(std::istream& in);
void write_normalizer(std::ostream& out, const Normalizer& n);
Normalizer read_normalizer(std::istream& in);

}  // namespace odcal

#endif  // ODCAL_PREDICTOR_HPP
