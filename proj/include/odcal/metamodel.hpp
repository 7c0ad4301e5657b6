#ifndef ODCAL_METAMODEL_HPP
#define ODCAL_METAMODEL_HPP

#include "odcal/scenario.hpp"

#include <string>
#include <utility>
#include <vector>

namespace odcal {

/// Static corridor assignment surrogate: detector density is linear in the
/// demand of the OD pairs whose path crosses the detector,
///
///   k_k = c * (k_jam_k / q_cap_k) * (sum_{l in L_k} D_l) / n_k.
///
/// k_jam and q_cap are per-lane values, so (sum D) / n_k is the per-lane flow.
template <typename Scalar>
struct MetamodelParams {
  using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

  Scalar c = Scalar(1);
  Vec<Scalar> jam_density;  // veh/km per lane
  Vec<Scalar> capacity;     // veh/h per lane
  Vec<Scalar> lanes;
  BoolMatrix incidence;  // [detector x OD pair]

  Eigen::Index num_detectors() const { return incidence.rows(); }
  Eigen::Index num_od() const { return incidence.cols(); }
};

using Metamodel = MetamodelParams<double>;

/// Per-detector factor k_jam / (q_cap * n), the slope of density in per-detector flow.
template <typename Scalar>
Vec<Scalar> structural_gain(const MetamodelParams<Scalar>& p) {
  return p.jam_density.array() / (p.capacity.array() * p.lanes.array());
}

/// The c-free part of the prediction.
template <typename Scalar, typename Derived>
Vec<Scalar> structural_density(const MetamodelParams<Scalar>& p,
                               const Eigen::MatrixBase<Derived>& demand) {
  require_same_size(demand.size(), p.num_od(), "metamodel demand");
  const Vec<Scalar> passing = p.incidence.template cast<Scalar>() * demand;
  return structural_gain(p).cwiseProduct(passing);
}

template <typename Scalar, typename Derived>
Vec<Scalar> predict_density(const MetamodelParams<Scalar>& p,
                            const Eigen::MatrixBase<Derived>& demand) {
  return p.c * structural_density(p, demand);
}

/// d(density_k)/d(D_l); constant because the surrogate is linear.
template <typename Scalar>
Mat<Scalar> jacobian(const MetamodelParams<Scalar>& p) {
  return (p.c * structural_gain(p)).asDiagonal() * p.incidence.template cast<Scalar>();
}

/// One pre-training observation: demand and the densities it produced.
struct DensityObservation {
  DemandVector demand;
  VectorXd density;
};

/// Closed-form least squares for the scale c over every (detector, sample)
/// residual. Throws ValidationError if every structural term is zero.
double fit_c(const Metamodel& params_without_c, const std::vector<DensityObservation>& dataset);

/// Builds the surrogate for the scenario's detectors; L_k comes from the OD paths.
Metamodel metamodel_from_scenario(const ScenarioConfig& cfg, double c = 1.0);

std::string metamodel_to_json(const Metamodel& m);
Metamodel metamodel_from_json(const std::string& text);

}  // namespace odcal

#endif  // ODCAL_METAMODEL_HPP
