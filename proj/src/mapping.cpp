#include "xbarsim/mapping.hpp"

#include <cmath>

namespace xbarsim {

namespace {

std::string cell_name(Eigen::Index row, Eigen::Index col) {
  return "(" + std::to_string(row) + ", " + std::to_string(col) + ")";
}

}  // namespace

LinearScaling::LinearScaling(double k_v, double k_g) : k_V(k_v), k_G(k_g) {
  if (!(k_V > 0.0) || !(k_G > 0.0) || !std::isfinite(k_V) || !std::isfinite(k_G)) {
    throw ParameterError("mapping", "k_V and k_G must be positive and finite");
  }
}

ConductanceWindow::ConductanceWindow(double g_off, double g_on)
    : g_off_(g_off), g_on_(g_on), g_avg_((g_off + g_on) / 2.0) {
  if (!(g_off > 0.0) || !(g_on > g_off) || !std::isfinite(g_on)) {
    throw ParameterError("mapping", "conductance window requires 0 < G_off < G_on");
  }
}

std::string to_string(MappingVariant variant) {
  switch (variant) {
    case MappingVariant::DifferentialPair:
      return "differential_pair";
    case MappingVariant::Naive:
      return "naive";
    case MappingVariant::NonlinearPower:
      return "nonlinear_power";
  }
  return "unknown";
}

MappingVariant mapping_variant_from_string(const std::string& name) {
  if (name == "differential_pair") return MappingVariant::DifferentialPair;
  if (name == "naive") return MappingVariant::Naive;
  if (name == "nonlinear_power") return MappingVariant::NonlinearPower;
  throw LookupError("mapping", "unknown mapping scheme '" + name +
                                   "' (valid: differential_pair, naive, nonlinear_power)");
}

MappingScheme::MappingScheme(MappingVariant variant, ConductanceWindow window,
                             LinearScaling scaling, double w_max_abs, double w_min, double w_max,
                             double power)
    : variant_(variant),
      window_(window),
      scaling_(scaling),
      w_max_abs_(w_max_abs),
      w_min_(w_min),
      w_max_(w_max),
      power_(power) {}

MappingScheme MappingScheme::differential_pair(const ConductanceWindow& window, double w_max_abs,
                                               double k_V, std::optional<double> k_G) {
  if (!(w_max_abs > 0.0) || !std::isfinite(w_max_abs)) {
    throw ParameterError("mapping", "w_max_abs must be positive and finite");
  }
  const double k_g = k_G.value_or(window.span() / w_max_abs);
  // One ulp of slack: the default k_G * w_max_abs may round above the span.
  if (k_g * w_max_abs > window.span() * (1.0 + 4e-16)) {
    throw ParameterError("mapping", "k_G * w_max_abs exceeds G_on - G_off");
  }
  return MappingScheme(MappingVariant::DifferentialPair, window, LinearScaling(k_V, k_g),
                       w_max_abs, -w_max_abs, w_max_abs, 1.0);
}

MappingScheme MappingScheme::naive(const ConductanceWindow& window, double w_min, double w_max,
                                   double k_V) {
  return nonlinear_power(window, w_min, w_max, 1.0, k_V).with_variant(MappingVariant::Naive);
}

MappingScheme MappingScheme::nonlinear_power(const ConductanceWindow& window, double w_min,
                                             double w_max, double power, double k_V) {
  if (!(w_min < w_max) || !std::isfinite(w_min) || !std::isfinite(w_max)) {
    throw ParameterError("mapping", "weight range requires w_min < w_max");
  }
  if (!(power > 0.0) || !std::isfinite(power)) {
    throw ParameterError("mapping", "mapping exponent must be positive");
  }
  const double k_g = window.span() / (w_max - w_min);
  return MappingScheme(MappingVariant::NonlinearPower, window, LinearScaling(k_V, k_g),
                       std::max(std::abs(w_min), std::abs(w_max)), w_min, w_max, power);
}

MappingScheme MappingScheme::with_variant(MappingVariant variant) const {
  MappingScheme copy = *this;
  copy.variant_ = variant;
  return copy;
}

ConductancePair weights_to_diff_pair(const Matrix& weights, const MappingScheme& scheme) {
  if (scheme.variant() != MappingVariant::DifferentialPair) {
    throw ParameterError("mapping", "weights_to_diff_pair requires the differential_pair scheme");
  }
  const ConductanceWindow& window = scheme.window();
  const double k_g = scheme.scaling().k_G;
  const double g_avg = window.g_avg();
  const double two_avg = 2.0 * g_avg;

  ConductancePair pair{Matrix(weights.rows(), weights.cols()),
                       Matrix(weights.rows(), weights.cols())};
  for (Eigen::Index j = 0; j < weights.cols(); ++j) {
    for (Eigen::Index i = 0; i < weights.rows(); ++i) {
      const double w = weights(i, j);
      if (!std::isfinite(w) || std::abs(w) > scheme.w_max_abs()) {
        throw RangeError("mapping", "weight " + std::to_string(w) + " at " + cell_name(i, j) +
                                        " exceeds w_max_abs " +
                                        std::to_string(scheme.w_max_abs()));
      }
      // The larger member lies in [G_avg, 2 G_avg], so 2 G_avg - larger is
      // exact and the pair sums to 2 G_avg with no rounding.
      double larger = std::min(g_avg + k_g * std::abs(w) / 2.0, window.g_on());
      while (two_avg - larger < window.g_off()) {
        larger = std::nextafter(larger, 0.0);
      }
      const double smaller = two_avg - larger;
      pair.g_plus(i, j) = w >= 0.0 ? larger : smaller;
      pair.g_minus(i, j) = w >= 0.0 ? smaller : larger;
    }
  }
  return pair;
}

double single_device_conductance(double w, const MappingScheme& scheme) {
  const double normalized = (w - scheme.w_min()) / (scheme.w_max() - scheme.w_min());
  const double shaped = scheme.variant() == MappingVariant::NonlinearPower
                            ? std::pow(normalized, scheme.power())
                            : normalized;
  return scheme.window().clip(scheme.window().g_off() + scheme.window().span() * shaped);
}

SingleDeviceMapping weights_to_naive(const Matrix& weights, const MappingScheme& scheme) {
  if (scheme.variant() == MappingVariant::DifferentialPair) {
    throw ParameterError("mapping", "weights_to_naive requires a naive or nonlinear_power scheme");
  }
  SingleDeviceMapping mapped{Matrix(weights.rows(), weights.cols()), 0.0};
  for (Eigen::Index j = 0; j < weights.cols(); ++j) {
    for (Eigen::Index i = 0; i < weights.rows(); ++i) {
      const double w = weights(i, j);
      if (!std::isfinite(w) || w < scheme.w_min() || w > scheme.w_max()) {
        throw RangeError("mapping", "weight " + std::to_string(w) + " at " + cell_name(i, j) +
                                        " outside [" + std::to_string(scheme.w_min()) + ", " +
                                        std::to_string(scheme.w_max()) + "]");
      }
      mapped.g(i, j) = single_device_conductance(w, scheme);
    }
  }
  const double zero = std::clamp(0.0, scheme.w_min(), scheme.w_max());
  mapped.g_ref = single_device_conductance(zero, scheme);
  return mapped;
}

}  // namespace xbarsim
