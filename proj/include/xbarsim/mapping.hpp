#pragma once

#include <algorithm>
#include <optional>
#include <string>

#include "xbarsim/core.hpp"

namespace xbarsim {

/// Software-to-physical scale factors: V = k_V x, G = k_G w, y = I / (k_V k_G).
struct LinearScaling {
  double k_V = 1.0;  // volts per input unit
  double k_G = 1.0;  // siemens per weight unit

  LinearScaling() = default;
  LinearScaling(double k_v, double k_g);

  bool operator==(const LinearScaling&) const = default;
};

/// Achievable conductance range [G_off, G_on] of one device.
class ConductanceWindow {
 public:
  ConductanceWindow(double g_off, double g_on);

  double g_off() const noexcept { return g_off_; }
  double g_on() const noexcept { return g_on_; }
  double g_avg() const noexcept { return g_avg_; }
  double span() const noexcept { return g_on_ - g_off_; }
  double on_off_ratio() const noexcept { return g_on_ / g_off_; }
  bool contains(double g) const noexcept { return g >= g_off_ && g <= g_on_; }
  double clip(double g) const noexcept { return std::clamp(g, g_off_, g_on_); }

  bool operator==(const ConductanceWindow&) const = default;

 private:
  double g_off_;
  double g_on_;
  double g_avg_;
};

enum class MappingVariant { DifferentialPair, Naive, NonlinearPower };

std::string to_string(MappingVariant variant);
MappingVariant mapping_variant_from_string(const std::string& name);

/// Weight-to-conductance rule. DifferentialPair encodes w symmetrically around
/// G_avg on two devices; Naive and NonlinearPower use one device per weight and
/// a shared reference column whose current is subtracted after readout.
class MappingScheme {
 public:
  static MappingScheme differential_pair(const ConductanceWindow& window, double w_max_abs,
                                         double k_V, std::optional<double> k_G = std::nullopt);
  static MappingScheme naive(const ConductanceWindow& window, double w_min, double w_max,
                             double k_V);
  static MappingScheme nonlinear_power(const ConductanceWindow& window, double w_min,
                                       double w_max, double power, double k_V);

  MappingVariant variant() const noexcept { return variant_; }
  const ConductanceWindow& window() const noexcept { return window_; }
  const LinearScaling& scaling() const noexcept { return scaling_; }
  double w_max_abs() const noexcept { return w_max_abs_; }
  double w_min() const noexcept { return w_min_; }
  double w_max() const noexcept { return w_max_; }
  double power() const noexcept { return power_; }

  bool operator==(const MappingScheme&) const = default;

 private:
  MappingScheme(MappingVariant variant, ConductanceWindow window, LinearScaling scaling,
                double w_max_abs, double w_min, double w_max, double power);
  MappingScheme with_variant(MappingVariant variant) const;

  MappingVariant variant_;
  ConductanceWindow window_;
  LinearScaling scaling_;
  double w_max_abs_;
  double w_min_;
  double w_max_;
  double power_;
};

struct ConductancePair {
  Matrix g_plus;
  Matrix g_minus;
};

struct SingleDeviceMapping {
  Matrix g;
  double g_ref;  // conductance encoding w = 0
};

template <typename Derived>
VectorX<typename Derived::Scalar> encode_inputs(const Eigen::MatrixBase<Derived>& x,
                                                const LinearScaling& scaling) {
  return scaling.k_V * x;
}

ConductancePair weights_to_diff_pair(const Matrix& weights, const MappingScheme& scheme);

SingleDeviceMapping weights_to_naive(const Matrix& weights, const MappingScheme& scheme);

// Conductance for a single weight under a Naive or NonlinearPower scheme.
double single_device_conductance(double w, const MappingScheme& scheme);

template <typename DerivedP, typename DerivedM>
VectorX<typename DerivedP::Scalar> decode_outputs(const Eigen::MatrixBase<DerivedP>& i_plus,
                                                  const Eigen::MatrixBase<DerivedM>& i_minus,
                                                  const LinearScaling& scaling) {
  if (i_plus.size() != i_minus.size()) {
    throw ShapeError("mapping", "decode_outputs: current vectors differ in length (" +
                                    std::to_string(i_plus.size()) + " vs " +
                                    std::to_string(i_minus.size()) + ")");
  }
  return (i_plus - i_minus) / (scaling.k_V * scaling.k_G);
}

}  // namespace xbarsim
