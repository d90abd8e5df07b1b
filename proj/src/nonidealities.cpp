#include "xbarsim/nonidealities.hpp"

#include <cmath>

namespace xbarsim {

std::string to_string(StuckMode mode) {
  switch (mode) {
    case StuckMode::AtGOff:
      return "at_g_off";
    case StuckMode::AtGOn:
      return "at_g_on";
    case StuckMode::AtRandomLevel:
      return "at_random_level";
  }
  return "unknown";
}

StuckMode stuck_mode_from_string(const std::string& name) {
  if (name == "at_g_off") return StuckMode::AtGOff;
  if (name == "at_g_on") return StuckMode::AtGOn;
  if (name == "at_random_level") return StuckMode::AtRandomLevel;
  throw LookupError("nonidealities", "unknown stuck mode '" + name +
                                         "' (valid: at_g_off, at_g_on, at_random_level)");
}

void StuckSpec::validate() const {
  if (!(p_stuck >= 0.0 && p_stuck <= 1.0)) {
    throw ParameterError("nonidealities", "p_stuck must lie in [0, 1]");
  }
}

StuckMask StuckMask::none(Eigen::Index rows, Eigen::Index cols) {
  return {BoolMatrix::Constant(rows, cols, false), Matrix::Zero(rows, cols)};
}

void D2DSpec::validate() const {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
    throw ParameterError("nonidealities", "d2d sigma must be >= 0");
  }
}

void IVNonlinearityParam::validate() const {
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) {
    throw ParameterError("nonidealities", "I-V gamma must be >= 0");
  }
  if (!(v_read > 0.0) || !std::isfinite(v_read)) {
    throw ParameterError("nonidealities", "V_read must be positive");
  }
}

void RTNParams::validate() const {
  if (!(delta >= 0.0) || !std::isfinite(delta)) {
    throw ParameterError("nonidealities", "RTN delta must be >= 0");
  }
  if (!(tau_high >= 1.0) || !(tau_low >= 1.0)) {
    throw ParameterError("nonidealities", "RTN dwell times must be >= 1 read");
  }
}

StuckResult apply_stuck(const Matrix& conductances, const StuckSpec& spec,
                        const ConductanceWindow& window, const RandomStream& stream) {
  spec.validate();
  StuckResult result{conductances, StuckMask::none(conductances.rows(), conductances.cols())};
  if (spec.p_stuck == 0.0) return result;
  for (Eigen::Index j = 0; j < conductances.cols(); ++j) {
    for (Eigen::Index i = 0; i < conductances.rows(); ++i) {
      RandomStream cell = stream.fork({static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j)});
      if (!(cell.uniform() < spec.p_stuck)) continue;
      double value = 0.0;
      switch (spec.mode) {
        case StuckMode::AtGOff:
          value = window.g_off();
          break;
        case StuckMode::AtGOn:
          value = window.g_on();
          break;
        case StuckMode::AtRandomLevel:
          value = window.clip(cell.uniform(window.g_off(), window.g_on()));
          break;
      }
      result.mask.stuck(i, j) = true;
      result.mask.value(i, j) = value;
      result.conductances(i, j) = value;
    }
  }
  return result;
}

Matrix apply_d2d(const Matrix& conductances, const D2DSpec& spec, const ConductanceWindow& window,
                 const RandomStream& stream) {
  spec.validate();
  if (spec.sigma == 0.0) return conductances;
  Matrix out(conductances.rows(), conductances.cols());
  for (Eigen::Index j = 0; j < conductances.cols(); ++j) {
    for (Eigen::Index i = 0; i < conductances.rows(); ++i) {
      RandomStream cell = stream.fork({static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j)});
      out(i, j) = window.clip(conductances(i, j) * cell.lognormal(0.0, spec.sigma));
    }
  }
  return out;
}

double iv_current(double g, double v, const IVNonlinearityParam& param) {
  if (std::abs(v) > param.v_read) {
    throw RangeError("nonidealities", "iv_current: |V| = " + std::to_string(std::abs(v)) +
                                          " exceeds V_read = " + std::to_string(param.v_read));
  }
  if (param.gamma == 0.0) return g * v;
  const double r = std::abs(v) / param.v_read;
  const double magnitude = g * param.v_read * (std::sinh(param.gamma * r) / std::sinh(param.gamma));
  return std::copysign(magnitude, v);
}

double secant_conductance(double g, double v, const IVNonlinearityParam& param) {
  if (param.gamma == 0.0) return g;
  if (v == 0.0) return g * param.gamma / std::sinh(param.gamma);
  // No range check: solver iterates may briefly overshoot V_read.
  const double r = v / param.v_read;
  return g * (std::sinh(param.gamma * r) / std::sinh(param.gamma)) / r;
}

std::vector<double> rtn_multipliers(const RTNParams& params, int n_reads, RandomStream& stream) {
  params.validate();
  if (n_reads < 1) {
    throw ParameterError("nonidealities", "rtn_multipliers: n_reads must be >= 1");
  }
  std::vector<double> out(static_cast<std::size_t>(n_reads), 1.0);
  if (!params.enabled()) return out;
  const double leave_high = 1.0 / params.tau_high;
  const double leave_low = 1.0 / params.tau_low;
  bool high = stream.uniform() < params.stationary_high_fraction();
  for (int k = 0; k < n_reads; ++k) {
    if (k > 0) {
      const double u = stream.uniform();
      high = high ? !(u < leave_high) : (u < leave_low);
    }
    out[static_cast<std::size_t>(k)] = high ? 1.0 + params.delta : 1.0;
  }
  return out;
}

}  // namespace xbarsim
