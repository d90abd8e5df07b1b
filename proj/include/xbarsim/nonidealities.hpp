#pragma once

#include <string>
#include <vector>

#include "xbarsim/core.hpp"
#include "xbarsim/mapping.hpp"
#include "xbarsim/random.hpp"

namespace xbarsim {

enum class StuckMode { AtGOff, AtGOn, AtRandomLevel };
std::string to_string(StuckMode mode);
StuckMode stuck_mode_from_string(const std::string& name);

struct StuckSpec {
  double p_stuck = 0.0;
  StuckMode mode = StuckMode::AtRandomLevel;

  void validate() const;
  bool operator==(const StuckSpec&) const = default;
};

/// Which cells are frozen and at what conductance.
struct StuckMask {
  BoolMatrix stuck;
  Matrix value;  // meaningful where stuck

  static StuckMask none(Eigen::Index rows, Eigen::Index cols);
  Eigen::Index count() const { return stuck.count(); }
  bool empty() const { return count() == 0; }
  bool operator==(const StuckMask& other) const {
    return stuck == other.stuck && value == other.value;
  }
};

struct D2DSpec {
  double sigma = 0.0;  // lognormal shape; 0 disables

  void validate() const;
  bool operator==(const D2DSpec&) const = default;
};

struct IVNonlinearityParam {
  double gamma = 0.0;  // 0 is Ohmic
  double v_read = 0.2;

  void validate() const;
  bool operator==(const IVNonlinearityParam&) const = default;
};

struct RTNParams {
  double delta = 0.0;  // relative conductance jump of the high state
  double tau_high = 2.0;
  double tau_low = 8.0;

  void validate() const;
  bool enabled() const noexcept { return delta != 0.0; }
  double stationary_high_fraction() const noexcept { return tau_high / (tau_high + tau_low); }
  bool operator==(const RTNParams&) const = default;
};

struct StuckResult {
  Matrix conductances;
  StuckMask mask;
};

// Each cell (i, j) draws from its own substream stream.fork({i, j}).
StuckResult apply_stuck(const Matrix& conductances, const StuckSpec& spec,
                        const ConductanceWindow& window, const RandomStream& stream);

Matrix apply_d2d(const Matrix& conductances, const D2DSpec& spec, const ConductanceWindow& window,
                 const RandomStream& stream);

// I = G V_read sinh(gamma V / V_read) / sinh(gamma); odd in V, equal to
// G V_read at V = V_read for every gamma.
double iv_current(double conductance, double voltage, const IVNonlinearityParam& param);

// Secant conductance I(V) / V, with the V -> 0 limit G gamma / sinh(gamma).
double secant_conductance(double conductance, double voltage, const IVNonlinearityParam& param);

// Two-state Markov chain over {1, 1 + delta} started from its stationary law.
std::vector<double> rtn_multipliers(const RTNParams& params, int n_reads, RandomStream& stream);

}  // namespace xbarsim
