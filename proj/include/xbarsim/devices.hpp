#pragma once

#include <string>
#include <vector>

#include "xbarsim/core.hpp"
#include "xbarsim/mapping.hpp"

namespace xbarsim {

enum class Suitability { No, Moderate, Yes };
std::string to_string(Suitability suitability);

enum class ProgrammingLinearity { None, Low, High };
std::string to_string(ProgrammingLinearity linearity);

/// One memory technology. Ranged quantities keep both bounds; the nominal value
/// is the geometric midpoint.
struct DeviceModel {
  std::string name;
  double on_off_ratio = 10.0;
  double on_off_min = 10.0;
  double on_off_max = 10.0;
  double g_off = 10e-6;  // siemens
  int bits = 1;
  ProgrammingLinearity linearity = ProgrammingLinearity::Low;
  double programming_alpha = 0.1;  // per-pulse saturation rate
  bool linear_programming = false;
  double drift_nu = 0.0;
  Suitability inference = Suitability::No;
  Suitability training = Suitability::No;

  // Descriptive table entries carried for reporting only.
  std::string write_voltage;
  std::string write_time_ns;
  std::string read_time_ns;
  std::string write_energy;
  std::string retention;
  std::string endurance;
  std::string integration_density;
  std::string drift_label;

  double g_on() const noexcept { return g_off * on_off_ratio; }
  ConductanceWindow window() const { return ConductanceWindow(g_off, g_on()); }
  bool programmable() const noexcept { return linearity != ProgrammingLinearity::None; }
  bool suitable_for_inference() const noexcept { return inference != Suitability::No; }

  bool operator==(const DeviceModel&) const = default;
};

const std::vector<std::string>& preset_names();
DeviceModel preset(const std::string& name);

// Snaps each entry to the nearest of 2^bits uniformly spaced levels on the
// window; ties go toward G_on. Resolutions of 52 bits or more are below the
// double-precision step and return the input.
Matrix quantize(const Matrix& conductances, const ConductanceWindow& window, int bits);
double quantize(double conductance, const ConductanceWindow& window, int bits);

struct PulseResult {
  double conductance;
  int pulses;
};

PulseResult program_pulses(double g_start, double g_target, const DeviceModel& model,
                           const ConductanceWindow& window, int max_pulses);
PulseResult program_pulses(double g_start, double g_target, const DeviceModel& model,
                           int max_pulses);

inline constexpr double kDriftReferenceTime = 1.0;  // seconds

// Power-law decay G (t / t0)^-nu, floored at G_off.
double drift(double conductance, double t_seconds, const DeviceModel& model,
             const ConductanceWindow& window);
double drift(double conductance, double t_seconds, const DeviceModel& model);

}  // namespace xbarsim
