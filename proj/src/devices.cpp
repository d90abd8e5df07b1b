#include "xbarsim/devices.hpp"

#include <cmath>

namespace xbarsim {

std::string to_string(Suitability suitability) {
  switch (suitability) {
    case Suitability::No:
      return "no";
    case Suitability::Moderate:
      return "moderate";
    case Suitability::Yes:
      return "yes";
  }
  return "unknown";
}

std::string to_string(ProgrammingLinearity linearity) {
  switch (linearity) {
    case ProgrammingLinearity::None:
      return "none";
    case ProgrammingLinearity::Low:
      return "low";
    case ProgrammingLinearity::High:
      return "high";
  }
  return "unknown";
}

namespace {

struct PresetRow {
  const char* name;
  double ratio_min;
  double ratio_max;
  int bits;
  const char* write_voltage;
  const char* write_time_ns;
  const char* read_time_ns;
  const char* write_energy;
  ProgrammingLinearity linearity;
  const char* drift_label;
  double drift_nu;
  const char* integration_density;
  const char* retention;
  const char* endurance;
  Suitability training;
  Suitability inference;
};

using PL = ProgrammingLinearity;
using S = Suitability;

// Drift exponents are placeholders: the table only says No / Weak / Yes.
const PresetRow kPresets[] = {
    {"NOR-flash", 1e4, 1e4, 2, "10", "1e3-1e4", "~50", "~1e5", PL::Low, "No", 0.0, "High",
     "Long", "1e5", S::No, S::Yes},
    {"NAND-flash", 1e4, 1e4, 4, "10", "1e5-1e6", "~1e4", "10", PL::Low, "No", 0.0, "Very high",
     "Long", "1e4", S::No, S::Yes},
    {"RRAM", 10.0, 1e2, 2, "<3", "<10", "<10", "1e2-1e4", PL::Low, "Weak", 0.005, "High",
     "Medium", "1e5-1e8", S::No, S::Moderate},
    {"PCM", 1e2, 1e4, 2, "<3", "~50", "<10", "1e4", PL::Low, "Yes", 0.1, "High", "Long",
     "1e6-1e9", S::No, S::Yes},
    {"STT-MRAM", 1.5, 2.0, 1, "<1.5", "<10", "<10", "~1e2", PL::None, "No", 0.0, "High",
     "Medium", "1e15", S::No, S::No},
    {"FeRAM", 1e2, 1e3, 1, "<3", "~30", "<10", "~1e2", PL::None, "No", 0.0, "Low", "Long",
     "1e10", S::No, S::No},
    {"FeFET", 5.0, 50.0, 5, "<5", "<10", "<10", "<1", PL::Low, "No", 0.0, "High", "Long", ">1e5",
     S::Moderate, S::Yes},
    {"SOT-MRAM", 1.5, 2.0, 1, "<1.5", "<10", "<10", "<1e2", PL::None, "No", 0.0, "High",
     "Medium", ">1e15", S::No, S::No},
    {"Li-ion", 40.0, 1e3, 10, "<1", "<10", "<10", "~1e2", PL::High, "No", 0.0, "Low", "...",
     ">1e5", S::Yes, S::Yes},
};

constexpr double kPresetGOff = 10e-6;
constexpr double kSaturatingAlpha = 0.1;
constexpr double kLinearStep = 0.01;

DeviceModel from_row(const PresetRow& row) {
  DeviceModel model;
  model.name = row.name;
  model.on_off_min = row.ratio_min;
  model.on_off_max = row.ratio_max;
  model.on_off_ratio = std::sqrt(row.ratio_min * row.ratio_max);
  model.g_off = kPresetGOff;
  model.bits = row.bits;
  model.linearity = row.linearity;
  model.linear_programming = row.linearity == PL::High;
  model.programming_alpha = model.linear_programming ? kLinearStep : kSaturatingAlpha;
  model.drift_nu = row.drift_nu;
  model.drift_label = row.drift_label;
  model.inference = row.inference;
  model.training = row.training;
  model.write_voltage = row.write_voltage;
  model.write_time_ns = row.write_time_ns;
  model.read_time_ns = row.read_time_ns;
  model.write_energy = row.write_energy;
  model.retention = row.retention;
  model.endurance = row.endurance;
  model.integration_density = row.integration_density;
  return model;
}

}  // namespace

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const PresetRow& row : kPresets) out.emplace_back(row.name);
    return out;
  }();
  return names;
}

DeviceModel preset(const std::string& name) {
  for (const PresetRow& row : kPresets) {
    if (name == row.name) return from_row(row);
  }
  std::string valid;
  for (const std::string& n : preset_names()) {
    valid += valid.empty() ? n : ", " + n;
  }
  throw LookupError("devices", "unknown device preset '" + name + "' (valid: " + valid + ")");
}

double quantize(double g, const ConductanceWindow& window, int bits) {
  if (bits < 1) {
    throw ParameterError("devices", "quantize: bits must be >= 1");
  }
  if (!window.contains(g)) {
    throw RangeError("devices", "quantize: conductance " + std::to_string(g) +
                                    " outside the window");
  }
  if (bits >= 52) return g;
  const double steps = std::ldexp(1.0, bits) - 1.0;
  const double step = window.span() / steps;
  const double level = std::floor((g - window.g_off()) / step + 0.5);
  return window.clip(window.g_off() + std::min(level, steps) * step);
}

Matrix quantize(const Matrix& conductances, const ConductanceWindow& window, int bits) {
  return conductances.unaryExpr([&](double g) { return quantize(g, window, bits); });
}

PulseResult program_pulses(double g_start, double g_target, const DeviceModel& model,
                           const ConductanceWindow& window, int max_pulses) {
  if (!model.programmable()) {
    throw ParameterError("devices", "program_pulses: " + model.name +
                                        " has no usable programming linearity");
  }
  if (max_pulses < 0) {
    throw ParameterError("devices", "program_pulses: max_pulses must be >= 0");
  }
  if (!window.contains(g_start) || !window.contains(g_target)) {
    throw RangeError("devices", "program_pulses: start or target conductance outside the window");
  }
  const double alpha = model.programming_alpha;
  double g = g_start;
  int pulses = 0;
  while (pulses < max_pulses) {
    const double error = g_target - g;
    if (error == 0.0) break;
    double step = 0.0;
    if (model.linear_programming) {
      step = std::copysign(alpha * window.span(), error);
    } else {
      step = error > 0.0 ? alpha * (window.g_on() - g) : -alpha * (g - window.g_off());
    }
    if (std::abs(error) <= std::abs(step) / 2.0) break;
    const double next = window.clip(g + step);
    // Stop at the nearest reachable level instead of oscillating around it.
    if (std::abs(g_target - next) >= std::abs(error)) break;
    g = next;
    ++pulses;
  }
  return {g, pulses};
}

PulseResult program_pulses(double g_start, double g_target, const DeviceModel& model,
                           int max_pulses) {
  return program_pulses(g_start, g_target, model, model.window(), max_pulses);
}

double drift(double g, double t_seconds, const DeviceModel& model,
             const ConductanceWindow& window) {
  if (!(t_seconds >= kDriftReferenceTime)) {
    throw ParameterError("devices", "drift: time must be >= the 1 s reference");
  }
  if (model.drift_nu == 0.0) return g;
  return std::max(g * std::pow(t_seconds / kDriftReferenceTime, -model.drift_nu),
                  window.g_off());
}

double drift(double g, double t_seconds, const DeviceModel& model) {
  return drift(g, t_seconds, model, model.window());
}

}  // namespace xbarsim
