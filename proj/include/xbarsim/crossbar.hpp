#pragma once

#include <cstdint>
#include <memory>
#include <vector>
#include <optional>
#include <string>

#include "xbarsim/core.hpp"
#include "xbarsim/devices.hpp"
#include "xbarsim/interconnect.hpp"
#include "xbarsim/mapping.hpp"
#include "xbarsim/nonidealities.hpp"
#include "xbarsim/random.hpp"

namespace xbarsim {

/// Program- and read-time perturbations. Everything defaults to off.
struct NonidealityConfig {
  bool quantize = false;
  int bits = 0;  // 0 uses the device's multilevel capability
  bool program_pulses = false;
  int max_pulses = 100;
  D2DSpec d2d;
  StuckSpec stuck;
  double drift_time = kDriftReferenceTime;  // seconds since programming
  double iv_gamma = 0.0;
  RTNParams rtn;

  void validate() const;
  bool operator==(const NonidealityConfig&) const = default;
};

struct CrossbarConfig {
  MappingScheme scheme;
  DeviceModel device;
  NonidealityConfig nonidealities;
  LineResistanceParams interconnect;
  std::optional<TileSpec> tiles;

  void validate() const;
};

enum class InputEncoding { Amplitude, PulseWidth };
std::string to_string(InputEncoding encoding);
InputEncoding input_encoding_from_string(const std::string& name);

struct ReadConfig {
  double v_read = 0.2;  // volts; amplitude bound and pulse height
  int n_avg = 1;        // reads averaged per vmm call
  InputEncoding encoding = InputEncoding::Amplitude;
  int pulse_slots = 256;  // pulse-width duration resolution, 0 for continuous

  void validate() const;
  bool operator==(const ReadConfig&) const = default;
};

struct CrossbarSnapshot {
  Matrix g_plus;
  Matrix g_minus;
  StuckMask mask_plus;
  StuckMask mask_minus;
};

/// A programmed array. DifferentialPair stores G+ and G- with the weight
/// shape; single-device schemes store G in g_plus and the m x 1 reference
/// column in g_minus. Values are immutable once programmed.
class Crossbar {
 public:
  // map -> quantize -> program pulses -> device-to-device spread -> drift ->
  // stuck cells. Each stage draws from its own addressable substream.
  static Crossbar program(const Matrix& weights, const CrossbarConfig& config,
                          const RandomStream& lineage);

  // Rebuilds a crossbar from stored conductances (see records.hpp).
  static Crossbar restore(const CrossbarConfig& config, const RandomStream& lineage,
                          CrossbarSnapshot state);

  // Averages read.n_avg reads. Random read-time effects draw from a stream
  // derived from call_index, so concurrent calls never share state.
  Vector vmm(const Vector& x, const ReadConfig& read, std::uint64_t call_index = 0) const;

  CrossbarSnapshot read_conductances() const;

  // Same masks and lineage with new conductances; stuck cells must keep their
  // stuck value.
  Crossbar reprogrammed(Matrix g_plus, Matrix g_minus) const;

  Eigen::Index rows() const noexcept { return g_plus_.rows(); }
  Eigen::Index cols() const noexcept { return g_plus_.cols(); }
  const CrossbarConfig& config() const noexcept { return config_; }
  const MappingScheme& scheme() const noexcept { return config_.scheme; }
  const RandomStream& lineage() const noexcept { return lineage_; }
  const Matrix& g_plus() const noexcept { return g_plus_; }
  const Matrix& g_minus() const noexcept { return g_minus_; }
  const StuckMask& mask_plus() const noexcept { return mask_plus_; }
  const StuckMask& mask_minus() const noexcept { return mask_minus_; }
  bool differential() const noexcept {
    return config_.scheme.variant() == MappingVariant::DifferentialPair;
  }

  // Weights implied by the stored conductances under the linear decode.
  Matrix represented_weights() const;

 private:
  Crossbar(CrossbarConfig config, RandomStream lineage, Matrix g_plus, Matrix g_minus,
           StuckMask mask_plus, StuckMask mask_minus);

  using SolverCache = std::vector<std::vector<CrossbarSolver>>;  // [array][tile]

  std::vector<Matrix> arrays(const Matrix& g_plus, const Matrix& g_minus) const;
  void build_solvers();
  Vector read_currents(const Matrix& conductances, std::size_t array, const Vector& volts,
                       const ReadConfig& read) const;

  CrossbarConfig config_;
  RandomStream lineage_;
  Matrix g_plus_;
  Matrix g_minus_;
  StuckMask mask_plus_;
  StuckMask mask_minus_;
  // Factorizations reused across reads when conductances are read-invariant.
  std::shared_ptr<const SolverCache> solvers_;
};

// Currents of one array under amplitude encoding: Ohmic or sinh devices, ideal
// or resistive wires. Resistive wires with nonlinear devices use secant
// conductances iterated to the KCL residual bound.
Vector read_array_amplitude(const Matrix& conductances, const Vector& volts,
                            const IVNonlinearityParam& iv, const LineResistanceParams& wires);

// Charge per unit read time for pulse-width encoding: each row is held at
// +V_read for a fraction |V_i| / V_read of the read window, positive and
// negative inputs in separate phases that are subtracted.
Vector read_array_pulse_width(const Matrix& conductances, const Vector& volts,
                              const IVNonlinearityParam& iv, const LineResistanceParams& wires,
                              int pulse_slots);

}  // namespace xbarsim
