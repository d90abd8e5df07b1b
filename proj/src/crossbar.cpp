#include "xbarsim/crossbar.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace xbarsim {

namespace {

enum StreamTag : std::uint64_t {
  kProgramTag = 1,
  kReadTag = 2,
  kD2DTag = 10,
  kStuckTag = 11,
  kRtnTag = 12,
};

constexpr int kSecantMaxIterations = 50;

std::string cell_name(Eigen::Index row, Eigen::Index col) {
  return "(" + std::to_string(row) + ", " + std::to_string(col) + ")";
}

}  // namespace

void NonidealityConfig::validate() const {
  if (quantize && bits < 0) throw ParameterError("crossbar", "quantization bits must be >= 0");
  if (max_pulses < 0) throw ParameterError("crossbar", "max_pulses must be >= 0");
  d2d.validate();
  stuck.validate();
  if (!(drift_time >= kDriftReferenceTime)) {
    throw ParameterError("crossbar", "drift time must be >= 1 s");
  }
  if (!(iv_gamma >= 0.0) || !std::isfinite(iv_gamma)) {
    throw ParameterError("crossbar", "I-V gamma must be >= 0");
  }
  rtn.validate();
}

void CrossbarConfig::validate() const {
  nonidealities.validate();
  interconnect.validate();
  if (tiles) tiles->validate();
}

std::string to_string(InputEncoding encoding) {
  return encoding == InputEncoding::Amplitude ? "amplitude" : "pulse_width";
}

InputEncoding input_encoding_from_string(const std::string& name) {
  if (name == "amplitude") return InputEncoding::Amplitude;
  if (name == "pulse_width") return InputEncoding::PulseWidth;
  throw LookupError("crossbar", "unknown input encoding '" + name +
                                    "' (valid: amplitude, pulse_width)");
}

void ReadConfig::validate() const {
  if (!(v_read > 0.0) || !std::isfinite(v_read)) {
    throw ParameterError("crossbar", "V_read must be positive");
  }
  if (n_avg < 1) throw ParameterError("crossbar", "n_avg must be >= 1");
  if (pulse_slots < 0) throw ParameterError("crossbar", "pulse_slots must be >= 0");
}

Crossbar::Crossbar(CrossbarConfig config, RandomStream lineage, Matrix g_plus, Matrix g_minus,
                   StuckMask mask_plus, StuckMask mask_minus)
    : config_(std::move(config)),
      lineage_(lineage),
      g_plus_(std::move(g_plus)),
      g_minus_(std::move(g_minus)),
      mask_plus_(std::move(mask_plus)),
      mask_minus_(std::move(mask_minus)) {
  build_solvers();
}

namespace {

Matrix program_side(const Matrix& target, const CrossbarConfig& config,
                    const RandomStream& side_stream, StuckMask& mask) {
  const ConductanceWindow& window = config.scheme.window();
  const NonidealityConfig& ni = config.nonidealities;
  Matrix g = target;
  if (ni.quantize) {
    g = quantize(g, window, ni.bits > 0 ? ni.bits : config.device.bits);
  }
  if (ni.program_pulses) {
    for (Eigen::Index j = 0; j < g.cols(); ++j) {
      for (Eigen::Index i = 0; i < g.rows(); ++i) {
        try {
          g(i, j) =
              program_pulses(window.g_off(), g(i, j), config.device, window, ni.max_pulses)
                  .conductance;
        } catch (const Error& e) {
          throw ParameterError("crossbar", "programming cell " + cell_name(i, j) + ": " +
                                               e.what());
        }
      }
    }
  }
  g = apply_d2d(g, ni.d2d, window, side_stream.fork(kD2DTag));
  if (ni.drift_time != kDriftReferenceTime) {
    g = g.unaryExpr([&](double v) { return drift(v, ni.drift_time, config.device, window); });
  }
  StuckResult stuck = apply_stuck(g, ni.stuck, window, side_stream.fork(kStuckTag));
  mask = std::move(stuck.mask);
  return std::move(stuck.conductances);
}

}  // namespace

Crossbar Crossbar::program(const Matrix& weights, const CrossbarConfig& config,
                           const RandomStream& lineage) {
  config.validate();
  if (!all_finite(weights)) {
    throw RangeError("crossbar", "program: weights must be finite");
  }
  Matrix target_plus;
  Matrix target_minus;
  if (config.scheme.variant() == MappingVariant::DifferentialPair) {
    ConductancePair pair = weights_to_diff_pair(weights, config.scheme);
    target_plus = std::move(pair.g_plus);
    target_minus = std::move(pair.g_minus);
  } else {
    SingleDeviceMapping mapped = weights_to_naive(weights, config.scheme);
    target_plus = std::move(mapped.g);
    target_minus = Matrix::Constant(weights.rows(), 1, mapped.g_ref);
  }
  const RandomStream program_stream = lineage.fork(kProgramTag);
  StuckMask mask_plus;
  StuckMask mask_minus;
  Matrix g_plus = program_side(target_plus, config, program_stream.fork(0), mask_plus);
  Matrix g_minus = program_side(target_minus, config, program_stream.fork(1), mask_minus);
  return Crossbar(config, lineage, std::move(g_plus), std::move(g_minus), std::move(mask_plus),
                  std::move(mask_minus));
}

Crossbar Crossbar::restore(const CrossbarConfig& config, const RandomStream& lineage,
                           CrossbarSnapshot state) {
  config.validate();
  const Eigen::Index minus_cols =
      config.scheme.variant() == MappingVariant::DifferentialPair ? state.g_plus.cols() : 1;
  if (state.g_minus.rows() != state.g_plus.rows() || state.g_minus.cols() != minus_cols ||
      state.mask_plus.stuck.rows() != state.g_plus.rows() ||
      state.mask_plus.stuck.cols() != state.g_plus.cols() ||
      state.mask_minus.stuck.rows() != state.g_minus.rows() ||
      state.mask_minus.stuck.cols() != state.g_minus.cols()) {
    throw ShapeError("crossbar", "restore: conductance and mask shapes disagree");
  }
  const ConductanceWindow& window = config.scheme.window();
  auto inside = [&](const Matrix& g) {
    return g.unaryExpr([&](double v) { return window.contains(v) ? 1.0 : 0.0; }).minCoeff() == 1.0;
  };
  if (!inside(state.g_plus) || !inside(state.g_minus)) {
    throw RangeError("crossbar", "restore: stored conductances outside [G_off, G_on]");
  }
  return Crossbar(config, lineage, std::move(state.g_plus), std::move(state.g_minus),
                  std::move(state.mask_plus), std::move(state.mask_minus));
}

CrossbarSnapshot Crossbar::read_conductances() const {
  return {g_plus_, g_minus_, mask_plus_, mask_minus_};
}

Crossbar Crossbar::reprogrammed(Matrix g_plus, Matrix g_minus) const {
  if (g_plus.rows() != g_plus_.rows() || g_plus.cols() != g_plus_.cols() ||
      g_minus.rows() != g_minus_.rows() || g_minus.cols() != g_minus_.cols()) {
    throw ShapeError("crossbar", "reprogrammed: shape differs from the programmed array");
  }
  const ConductanceWindow& window = scheme().window();
  auto check = [&](const Matrix& g, const StuckMask& mask, const char* side) {
    for (Eigen::Index j = 0; j < g.cols(); ++j) {
      for (Eigen::Index i = 0; i < g.rows(); ++i) {
        if (!window.contains(g(i, j))) {
          throw RangeError("crossbar", std::string("reprogrammed: ") + side + " cell " +
                                           cell_name(i, j) + " outside the window");
        }
        if (mask.stuck(i, j) && g(i, j) != mask.value(i, j)) {
          throw ParameterError("crossbar", std::string("reprogrammed: stuck ") + side +
                                               " cell " + cell_name(i, j) + " cannot change");
        }
      }
    }
  };
  check(g_plus, mask_plus_, "plus");
  check(g_minus, mask_minus_, "minus");
  return Crossbar(config_, lineage_, std::move(g_plus), std::move(g_minus), mask_plus_,
                  mask_minus_);
}

Matrix Crossbar::represented_weights() const {
  const double k_g = scheme().scaling().k_G;
  if (differential()) return (g_plus_ - g_minus_) / k_g;
  return (g_plus_.colwise() - g_minus_.col(0)) / k_g;
}

namespace {

Vector solve_nonlinear(const Matrix& g, const Vector& volts, const IVNonlinearityParam& iv,
                       const LineResistanceParams& wires) {
  Matrix g_eff = g;
  for (int iteration = 0; iteration < kSecantMaxIterations; ++iteration) {
    const SolveResult solved = solve_crossbar(g_eff, volts, wires);
    const Matrix v_cell = solved.word_potentials - solved.bit_potentials;
    double mismatch = 0.0;
    Matrix g_next(g.rows(), g.cols());
    for (Eigen::Index j = 0; j < g.cols(); ++j) {
      for (Eigen::Index i = 0; i < g.rows(); ++i) {
        g_next(i, j) = secant_conductance(g(i, j), v_cell(i, j), iv);
        mismatch = std::max(mismatch, std::abs(g_next(i, j) - g_eff(i, j)) * std::abs(v_cell(i, j)));
      }
    }
    // Device-current mismatch adds directly to the KCL residual.
    if (solved.solver_residual + mismatch <= kcl_residual_bound(solved.i_out)) {
      return solved.i_out;
    }
    g_eff = std::move(g_next);
  }
  throw SolverError("crossbar", "secant iteration for nonlinear devices did not reach the KCL "
                                "residual bound in " +
                                    std::to_string(kSecantMaxIterations) + " iterations");
}

}  // namespace

namespace {

Vector amplitude_currents(const Matrix& g, const Vector& volts, const IVNonlinearityParam& iv,
                          const LineResistanceParams& wires, const CrossbarSolver* solver) {
  if (wires.ideal()) {
    if (iv.gamma == 0.0) return matvec_ref(volts, g);
    Vector out = Vector::Zero(g.cols());
    for (Eigen::Index j = 0; j < g.cols(); ++j) {
      for (Eigen::Index i = 0; i < g.rows(); ++i) out[j] += iv_current(g(i, j), volts[i], iv);
    }
    return out;
  }
  if (iv.gamma == 0.0) {
    return solver ? solver->solve(volts).i_out : solve_crossbar(g, volts, wires).i_out;
  }
  return solve_nonlinear(g, volts, iv, wires);
}

Vector pulse_width_charge(const Matrix& g, const Vector& volts, const IVNonlinearityParam& iv,
                          const LineResistanceParams& wires, int pulse_slots,
                          const CrossbarSolver* solver) {
  const Eigen::Index m = g.rows();
  Vector duration(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    double fraction = std::abs(volts[i]) / iv.v_read;
    if (pulse_slots > 0) fraction = std::round(fraction * pulse_slots) / pulse_slots;
    duration[i] = std::min(fraction, 1.0);
  }

  auto phase_charge = [&](double sign) {
    Vector charge = Vector::Zero(g.cols());
    if (wires.ideal()) {
      for (Eigen::Index i = 0; i < m; ++i) {
        if (!(volts[i] * sign > 0.0)) continue;
        for (Eigen::Index j = 0; j < g.cols(); ++j) {
          charge[j] += duration[i] * iv_current(g(i, j), iv.v_read, iv);
        }
      }
      return charge;
    }
    // The set of driven rows is constant between consecutive pulse ends.
    std::vector<double> ends;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (volts[i] * sign > 0.0 && duration[i] > 0.0) ends.push_back(duration[i]);
    }
    std::sort(ends.begin(), ends.end());
    ends.erase(std::unique(ends.begin(), ends.end()), ends.end());
    double start = 0.0;
    for (const double end : ends) {
      Vector drive = Vector::Zero(m);
      for (Eigen::Index i = 0; i < m; ++i) {
        if (volts[i] * sign > 0.0 && duration[i] >= end) drive[i] = iv.v_read;
      }
      charge += (end - start) * amplitude_currents(g, drive, iv, wires, solver);
      start = end;
    }
    return charge;
  };
  return phase_charge(1.0) - phase_charge(-1.0);
}

}  // namespace

Vector read_array_amplitude(const Matrix& g, const Vector& volts, const IVNonlinearityParam& iv,
                            const LineResistanceParams& wires) {
  return amplitude_currents(g, volts, iv, wires, nullptr);
}

Vector read_array_pulse_width(const Matrix& g, const Vector& volts, const IVNonlinearityParam& iv,
                              const LineResistanceParams& wires, int pulse_slots) {
  return pulse_width_charge(g, volts, iv, wires, pulse_slots, nullptr);
}

// Readout arrays: G+ and G- for differential pairs, otherwise G with the
// reference column appended.
std::vector<Matrix> Crossbar::arrays(const Matrix& g_plus, const Matrix& g_minus) const {
  if (differential()) return {g_plus, g_minus};
  Matrix combined(g_plus.rows(), g_plus.cols() + 1);
  combined << g_plus, g_minus;
  return {combined};
}

void Crossbar::build_solvers() {
  const NonidealityConfig& ni = config_.nonidealities;
  if (config_.interconnect.ideal() || ni.iv_gamma != 0.0 || ni.rtn.enabled()) return;
  auto cache = std::make_shared<SolverCache>();
  for (const Matrix& g : arrays(g_plus_, g_minus_)) {
    std::vector<CrossbarSolver> tiles;
    if (config_.tiles) {
      for (const TileRange& t : tile_ranges(g.rows(), g.cols(), *config_.tiles)) {
        tiles.emplace_back(g.block(t.row0, t.col0, t.rows, t.cols), config_.interconnect);
      }
    } else {
      tiles.emplace_back(g, config_.interconnect);
    }
    cache->push_back(std::move(tiles));
  }
  solvers_ = std::move(cache);
}

Vector Crossbar::read_currents(const Matrix& conductances, std::size_t array, const Vector& volts,
                               const ReadConfig& read) const {
  const IVNonlinearityParam iv{config_.nonidealities.iv_gamma, read.v_read};
  auto read_tile = [&](const Matrix& g, const Vector& v, std::size_t tile) {
    const CrossbarSolver* solver = solvers_ ? &(*solvers_)[array][tile] : nullptr;
    return read.encoding == InputEncoding::Amplitude
               ? amplitude_currents(g, v, iv, config_.interconnect, solver)
               : pulse_width_charge(g, v, iv, config_.interconnect, read.pulse_slots, solver);
  };
  if (!config_.tiles) return read_tile(conductances, volts, 0);
  Vector total = Vector::Zero(conductances.cols());
  std::size_t tile = 0;
  for (const TileRange& t : tile_ranges(conductances.rows(), conductances.cols(), *config_.tiles)) {
    total.segment(t.col0, t.cols) += read_tile(conductances.block(t.row0, t.col0, t.rows, t.cols),
                                               volts.segment(t.row0, t.rows), tile++);
  }
  return total;
}

Vector Crossbar::vmm(const Vector& x, const ReadConfig& read, std::uint64_t call_index) const {
  read.validate();
  if (x.size() != rows()) {
    throw ShapeError("crossbar", "vmm: input length " + std::to_string(x.size()) +
                                     " does not match " + std::to_string(rows()) + " rows");
  }
  const LinearScaling& scaling = scheme().scaling();
  const Vector volts = encode_inputs(x, scaling);
  for (Eigen::Index i = 0; i < volts.size(); ++i) {
    if (!std::isfinite(volts[i]) || std::abs(volts[i]) > read.v_read) {
      throw RangeError("crossbar", "vmm: input " + std::to_string(i) + " maps to " +
                                       std::to_string(volts[i]) + " V, beyond V_read " +
                                       std::to_string(read.v_read) + " V");
    }
  }

  const RTNParams& rtn = config_.nonidealities.rtn;
  const RandomStream call_stream = lineage_.fork({kReadTag, call_index});
  // Per-device RTN chains over the repetitions of this call.
  auto rtn_chains = [&](const Matrix& g, std::uint64_t side) {
    std::vector<Matrix> per_read(static_cast<std::size_t>(read.n_avg),
                                 Matrix::Ones(g.rows(), g.cols()));
    if (!rtn.enabled()) return per_read;
    for (Eigen::Index j = 0; j < g.cols(); ++j) {
      for (Eigen::Index i = 0; i < g.rows(); ++i) {
        RandomStream cell = call_stream.fork(
            {kRtnTag, side, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j)});
        const std::vector<double> chain = rtn_multipliers(rtn, read.n_avg, cell);
        for (int r = 0; r < read.n_avg; ++r) per_read[static_cast<std::size_t>(r)](i, j) = chain[static_cast<std::size_t>(r)];
      }
    }
    return per_read;
  };
  const std::vector<Matrix> rtn_plus = rtn_chains(g_plus_, 0);
  const std::vector<Matrix> rtn_minus = rtn_chains(g_minus_, 1);

  Vector sum = Vector::Zero(cols());
  for (int r = 0; r < read.n_avg; ++r) {
    const auto k = static_cast<std::size_t>(r);
    const Matrix g_p = rtn.enabled() ? Matrix(g_plus_.cwiseProduct(rtn_plus[k])) : g_plus_;
    const Matrix g_m = rtn.enabled() ? Matrix(g_minus_.cwiseProduct(rtn_minus[k])) : g_minus_;
    const std::vector<Matrix> readout = arrays(g_p, g_m);
    Vector i_plus;
    Vector i_minus;
    if (differential()) {
      i_plus = read_currents(readout[0], 0, volts, read);
      i_minus = read_currents(readout[1], 1, volts, read);
    } else {
      // Reference column sits next to the last bit line of the same array.
      const Vector currents = read_currents(readout[0], 0, volts, read);
      i_plus = currents.head(cols());
      i_minus = Vector::Constant(cols(), currents[cols()]);
    }
    sum += decode_outputs(i_plus, i_minus, scaling);
  }
  return read.n_avg == 1 ? sum : Vector(sum / read.n_avg);
}

}  // namespace xbarsim
