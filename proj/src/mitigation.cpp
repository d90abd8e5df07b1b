#include "xbarsim/mitigation.hpp"

#include "xbarsim/records.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace xbarsim {

Permutation Permutation::identity(Eigen::Index n) {
  std::vector<Eigen::Index> forward(static_cast<std::size_t>(n));
  std::iota(forward.begin(), forward.end(), Eigen::Index{0});
  return from_forward(std::move(forward));
}

Permutation Permutation::from_forward(std::vector<Eigen::Index> forward) {
  Permutation p;
  p.inverse_.assign(forward.size(), -1);
  for (std::size_t k = 0; k < forward.size(); ++k) {
    const Eigen::Index original = forward[k];
    if (original < 0 || original >= static_cast<Eigen::Index>(forward.size()) ||
        p.inverse_[static_cast<std::size_t>(original)] != -1) {
      throw ParameterError("mitigation", "permutation is not a bijection");
    }
    p.inverse_[static_cast<std::size_t>(original)] = static_cast<Eigen::Index>(k);
  }
  p.forward_ = std::move(forward);
  return p;
}

Permutation order_rows(const Vector& scores, Placement placement) {
  std::vector<Eigen::Index> forward(static_cast<std::size_t>(scores.size()));
  std::iota(forward.begin(), forward.end(), Eigen::Index{0});
  std::stable_sort(forward.begin(), forward.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return scores[a] > scores[b]; });
  if (placement == Placement::Trailing) std::reverse(forward.begin(), forward.end());
  return Permutation::from_forward(std::move(forward));
}

Vector sensitivity_row_scores(const SensitivityMap& map, std::size_t layer) {
  if (layer >= map.delta_w.size()) throw ShapeError("mitigation", "sensitivity layer out of range");
  return map.delta_w[layer].cwiseAbs().rowwise().mean();
}

Vector sensitivity_col_scores(const SensitivityMap& map, std::size_t layer) {
  if (layer >= map.delta_w.size()) throw ShapeError("mitigation", "sensitivity layer out of range");
  return map.delta_w[layer].cwiseAbs().colwise().mean().transpose();
}

Permutation order_rows_by_sensitivity(const SensitivityMap& map, std::size_t layer) {
  return order_rows(sensitivity_row_scores(map, layer), Placement::Leading);
}

Permutation order_rows_by_intensity(const Vector& expected_inputs) {
  return order_rows(expected_inputs, Placement::Trailing);
}

Vector PermutedMapping::permute_input(const Vector& x) const {
  if (x.size() != rows.size()) throw ShapeError("mitigation", "input length does not match rows");
  Vector out(x.size());
  for (Eigen::Index p = 0; p < x.size(); ++p) out[p] = x[rows.forward()[static_cast<std::size_t>(p)]];
  return out;
}

Vector PermutedMapping::unpermute(const Vector& y) const {
  if (y.size() != cols.size()) throw ShapeError("mitigation", "output length does not match cols");
  Vector out(y.size());
  for (Eigen::Index q = 0; q < y.size(); ++q) out[cols.forward()[static_cast<std::size_t>(q)]] = y[q];
  return out;
}

PermutedMapping apply_permuted_mapping(const Matrix& weights, const Vector& x,
                                       const Permutation& rows, const Permutation& cols) {
  if (rows.size() != weights.rows() || cols.size() != weights.cols() || x.size() != weights.rows()) {
    throw ShapeError("mitigation", "apply_permuted_mapping: permutation or input shape mismatch");
  }
  PermutedMapping mapped{Matrix(weights.rows(), weights.cols()), Vector(), rows, cols};
  for (Eigen::Index q = 0; q < weights.cols(); ++q) {
    for (Eigen::Index p = 0; p < weights.rows(); ++p) {
      mapped.weights(p, q) = weights(rows.forward()[static_cast<std::size_t>(p)],
                                     cols.forward()[static_cast<std::size_t>(q)]);
    }
  }
  mapped.input = mapped.permute_input(x);
  return mapped;
}

std::string to_string(PairSide side) { return side == PairSide::Plus ? "plus" : "minus"; }

void CompensationReport::write_csv(std::ostream& out, const std::string& extra_header,
                                   const std::string& extra_values) const {
  const std::string tail_header = extra_header.empty() ? "" : "," + extra_header;
  const std::string tail = extra_values.empty() ? "" : "," + extra_values;
  out << "row,col,side,new_value_s,residual" << tail_header << '\n';
  for (const Adjustment& a : adjusted) {
    out << a.row << ',' << a.col << ',' << to_string(a.side) << ',' << format_double(a.new_value)
        << ',' << format_double(a.residual) << tail << '\n';
  }
  for (const Unresolved& u : both_stuck) {
    out << u.row << ',' << u.col << ",both_stuck,," << format_double(u.residual) << tail << '\n';
  }
}

CompensationResult compensate_stuck(const Crossbar& xbar, const Matrix& target_weights) {
  if (!xbar.differential()) {
    throw ParameterError("mitigation", "compensate_stuck requires the differential_pair scheme");
  }
  if (target_weights.rows() != xbar.rows() || target_weights.cols() != xbar.cols()) {
    throw ShapeError("mitigation", "compensate_stuck: target weights do not match the crossbar");
  }
  const ConductanceWindow& window = xbar.scheme().window();
  const double k_g = xbar.scheme().scaling().k_G;
  Matrix g_plus = xbar.g_plus();
  Matrix g_minus = xbar.g_minus();
  const BoolMatrix& stuck_plus = xbar.mask_plus().stuck;
  const BoolMatrix& stuck_minus = xbar.mask_minus().stuck;
  CompensationReport report;

  for (Eigen::Index j = 0; j < xbar.cols(); ++j) {
    for (Eigen::Index i = 0; i < xbar.rows(); ++i) {
      const double wanted = k_g * target_weights(i, j);
      const bool plus = stuck_plus(i, j);
      const bool minus = stuck_minus(i, j);
      if (plus && minus) {
        report.both_stuck.push_back(
            {i, j, std::abs((g_plus(i, j) - g_minus(i, j)) / k_g - target_weights(i, j))});
      } else if (plus) {
        g_minus(i, j) = window.clip(g_plus(i, j) - wanted);
        report.adjusted.push_back(
            {i, j, PairSide::Minus, g_minus(i, j),
             std::abs((g_plus(i, j) - g_minus(i, j)) / k_g - target_weights(i, j))});
      } else if (minus) {
        g_plus(i, j) = window.clip(g_minus(i, j) + wanted);
        report.adjusted.push_back(
            {i, j, PairSide::Plus, g_plus(i, j),
             std::abs((g_plus(i, j) - g_minus(i, j)) / k_g - target_weights(i, j))});
      }
    }
  }
  return {xbar.reprogrammed(std::move(g_plus), std::move(g_minus)), std::move(report)};
}

Matrix weight_errors(const Crossbar& xbar, const Matrix& target_weights) {
  const Matrix represented = xbar.represented_weights();
  if (represented.rows() != target_weights.rows() || represented.cols() != target_weights.cols()) {
    throw ShapeError("mitigation", "weight_errors: shape mismatch");
  }
  return (represented - target_weights).cwiseAbs();
}

double vmm_error(const Crossbar& xbar, const Matrix& weights, const Matrix& inputs,
                 const ReadConfig& read) {
  if (inputs.rows() == 0) throw ShapeError("mitigation", "vmm_error: empty input batch");
  double total = 0.0;
  for (Eigen::Index s = 0; s < inputs.rows(); ++s) {
    const Vector x = inputs.row(s).transpose();
    const Vector y = xbar.vmm(x, read, static_cast<std::uint64_t>(s));
    total += (y - matvec_ref(x, weights)).cwiseAbs().mean();
  }
  return total / static_cast<double>(inputs.rows());
}

CalibrationResult calibrate_nonlinear_mapping(const Matrix& weights,
                                              const Matrix& calibration_inputs,
                                              std::span<const double> p_grid,
                                              const LineResistanceParams& wires,
                                              const CrossbarConfig& base, const ReadConfig& read,
                                              const RandomStream& lineage) {
  if (p_grid.empty()) throw ParameterError("mitigation", "calibration grid is empty");
  const double peak = weights.cwiseAbs().maxCoeff();
  const double range = peak > 0.0 ? peak : 1.0;
  CalibrationResult result{0.0, {}};
  double best = std::numeric_limits<double>::infinity();
  for (const double p : p_grid) {
    CrossbarConfig config = base;
    config.interconnect = wires;
    config.scheme = MappingScheme::nonlinear_power(base.scheme.window(), -range, range, p,
                                                   base.scheme.scaling().k_V);
    const Crossbar xbar = Crossbar::program(weights, config, lineage);
    result.errors.push_back(vmm_error(xbar, weights, calibration_inputs, read));
  }
  for (std::size_t k = 0; k < p_grid.size(); ++k) {
    const double err = result.errors[k];
    if (err < best || (err == best && p_grid[k] < result.best_power)) {
      best = err;
      result.best_power = p_grid[k];
    }
  }
  return result;
}

}  // namespace xbarsim
