#pragma once

#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "xbarsim/core.hpp"
#include "xbarsim/crossbar.hpp"
#include "xbarsim/nn.hpp"

namespace xbarsim {

/// Row or column relabeling: forward[p] is the original index stored at
/// physical position p, inverse[original] is its position.
class Permutation {
 public:
  static Permutation identity(Eigen::Index n);
  static Permutation from_forward(std::vector<Eigen::Index> forward);

  const std::vector<Eigen::Index>& forward() const noexcept { return forward_; }
  const std::vector<Eigen::Index>& inverse() const noexcept { return inverse_; }
  Eigen::Index size() const noexcept { return static_cast<Eigen::Index>(forward_.size()); }
  bool operator==(const Permutation&) const = default;

 private:
  std::vector<Eigen::Index> forward_;
  std::vector<Eigen::Index> inverse_;
};

// Leading puts the highest score at index 0 (column 0 is next to the word-line
// drivers); Trailing puts it at the last index (row m-1 is next to the
// bit-line terminations under single biasing).
enum class Placement { Leading, Trailing };

// Descending score, ties by ascending original index.
Permutation order_rows(const Vector& scores, Placement placement = Placement::Leading);

// Mean |delta w| per row (or column) of one layer.
Vector sensitivity_row_scores(const SensitivityMap& map, std::size_t layer);
Vector sensitivity_col_scores(const SensitivityMap& map, std::size_t layer);

// Most sensitive rows nearest the drive side.
Permutation order_rows_by_sensitivity(const SensitivityMap& map, std::size_t layer);
// Highest expected input intensity nearest the output terminations.
Permutation order_rows_by_intensity(const Vector& expected_inputs);

struct PermutedMapping {
  Matrix weights;
  Vector input;
  Permutation rows;
  Permutation cols;

  Vector permute_input(const Vector& x) const;
  Vector unpermute(const Vector& y) const;
};

PermutedMapping apply_permuted_mapping(const Matrix& weights, const Vector& x,
                                       const Permutation& rows, const Permutation& cols);

enum class PairSide { Plus, Minus };
std::string to_string(PairSide side);

struct CompensationReport {
  struct Adjustment {
    Eigen::Index row;
    Eigen::Index col;
    PairSide side;        // the free partner that was reprogrammed
    double new_value;     // siemens
    double residual;      // |(G+ - G-) / k_G - w| after adjustment
  };
  struct Unresolved {
    Eigen::Index row;
    Eigen::Index col;
    double residual;
  };
  std::vector<Adjustment> adjusted;
  std::vector<Unresolved> both_stuck;

  bool empty() const noexcept { return adjusted.empty() && both_stuck.empty(); }
  void write_csv(std::ostream& out, const std::string& extra_header = {},
                 const std::string& extra_values = {}) const;
};

struct CompensationResult {
  Crossbar crossbar;
  CompensationReport report;
};

// Reprograms the free partner of every half-stuck differential pair so that
// G+ - G- = k_G w, clipped to the window.
CompensationResult compensate_stuck(const Crossbar& xbar, const Matrix& target_weights);

// |represented weight - target| per cell.
Matrix weight_errors(const Crossbar& xbar, const Matrix& target_weights);

// Mean |vmm(x) - x^T W| over a batch of row-per-sample inputs.
double vmm_error(const Crossbar& xbar, const Matrix& weights, const Matrix& inputs,
                 const ReadConfig& read);

struct CalibrationResult {
  double best_power;
  std::vector<double> errors;  // one per grid point, in grid order
};

// Grid search over NonlinearPower exponents; the base configuration supplies
// window, k_V, device and nonidealities. Ties go to the smallest exponent.
CalibrationResult calibrate_nonlinear_mapping(const Matrix& weights, const Matrix& calibration_inputs,
                                              std::span<const double> p_grid,
                                              const LineResistanceParams& wires,
                                              const CrossbarConfig& base, const ReadConfig& read,
                                              const RandomStream& lineage);

}  // namespace xbarsim
