#pragma once

#include <memory>
#include <string>
#include <vector>

#include "xbarsim/core.hpp"

namespace xbarsim {

enum class Biasing { Single, Double };
std::string to_string(Biasing biasing);
Biasing biasing_from_string(const std::string& name);

/// Per-segment wire resistances. Zero means an ideal wire.
struct LineResistanceParams {
  double r_word = 0.0;  // ohms per word-line segment
  double r_bit = 0.0;   // ohms per bit-line segment
  Biasing biasing = Biasing::Single;

  void validate() const;
  bool ideal() const noexcept { return r_word == 0.0 && r_bit == 0.0; }
  bool operator==(const LineResistanceParams&) const = default;
};

struct SolveResult {
  Vector i_out;             // current into each bit-line termination (A)
  Matrix word_potentials;   // word-side crosspoint nodes (V)
  Matrix bit_potentials;    // bit-side crosspoint nodes (V)
  double solver_residual = 0.0;  // max KCL violation (A)
};

// Residual bound a SolveResult must satisfy.
double kcl_residual_bound(const Vector& i_out);

// Nodal analysis of an m x n crossbar. Each crosspoint has a word-side and a
// bit-side node joined by G(i, j); neighbouring nodes on a line are joined by
// one wire segment, and one more segment connects each line end to its source
// or ground. Single biasing drives word lines from column 0 and grounds bit
// lines below row m-1; double biasing does both at both ends.
SolveResult solve_crossbar(const Matrix& conductances, const Vector& v_applied,
                           const LineResistanceParams& params);

/// Factorized nodal system for fixed conductances; solve() may be called
/// concurrently for different input vectors.
class CrossbarSolver {
 public:
  CrossbarSolver(const Matrix& conductances, const LineResistanceParams& params);
  ~CrossbarSolver();
  CrossbarSolver(CrossbarSolver&&) noexcept;
  CrossbarSolver& operator=(CrossbarSolver&&) noexcept;

  SolveResult solve(const Vector& v_applied) const;

  Eigen::Index rows() const noexcept;
  Eigen::Index cols() const noexcept;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct TileSpec {
  int max_rows = 1;
  int max_cols = 1;

  void validate() const;
  bool operator==(const TileSpec&) const = default;
};

struct TileRange {
  Eigen::Index row0, rows, col0, cols;
};

std::vector<TileRange> tile_ranges(Eigen::Index rows, Eigen::Index cols, const TileSpec& tiles);

// Solves each sub-array independently and sums bit-line currents per column.
Vector tile_and_solve(const Matrix& conductances, const Vector& v_applied,
                      const LineResistanceParams& params, const TileSpec& tiles);

}  // namespace xbarsim
