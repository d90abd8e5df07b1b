#include "xbarsim/interconnect.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <cmath>
#include <sstream>

namespace xbarsim {

std::string to_string(Biasing biasing) {
  return biasing == Biasing::Single ? "single" : "double";
}

Biasing biasing_from_string(const std::string& name) {
  if (name == "single") return Biasing::Single;
  if (name == "double") return Biasing::Double;
  throw LookupError("interconnect", "unknown biasing '" + name + "' (valid: single, double)");
}

void LineResistanceParams::validate() const {
  if (!(r_word >= 0.0) || !(r_bit >= 0.0) || !std::isfinite(r_word) || !std::isfinite(r_bit)) {
    throw ParameterError("interconnect", "line resistances must be finite and >= 0");
  }
}

void TileSpec::validate() const {
  if (max_rows < 1 || max_cols < 1) {
    throw ParameterError("interconnect", "tile dimensions must be >= 1");
  }
}

double kcl_residual_bound(const Vector& i_out) {
  const double peak = i_out.size() ? i_out.cwiseAbs().maxCoeff() : 0.0;
  return std::max(1e-10 * peak, 1e-15);
}

namespace {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

constexpr int kRefinementSteps = 4;
constexpr Eigen::Index kGround = -1;

}  // namespace

// Unknown-node numbering: word-side nodes are unknown iff r_word > 0 and
// bit-side nodes iff r_bit > 0; otherwise they sit at the source or 0 V.
struct CrossbarSolver::Impl {
  Matrix g;
  LineResistanceParams params;
  Eigen::Index m = 0;
  Eigen::Index n = 0;
  bool word_unknown = false;
  bool bit_unknown = false;
  Eigen::Index unknowns = 0;
  SparseMatrix a;
  Eigen::SimplicialLDLT<SparseMatrix> ldlt;

  // Unknown k couples to source row `row` (or ground) through conductance.
  struct Coupling {
    Eigen::Index unknown;
    Eigen::Index row;
    double conductance;
  };
  std::vector<Coupling> couplings;

  // A node is an unknown index (>= 0) or fixed at source row (>= 0) / ground.
  struct Node {
    Eigen::Index index;
    Eigen::Index source_row;
  };

  Node word(Eigen::Index i, Eigen::Index j) const {
    return word_unknown ? Node{i * n + j, kGround} : Node{-1, i};
  }
  Node bit(Eigen::Index i, Eigen::Index j) const {
    if (!bit_unknown) return Node{-1, kGround};
    return Node{(word_unknown ? m * n : 0) + i * n + j, kGround};
  }
  static Node source(Eigen::Index i) { return Node{-1, i}; }
  static Node ground() { return Node{-1, kGround}; }

  void link(std::vector<Triplet>& triplets, const Node& p, const Node& q, double conductance) {
    if (conductance == 0.0) return;
    if (p.index >= 0) triplets.emplace_back(p.index, p.index, conductance);
    if (q.index >= 0) triplets.emplace_back(q.index, q.index, conductance);
    if (p.index >= 0 && q.index >= 0) {
      triplets.emplace_back(p.index, q.index, -conductance);
      triplets.emplace_back(q.index, p.index, -conductance);
    } else if (p.index >= 0 && q.source_row != kGround) {
      couplings.push_back({p.index, q.source_row, conductance});
    } else if (q.index >= 0 && p.source_row != kGround) {
      couplings.push_back({q.index, p.source_row, conductance});
    }
  }

  void assemble() {
    const Eigen::Index cells = m * n;
    unknowns = (word_unknown ? cells : 0) + (bit_unknown ? cells : 0);
    if (unknowns == 0) return;
    std::vector<Triplet> triplets;
    triplets.reserve(static_cast<std::size_t>(unknowns) * 5);
    const double g_word = word_unknown ? 1.0 / params.r_word : 0.0;
    const double g_bit = bit_unknown ? 1.0 / params.r_bit : 0.0;
    const bool both_ends = params.biasing == Biasing::Double;
    for (Eigen::Index i = 0; i < m; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        link(triplets, word(i, j), bit(i, j), g(i, j));
        if (word_unknown) {
          if (j + 1 < n) link(triplets, word(i, j), word(i, j + 1), g_word);
          if (j == 0) link(triplets, word(i, j), source(i), g_word);
          if (both_ends && j == n - 1) link(triplets, word(i, j), source(i), g_word);
        }
        if (bit_unknown) {
          if (i + 1 < m) link(triplets, bit(i, j), bit(i + 1, j), g_bit);
          if (i == m - 1) link(triplets, bit(i, j), ground(), g_bit);
          if (both_ends && i == 0) link(triplets, bit(i, j), ground(), g_bit);
        }
      }
    }
    a.resize(unknowns, unknowns);
    a.setFromTriplets(triplets.begin(), triplets.end());
    ldlt.compute(a);
    if (ldlt.info() != Eigen::Success) {
      throw SolverError("interconnect", "nodal matrix is singular");
    }
  }

  Vector rhs(const Vector& v) const {
    Vector b = Vector::Zero(unknowns);
    for (const Coupling& c : couplings) b[c.unknown] += c.conductance * v[c.row];
    return b;
  }

  double potential(const Node& node, const Vector& x, const Vector& v) const {
    if (node.index >= 0) return x[node.index];
    return node.source_row == kGround ? 0.0 : v[node.source_row];
  }

  SolveResult extract(const Vector& x, const Vector& v) const {
    SolveResult result;
    result.word_potentials.resize(m, n);
    result.bit_potentials.resize(m, n);
    for (Eigen::Index i = 0; i < m; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        result.word_potentials(i, j) = potential(word(i, j), x, v);
        result.bit_potentials(i, j) = potential(bit(i, j), x, v);
      }
    }
    result.i_out = Vector::Zero(n);
    if (bit_unknown) {
      const double g_bit = 1.0 / params.r_bit;
      for (Eigen::Index j = 0; j < n; ++j) {
        result.i_out[j] = g_bit * result.bit_potentials(m - 1, j);
        if (params.biasing == Biasing::Double) result.i_out[j] += g_bit * result.bit_potentials(0, j);
      }
    } else {
      for (Eigen::Index j = 0; j < n; ++j) {
        double sum = 0.0;
        for (Eigen::Index i = 0; i < m; ++i) sum += g(i, j) * result.word_potentials(i, j);
        result.i_out[j] = sum;
      }
    }
    return result;
  }
};

CrossbarSolver::CrossbarSolver(const Matrix& conductances, const LineResistanceParams& params)
    : impl_(std::make_unique<Impl>()) {
  params.validate();
  if (!all_finite(conductances) || (conductances.array() < 0.0).any()) {
    throw ParameterError("interconnect", "conductances must be finite and >= 0");
  }
  impl_->g = conductances;
  impl_->params = params;
  impl_->m = conductances.rows();
  impl_->n = conductances.cols();
  impl_->word_unknown = params.r_word > 0.0;
  impl_->bit_unknown = params.r_bit > 0.0;
  impl_->assemble();
}

CrossbarSolver::~CrossbarSolver() = default;
CrossbarSolver::CrossbarSolver(CrossbarSolver&&) noexcept = default;
CrossbarSolver& CrossbarSolver::operator=(CrossbarSolver&&) noexcept = default;

Eigen::Index CrossbarSolver::rows() const noexcept { return impl_->m; }
Eigen::Index CrossbarSolver::cols() const noexcept { return impl_->n; }

SolveResult CrossbarSolver::solve(const Vector& v_applied) const {
  const Impl& s = *impl_;
  if (v_applied.size() != s.m) {
    throw ShapeError("interconnect", "solve_crossbar: " + std::to_string(v_applied.size()) +
                                         " voltages for " + std::to_string(s.m) + " word lines");
  }
  if (!all_finite(v_applied)) {
    throw ParameterError("interconnect", "solve_crossbar: applied voltages must be finite");
  }
  if (s.unknowns == 0) return s.extract(Vector(), v_applied);

  const Vector b = s.rhs(v_applied);
  Vector x = s.ldlt.solve(b);
  Vector r = b - s.a * x;
  SolveResult result = s.extract(x, v_applied);
  double bound = kcl_residual_bound(result.i_out);
  for (int step = 0; step < kRefinementSteps && r.lpNorm<Eigen::Infinity>() > bound; ++step) {
    x += s.ldlt.solve(r);
    r = b - s.a * x;
    result = s.extract(x, v_applied);
    bound = kcl_residual_bound(result.i_out);
  }
  result.solver_residual = r.lpNorm<Eigen::Infinity>();
  if (!(result.solver_residual <= bound)) {
    std::ostringstream msg;
    msg << "solve_crossbar: KCL residual " << result.solver_residual << " A exceeds bound "
        << bound << " A";
    throw SolverError("interconnect", msg.str());
  }
  return result;
}

SolveResult solve_crossbar(const Matrix& conductances, const Vector& v_applied,
                           const LineResistanceParams& params) {
  if (v_applied.size() != conductances.rows()) {
    throw ShapeError("interconnect", "solve_crossbar: " + std::to_string(v_applied.size()) +
                                         " voltages for " + std::to_string(conductances.rows()) +
                                         " word lines");
  }
  return CrossbarSolver(conductances, params).solve(v_applied);
}

std::vector<TileRange> tile_ranges(Eigen::Index rows, Eigen::Index cols, const TileSpec& tiles) {
  tiles.validate();
  std::vector<TileRange> out;
  for (Eigen::Index r0 = 0; r0 < rows; r0 += tiles.max_rows) {
    for (Eigen::Index c0 = 0; c0 < cols; c0 += tiles.max_cols) {
      out.push_back({r0, std::min<Eigen::Index>(tiles.max_rows, rows - r0), c0,
                     std::min<Eigen::Index>(tiles.max_cols, cols - c0)});
    }
  }
  return out;
}

Vector tile_and_solve(const Matrix& conductances, const Vector& v_applied,
                      const LineResistanceParams& params, const TileSpec& tiles) {
  if (v_applied.size() != conductances.rows()) {
    throw ShapeError("interconnect", "tile_and_solve: voltage/row count mismatch");
  }
  Vector total = Vector::Zero(conductances.cols());
  for (const TileRange& tile : tile_ranges(conductances.rows(), conductances.cols(), tiles)) {
    const SolveResult part =
        solve_crossbar(conductances.block(tile.row0, tile.col0, tile.rows, tile.cols),
                       v_applied.segment(tile.row0, tile.rows), params);
    total.segment(tile.col0, tile.cols) += part.i_out;
  }
  return total;
}

}  // namespace xbarsim
