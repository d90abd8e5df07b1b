#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "xbarsim/interconnect.hpp"
#include "xbarsim/random.hpp"

using namespace xbarsim;

namespace {

Matrix random_conductances(RandomStream& rng, Eigen::Index m, Eigen::Index n) {
  Matrix g(m, n);
  for (auto& v : g.reshaped()) v = rng.uniform(1e-5, 1e-3);
  return g;
}

Vector random_voltages(RandomStream& rng, Eigen::Index m) {
  Vector v(m);
  for (auto& x : v) x = rng.uniform(-0.2, 0.2);
  return v;
}

// Largest net current leaving any internal node, recomputed from the
// returned potentials with the wiring described in the header.
double kcl_violation(const Matrix& g, const Vector& v, const LineResistanceParams& p,
                     const SolveResult& r) {
  const Eigen::Index m = g.rows();
  const Eigen::Index n = g.cols();
  const bool both = p.biasing == Biasing::Double;
  const double gw = 1.0 / p.r_word;
  const double gb = 1.0 / p.r_bit;
  const Matrix& w = r.word_potentials;
  const Matrix& b = r.bit_potentials;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      double out_w = g(i, j) * (w(i, j) - b(i, j));
      out_w += gw * (w(i, j) - (j > 0 ? w(i, j - 1) : v[i]));
      if (j + 1 < n) out_w += gw * (w(i, j) - w(i, j + 1));
      else if (both) out_w += gw * (w(i, j) - v[i]);
      double out_b = g(i, j) * (b(i, j) - w(i, j));
      out_b += gb * (b(i, j) - (i + 1 < m ? b(i + 1, j) : 0.0));
      if (i > 0) out_b += gb * (b(i, j) - b(i - 1, j));
      else if (both) out_b += gb * b(i, j);
      worst = std::max({worst, std::abs(out_w), std::abs(out_b)});
    }
  }
  return worst;
}

double mean_abs_deviation(const Matrix& g, const LineResistanceParams& p, RandomStream& rng,
                          int inputs) {
  double total = 0.0;
  for (int k = 0; k < inputs; ++k) {
    const Vector v = random_voltages(rng, g.rows());
    total += (solve_crossbar(g, v, p).i_out - g.transpose() * v).cwiseAbs().mean();
  }
  return total / inputs;
}

}  // namespace

TEST_CASE("zero wire resistance reproduces G^T V") {
  RandomStream rng(41, 0);
  for (int trial = 0; trial < 20; ++trial) {
    const auto m = static_cast<Eigen::Index>(1 + rng.next_u64() % 20);
    const auto n = static_cast<Eigen::Index>(1 + rng.next_u64() % 20);
    const Matrix g = random_conductances(rng, m, n);
    const Vector v = random_voltages(rng, m);
    for (const Biasing b : {Biasing::Single, Biasing::Double}) {
      const SolveResult r = solve_crossbar(g, v, {0.0, 0.0, b});
      REQUIRE(oracle::rel(r.i_out, oracle::loop_matvec(v, g)) <= 1e-12);
    }
  }
}

TEST_CASE("1 x 1 series resistance") {
  const SolveResult r = solve_crossbar(Matrix{{1e-3}}, Vector{{1.0}}, {50.0, 50.0, Biasing::Single});
  const double expected = 1.0 / (1.0 / 1e-3 + 50.0 + 50.0);
  CHECK(std::abs(r.i_out[0] - expected) <= 1e-12 * expected);
  CHECK(r.i_out[0] == doctest::Approx(0.9091e-3).epsilon(1e-4));
  // only one wire resistance present
  const SolveResult w = solve_crossbar(Matrix{{1e-3}}, Vector{{0.5}}, {20.0, 0.0, Biasing::Single});
  CHECK(w.i_out[0] == doctest::Approx(0.5 / 1020.0).epsilon(1e-12));
}

TEST_CASE("nodal solver agrees with a dense admittance solve") {
  RandomStream rng(42, 0);
  for (int trial = 0; trial < 40; ++trial) {
    const Eigen::Index m = 2 + static_cast<Eigen::Index>(rng.next_u64() % 2);
    const Eigen::Index n = 2 + static_cast<Eigen::Index>(rng.next_u64() % 2);
    const Matrix g = random_conductances(rng, m, n);
    const Vector v = random_voltages(rng, m);
    const double rw = rng.uniform(0.5, 50.0);
    const double rb = rng.uniform(0.5, 50.0);
    const bool both = trial % 2 == 1;
    const LineResistanceParams p{rw, rb, both ? Biasing::Double : Biasing::Single};
    const SolveResult r = solve_crossbar(g, v, p);
    const oracle::DenseSolve d = oracle::dense_kcl(g, v, rw, rb, both);
    REQUIRE(oracle::rel(r.i_out, d.i_out) <= 1e-9);
    REQUIRE((r.word_potentials - d.word).cwiseAbs().maxCoeff() <= 1e-9 * v.cwiseAbs().maxCoeff());
    REQUIRE((r.bit_potentials - d.bit).cwiseAbs().maxCoeff() <= 1e-9 * v.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("returned potentials satisfy KCL") {
  RandomStream rng(43, 0);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix g = random_conductances(rng, 12, 9);
    const Vector v = random_voltages(rng, 12);
    const LineResistanceParams p{rng.uniform(0.1, 10.0), rng.uniform(0.1, 10.0),
                                 trial % 2 ? Biasing::Double : Biasing::Single};
    const SolveResult r = solve_crossbar(g, v, p);
    CHECK(kcl_violation(g, v, p, r) <= kcl_residual_bound(r.i_out));
    CHECK(r.solver_residual <= kcl_residual_bound(r.i_out));
  }
}

TEST_CASE("solution is linear in the applied voltages") {
  RandomStream rng(44, 0);
  const Matrix g = random_conductances(rng, 8, 6);
  const LineResistanceParams p{3.0, 2.0, Biasing::Single};
  const Vector a = random_voltages(rng, 8);
  const Vector b = random_voltages(rng, 8);
  const CrossbarSolver solver(g, p);
  const Vector sum = solver.solve(a).i_out + 0.5 * solver.solve(b).i_out;
  CHECK(oracle::rel(solver.solve(a + 0.5 * b).i_out, sum) <= 1e-10);
  CHECK(solver.solve(Vector::Zero(8)).i_out.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("cached solver matches one-shot solves") {
  RandomStream rng(45, 0);
  const Matrix g = random_conductances(rng, 10, 7);
  const LineResistanceParams p{1.0, 4.0, Biasing::Double};
  const CrossbarSolver solver(g, p);
  CHECK(solver.rows() == 10);
  CHECK(solver.cols() == 7);
  for (int k = 0; k < 5; ++k) {
    const Vector v = random_voltages(rng, 10);
    CHECK(solver.solve(v).i_out == solve_crossbar(g, v, p).i_out);
  }
  CHECK_THROWS_AS(solver.solve(Vector::Zero(3)), ShapeError);
}

TEST_CASE("deviation from the ideal product grows with wire resistance") {
  RandomStream pick(46, 0);
  const Matrix g = random_conductances(pick, 16, 16);
  double previous = -1.0;
  for (const double r : {0.0, 1.0, 2.0, 5.0, 10.0}) {
    RandomStream rng(46, 1);
    const double dev = mean_abs_deviation(g, {r, r, Biasing::Single}, rng, 10);
    CHECK(dev >= previous);
    previous = dev;
  }
}

TEST_CASE("double biasing is mirror symmetric and reduces IR drop") {
  RandomStream rng(47, 0);
  const Matrix g = random_conductances(rng, 9, 7);
  const Vector v = random_voltages(rng, 9);
  const LineResistanceParams dbl{5.0, 5.0, Biasing::Double};
  const Vector base = solve_crossbar(g, v, dbl).i_out;
  const Matrix col_flipped = g.rowwise().reverse();
  CHECK(oracle::rel(solve_crossbar(col_flipped, v, dbl).i_out, base.reverse()) <= 1e-10);
  const Matrix row_flipped = g.colwise().reverse();
  CHECK(oracle::rel(solve_crossbar(row_flipped, v.reverse(), dbl).i_out, base) <= 1e-10);

  RandomStream a(48, 0);
  RandomStream b(48, 0);
  const Matrix big = random_conductances(rng, 16, 16);
  CHECK(mean_abs_deviation(big, dbl, a, 10) <
        mean_abs_deviation(big, {5.0, 5.0, Biasing::Single}, b, 10));
}

TEST_CASE("parameter and shape validation") {
  CHECK_THROWS_AS(solve_crossbar(Matrix::Ones(2, 2), Vector::Ones(3), {}), ShapeError);
  CHECK_THROWS_AS(solve_crossbar(Matrix::Ones(2, 2), Vector::Ones(2), {-1.0, 0.0}), ParameterError);
  CHECK_THROWS_AS(CrossbarSolver(Matrix::Constant(2, 2, -1e-5), {1.0, 1.0}), Error);
  CHECK(biasing_from_string(to_string(Biasing::Double)) == Biasing::Double);
  CHECK_THROWS_AS(biasing_from_string("triple"), LookupError);
}

TEST_CASE("tile ranges cover the array once") {
  const auto tiles = tile_ranges(10, 7, {4, 3});
  CHECK(tiles.size() == 9);
  Eigen::MatrixXi hits = Eigen::MatrixXi::Zero(10, 7);
  for (const TileRange& t : tiles) {
    CHECK(t.rows <= 4);
    CHECK(t.cols <= 3);
    hits.block(t.row0, t.col0, t.rows, t.cols).array() += 1;
  }
  CHECK((hits.array() == 1).all());
  CHECK_THROWS_AS(tile_ranges(4, 4, {0, 2}), ParameterError);
}

TEST_CASE("tiling") {
  RandomStream rng(49, 0);
  const Matrix g = random_conductances(rng, 16, 16);
  const Vector v = random_voltages(rng, 16);
  SUBCASE("one tile equals the untiled solve") {
    const LineResistanceParams p{2.0, 2.0};
    CHECK(oracle::rel(tile_and_solve(g, v, p, {16, 16}), solve_crossbar(g, v, p).i_out) <= 1e-12);
    CHECK(oracle::rel(tile_and_solve(g, v, p, {64, 64}), solve_crossbar(g, v, p).i_out) <= 1e-12);
  }
  SUBCASE("ideal wires make tiling exact") {
    CHECK(oracle::rel(tile_and_solve(g, v, {}, {5, 3}), oracle::loop_matvec(v, g)) <= 1e-12);
  }
  SUBCASE("smaller tiles reduce IR drop") {
    const LineResistanceParams p{2.0, 2.0};
    const Vector ideal = g.transpose() * v;
    const double untiled = (solve_crossbar(g, v, p).i_out - ideal).cwiseAbs().mean();
    const double tiled = (tile_and_solve(g, v, p, {4, 4}) - ideal).cwiseAbs().mean();
    CHECK(tiled < untiled);
  }
}
