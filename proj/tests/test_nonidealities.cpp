#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "xbarsim/nonidealities.hpp"

using namespace xbarsim;

namespace {

const ConductanceWindow kWindow(1e-5, 1e-4);

Matrix mid_window(Eigen::Index m, Eigen::Index n) {
  return Matrix::Constant(m, n, kWindow.g_avg());
}

}  // namespace

TEST_CASE("stuck cell examples") {
  const RandomStream stream(31, 0);
  SUBCASE("p = 0") {
    const StuckResult r = apply_stuck(mid_window(4, 5), {0.0, StuckMode::AtGOn}, kWindow, stream);
    CHECK(r.conductances == mid_window(4, 5));
    CHECK(r.mask.empty());
  }
  SUBCASE("p = 1 at G_off") {
    const StuckResult r = apply_stuck(mid_window(4, 5), {1.0, StuckMode::AtGOff}, kWindow, stream);
    CHECK((r.conductances.array() == kWindow.g_off()).all());
    CHECK(r.mask.count() == 20);
  }
  SUBCASE("p = 1 at G_on") {
    const StuckResult r = apply_stuck(mid_window(3, 3), {1.0, StuckMode::AtGOn}, kWindow, stream);
    CHECK((r.conductances.array() == kWindow.g_on()).all());
  }
  SUBCASE("random level stays in the window") {
    const StuckResult r =
        apply_stuck(mid_window(30, 30), {1.0, StuckMode::AtRandomLevel}, kWindow, stream);
    CHECK((r.conductances.array() >= kWindow.g_off()).all());
    CHECK((r.conductances.array() <= kWindow.g_on()).all());
    CHECK(r.conductances == r.mask.value);
  }
  SUBCASE("invalid probability") {
    CHECK_THROWS_AS(apply_stuck(mid_window(1, 1), {1.5, StuckMode::AtGOff}, kWindow, stream),
                    ParameterError);
  }
}

TEST_CASE("stuck fraction at p = 0.05 on 100 x 100") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const StuckResult r =
        apply_stuck(mid_window(100, 100), {0.05, StuckMode::AtGOff}, kWindow, RandomStream(seed, 7));
    const double fraction = static_cast<double>(r.mask.count()) / 1e4;
    CHECK(fraction >= 0.037);
    CHECK(fraction <= 0.064);
  }
}

TEST_CASE("stuck application is deterministic and cell-local") {
  const RandomStream stream(32, 1);
  const StuckSpec spec{0.3, StuckMode::AtRandomLevel};
  const StuckResult a = apply_stuck(mid_window(20, 10), spec, kWindow, stream);
  const StuckResult b = apply_stuck(mid_window(20, 10), spec, kWindow, stream);
  CHECK(a.mask == b.mask);
  CHECK(a.conductances == b.conductances);
  // a sub-array sees the same faults in the shared cells
  const StuckResult c = apply_stuck(mid_window(7, 4), spec, kWindow, stream);
  CHECK(c.mask.stuck == a.mask.stuck.topLeftCorner(7, 4));
}

TEST_CASE("device-to-device variation") {
  const RandomStream stream(33, 0);
  CHECK(apply_d2d(mid_window(5, 5), {0.0}, kWindow, stream) == mid_window(5, 5));

  SUBCASE("median factor is 1") {
    // wide window so nothing is clipped
    const ConductanceWindow wide(1e-9, 1.0);
    const Matrix g = Matrix::Constant(1000, 100, 1e-3);
    const Matrix out = apply_d2d(g, {0.1}, wide, stream);
    std::vector<double> factors(out.size());
    for (Eigen::Index k = 0; k < out.size(); ++k) factors[k] = out.reshaped()[k] / 1e-3;
    std::nth_element(factors.begin(), factors.begin() + factors.size() / 2, factors.end());
    const double median = factors[factors.size() / 2];
    CHECK(median >= 0.997);
    CHECK(median <= 1.003);
  }
  SUBCASE("clipped to the window") {
    const Matrix out = apply_d2d(mid_window(50, 50), {2.0}, kWindow, stream);
    CHECK((out.array() >= kWindow.g_off()).all());
    CHECK((out.array() <= kWindow.g_on()).all());
    CHECK((out.array() == kWindow.g_on()).any());
  }
  CHECK_THROWS_AS(apply_d2d(mid_window(1, 1), {-0.1}, kWindow, stream), ParameterError);
}

TEST_CASE("I-V nonlinearity examples") {
  const double g = 1e-3;
  const IVNonlinearityParam ohmic{0.0, 0.2};
  const IVNonlinearityParam curved{2.0, 0.2};
  CHECK(iv_current(g, 0.13, ohmic) == g * 0.13);
  for (const double gamma : {0.5, 1.0, 2.0, 5.0}) {
    CHECK(iv_current(g, 0.2, {gamma, 0.2}) == doctest::Approx(g * 0.2).epsilon(1e-15));
  }
  const double half = iv_current(g, 0.1, curved) / (g * 0.2);
  CHECK(half == doctest::Approx(std::sinh(1.0) / std::sinh(2.0)).epsilon(1e-14));
  CHECK(half == doctest::Approx(0.3240).epsilon(1e-4));
  CHECK_THROWS_AS(iv_current(g, 0.25, curved), RangeError);
  CHECK_THROWS_AS(IVNonlinearityParam({-1.0, 0.2}).validate(), ParameterError);
}

TEST_CASE("I-V curve is odd, monotone and Ohmic in the small-gamma limit") {
  const double g = 2e-5;
  for (const double gamma : {0.0, 0.3, 2.0, 6.0}) {
    const IVNonlinearityParam p{gamma, 0.2};
    double previous = -INFINITY;
    for (int k = -100; k <= 100; ++k) {
      const double v = 0.2 * k / 100.0;
      const double i = iv_current(g, v, p);
      REQUIRE(iv_current(g, -v, p) == -i);
      REQUIRE(i > previous);
      previous = i;
    }
  }
  const IVNonlinearityParam tiny{1e-6, 0.2};
  for (int k = -20; k <= 20; ++k) {
    if (k == 0) continue;
    const double v = 0.2 * k / 20.0;
    CHECK(std::abs(iv_current(g, v, tiny) - g * v) <= 1e-9 * std::abs(g * v));
  }
}

TEST_CASE("secant conductance matches I / V") {
  const IVNonlinearityParam p{2.0, 0.2};
  const double g = 5e-5;
  for (const double v : {-0.2, -0.05, 0.01, 0.15}) {
    CHECK(secant_conductance(g, v, p) == doctest::Approx(iv_current(g, v, p) / v).epsilon(1e-13));
  }
  CHECK(secant_conductance(g, 0.0, p) == doctest::Approx(g * 2.0 / std::sinh(2.0)));
}

namespace {

struct ChainStats {
  double high_fraction;
  double mean_high_dwell;
  double mean_low_dwell;
};

ChainStats chain_stats(const std::vector<double>& m) {
  std::vector<int> high_runs;
  std::vector<int> low_runs;
  int high = 0;
  int run = 1;
  for (std::size_t k = 0; k < m.size(); ++k) {
    high += m[k] != 1.0;
    if (k + 1 < m.size() && m[k + 1] == m[k]) {
      ++run;
      continue;
    }
    // skip the censored first and last runs
    if (k + 1 < m.size() && static_cast<int>(k) + 1 != run) (m[k] != 1.0 ? high_runs : low_runs).push_back(run);
    run = 1;
  }
  auto mean = [](const std::vector<int>& v) {
    double s = 0.0;
    for (int x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  return {static_cast<double>(high) / static_cast<double>(m.size()), mean(high_runs), mean(low_runs)};
}

}  // namespace

TEST_CASE("random telegraph noise") {
  SUBCASE("delta = 0 gives unit multipliers") {
    RandomStream s(34, 0);
    const auto m = rtn_multipliers({0.0, 2.0, 8.0}, 100, s);
    CHECK(std::all_of(m.begin(), m.end(), [](double x) { return x == 1.0; }));
  }
  SUBCASE("stationary fraction and dwell times") {
    const RTNParams p{0.1, 2.0, 8.0};
    CHECK(p.stationary_high_fraction() == doctest::Approx(0.2));
    RandomStream s(35, 0);
    const auto m = rtn_multipliers(p, 100000, s);
    for (double x : m) REQUIRE((x == 1.0 || x == 1.1));
    const ChainStats stats = chain_stats(m);
    CHECK(std::abs(stats.high_fraction - 0.2) <= 0.02);
    CHECK(std::abs(stats.mean_high_dwell - 2.0) <= 0.2);
    CHECK(std::abs(stats.mean_low_dwell - 8.0) <= 0.8);
  }
  SUBCASE("seeded determinism") {
    RandomStream a(36, 0);
    RandomStream b(36, 0);
    CHECK(rtn_multipliers({0.2, 3.0, 5.0}, 1000, a) == rtn_multipliers({0.2, 3.0, 5.0}, 1000, b));
  }
  SUBCASE("parameter errors") {
    RandomStream s(37, 0);
    CHECK_THROWS_AS(rtn_multipliers({0.1, 0.5, 8.0}, 10, s), ParameterError);
    CHECK_THROWS_AS(rtn_multipliers({0.1, 2.0, 8.0}, 0, s), ParameterError);
  }
}

TEST_CASE("stuck mode names") {
  for (const auto mode : {StuckMode::AtGOff, StuckMode::AtGOn, StuckMode::AtRandomLevel}) {
    CHECK(stuck_mode_from_string(to_string(mode)) == mode);
  }
  CHECK_THROWS_AS(stuck_mode_from_string("sideways"), LookupError);
}
