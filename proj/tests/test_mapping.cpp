#include <doctest.h>

#include <cmath>
#include <string>

#include "oracles.hpp"
#include "xbarsim/mapping.hpp"
#include "xbarsim/random.hpp"

using namespace xbarsim;

namespace {

constexpr double mS = 1e-3;

Matrix random_matrix(RandomStream& rng, Eigen::Index m, Eigen::Index n, double bound) {
  Matrix w(m, n);
  for (auto& v : w.reshaped()) v = rng.uniform(-bound, bound);
  return w;
}

}  // namespace

TEST_CASE("encode_inputs scales by k_V") {
  const LinearScaling s01(0.1, 1.0);
  CHECK(encode_inputs(Vector::Zero(2), s01) == Vector::Zero(2));
  CHECK(encode_inputs(Vector{{1.0, 2.0}}, s01) == Vector{{0.1, 0.2}});
  CHECK(encode_inputs(Vector{{-1.0}}, LinearScaling(0.2, 1.0)) == Vector{{-0.2}});
}

TEST_CASE("scale factors and windows are validated") {
  CHECK_THROWS_AS(LinearScaling(0.0, 1.0), ParameterError);
  CHECK_THROWS_AS(LinearScaling(1.0, -1.0), ParameterError);
  CHECK_THROWS_AS(ConductanceWindow(0.0, 1.0), ParameterError);
  CHECK_THROWS_AS(ConductanceWindow(2.0, 1.0), ParameterError);
  const ConductanceWindow w(0.1 * mS, 1.1 * mS);
  CHECK(w.g_avg() == doctest::Approx(0.6 * mS));
  CHECK(w.on_off_ratio() == doctest::Approx(11.0));
}

TEST_CASE("differential pair worked values") {
  const ConductanceWindow window(0.1 * mS, 1.1 * mS);

  SUBCASE("zero weight sits at G_avg on both devices") {
    const auto scheme = MappingScheme::differential_pair(window, 1.0, 0.1);
    const ConductancePair p = weights_to_diff_pair(Matrix::Zero(2, 3), scheme);
    CHECK((p.g_plus.array() == window.g_avg()).all());
    CHECK((p.g_minus.array() == window.g_avg()).all());
  }
  SUBCASE("range edges reach G_on and G_off") {
    const double w_max = 2.5;
    const auto scheme = MappingScheme::differential_pair(window, w_max, 0.1);
    CHECK(scheme.scaling().k_G == doctest::Approx(window.span() / w_max));
    const ConductancePair p = weights_to_diff_pair(Matrix{{w_max, -w_max}}, scheme);
    CHECK(p.g_plus(0, 0) == doctest::Approx(window.g_on()).epsilon(1e-14));
    CHECK(p.g_minus(0, 0) == doctest::Approx(window.g_off()).epsilon(1e-14));
    CHECK(p.g_plus(0, 1) == doctest::Approx(window.g_off()).epsilon(1e-14));
    CHECK(p.g_minus(0, 1) == doctest::Approx(window.g_on()).epsilon(1e-14));
  }
  SUBCASE("k_G = 0.5 mS per unit, w = 0.4") {
    // G_avg = 0.6 mS, k_G w / 2 = 0.1 mS
    const auto scheme = MappingScheme::differential_pair(window, 2.0, 0.1, 0.5 * mS);
    const ConductancePair p = weights_to_diff_pair(Matrix{{0.4}}, scheme);
    CHECK(p.g_plus(0, 0) == doctest::Approx(0.7 * mS).epsilon(1e-14));
    CHECK(p.g_minus(0, 0) == doctest::Approx(0.5 * mS).epsilon(1e-14));
  }
}

TEST_CASE("differential pair sums to 2 G_avg exactly and stays in the window") {
  RandomStream rng(11, 0);
  for (int trial = 0; trial < 200; ++trial) {
    const double g_off = rng.uniform(1e-6, 1e-4);
    const ConductanceWindow window(g_off, g_off * rng.uniform(1.2, 1e3));
    const double w_max = rng.uniform(0.1, 10.0);
    const auto scheme = MappingScheme::differential_pair(window, w_max, 0.2);
    Matrix w = random_matrix(rng, 5, 4, w_max);
    w(0, 0) = w_max;
    w(1, 1) = -w_max;
    const ConductancePair p = weights_to_diff_pair(w, scheme);
    REQUIRE(((p.g_plus + p.g_minus).array() == 2.0 * window.g_avg()).all());
    REQUIRE((p.g_plus.array() >= window.g_off()).all());
    REQUIRE((p.g_plus.array() <= window.g_on()).all());
    REQUIRE((p.g_minus.array() >= window.g_off()).all());
    REQUIRE((p.g_minus.array() <= window.g_on()).all());
  }
}

TEST_CASE("out-of-range weights are rejected with their index") {
  const auto scheme = MappingScheme::differential_pair(ConductanceWindow(1e-5, 1e-4), 1.0, 0.1);
  Matrix w = Matrix::Zero(3, 3);
  w(2, 1) = 1.5;
  try {
    weights_to_diff_pair(w, scheme);
    FAIL("expected RangeError");
  } catch (const RangeError& e) {
    CHECK(std::string(e.what()).find("(2, 1)") != std::string::npos);
  }
  w(2, 1) = std::nan("");
  CHECK_THROWS_AS(weights_to_diff_pair(w, scheme), RangeError);
}

TEST_CASE("decode_outputs") {
  const LinearScaling s(0.1, 0.5);
  CHECK(decode_outputs(Vector{{1.0, 2.0}}, Vector{{1.0, 2.0}}, s) == Vector::Zero(2));
  CHECK(decode_outputs(Vector{{0.05}}, Vector{{0.0}}, s)[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(decode_outputs(Vector::Zero(2), Vector::Zero(3), s), ShapeError);
}

TEST_CASE("encode, map, ideal currents, decode reproduces x^T W") {
  RandomStream rng(12, 0);
  for (int trial = 0; trial < 100; ++trial) {
    const auto m = static_cast<Eigen::Index>(1 + rng.next_u64() % 16);
    const auto n = static_cast<Eigen::Index>(1 + rng.next_u64() % 16);
    const double w_max = rng.uniform(0.5, 4.0);
    const Matrix w = random_matrix(rng, m, n, w_max);
    Vector x(m);
    for (auto& v : x) v = rng.uniform(-1, 1);
    const auto scheme = MappingScheme::differential_pair(ConductanceWindow(1e-5, 1e-4), w_max, 0.2);
    const ConductancePair p = weights_to_diff_pair(w, scheme);
    const Vector v = encode_inputs(x, scheme.scaling());
    const Vector y = decode_outputs(oracle::loop_matvec(v, p.g_plus), oracle::loop_matvec(v, p.g_minus),
                                    scheme.scaling());
    REQUIRE(relative_error(y, oracle::loop_matvec(x, w), 1e-12) <= 1e-12);
  }
}

TEST_CASE("doubling k_G while halving w_max_abs leaves outputs unchanged") {
  RandomStream rng(13, 0);
  const ConductanceWindow window(1e-5, 1e-4);
  const Matrix w = random_matrix(rng, 6, 5, 0.5);
  const Vector x = Vector::LinSpaced(6, -1.0, 1.0);
  const auto a = MappingScheme::differential_pair(window, 1.0, 0.2);
  const auto b = MappingScheme::differential_pair(window, 0.5, 0.2, 2.0 * a.scaling().k_G);
  auto decoded = [&](const MappingScheme& s) {
    const ConductancePair p = weights_to_diff_pair(w, s);
    const Vector v = encode_inputs(x, s.scaling());
    return Vector(decode_outputs(matvec_ref(v, p.g_plus), matvec_ref(v, p.g_minus), s.scaling()));
  };
  CHECK(relative_error(decoded(b), decoded(a), 1e-12) <= 1e-12);
}

TEST_CASE("naive and power mappings") {
  SUBCASE("endpoints") {
    const ConductanceWindow window(1e-5, 1e-4);
    const auto scheme = MappingScheme::naive(window, -2.0, 3.0, 0.1);
    const SingleDeviceMapping g = weights_to_naive(Matrix{{-2.0, 3.0}}, scheme);
    CHECK(g.g(0, 0) == window.g_off());
    CHECK(g.g(0, 1) == doctest::Approx(window.g_on()).epsilon(1e-15));
  }
  SUBCASE("on/off ratio 3, w = 0 maps to the midpoint") {
    const auto scheme = MappingScheme::naive(ConductanceWindow(1.0, 3.0), -1.0, 1.0, 0.1);
    const SingleDeviceMapping g = weights_to_naive(Matrix{{0.0}}, scheme);
    CHECK(g.g(0, 0) == 2.0);
    CHECK(g.g_ref == 2.0);
  }
  SUBCASE("power 1 equals naive exactly") {
    const ConductanceWindow window(1e-5, 1e-4);
    const auto naive = MappingScheme::naive(window, -1.0, 1.0, 0.1);
    const auto power = MappingScheme::nonlinear_power(window, -1.0, 1.0, 1.0, 0.1);
    const Matrix w = Matrix::Random(4, 4);
    CHECK(weights_to_naive(w, naive).g == weights_to_naive(w, power).g);
    CHECK(weights_to_naive(w, naive).g_ref == weights_to_naive(w, power).g_ref);
  }
  SUBCASE("power mapping follows ((w - w_min) / range)^p") {
    const ConductanceWindow window(1.0, 5.0);
    const auto scheme = MappingScheme::nonlinear_power(window, 0.0, 2.0, 2.0, 0.1);
    // (1/2)^2 = 1/4 of the span above G_off
    CHECK(single_device_conductance(1.0, scheme) == doctest::Approx(2.0));
  }
  SUBCASE("out of range") {
    const auto scheme = MappingScheme::naive(ConductanceWindow(1.0, 3.0), -1.0, 1.0, 0.1);
    CHECK_THROWS_AS(weights_to_naive(Matrix{{1.5}}, scheme), RangeError);
    CHECK_THROWS_AS(weights_to_diff_pair(Matrix{{0.5}}, scheme), ParameterError);
  }
}

TEST_CASE("mapping variant names") {
  for (const auto v : {MappingVariant::DifferentialPair, MappingVariant::Naive,
                       MappingVariant::NonlinearPower}) {
    CHECK(mapping_variant_from_string(to_string(v)) == v);
  }
  CHECK_THROWS_AS(mapping_variant_from_string("linear"), LookupError);
}
