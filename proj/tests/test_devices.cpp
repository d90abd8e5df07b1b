#include <doctest.h>

#include <cmath>
#include <string>

#include "xbarsim/devices.hpp"
#include "xbarsim/random.hpp"

using namespace xbarsim;

TEST_CASE("device presets") {
  CHECK(preset("FeFET").bits == 5);
  const DeviceModel stt = preset("STT-MRAM");
  CHECK(stt.on_off_ratio >= 1.5);
  CHECK(stt.on_off_ratio <= 2.0);
  CHECK(stt.on_off_min == 1.5);
  CHECK(stt.on_off_max == 2.0);
  CHECK(preset("PCM").drift_nu > 0.0);
  for (const std::string& name : preset_names()) {
    const DeviceModel m = preset(name);
    CHECK(m.name == name);
    CHECK(m.g_off == 10e-6);
    // geometric midpoint of the tabulated range
    CHECK(m.on_off_ratio == doctest::Approx(std::sqrt(m.on_off_min * m.on_off_max)));
    if (name != "PCM" && name != "RRAM") CHECK(m.drift_nu == 0.0);
  }
  CHECK(preset("RRAM").drift_nu < preset("PCM").drift_nu);
  CHECK(preset_names().size() == 9);
}

TEST_CASE("unknown preset lists the valid names") {
  try {
    preset("DRAM");
    FAIL("expected LookupError");
  } catch (const LookupError& e) {
    const std::string what = e.what();
    CHECK(what.find("DRAM") != std::string::npos);
    CHECK(what.find("FeFET") != std::string::npos);
    CHECK(what.find("Li-ion") != std::string::npos);
  }
}

TEST_CASE("quantize to 2 bits on [0.1, 1.1] mS") {
  const ConductanceWindow w(0.1e-3, 1.1e-3);
  const double levels[] = {0.1e-3, 0.1e-3 + 1.0e-3 / 3.0, 0.1e-3 + 2.0e-3 / 3.0, 1.1e-3};
  for (double level : levels) CHECK(quantize(level, w, 2) == doctest::Approx(level).epsilon(1e-14));
  CHECK(quantize(0.2e-3, w, 2) == doctest::Approx(levels[0]).epsilon(1e-14));
  CHECK(quantize(0.3e-3, w, 2) == doctest::Approx(levels[1]).epsilon(1e-14));
  CHECK(quantize(1.0e-3, w, 2) == doctest::Approx(levels[3]).epsilon(1e-14));
  // halfway between the two lowest levels goes up
  CHECK(quantize(0.1e-3 + 0.5e-3 / 3.0, w, 2) == doctest::Approx(levels[1]).epsilon(1e-14));
}

TEST_CASE("quantize edge cases") {
  const ConductanceWindow w(1e-5, 1e-4);
  CHECK(quantize(3.3333e-5, w, 52) == 3.3333e-5);
  CHECK(quantize(3.3333e-5, w, 60) == 3.3333e-5);
  CHECK_THROWS_AS(quantize(3e-5, w, 0), ParameterError);
  CHECK_THROWS_AS(quantize(2e-4, w, 4), RangeError);
  const Matrix g{{1e-5, 5e-5}, {7e-5, 1e-4}};
  const Matrix q = quantize(g, w, 3);
  for (Eigen::Index k = 0; k < g.size(); ++k) CHECK(q.reshaped()[k] == quantize(g.reshaped()[k], w, 3));
}

TEST_CASE("quantize is idempotent and within half a step") {
  RandomStream rng(21, 0);
  const ConductanceWindow w(1e-5, 2.5e-4);
  for (int bits = 1; bits <= 10; ++bits) {
    const double bound = w.span() / (2.0 * (std::ldexp(1.0, bits) - 1.0));
    for (int k = 0; k < 500; ++k) {
      const double g = rng.uniform(w.g_off(), w.g_on());
      const double q = quantize(g, w, bits);
      REQUIRE(quantize(q, w, bits) == q);
      REQUIRE(std::abs(q - g) <= bound * (1 + 1e-12));
      REQUIRE(w.contains(q));
    }
  }
}

namespace {

DeviceModel unit_device(bool linear, double alpha) {
  DeviceModel m;
  m.name = "unit";
  m.g_off = 1.0;
  m.on_off_ratio = 2.0;  // window [1, 2] has unit span
  m.linearity = linear ? ProgrammingLinearity::High : ProgrammingLinearity::Low;
  m.linear_programming = linear;
  m.programming_alpha = alpha;
  return m;
}

}  // namespace

TEST_CASE("pulse programming examples") {
  const DeviceModel lin = unit_device(true, 0.1);
  const ConductanceWindow normalized(1.0, 2.0);
  SUBCASE("already at target") {
    const PulseResult r = program_pulses(1.42, 1.42, lin, normalized, 10);
    CHECK(r.conductance == 1.42);
    CHECK(r.pulses == 0);
  }
  SUBCASE("constant steps reach the nearest level") {
    const PulseResult r = program_pulses(1.0, 1.35, lin, normalized, 100);
    const double reached = r.conductance - 1.0;
    CHECK((std::abs(reached - 0.3) < 1e-12 || std::abs(reached - 0.4) < 1e-12));
    CHECK(r.pulses <= 4);
  }
  SUBCASE("budget of zero pulses") {
    const PulseResult r = program_pulses(1.0, 1.9, lin, normalized, 0);
    CHECK(r.conductance == 1.0);
    CHECK(r.pulses == 0);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(program_pulses(1.0, 2.5, lin, normalized, 10), RangeError);
    CHECK_THROWS_AS(program_pulses(1.0, 1.5, preset("STT-MRAM"), 10), ParameterError);
  }
}

TEST_CASE("saturating potentiation steps shrink toward G_on") {
  const DeviceModel sat = unit_device(false, 0.1);
  const ConductanceWindow w(1.0, 2.0);
  double previous_g = 1.0;
  double previous_step = INFINITY;
  for (int n = 1; n <= 30; ++n) {
    const double g = program_pulses(1.0, 2.0, sat, w, n).conductance;
    const double step = g - previous_g;
    REQUIRE(step > 0.0);
    REQUIRE(step < previous_step);
    previous_step = step;
    previous_g = g;
  }
}

TEST_CASE("pulse programming stays in the window within budget") {
  RandomStream rng(22, 0);
  for (const bool linear : {true, false}) {
    const DeviceModel m = unit_device(linear, linear ? 0.03 : 0.2);
    const ConductanceWindow w(1.0, 2.0);
    for (int k = 0; k < 2000; ++k) {
      const double start = rng.uniform(1.0, 2.0);
      const double target = rng.uniform(1.0, 2.0);
      const int budget = static_cast<int>(rng.next_u64() % 50);
      const PulseResult r = program_pulses(start, target, m, w, budget);
      REQUIRE(w.contains(r.conductance));
      REQUIRE(r.pulses >= 0);
      REQUIRE(r.pulses <= budget);
    }
  }
}

TEST_CASE("saturating programming is worse near G_on than near G_avg") {
  const DeviceModel rram = preset("RRAM");
  const ConductanceWindow w = rram.window();
  RandomStream rng(23, 0);
  const int budget = 20;
  double err_on = 0.0;
  double err_avg = 0.0;
  const int n = 200;
  for (int k = 0; k < n; ++k) {
    const double near_on = w.g_on() - 0.05 * w.span() * rng.uniform();
    const double near_avg = w.g_avg() + 0.05 * w.span() * (rng.uniform() - 0.5);
    err_on += std::abs(program_pulses(w.g_off(), near_on, rram, budget).conductance - near_on);
    err_avg += std::abs(program_pulses(w.g_off(), near_avg, rram, budget).conductance - near_avg);
  }
  CHECK(err_on > err_avg);
}

TEST_CASE("drift power law") {
  DeviceModel m = preset("PCM");
  m.drift_nu = 0.1;
  const double g = 0.5 * (m.g_off + m.g_on());
  CHECK(drift(g, 10.0, m) == doctest::Approx(g * std::pow(10.0, -0.1)).epsilon(1e-14));
  CHECK(drift(g, 10.0, m) / g == doctest::Approx(0.794).epsilon(1e-3));
  CHECK(drift(g, 1.0, m) == g);
  CHECK(drift(m.g_off, 1e6, m) == m.g_off);
  CHECK_THROWS_AS(drift(g, 0.5, m), ParameterError);
  const DeviceModel flat = preset("NOR-flash");
  CHECK(drift(3e-5, 1e9, flat) == 3e-5);
}

TEST_CASE("drift is monotone in time and composes") {
  DeviceModel m = preset("PCM");
  const double g = m.g_on();
  double previous = g;
  for (double t = 1.0; t < 1e8; t *= 1.7) {
    const double d = drift(g, t, m);
    REQUIRE(d <= previous);
    previous = d;
  }
  for (const double a : {2.0, 10.0, 37.0}) {
    for (const double b : {1.0, 3.0, 100.0}) {
      CHECK(drift(drift(g, a, m), b, m) == doctest::Approx(drift(g, a * b, m)).epsilon(1e-13));
    }
  }
}
