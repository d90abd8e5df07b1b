#include "xbarsim/core.hpp"

#include <cmath>
#include <numbers>

#include "xbarsim/random.hpp"

namespace xbarsim {

Vector finite_diff_grad(const ScalarFunction& f, const Vector& w, double h) {
  if (!(h > 0.0) || !std::isfinite(h)) {
    throw ParameterError("core", "finite_diff_grad: step must be positive and finite");
  }
  Vector grad(w.size());
  Vector probe = w;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    probe[i] = w[i] + h;
    const double up = f(probe);
    probe[i] = w[i] - h;
    const double down = f(probe);
    probe[i] = w[i];
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("core", "finite_diff_grad: non-finite function value at coordinate " +
                                     std::to_string(i));
    }
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

namespace {
constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
constexpr std::uint64_t kStreamSalt = 0xd1b54a32d192ed03ULL;
constexpr std::uint64_t kForkSalt = 0x8cb92ba72f3d8dd7ULL;
}  // namespace

std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

RandomStream::RandomStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id), key_(mix64(seed ^ mix64(stream_id + kStreamSalt))) {}

std::uint64_t RandomStream::next_u64() noexcept {
  const std::uint64_t index = counter_++;
  return mix64(key_ + mix64((index + 1) * kGolden));
}

double RandomStream::uniform() noexcept {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RandomStream::uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

double RandomStream::normal() noexcept {
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double RandomStream::normal(double mean, double stddev) noexcept {
  return mean + stddev * normal();
}

double RandomStream::lognormal(double mu, double sigma) noexcept {
  return std::exp(mu + sigma * normal());
}

RandomStream RandomStream::fork(std::initializer_list<std::uint64_t> path) const noexcept {
  std::uint64_t id = stream_id_;
  for (const std::uint64_t tag : path) {
    id = mix64(id ^ mix64(tag + kForkSalt));
  }
  return RandomStream(seed_, id);
}

RandomStream seeded_stream(std::uint64_t seed, std::uint64_t stream_id) {
  return RandomStream(seed, stream_id);
}

}  // namespace xbarsim
