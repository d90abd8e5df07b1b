#pragma once

#include <cstdint>
#include <initializer_list>

namespace xbarsim {

// Counter-based generator: draw k of stream (seed, stream_id) is a pure hash
// of (seed, stream_id, k), so sequences are identical on every platform and
// any substream can be addressed directly without advancing a parent.
class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64() noexcept;

  // Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept;
  // Standard normal (Box-Muller, two uniforms per draw).
  double normal() noexcept;
  double normal(double mean, double stddev) noexcept;
  // exp(N(mu, sigma^2)); median exp(mu).
  double lognormal(double mu, double sigma) noexcept;

  // Child stream addressed by a tag path. The child does not depend on how
  // many values were drawn from the parent.
  RandomStream fork(std::initializer_list<std::uint64_t> path) const noexcept;
  RandomStream fork(std::uint64_t tag) const noexcept { return fork({tag}); }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

RandomStream seeded_stream(std::uint64_t seed, std::uint64_t stream_id);

// splitmix64 finalizer; also used to derive stream ids.
std::uint64_t mix64(std::uint64_t value) noexcept;

}  // namespace xbarsim
