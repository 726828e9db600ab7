#pragma once

#include <array>
#include <cstdint>

namespace onestep {

/// Philox4x32-10 counter-based generator. A draw is a pure function of
/// (key, counter), so any replication/observation can be generated in any
/// order on any thread.
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  explicit Philox4x32(Key key) : key_(key) {}
  explicit Philox4x32(std::uint64_t seed)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

  Counter operator()(Counter ctr) const;

 private:
  Key key_;
};

/// Uniform double in (0, 1) built from 52 random bits.
double open_unit(std::uint32_t hi, std::uint32_t lo);

enum class NoiseShape { gaussian, scaled_uniform, scaled_laplace };

/// Zero-mean, unit-variance draw for observation `index` of replication
/// `replication` under `seed`.
double standard_noise(NoiseShape shape, std::uint64_t seed, std::uint64_t replication,
                      std::uint64_t index);

}  // namespace onestep
