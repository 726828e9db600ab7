#include "onestep/random.hpp"

#include <cmath>
#include <numbers>

namespace onestep {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53;
constexpr std::uint32_t kMul1 = 0xCD9E8D57;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

}  // namespace

Philox4x32::Counter Philox4x32::operator()(Counter ctr) const {
  Key key = key_;
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kMul0, ctr[0], hi0, lo0);
    mulhilo(kMul1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kWeyl0;
    key[1] += kWeyl1;
  }
  return ctr;
}

double open_unit(std::uint32_t hi, std::uint32_t lo) {
  // 52 bits so that the midpoint offset stays exactly representable below 1.
  const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 12;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-52;
}

double standard_noise(NoiseShape shape, std::uint64_t seed, std::uint64_t replication,
                      std::uint64_t index) {
  const Philox4x32 gen(seed);
  const auto out = gen({static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                        static_cast<std::uint32_t>(replication),
                        static_cast<std::uint32_t>(replication >> 32)});
  const double u1 = open_unit(out[0], out[1]);
  const double u2 = open_unit(out[2], out[3]);
  switch (shape) {
    case NoiseShape::gaussian:
      return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    case NoiseShape::scaled_uniform:
      return std::numbers::sqrt3 * (2.0 * u1 - 1.0);
    case NoiseShape::scaled_laplace: {
      // Laplace with scale 1/sqrt(2) has unit variance.
      const double e = -std::log(u1);
      return (u2 < 0.5 ? -e : e) / std::numbers::sqrt2;
    }
  }
  return 0.0;
}

}  // namespace onestep
