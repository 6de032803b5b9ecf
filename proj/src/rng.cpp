#include "mflow/rng.hpp"

#include <cmath>
#include <numbers>

namespace mflow {
namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void round_once(std::array<std::uint32_t, 4>& x, const std::array<std::uint32_t, 2>& key) {
  const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * x[0];
  const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * x[2];
  const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
  const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
  const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
  const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
  x = {hi1 ^ x[1] ^ key[0], lo1, hi0 ^ x[3] ^ key[1], lo0};
}

inline double to_unit_interval(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t bits = (static_cast<std::uint64_t>(hi) << 32) | lo;
  // (0,1]: never returns 0, so log() in Box-Muller is safe.
  return static_cast<double>((bits >> 11) + 1) * 0x1.0p-53;
}

}  // namespace

std::array<std::uint32_t, 4> Philox::block(std::uint64_t seed,
                                           const std::array<std::uint32_t, 4>& counter) {
  std::array<std::uint32_t, 4> x = counter;
  std::array<std::uint32_t, 2> key = {static_cast<std::uint32_t>(seed),
                                      static_cast<std::uint32_t>(seed >> 32)};
  round_once(x, key);
  for (int r = 1; r < 10; ++r) {
    key[0] += kWeyl0;
    key[1] += kWeyl1;
    round_once(x, key);
  }
  return x;
}

std::array<double, 2> Philox::uniform2(std::uint64_t seed,
                                       const std::array<std::uint32_t, 4>& counter) {
  const auto b = block(seed, counter);
  return {to_unit_interval(b[0], b[1]), to_unit_interval(b[2], b[3])};
}

std::array<double, 2> Philox::normal2(std::uint64_t seed,
                                      const std::array<std::uint32_t, 4>& counter) {
  const auto u = uniform2(seed, counter);
  const double r = std::sqrt(-2.0 * std::log(u[0]));
  const double theta = 2.0 * std::numbers::pi * u[1];
  return {r * std::cos(theta), r * std::sin(theta)};
}

void NormalStream::fill(std::uint64_t id0, std::uint32_t id1,
                        Eigen::Ref<Eigen::VectorXd> out) const {
  const auto n = out.size();
  for (Eigen::Index i = 0; i < n; i += 2) {
    const std::array<std::uint32_t, 4> ctr = {static_cast<std::uint32_t>(id0),
                                              static_cast<std::uint32_t>(id0 >> 32) ^ tag_, id1,
                                              static_cast<std::uint32_t>(i / 2)};
    const auto z = Philox::normal2(seed_, ctr);
    out[i] = z[0];
    if (i + 1 < n) out[i + 1] = z[1];
  }
}

double NormalStream::uniform(std::uint64_t id0, std::uint32_t id1) const {
  const std::array<std::uint32_t, 4> ctr = {static_cast<std::uint32_t>(id0),
                                            static_cast<std::uint32_t>(id0 >> 32) ^ tag_, id1,
                                            0xFFFFFFFFu};
  return Philox::uniform2(seed_, ctr)[0];
}

}  // namespace mflow
