#pragma once

#include <array>
#include <cstdint>

#include <Eigen/Dense>

namespace mflow {

/// Philox4x32-10 counter-based generator. Stateless: every output block is a
/// pure function of (key, counter), so draws keyed by (seed, path, step) are
/// identical no matter how work is scheduled across threads.
struct Philox {
  static std::array<std::uint32_t, 4> block(std::uint64_t seed,
                                            const std::array<std::uint32_t, 4>& counter);

  /// Two uniforms in (0,1] from one block (53-bit mantissas).
  static std::array<double, 2> uniform2(std::uint64_t seed,
                                        const std::array<std::uint32_t, 4>& counter);

  /// Two standard normals via Box-Muller on one block.
  static std::array<double, 2> normal2(std::uint64_t seed,
                                       const std::array<std::uint32_t, 4>& counter);
};

/// Keyed stream of standard-normal vectors. `id0`/`id1` select the logical
/// substream (e.g. path and step index); consecutive blocks within one call
/// use the trailing counter word.
class NormalStream {
public:
  NormalStream(std::uint64_t seed, std::uint32_t stream_tag) : seed_(seed), tag_(stream_tag) {}

  /// Fills `out` with normals for substream (id0, id1).
  void fill(std::uint64_t id0, std::uint32_t id1, Eigen::Ref<Eigen::VectorXd> out) const;

  /// Single uniform in (0,1] for substream (id0, id1).
  double uniform(std::uint64_t id0, std::uint32_t id1) const;

private:
  std::uint64_t seed_;
  std::uint32_t tag_;
};

}  // namespace mflow
