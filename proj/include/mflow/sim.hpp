#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mflow/decomp.hpp"
#include "mflow/density.hpp"

namespace mflow {

enum class DomainPolicy { error, clamp_to_box, absorb };

struct SimConfig {
  double dt = 1e-3;
  double t0 = 0.0;
  double t1 = 1.0;
  int n_paths = 1;
  std::uint64_t seed = 0;
  DomainPolicy policy = DomainPolicy::error;
};

struct Snapshot {
  double t;            // snapped to the step lattice
  double requested_t;  // as asked
  Eigen::MatrixXd points;  // d x n_paths, absorbed columns frozen
};

/// Simulated path collection. Absorbed paths are flagged and excluded from
/// points_at(); their count is reported in the metadata.
struct Ensemble {
  std::vector<Snapshot> snapshots;
  std::vector<std::uint8_t> absorbed;
  std::vector<std::int64_t> clamp_events;  // per path
  SimConfig config;
  std::string warning;  // set when >1% of paths were absorbed

  int absorbed_count() const;
  std::int64_t total_clamp_events() const;

  /// Non-absorbed points at a recorded time (matches either the snapped or
  /// the requested value). Throws UNKNOWN_TIME listing the available times.
  Eigen::MatrixXd points_at(double t) const;
};

/// One explicit step x' = x + b(x,t) dt + sqrt(2 Sigma(x,t)) sqrt(dt) z.
Eigen::VectorXd step_euler_maruyama(const SdeSpec& sde,
                                    const Eigen::Ref<const Eigen::VectorXd>& x, double t,
                                    double dt, const Eigen::Ref<const Eigen::VectorXd>& noise);

/// Walks n_paths independent paths from the given initial points (one per
/// column). Noise for (path i, step k) comes from a counter-based stream
/// keyed by (seed, i, k), so results are bit-identical for any thread count.
Ensemble simulate_ensemble(const SdeSpec& sde, const Eigen::MatrixXd& init, const SimConfig& cfg,
                           const std::vector<double>& snapshot_times);

/// Initial points drawn from the exact sampler at t0 (seed derived from
/// cfg.seed).
Ensemble simulate_ensemble(const SdeSpec& sde, const DensityPath& init_path, const SimConfig& cfg,
                           const std::vector<double>& snapshot_times);

/// CSV export, header t,path_id,x1,...,xd (absorbed paths skipped).
void write_snapshots_csv(const std::string& path, const Ensemble& ensemble);

}  // namespace mflow
