#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "mflow/decomp.hpp"
#include "mflow/density.hpp"
#include "mflow/grid.hpp"
#include "mflow/sim.hpp"

namespace mflow {

/// Grid balance check of dt p + div J with J = b p - div(D p). The current is
/// assembled nodewise from closed forms (b, p, score, field divergences); the
/// outer divergence uses 2nd-order central differences; norms run over the
/// interior mask (two-cell ring excluded).
struct ResidualReport {
  ScalarGridField residual;   // dt p + div J on the grid
  double rel = 0.0;           // ||R|| / denom, see below
  double l2_residual = 0.0;
  double l2_dtp = 0.0;
  double l2_div_j = 0.0;
  double l2_div_j_parts = 0.0;  // no-cancellation scale sum_i |d_i J_i|
  int interior_ring = 2;
};

ResidualReport fokker_planck_residual(const SdeSpec& sde, const DensityPath& path,
                                      const RegularGrid& grid, double t);

/// Cancellation identities of the marginal-preserving fields.
/// skew: div of the analytic current p (Q score + div Q) vanishes;
/// psd:  the analytic current p (D score + div D) equals div(D p).
/// Returns the interior relative L2 norm of the discrete violation, measured
/// against the no-cancellation magnitude of the same derivatives.
double dq_preservation_check(const MatrixField& field, const DensityPath& path,
                             const RegularGrid& grid, double t);

/// Two-sample statistics between point sets (one point per column).
struct DistanceReport {
  double sliced_w1 = 0.0;
  double energy = 0.0;
  double baseline_sliced_w1 = 0.0;  // exact-vs-exact calibration, when available
  double baseline_energy = 0.0;
  int n_projections = 0;
  std::uint64_t seed = 0;
  bool has_baseline = false;
  bool pass = false;  // both statistics <= 3x their baselines

  static constexpr double kPassFactor = 3.0;
};

DistanceReport marginal_distance(const Eigen::MatrixXd& samples_a, const Eigen::MatrixXd& samples_b,
                                 int n_projections, std::uint64_t seed);

/// Same statistics plus the self-calibrating baseline: two fresh exact sample
/// sets of the same size drawn from the path at time t.
DistanceReport marginal_distance_with_baseline(const Eigen::MatrixXd& samples,
                                               const DensityPath& path, double t,
                                               int n_projections, std::uint64_t seed);

struct InvarianceEntry {
  int bundle_index = 0;
  double t = 0.0;
  DistanceReport report;
};

/// Simulates every bundle (independently seeded by index) and compares each
/// snapshot against exact samples at matched times.
std::vector<InvarianceEntry> marginal_invariance_suite(const DensityPath& path,
                                                       const std::vector<DecompositionBundle>& bundles,
                                                       const SimConfig& cfg,
                                                       const std::vector<double>& times,
                                                       int n_projections, std::uint64_t stat_seed);

}  // namespace mflow
