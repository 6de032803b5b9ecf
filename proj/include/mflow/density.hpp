#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "mflow/grid.hpp"
#include "mflow/schedule.hpp"

namespace mflow {

/// Gaussian family N(m(t), Sigma(t)) with schedule-valued moments. The
/// schedules carry exact time derivatives, so the time derivative of the
/// density is closed-form.
struct GaussianPathParams {
  VectorSchedule mean;
  MatrixSchedule cov;
  double t_max = 1.0;
};

struct MixturePathParams {
  std::vector<GaussianPathParams> components;
  Eigen::VectorXd weights;
  double t_max = 1.0;
};

/// Mollified point cloud: marginal sum_i w_i N(s(t) x_i, s(t)^2 sigma(t)^2 I).
/// Valid only where s(t) > 0 and sigma(t) > 0. The noise enters everywhere
/// through sigma^2, so the schedule stores the variance profile; this also
/// admits profiles like sigma = sqrt(t) whose square is polynomial.
struct EdmScheduleParams {
  Schedule scale;           // s(t)
  Schedule noise_sq;        // sigma(t)^2
  Eigen::MatrixXd atoms;    // one atom per column, d x K
  Eigen::VectorXd weights;  // empty = uniform
  double t_max = 1.0;

  void set_noise(const Schedule& sigma) { noise_sq = sigma.squared(); }
};

namespace detail {
class PathImpl;
}

/// Closed-form time-indexed density family: p, log p, score, dt p, and an
/// exact seeded sampler. Value type; cheap to copy. Evaluation is pure and
/// safe to call concurrently.
class DensityPath {
public:
  DensityPath() = default;
  explicit DensityPath(std::shared_ptr<const detail::PathImpl> impl);

  int dim() const;
  double t_max() const;

  double density(const Eigen::Ref<const Eigen::VectorXd>& x, double t) const;
  double log_density(const Eigen::Ref<const Eigen::VectorXd>& x, double t) const;
  Eigen::VectorXd score(const Eigen::Ref<const Eigen::VectorXd>& x, double t) const;
  double dt_density(const Eigen::Ref<const Eigen::VectorXd>& x, double t) const;

  /// First and second moments at time t (exact for all built-in kinds).
  Eigen::VectorXd mean(double t) const;
  Eigen::MatrixXd covariance(double t) const;

  /// n i.i.d. draws, one point per column; see sample_exact.
  Eigen::MatrixXd sample(double t, int n, std::uint64_t seed) const;

  /// Same family run backwards: q(x,s) = p(x, horizon - s).
  DensityPath time_reversed(double horizon) const;

private:
  std::shared_ptr<const detail::PathImpl> impl_;
};

DensityPath make_gaussian_path(const GaussianPathParams& params);
DensityPath make_mixture_path(const MixturePathParams& params);
DensityPath make_edm_path(const EdmScheduleParams& params);

/// n i.i.d. draws from p(.,t), one point per column. Deterministic in
/// (seed, t, n) and independent of thread schedule.
Eigen::MatrixXd sample_exact(const DensityPath& path, double t, int n, std::uint64_t seed);

struct ValidationThresholds {
  double mass_tol = 1e-3;
  double boundary_ratio_tol = 1e-10;
  double dtp_mass_tol = 1e-4;
};

struct ValidationReport {
  double mass_error = 0.0;      // |integral of p - 1|
  double boundary_ratio = 0.0;  // max p on box boundary / max p
  double dtp_mass = 0.0;        // |integral of dt p|
  bool mass_ok = false;
  bool boundary_ok = false;
  bool dtp_mass_ok = false;
  bool pass() const { return mass_ok && boundary_ok && dtp_mass_ok; }
};

/// Preflight for grid solves: checks normalization, boundary decay and the
/// zero-mass property of dt p on the given box. Report-only.
ValidationReport validate_density(const DensityPath& path, const RegularGrid& grid, double t,
                                  const ValidationThresholds& thresholds = {});

}  // namespace mflow
