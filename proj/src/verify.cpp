#include "mflow/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mflow/error.hpp"
#include "mflow/parallel.hpp"
#include "mflow/poisson.hpp"
#include "mflow/rng.hpp"

namespace mflow {
namespace {

constexpr std::uint32_t kProjectionTag = 0xD100u;
constexpr std::uint64_t kExactSalt = 0xA5A5A5A5ull;
constexpr std::uint64_t kBaselineSaltA = 0x0B0B0B0Bull;
constexpr std::uint64_t kBaselineSaltB = 0x0C0C0C0Cull;

// Central difference along one axis; first-order one-sided at the axis ends
// (those nodes are excluded by the interior mask anyway).
Eigen::VectorXd axis_derivative(const RegularGrid& g, const Eigen::VectorXd& v, int axis) {
  const int n = g.count(axis);
  std::int64_t stride = 1;
  for (int a = axis + 1; a < g.dim(); ++a) stride *= g.count(a);
  const double inv_2h = 1.0 / (2.0 * g.spacing(axis));
  const double inv_h = 1.0 / g.spacing(axis);
  Eigen::VectorXd out(g.size());
  parallel_for(g.size(), [&](std::int64_t i) {
    const int ai = g.unravel(i)[static_cast<std::size_t>(axis)];
    if (ai == 0)
      out[i] = (v[i + stride] - v[i]) * inv_h;
    else if (ai == n - 1)
      out[i] = (v[i] - v[i - stride]) * inv_h;
    else
      out[i] = (v[i + stride] - v[i - stride]) * inv_2h;
  });
  return out;
}

double interior_l2(const RegularGrid& g, const Eigen::VectorXd& v, int ring) {
  double acc = 0.0;
  std::int64_t count = 0;
  for (std::int64_t i = 0; i < g.size(); ++i) {
    if (!g.in_interior(i, ring)) continue;
    acc += v[i] * v[i];
    ++count;
  }
  return count > 0 ? std::sqrt(acc / static_cast<double>(count)) : 0.0;
}

// Analytic current of a field's drift contribution: p (A score + div A).
std::vector<Eigen::VectorXd> field_current(const MatrixField& field, const DensityPath& path,
                                           const RegularGrid& grid, double t,
                                           const Eigen::VectorXd& p_vals) {
  const int d = grid.dim();
  std::vector<Eigen::VectorXd> comp(static_cast<std::size_t>(d), Eigen::VectorXd(grid.size()));
  parallel_for(grid.size(), [&](std::int64_t i) {
    const Eigen::VectorXd x = grid.node(i);
    const Eigen::VectorXd v =
        p_vals[i] * (field.value(x, t) * path.score(x, t) + field.divergence(x, t));
    for (int a = 0; a < d; ++a) comp[static_cast<std::size_t>(a)][i] = v[a];
  });
  return comp;
}

}  // namespace

ResidualReport fokker_planck_residual(const SdeSpec& sde, const DensityPath& path,
                                      const RegularGrid& grid, double t) {
  if (grid.dim() != sde.dim || path.dim() != sde.dim)
    throw Error(errc::dimension, "grid/path/sde dimensions disagree");
  const int d = grid.dim();

  const ScalarGridField p = sample_on_grid(path, grid, t, GridQuantity::density);
  const ScalarGridField dtp = sample_on_grid(path, grid, t, GridQuantity::dt_density);

  // J = b p - div(D p), the subtrahend expanded nodewise via the product
  // rule with the analytic score and field divergence.
  std::vector<Eigen::VectorXd> j(static_cast<std::size_t>(d), Eigen::VectorXd(grid.size()));
  parallel_for(grid.size(), [&](std::int64_t i) {
    const Eigen::VectorXd x = grid.node(i);
    const Eigen::VectorXd b = sde.drift(x, t);
    const Eigen::VectorXd diffusion_part =
        sde.sigma.value(x, t) * path.score(x, t) + sde.sigma.divergence(x, t);
    const Eigen::VectorXd ji = p.values[i] * (b - diffusion_part);
    for (int a = 0; a < d; ++a) j[static_cast<std::size_t>(a)][i] = ji[a];
  });

  ResidualReport report{ScalarGridField(grid, "residual"), 0.0, 0.0, 0.0, 0.0, 0.0, 2};
  Eigen::VectorXd div_j = Eigen::VectorXd::Zero(grid.size());
  Eigen::VectorXd parts = Eigen::VectorXd::Zero(grid.size());
  for (int a = 0; a < d; ++a) {
    const Eigen::VectorXd da = axis_derivative(grid, j[static_cast<std::size_t>(a)], a);
    div_j += da;
    parts += da.cwiseAbs();
  }
  report.residual.values = dtp.values + div_j;

  const int ring = report.interior_ring;
  report.l2_residual = interior_l2(grid, report.residual.values, ring);
  report.l2_dtp = interior_l2(grid, dtp.values, ring);
  report.l2_div_j = interior_l2(grid, div_j, ring);
  report.l2_div_j_parts = interior_l2(grid, parts, ring);

  // Relative to ||dtp|| when the marginals actually move; against the
  // no-cancellation current scale for (near-)stationary flows, where both
  // dtp and div J vanish identically.
  double denom = report.l2_dtp;
  if (denom <= 1e-12 * report.l2_div_j_parts) denom = report.l2_div_j_parts;
  if (denom == 0.0)
    report.rel = report.l2_residual == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  else
    report.rel = report.l2_residual / denom;
  return report;
}

double dq_preservation_check(const MatrixField& field, const DensityPath& path,
                             const RegularGrid& grid, double t) {
  if (field.role() == FieldRole::general)
    throw Error(errc::config_invalid, "preservation identity needs role psd or skew");
  if (grid.dim() != field.dim() || grid.dim() != path.dim())
    throw Error(errc::dimension, "grid/path/field dimensions disagree");
  const int d = grid.dim();
  const ScalarGridField p = sample_on_grid(path, grid, t, GridQuantity::density);

  const auto current = field_current(field, path, grid, t, p.values);

  // psd identity: the analytic current equals div(A p); subtract the
  // finite-difference route through the product grids.
  std::vector<Eigen::VectorXd> v = current;
  if (field.role() == FieldRole::psd) {
    std::vector<Eigen::VectorXd> products(static_cast<std::size_t>(d * d),
                                          Eigen::VectorXd(grid.size()));
    parallel_for(grid.size(), [&](std::int64_t i) {
      const Eigen::MatrixXd m = field.value(grid.node(i), t) * p.values[i];
      for (int r = 0; r < d; ++r)
        for (int c = 0; c < d; ++c) products[static_cast<std::size_t>(r * d + c)][i] = m(r, c);
    });
    for (int r = 0; r < d; ++r) {
      Eigen::VectorXd row_div = Eigen::VectorXd::Zero(grid.size());
      for (int c = 0; c < d; ++c)
        row_div += axis_derivative(grid, products[static_cast<std::size_t>(r * d + c)], c);
      v[static_cast<std::size_t>(r)] -= row_div;
    }
  }

  Eigen::VectorXd div_v = Eigen::VectorXd::Zero(grid.size());
  Eigen::VectorXd parts = Eigen::VectorXd::Zero(grid.size());
  for (int a = 0; a < d; ++a) {
    div_v += axis_derivative(grid, v[static_cast<std::size_t>(a)], a);
    parts += axis_derivative(grid, current[static_cast<std::size_t>(a)], a).cwiseAbs();
  }
  const double num = interior_l2(grid, div_v, 2);
  const double den = interior_l2(grid, parts, 2);
  if (den == 0.0) return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return num / den;
}

namespace {

// 1-d Wasserstein-1 between sorted samples of possibly unequal sizes:
// integral of |F_a^{-1} - F_b^{-1}| over the unit quantile interval.
double w1_sorted(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = a.size(), m = b.size();
  double w = 0.0, q = 0.0;
  std::size_t i = 0, j = 0;
  while (i < n && j < m) {
    const double qa = static_cast<double>(i + 1) / static_cast<double>(n);
    const double qb = static_cast<double>(j + 1) / static_cast<double>(m);
    const double qn = std::min(qa, qb);
    w += (qn - q) * std::abs(a[i] - b[j]);
    if (qa <= qn) ++i;
    if (qb <= qn) ++j;
    q = qn;
  }
  return w;
}

double sliced_w1(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, int n_projections,
                 std::uint64_t seed) {
  const int d = static_cast<int>(a.rows());
  const NormalStream stream(seed, kProjectionTag);
  double acc = 0.0;
  for (int k = 0; k < n_projections; ++k) {
    Eigen::VectorXd theta(d);
    stream.fill(static_cast<std::uint64_t>(k), 0, theta);
    const double norm = theta.norm();
    if (norm < 1e-12) {
      theta.setZero();
      theta[0] = 1.0;
    } else {
      theta /= norm;
    }
    std::vector<double> pa(static_cast<std::size_t>(a.cols()));
    std::vector<double> pb(static_cast<std::size_t>(b.cols()));
    Eigen::Map<Eigen::VectorXd>(pa.data(), a.cols()) = a.transpose() * theta;
    Eigen::Map<Eigen::VectorXd>(pb.data(), b.cols()) = b.transpose() * theta;
    std::sort(pa.begin(), pa.end());
    std::sort(pb.begin(), pb.end());
    acc += w1_sorted(pa, pb);
  }
  return acc / static_cast<double>(n_projections);
}

// Mean pairwise distance between column sets, fixed-block parallel reduction.
double mean_cross_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const std::int64_t n = a.cols(), m = b.cols();
  const double total = parallel_reduce<double>(
      n, 128, 0.0,
      [&](std::int64_t begin, std::int64_t end) {
        double acc = 0.0;
        for (std::int64_t i = begin; i < end; ++i)
          for (std::int64_t j = 0; j < m; ++j) acc += (a.col(i) - b.col(j)).norm();
        return acc;
      },
      [](double x, double y) { return x + y; });
  return total / (static_cast<double>(n) * static_cast<double>(m));
}

double energy_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return 2.0 * mean_cross_distance(a, b) - mean_cross_distance(a, a) -
         mean_cross_distance(b, b);
}

void check_samples(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows()) throw Error(errc::dimension, "sample dimension mismatch");
  if (a.cols() < 100 || b.cols() < 100)
    throw Error(errc::config_invalid, "two-sample statistics need at least 100 points");
  if (!a.allFinite() || !b.allFinite())
    throw Error(errc::nonfinite, "samples contain non-finite values");
}

}  // namespace

DistanceReport marginal_distance(const Eigen::MatrixXd& samples_a, const Eigen::MatrixXd& samples_b,
                                 int n_projections, std::uint64_t seed) {
  check_samples(samples_a, samples_b);
  DistanceReport report;
  report.n_projections = n_projections;
  report.seed = seed;
  report.sliced_w1 = sliced_w1(samples_a, samples_b, n_projections, seed);
  report.energy = energy_distance(samples_a, samples_b);
  return report;
}

DistanceReport marginal_distance_with_baseline(const Eigen::MatrixXd& samples,
                                               const DensityPath& path, double t,
                                               int n_projections, std::uint64_t seed) {
  const int n = static_cast<int>(samples.cols());
  const Eigen::MatrixXd exact = path.sample(t, n, seed ^ kExactSalt);
  DistanceReport report = marginal_distance(exact, samples, n_projections, seed);
  const Eigen::MatrixXd base_a = path.sample(t, n, seed ^ kBaselineSaltA);
  const Eigen::MatrixXd base_b = path.sample(t, n, seed ^ kBaselineSaltB);
  const DistanceReport base = marginal_distance(base_a, base_b, n_projections, seed);
  report.baseline_sliced_w1 = base.sliced_w1;
  report.baseline_energy = base.energy;
  report.has_baseline = true;
  report.pass = report.sliced_w1 <= DistanceReport::kPassFactor * report.baseline_sliced_w1 &&
                report.energy <= DistanceReport::kPassFactor * report.baseline_energy;
  return report;
}

std::vector<InvarianceEntry> marginal_invariance_suite(
    const DensityPath& path, const std::vector<DecompositionBundle>& bundles, const SimConfig& cfg,
    const std::vector<double>& times, int n_projections, std::uint64_t stat_seed) {
  std::vector<InvarianceEntry> entries;

  // One baseline per time, shared across bundles (it depends only on the
  // path, the time and the sample size).
  std::vector<DistanceReport> baselines;
  for (std::size_t ti = 0; ti < times.size(); ++ti) {
    const std::uint64_t seed = stat_seed + 1000 * ti;
    const Eigen::MatrixXd base_a = path.sample(times[ti], cfg.n_paths, seed ^ kBaselineSaltA);
    const Eigen::MatrixXd base_b = path.sample(times[ti], cfg.n_paths, seed ^ kBaselineSaltB);
    baselines.push_back(marginal_distance(base_a, base_b, n_projections, seed));
  }

  for (std::size_t bi = 0; bi < bundles.size(); ++bi) {
    SimConfig bundle_cfg = cfg;
    bundle_cfg.seed = cfg.seed + 7919 * (bi + 1);
    const SdeSpec sde = assemble_drift(bundles[bi]);
    const Ensemble ens = simulate_ensemble(sde, path, bundle_cfg, times);
    for (std::size_t ti = 0; ti < times.size(); ++ti) {
      const std::uint64_t seed = stat_seed + 1000 * ti;
      const Eigen::MatrixXd sim_points = ens.points_at(times[ti]);
      const Eigen::MatrixXd exact = path.sample(times[ti], cfg.n_paths, seed ^ kExactSalt);
      DistanceReport report = marginal_distance(exact, sim_points, n_projections, seed);
      report.baseline_sliced_w1 = baselines[ti].sliced_w1;
      report.baseline_energy = baselines[ti].energy;
      report.has_baseline = true;
      report.pass =
          report.sliced_w1 <= DistanceReport::kPassFactor * report.baseline_sliced_w1 &&
          report.energy <= DistanceReport::kPassFactor * report.baseline_energy;
      entries.push_back(InvarianceEntry{static_cast<int>(bi), times[ti], report});
    }
  }
  return entries;
}

}  // namespace mflow
