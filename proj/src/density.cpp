#include "mflow/density.hpp"

#include <cmath>
#include <numbers>

#include "mflow/error.hpp"
#include "mflow/parallel.hpp"
#include "mflow/rng.hpp"

namespace mflow {
namespace detail {

namespace {

constexpr double kPdFloor = 1e-10;
constexpr std::uint32_t kSampleTag = 0x5A4Du;

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

/// Gaussian moments frozen at one time, with everything needed for density,
/// score and time-derivative evaluation.
struct FrozenGaussian {
  Eigen::VectorXd mean, dmean;
  Eigen::MatrixXd cov, dcov;
  Eigen::LLT<Eigen::MatrixXd> llt;
  double log_norm;

  void freeze(const VectorSchedule& m, const MatrixSchedule& s, double t) {
    mean = m.value(t);
    dmean = m.derivative(t);
    cov = s.value(t);
    dcov = s.derivative(t);
    llt.compute(cov);
    if (llt.info() != Eigen::Success)
      throw Error(errc::not_psd, "covariance not positive definite at t=" + std::to_string(t));
    double half_logdet = 0.0;
    for (Eigen::Index i = 0; i < cov.rows(); ++i)
      half_logdet += std::log(llt.matrixL()(i, i));
    log_norm = -half_logdet - 0.5 * static_cast<double>(cov.rows()) * kLog2Pi;
  }

  double log_density(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    const Eigen::VectorXd r = x - mean;
    return log_norm - 0.5 * r.dot(llt.solve(r));
  }

  Eigen::VectorXd score(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    return -llt.solve(x - mean);
  }

  // d/dt log N = r' Sinv dm + 0.5 [ (Sinv r)' dS (Sinv r) - tr(Sinv dS) ]
  double dt_log_density(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    const Eigen::VectorXd r = x - mean;
    const Eigen::VectorXd y = llt.solve(r);
    const double quad = 0.5 * y.dot(dcov * y);
    const double tr = 0.5 * llt.solve(dcov).trace();
    return y.dot(dmean) + quad - tr;
  }

  void draw(const NormalStream& stream, std::uint64_t id, Eigen::Ref<Eigen::VectorXd> out) const {
    Eigen::VectorXd z(mean.size());
    stream.fill(id, 2, z);
    out = mean + llt.matrixL() * z;
  }
};

void check_pd_over_range(const VectorSchedule& mean, const MatrixSchedule& cov, double t_max) {
  if (mean.size() != cov.rows() || cov.rows() != cov.cols())
    throw Error(errc::dimension, "mean/covariance dimension mismatch");
  const int samples = 33;
  for (int k = 0; k <= samples; ++k) {
    const double t = t_max * k / samples;
    const Eigen::MatrixXd s = cov.value(t);
    if (!s.isApprox(s.transpose(), 1e-12))
      throw Error(errc::not_symmetric, "covariance schedule not symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() < kPdFloor)
      throw Error(errc::not_psd,
                  "covariance eigenvalue below floor at t=" + std::to_string(t));
  }
}

Eigen::VectorXd normalize_weights(Eigen::VectorXd w, std::size_t count) {
  if (w.size() == 0) return Eigen::VectorXd::Constant(static_cast<Eigen::Index>(count),
                                                      1.0 / static_cast<double>(count));
  if (static_cast<std::size_t>(w.size()) != count)
    throw Error(errc::dimension, "weight count mismatch");
  if ((w.array() <= 0.0).any())
    throw Error(errc::config_invalid, "mixture weights must be strictly positive");
  const double total = w.sum();
  if (std::abs(total - 1.0) > 1e-8)
    throw Error(errc::config_invalid, "mixture weights must sum to 1");
  return w / total;
}

}  // namespace

class PathImpl {
public:
  virtual ~PathImpl() = default;
  virtual int dim() const = 0;
  virtual double t_max() const = 0;
  virtual double log_density(const Eigen::Ref<const Eigen::VectorXd>& x, double t) const = 0;
  virtual Eigen::VectorXd score(const Eigen::Ref<const Eigen::VectorXd>& x, double t) const = 0;
  virtual double dt_density(const Eigen::Ref<const Eigen::VectorXd>& x, double t) const = 0;
  virtual void sample(double t, int n, std::uint64_t seed, Eigen::MatrixXd& out) const = 0;
  virtual Eigen::VectorXd mean(double t) const = 0;
  virtual Eigen::MatrixXd covariance(double t) const = 0;
};

namespace {

/// Shared mixture machinery; a single Gaussian is the K=1 case, and the
/// mollified-atoms family delegates here with schedule-products for moments.
class MixtureImpl : public PathImpl {
public:
  MixtureImpl(std::vector<GaussianPathParams> comps, Eigen::VectorXd weights, double t_max,
              bool validate_range)
      : comps_(std::move(comps)), t_max_(t_max) {
    if (comps_.empty()) throw Error(errc::config_invalid, "mixture needs components");
    weights_ = normalize_weights(std::move(weights), comps_.size());
    d_ = static_cast<int>(comps_.front().mean.size());
    for (const auto& c : comps_) {
      if (c.mean.size() != d_ || c.cov.rows() != d_ || c.cov.cols() != d_)
        throw Error(errc::dimension, "mixture component dimension mismatch");
      if (validate_range) check_pd_over_range(c.mean, c.cov, t_max_);
    }
    log_w_.resize(weights_.size());
    for (Eigen::Index k = 0; k < weights_.size(); ++k) log_w_[k] = std::log(weights_[k]);
  }

  /// Hook for subclasses that restrict the evaluable time range.
  virtual void guard(double t) const { (void)t; }

  int dim() const override { return d_; }
  double t_max() const override { return t_max_; }

  double log_density(const Eigen::Ref<const Eigen::VectorXd>& x, double t) const override {
    guard(t);
    Eigen::VectorXd lw(n_comps());
    FrozenGaussian g;
    for (Eigen::Index k = 0; k < n_comps(); ++k) {
      freeze(g, k, t);
      lw[k] = log_w_[k] + g.log_density(x);
    }
    return log_sum_exp(lw);
  }

  Eigen::VectorXd score(const Eigen::Ref<const Eigen::VectorXd>& x, double t) const override {
    guard(t);
    if (n_comps() == 1) {
      FrozenGaussian g;
      freeze(g, 0, t);
      return g.score(x);
    }
    // Responsibilities in log space with max subtraction.
    Eigen::VectorXd lw(n_comps());
    std::vector<Eigen::VectorXd> scores(static_cast<std::size_t>(n_comps()));
    FrozenGaussian g;
    for (Eigen::Index k = 0; k < n_comps(); ++k) {
      freeze(g, k, t);
      lw[k] = log_w_[k] + g.log_density(x);
      scores[static_cast<std::size_t>(k)] = g.score(x);
    }
    const double lse = log_sum_exp(lw);
    Eigen::VectorXd out = Eigen::VectorXd::Zero(d_);
    for (Eigen::Index k = 0; k < n_comps(); ++k)
      out += std::exp(lw[k] - lse) * scores[static_cast<std::size_t>(k)];
    return out;
  }

  double dt_density(const Eigen::Ref<const Eigen::VectorXd>& x, double t) const override {
    guard(t);
    double out = 0.0;
    FrozenGaussian g;
    for (Eigen::Index k = 0; k < n_comps(); ++k) {
      freeze(g, k, t);
      const double log_nk = g.log_density(x);
      out += weights_[k] * std::exp(log_nk) * g.dt_log_density(x);
    }
    return out;
  }

  void sample(double t, int n, std::uint64_t seed, Eigen::MatrixXd& out) const override {
    guard(t);
    out.resize(d_, n);
    std::vector<FrozenGaussian> frozen(static_cast<std::size_t>(n_comps()));
    for (Eigen::Index k = 0; k < n_comps(); ++k) freeze(frozen[static_cast<std::size_t>(k)], k, t);
    Eigen::VectorXd cumulative(n_comps());
    double acc = 0.0;
    for (Eigen::Index k = 0; k < n_comps(); ++k) cumulative[k] = (acc += weights_[k]);
    const NormalStream stream(seed, kSampleTag);
    parallel_for(n, [&](std::int64_t i) {
      Eigen::Index k = 0;
      if (n_comps() > 1) {
        const double u = stream.uniform(static_cast<std::uint64_t>(i), 1);
        while (k + 1 < n_comps() && u > cumulative[k]) ++k;
      }
      frozen[static_cast<std::size_t>(k)].draw(stream, static_cast<std::uint64_t>(i), out.col(i));
    });
  }

  Eigen::VectorXd mean(double t) const override {
    guard(t);
    Eigen::VectorXd m = Eigen::VectorXd::Zero(d_);
    for (Eigen::Index k = 0; k < n_comps(); ++k)
      m += weights_[k] * comps_[static_cast<std::size_t>(k)].mean.value(t);
    return m;
  }

  Eigen::MatrixXd covariance(double t) const override {
    guard(t);
    const Eigen::VectorXd m = mean(t);
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(d_, d_);
    for (Eigen::Index k = 0; k < n_comps(); ++k) {
      const auto& comp = comps_[static_cast<std::size_t>(k)];
      const Eigen::VectorXd mk = comp.mean.value(t);
      c += weights_[k] * (comp.cov.value(t) + mk * mk.transpose());
    }
    return c - m * m.transpose();
  }

protected:
  Eigen::Index n_comps() const { return static_cast<Eigen::Index>(comps_.size()); }

  void freeze(FrozenGaussian& g, Eigen::Index k, double t) const {
    const auto& c = comps_[static_cast<std::size_t>(k)];
    g.freeze(c.mean, c.cov, t);
  }

  static double log_sum_exp(const Eigen::VectorXd& lw) {
    const double m = lw.maxCoeff();
    return m + std::log((lw.array() - m).exp().sum());
  }

  std::vector<GaussianPathParams> comps_;
  Eigen::VectorXd weights_;
  std::vector<double> log_w_;
  double t_max_;
  int d_ = 0;
};

class EdmImpl : public MixtureImpl {
public:
  EdmImpl(std::vector<GaussianPathParams> comps, Eigen::VectorXd weights, Schedule scale,
          Schedule noise_sq, double t_max)
      : MixtureImpl(std::move(comps), std::move(weights), t_max, /*validate_range=*/false),
        scale_(std::move(scale)),
        noise_sq_(std::move(noise_sq)) {}

  void guard(double t) const override {
    if (noise_sq_.value(t) <= 0.0)
      throw Error(errc::domain, "mollified family degenerates: sigma(t) <= 0 at t=" +
                                    std::to_string(t));
    if (scale_.value(t) <= 0.0)
      throw Error(errc::domain, "scale schedule must stay positive");
  }

private:
  Schedule scale_, noise_sq_;
};

class ReversedImpl : public PathImpl {
public:
  ReversedImpl(std::shared_ptr<const PathImpl> base, double horizon)
      : base_(std::move(base)), horizon_(horizon) {
    if (horizon_ <= 0.0 || horizon_ > base_->t_max() + 1e-12)
      throw Error(errc::domain, "reversal horizon outside the base time range");
  }

  int dim() const override { return base_->dim(); }
  double t_max() const override { return horizon_; }
  double log_density(const Eigen::Ref<const Eigen::VectorXd>& x, double s) const override {
    return base_->log_density(x, horizon_ - s);
  }
  Eigen::VectorXd score(const Eigen::Ref<const Eigen::VectorXd>& x, double s) const override {
    return base_->score(x, horizon_ - s);
  }
  double dt_density(const Eigen::Ref<const Eigen::VectorXd>& x, double s) const override {
    return -base_->dt_density(x, horizon_ - s);
  }
  void sample(double s, int n, std::uint64_t seed, Eigen::MatrixXd& out) const override {
    base_->sample(horizon_ - s, n, seed, out);
  }
  Eigen::VectorXd mean(double s) const override { return base_->mean(horizon_ - s); }
  Eigen::MatrixXd covariance(double s) const override { return base_->covariance(horizon_ - s); }

private:
  std::shared_ptr<const PathImpl> base_;
  double horizon_;
};

}  // namespace
}  // namespace detail

DensityPath::DensityPath(std::shared_ptr<const detail::PathImpl> impl) : impl_(std::move(impl)) {}

int DensityPath::dim() const { return impl_->dim(); }
double DensityPath::t_max() const { return impl_->t_max(); }

double DensityPath::density(const Eigen::Ref<const Eigen::VectorXd>& x, double t) const {
  return std::exp(impl_->log_density(x, t));
}
double DensityPath::log_density(const Eigen::Ref<const Eigen::VectorXd>& x, double t) const {
  return impl_->log_density(x, t);
}
Eigen::VectorXd DensityPath::score(const Eigen::Ref<const Eigen::VectorXd>& x, double t) const {
  return impl_->score(x, t);
}
double DensityPath::dt_density(const Eigen::Ref<const Eigen::VectorXd>& x, double t) const {
  return impl_->dt_density(x, t);
}
Eigen::VectorXd DensityPath::mean(double t) const { return impl_->mean(t); }
Eigen::MatrixXd DensityPath::covariance(double t) const { return impl_->covariance(t); }

DensityPath DensityPath::time_reversed(double horizon) const {
  return DensityPath(std::make_shared<detail::ReversedImpl>(impl_, horizon));
}

DensityPath make_gaussian_path(const GaussianPathParams& params) {
  return DensityPath(std::make_shared<detail::MixtureImpl>(
      std::vector<GaussianPathParams>{params}, Eigen::VectorXd::Ones(1), params.t_max,
      /*validate_range=*/true));
}

DensityPath make_mixture_path(const MixturePathParams& params) {
  return DensityPath(std::make_shared<detail::MixtureImpl>(params.components, params.weights,
                                                           params.t_max, /*validate_range=*/true));
}

DensityPath make_edm_path(const EdmScheduleParams& params) {
  const auto d = params.atoms.rows();
  const auto n_atoms = params.atoms.cols();
  if (d < 1 || n_atoms < 1) throw Error(errc::config_invalid, "atoms matrix must be d x K");
  // Component means s(t)*x_i; shared isotropic covariance s^2 sigma^2 I.
  const Schedule variance = params.scale.squared() * params.noise_sq;
  std::vector<GaussianPathParams> comps;
  comps.reserve(static_cast<std::size_t>(n_atoms));
  for (Eigen::Index i = 0; i < n_atoms; ++i) {
    GaussianPathParams c;
    std::vector<Schedule> mean_entries;
    mean_entries.reserve(static_cast<std::size_t>(d));
    for (Eigen::Index a = 0; a < d; ++a)
      mean_entries.push_back(params.scale.scaled(params.atoms(a, i)));
    c.mean = VectorSchedule(std::move(mean_entries));
    c.cov = MatrixSchedule::isotropic(d, variance);
    c.t_max = params.t_max;
    comps.push_back(std::move(c));
  }
  return DensityPath(std::make_shared<detail::EdmImpl>(
      std::move(comps), params.weights, params.scale, params.noise_sq, params.t_max));
}

Eigen::MatrixXd DensityPath::sample(double t, int n, std::uint64_t seed) const {
  if (n < 1) throw Error(errc::config_invalid, "sample count must be positive");
  if (t < 0.0 || t > t_max()) throw Error(errc::domain, "sample time outside [0, t_max]");
  Eigen::MatrixXd out;
  impl_->sample(t, n, seed, out);
  return out;
}

Eigen::MatrixXd sample_exact(const DensityPath& path, double t, int n, std::uint64_t seed) {
  return path.sample(t, n, seed);
}

ValidationReport validate_density(const DensityPath& path, const RegularGrid& grid, double t,
                                  const ValidationThresholds& thresholds) {
  if (grid.dim() != path.dim()) throw Error(errc::dimension, "grid/path dimension mismatch");
  ValidationReport report;
  double mass = 0.0, dtp_mass = 0.0, max_p = 0.0, max_boundary_p = 0.0;
  for (std::int64_t i = 0; i < grid.size(); ++i) {
    const Eigen::VectorXd x = grid.node(i);
    const double p = path.density(x, t);
    mass += p;
    dtp_mass += path.dt_density(x, t);
    max_p = std::max(max_p, p);
    if (grid.on_boundary(i)) max_boundary_p = std::max(max_boundary_p, p);
  }
  const double vol = grid.cell_volume();
  report.mass_error = std::abs(mass * vol - 1.0);
  report.dtp_mass = std::abs(dtp_mass * vol);
  report.boundary_ratio = max_p > 0.0 ? max_boundary_p / max_p : 0.0;
  report.mass_ok = report.mass_error <= thresholds.mass_tol;
  report.boundary_ok = report.boundary_ratio <= thresholds.boundary_ratio_tol;
  report.dtp_mass_ok = report.dtp_mass <= thresholds.dtp_mass_tol;
  return report;
}

}  // namespace mflow
