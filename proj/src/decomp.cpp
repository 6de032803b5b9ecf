#include "mflow/decomp.hpp"

#include <algorithm>
#include <cmath>

#include "mflow/error.hpp"

namespace mflow {

PhiSource PhiSource::constant(double value, int dim) {
  return time_function([value](double) { return value; }, dim);
}

PhiSource PhiSource::time_function(std::function<double(double)> value, int dim) {
  PhiSource out;
  out.dim_ = dim;
  out.value_ = [value = std::move(value)](const Eigen::Ref<const Eigen::VectorXd>&, double t) {
    return value(t);
  };
  out.gradient_ = [dim](const Eigen::Ref<const Eigen::VectorXd>&, double) {
    return Eigen::VectorXd::Zero(dim).eval();
  };
  return out;
}

PhiSource PhiSource::analytic(
    std::function<double(const Eigen::Ref<const Eigen::VectorXd>&, double)> value,
    std::function<Eigen::VectorXd(const Eigen::Ref<const Eigen::VectorXd>&, double)> gradient,
    int dim) {
  PhiSource out;
  out.dim_ = dim;
  out.value_ = std::move(value);
  out.gradient_ = std::move(gradient);
  return out;
}

PhiSource PhiSource::grid(std::vector<GridSlice> slices,
                          std::optional<std::pair<Eigen::VectorXd, Eigen::VectorXd>> domain) {
  if (slices.empty()) throw Error(errc::config_invalid, "grid phi needs at least one slice");
  std::sort(slices.begin(), slices.end(),
            [](const GridSlice& a, const GridSlice& b) { return a.t < b.t; });
  for (const auto& s : slices)
    if (!(s.phi.grid == slices.front().phi.grid) || !(s.grad.grid == slices.front().phi.grid))
      throw Error(errc::dimension, "phi slices must share one grid");
  PhiSource out;
  out.dim_ = slices.front().phi.grid.dim();
  out.slices_holder_ = std::make_shared<const std::vector<GridSlice>>(std::move(slices));
  for (const auto& s : *out.slices_holder_) out.slices_.push_back(&s);
  out.domain_ = std::move(domain);
  return out;
}

std::optional<std::pair<Eigen::VectorXd, Eigen::VectorXd>> PhiSource::domain_box() const {
  if (slices_.empty()) return std::nullopt;
  if (domain_) return domain_;
  const RegularGrid& g = slices_.front()->phi.grid;
  Eigen::VectorXd hull_hi(g.dim());
  for (int a = 0; a < g.dim(); ++a) hull_hi[a] = g.node_coord(a, g.count(a) - 1);
  return std::make_pair(g.lower(), hull_hi);
}

namespace {

// Bracketing slice pair and interpolation weight, clamped to the covered
// time range.
struct SliceBlend {
  const PhiSource::GridSlice* lo;
  const PhiSource::GridSlice* hi;
  double w;  // weight of hi
};

SliceBlend blend(const std::vector<const PhiSource::GridSlice*>& slices, double t) {
  if (slices.size() == 1 || t <= slices.front()->t) return {slices.front(), slices.front(), 0.0};
  if (t >= slices.back()->t) return {slices.back(), slices.back(), 0.0};
  std::size_t k = 1;
  while (slices[k]->t < t) ++k;
  const double span = slices[k]->t - slices[k - 1]->t;
  return {slices[k - 1], slices[k], span > 0.0 ? (t - slices[k - 1]->t) / span : 0.0};
}

}  // namespace

double PhiSource::value(const Eigen::Ref<const Eigen::VectorXd>& x, double t) const {
  if (!is_grid()) return value_(x, t);
  const auto b = blend(slices_, t);
  const double lo = interpolate(b.lo->phi, x);
  if (b.w == 0.0) return lo;
  return (1.0 - b.w) * lo + b.w * interpolate(b.hi->phi, x);
}

Eigen::VectorXd PhiSource::gradient(const Eigen::Ref<const Eigen::VectorXd>& x, double t) const {
  if (!is_grid()) return gradient_(x, t);
  const auto b = blend(slices_, t);
  const Eigen::VectorXd lo = interpolate(b.lo->grad, x);
  if (b.w == 0.0) return lo;
  return (1.0 - b.w) * lo + b.w * interpolate(b.hi->grad, x);
}

namespace {

void require_roles(const MatrixField& d_field, const MatrixField& q_field) {
  if (d_field.role() != FieldRole::psd)
    throw Error(errc::not_psd, "diffusion field must have role psd");
  if (q_field.role() != FieldRole::skew)
    throw Error(errc::not_skew, "circulation field must have role skew");
}

}  // namespace

SdeSpec assemble_drift(const DecompositionBundle& bundle, std::optional<DriftTerm> ablate) {
  require_roles(bundle.d_field, bundle.q_field);
  const int d = bundle.path.dim();
  if (bundle.phi.dim() != d || bundle.d_field.dim() != d || bundle.q_field.dim() != d)
    throw Error(errc::dimension, "bundle component dimensions disagree");

  SdeSpec spec;
  spec.dim = d;
  spec.t0 = 0.0;
  spec.t1 = bundle.path.t_max();
  spec.sigma = bundle.d_field;
  spec.provenance = SdeProvenance::assembled;
  spec.domain = bundle.phi.domain_box();

  spec.drift = [path = bundle.path, phi = bundle.phi, df = bundle.d_field, qf = bundle.q_field,
                ablate](const Eigen::Ref<const Eigen::VectorXd>& x, double t) {
    const Eigen::VectorXd s = path.score(x, t);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(s.size());
    if (ablate != DriftTerm::phi_score) b += phi.value(x, t) * s;
    if (ablate != DriftTerm::grad_phi) b += phi.gradient(x, t);
    if (ablate != DriftTerm::dq_score) b += (df.value(x, t) + qf.value(x, t)) * s;
    if (ablate != DriftTerm::dq_div) b += df.divergence(x, t) + qf.divergence(x, t);
    return b;
  };
  return spec;
}

SdeSpec sde_match(const SdeSpec& sde, const DensityPath& path, const MatrixField& new_d,
                  const MatrixField& new_q) {
  require_roles(new_d, new_q);
  if (new_d.dim() != sde.dim || new_q.dim() != sde.dim || path.dim() != sde.dim)
    throw Error(errc::dimension, "matching fields must share the sde dimension");

  SdeSpec out = sde;
  out.sigma = new_d;
  out.provenance = SdeProvenance::matched;
  out.drift = [f = sde.drift, sigma = sde.sigma, path, new_d,
               new_q](const Eigen::Ref<const Eigen::VectorXd>& x, double t) {
    const Eigen::VectorXd s = path.score(x, t);
    const Eigen::MatrixXd m = new_d.value(x, t) - sigma.value(x, t) + new_q.value(x, t);
    const Eigen::VectorXd dv =
        new_d.divergence(x, t) - sigma.divergence(x, t) + new_q.divergence(x, t);
    return (f(x, t) + m * s + dv).eval();
  };
  return out;
}

SdeSpec weak_reversal_family(const SdeSpec& sde, const DensityPath& path, double horizon,
                             const MatrixField& d_bar, const MatrixField& q_bar) {
  require_roles(d_bar, q_bar);
  if (path.dim() != sde.dim) throw Error(errc::dimension, "path/sde dimension mismatch");

  const DensityPath rev = path.time_reversed(horizon);
  const MatrixField sigma_bar = sde.sigma.time_reversed(horizon);

  SdeSpec out;
  out.dim = sde.dim;
  out.t0 = 0.0;
  out.t1 = horizon;
  out.sigma = d_bar;
  out.provenance = SdeProvenance::reversed;
  out.domain = sde.domain;
  out.drift = [f = sde.drift, rev, sigma_bar, d_bar, q_bar,
               horizon](const Eigen::Ref<const Eigen::VectorXd>& y, double s) {
    const Eigen::VectorXd sc = rev.score(y, s);
    const Eigen::MatrixXd m = d_bar.value(y, s) + sigma_bar.value(y, s) + q_bar.value(y, s);
    const Eigen::VectorXd dv =
        d_bar.divergence(y, s) + sigma_bar.divergence(y, s) + q_bar.divergence(y, s);
    return (-f(y, horizon - s) + m * sc + dv).eval();
  };
  return out;
}

SdeSpec time_reverse_strict(const SdeSpec& sde, const DensityPath& path, double horizon) {
  // The strict reversal is the family member with D = reversed Sigma, Q = 0;
  // sharing the code path makes the family identity exact.
  SdeSpec out = weak_reversal_family(sde, path, horizon, sde.sigma.time_reversed(horizon),
                                     make_zero_field(sde.dim, FieldRole::skew));
  out.provenance = SdeProvenance::reversed;
  return out;
}

namespace {

Schedule noising_rate(const EdmScheduleParams& schedule) {
  if (!schedule.scale.is_constant() || schedule.scale.value(0.0) != 1.0)
    throw Error(errc::unsupported, "denoiser family requires scale identically 1");
  // Sigma(t) = sigma sigma' = (sigma^2)'/2.
  return schedule.noise_sq.derivative_schedule().scaled(0.5);
}

}  // namespace

SdeSpec denoiser_family(const EdmScheduleParams& schedule, double horizon,
                        const MatrixField& d_bar, const MatrixField& q_bar) {
  const int d = static_cast<int>(schedule.atoms.rows());
  const DensityPath path = make_edm_path(schedule);

  SdeSpec noising;
  noising.dim = d;
  noising.t0 = 0.0;
  noising.t1 = horizon;
  noising.drift = [d](const Eigen::Ref<const Eigen::VectorXd>&, double) {
    return Eigen::VectorXd::Zero(d).eval();
  };
  noising.sigma = make_isotropic_schedule_field(d, noising_rate(schedule), FieldRole::psd);

  SdeSpec out = weak_reversal_family(noising, path, horizon, d_bar, q_bar);
  out.provenance = SdeProvenance::denoiser;
  return out;
}

double analytic_phi_edm(const EdmScheduleParams& schedule, double horizon, double s) {
  if (s < 0.0 || s > horizon) throw Error(errc::domain, "time outside [0, horizon]");
  return noising_rate(schedule).value(horizon - s);
}

}  // namespace mflow
