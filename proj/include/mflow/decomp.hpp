#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "mflow/density.hpp"
#include "mflow/fields.hpp"
#include "mflow/grid.hpp"

namespace mflow {

enum class SdeProvenance { user, assembled, matched, reversed, denoiser };

using DriftFn = std::function<Eigen::VectorXd(const Eigen::Ref<const Eigen::VectorXd>&, double)>;

/// Drift + diffusion pair dx = b dt + sqrt(2 Sigma) dw. Drift evaluators are
/// pure closures, so transforms compose without grid re-sampling.
struct SdeSpec {
  int dim = 0;
  double t0 = 0.0;
  double t1 = 1.0;
  DriftFn drift;
  MatrixField sigma;  // role psd
  SdeProvenance provenance = SdeProvenance::user;
  /// Node hull of a grid-backed phi, when present; out-of-domain policy in
  /// the simulator applies against this box.
  std::optional<std::pair<Eigen::VectorXd, Eigen::VectorXd>> domain;
};

/// Scalar field phi with its spatial gradient, either closed-form or sampled
/// on grids at one or more times (linear interpolation in t, clamped ends).
class PhiSource {
public:
  struct GridSlice {
    double t;
    ScalarGridField phi;
    VectorGridField grad;
  };

  static PhiSource constant(double value, int dim);
  /// Spatially constant, time-varying phi (gradient zero).
  static PhiSource time_function(std::function<double(double)> value, int dim);
  static PhiSource analytic(std::function<double(const Eigen::Ref<const Eigen::VectorXd>&, double)> value,
                            std::function<Eigen::VectorXd(const Eigen::Ref<const Eigen::VectorXd>&, double)> gradient,
                            int dim);
  /// `domain` restricts where drifts built on this phi are evaluated
  /// (typically the high-density box of the solve); defaults to the grid's
  /// node hull.
  static PhiSource grid(std::vector<GridSlice> slices,
                        std::optional<std::pair<Eigen::VectorXd, Eigen::VectorXd>> domain = {});

  int dim() const { return dim_; }
  double value(const Eigen::Ref<const Eigen::VectorXd>& x, double t) const;
  Eigen::VectorXd gradient(const Eigen::Ref<const Eigen::VectorXd>& x, double t) const;

  bool is_grid() const { return !slices_.empty(); }
  /// Evaluation box for grid-backed sources (empty for analytic ones).
  std::optional<std::pair<Eigen::VectorXd, Eigen::VectorXd>> domain_box() const;

private:
  int dim_ = 0;
  std::function<double(const Eigen::Ref<const Eigen::VectorXd>&, double)> value_;
  std::function<Eigen::VectorXd(const Eigen::Ref<const Eigen::VectorXd>&, double)> gradient_;
  std::shared_ptr<const std::vector<GridSlice>> slices_holder_;
  std::vector<const GridSlice*> slices_;
  std::optional<std::pair<Eigen::VectorXd, Eigen::VectorXd>> domain_;
};

/// Everything needed to assemble a marginal-preserving drift: the density
/// family, its scalar field phi, and the free symmetric-PSD/skew pair.
struct DecompositionBundle {
  DensityPath path;
  PhiSource phi;
  MatrixField d_field;  // psd
  MatrixField q_field;  // skew
};

/// Drift terms, for ablation fixtures in the verification suite.
enum class DriftTerm { phi_score, grad_phi, dq_score, dq_div };

/// b = phi*score + grad phi + (D+Q)*score + div(D+Q), diffusion D. `ablate`
/// drops one term (verification fixtures only).
SdeSpec assemble_drift(const DecompositionBundle& bundle,
                       std::optional<DriftTerm> ablate = std::nullopt);

/// Same-marginal re-diffusion: b' = f + (D'-Sigma+Q')*score + div(D'-Sigma+Q'),
/// noise sqrt(2 D'). With D'=Sigma, Q'=0 this is the identity on drifts.
SdeSpec sde_match(const SdeSpec& sde, const DensityPath& path, const MatrixField& new_d,
                  const MatrixField& new_q);

/// Path-law time reversal in s = horizon - t:
/// dy = [-f + 2 div Sigma + 2 Sigma score] ds + sqrt(2 Sigma) dw.
SdeSpec time_reverse_strict(const SdeSpec& sde, const DensityPath& path, double horizon);

/// All reversals sharing the reversed marginals:
/// dy = [-f + (D+Sigma+Q) score + div(D+Sigma+Q)] ds + sqrt(2 D) dw.
/// With D = reversed Sigma and Q = 0 this reproduces the strict reversal
/// exactly (same code path).
SdeSpec weak_reversal_family(const SdeSpec& sde, const DensityPath& path, double horizon,
                             const MatrixField& d_bar, const MatrixField& q_bar);

/// Complete family of reverse-time samplers for the mollified noising flow
/// (scale restricted to 1): dy = [sigma sigma' score + (D+Q) score + div(D+Q)] ds
/// + sqrt(2 D) dw, everything evaluated at reflected time.
SdeSpec denoiser_family(const EdmScheduleParams& schedule, double horizon,
                        const MatrixField& d_bar, const MatrixField& q_bar);

/// Closed-form scalar field of the reversed noising flow:
/// phi(s) = sigma(horizon-s) * sigma'(horizon-s), spatially constant.
double analytic_phi_edm(const EdmScheduleParams& schedule, double horizon, double s);

}  // namespace mflow
