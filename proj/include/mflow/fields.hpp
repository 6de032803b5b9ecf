#pragma once

#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "mflow/grid.hpp"
#include "mflow/schedule.hpp"

namespace mflow {

enum class FieldRole { psd, skew, general };

namespace detail {
class FieldImpl;
}

/// d x d matrix-valued field A(x,t) with a declared symmetry role and a
/// divergence [div A]_i = sum_j d_j A_ij. Divergence is analytic for the
/// built-in families and central-difference otherwise. Pure and reentrant.
class MatrixField {
public:
  MatrixField() = default;
  explicit MatrixField(std::shared_ptr<const detail::FieldImpl> impl);

  int dim() const;
  FieldRole role() const;

  Eigen::MatrixXd value(const Eigen::Ref<const Eigen::VectorXd>& x, double t) const;
  Eigen::VectorXd divergence(const Eigen::Ref<const Eigen::VectorXd>& x, double t) const;

  /// Central-difference divergence regardless of the field's native mode
  /// (step 1e-5 * max(1, |x|) per axis).
  Eigen::VectorXd divergence_fd(const Eigen::Ref<const Eigen::VectorXd>& x, double t) const;

  /// True when value() does not depend on x (noise factor caching).
  bool spatially_constant() const;
  /// True when value() does not depend on t either.
  bool constant() const;

  /// Field evaluated at reflected time: A(x, horizon - s).
  MatrixField time_reversed(double horizon) const;

private:
  std::shared_ptr<const detail::FieldImpl> impl_;
};

/// Constant matrix; role symmetry is validated (entrywise 1e-12) and PSD
/// fields must have eigenvalues >= -1e-10.
MatrixField make_constant_field(const Eigen::MatrixXd& m, FieldRole role);
MatrixField make_zero_field(int d, FieldRole role);

/// D(x) = (a + b|x|^2) I with a > 0, b >= 0; divergence 2 b x.
MatrixField make_radial_isotropic_field(int d, double a, double b);

/// Q(x) = C + sum_k L_k x_k with C and every L_k skew-symmetric;
/// divergence_i = sum_j (L_j)_ij, constant in x.
MatrixField make_linear_skew_field(const Eigen::MatrixXd& constant_part,
                                   const std::vector<Eigen::MatrixXd>& linear_parts);

/// c(t) I; role psd requires c(t) >= 0 wherever evaluated.
MatrixField make_isotropic_schedule_field(int d, const Schedule& c, FieldRole role);

/// Grid-sampled field with multilinear interpolation between nodes;
/// divergence is finite-difference only. entries is row-major d*d scalar
/// fields on a shared grid.
MatrixField make_table_field(const RegularGrid& grid, const std::vector<Eigen::VectorXd>& entries,
                             FieldRole role);

/// Symmetric PSD square root via eigendecomposition: returns S = S^T with
/// S S = m. Eigenvalues in [-1e-10, 0) are clamped to zero; below that the
/// input is rejected as not PSD. Handles exactly singular matrices.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m);

}  // namespace mflow
