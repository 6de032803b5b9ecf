#include "mflow/fields.hpp"

#include <cmath>

#include "mflow/error.hpp"

namespace mflow {
namespace {

constexpr double kSymTol = 1e-12;
constexpr double kEigFloor = -1e-10;

void require_symmetric(const Eigen::MatrixXd& m, const char* what) {
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if (((m - m.transpose()).cwiseAbs().maxCoeff()) > kSymTol * scale)
    throw Error(errc::not_symmetric, std::string(what) + " must be symmetric");
}

void require_skew(const Eigen::MatrixXd& m, const char* what) {
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if (((m + m.transpose()).cwiseAbs().maxCoeff()) > kSymTol * scale)
    throw Error(errc::not_skew, std::string(what) + " must be skew-symmetric");
}

void require_role(const Eigen::MatrixXd& m, FieldRole role, const char* what) {
  switch (role) {
    case FieldRole::psd: {
      require_symmetric(m, what);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m, Eigen::EigenvaluesOnly);
      if (eig.eigenvalues().minCoeff() < kEigFloor)
        throw Error(errc::not_psd, std::string(what) + " has a negative eigenvalue");
      break;
    }
    case FieldRole::skew:
      require_skew(m, what);
      break;
    case FieldRole::general:
      break;
  }
}

}  // namespace

namespace detail {

class FieldImpl {
public:
  virtual ~FieldImpl() = default;
  virtual int dim() const = 0;
  virtual FieldRole role() const = 0;
  virtual Eigen::MatrixXd value(const Eigen::Ref<const Eigen::VectorXd>& x, double t) const = 0;
  /// Analytic divergence; returns false when only finite differences apply.
  virtual bool analytic_divergence(const Eigen::Ref<const Eigen::VectorXd>& x, double t,
                                   Eigen::VectorXd& out) const = 0;
  virtual bool spatially_constant() const = 0;
  virtual bool constant() const = 0;
};

namespace {

class ConstantField : public FieldImpl {
public:
  ConstantField(Eigen::MatrixXd m, FieldRole role) : m_(std::move(m)), role_(role) {}
  int dim() const override { return static_cast<int>(m_.rows()); }
  FieldRole role() const override { return role_; }
  Eigen::MatrixXd value(const Eigen::Ref<const Eigen::VectorXd>&, double) const override {
    return m_;
  }
  bool analytic_divergence(const Eigen::Ref<const Eigen::VectorXd>&, double,
                           Eigen::VectorXd& out) const override {
    out = Eigen::VectorXd::Zero(dim());
    return true;
  }
  bool spatially_constant() const override { return true; }
  bool constant() const override { return true; }

private:
  Eigen::MatrixXd m_;
  FieldRole role_;
};

class RadialIsotropicField : public FieldImpl {
public:
  RadialIsotropicField(int d, double a, double b) : d_(d), a_(a), b_(b) {}
  int dim() const override { return d_; }
  FieldRole role() const override { return FieldRole::psd; }
  Eigen::MatrixXd value(const Eigen::Ref<const Eigen::VectorXd>& x, double) const override {
    return (a_ + b_ * x.squaredNorm()) * Eigen::MatrixXd::Identity(d_, d_);
  }
  bool analytic_divergence(const Eigen::Ref<const Eigen::VectorXd>& x, double,
                           Eigen::VectorXd& out) const override {
    out = 2.0 * b_ * x;
    return true;
  }
  bool spatially_constant() const override { return b_ == 0.0; }
  bool constant() const override { return b_ == 0.0; }

private:
  int d_;
  double a_, b_;
};

class LinearSkewField : public FieldImpl {
public:
  LinearSkewField(Eigen::MatrixXd c, std::vector<Eigen::MatrixXd> linear)
      : c_(std::move(c)), linear_(std::move(linear)) {
    div_ = Eigen::VectorXd::Zero(c_.rows());
    for (Eigen::Index i = 0; i < c_.rows(); ++i)
      for (Eigen::Index j = 0; j < c_.cols(); ++j) div_[i] += linear_[static_cast<std::size_t>(j)](i, j);
  }
  int dim() const override { return static_cast<int>(c_.rows()); }
  FieldRole role() const override { return FieldRole::skew; }
  Eigen::MatrixXd value(const Eigen::Ref<const Eigen::VectorXd>& x, double) const override {
    Eigen::MatrixXd m = c_;
    for (int k = 0; k < dim(); ++k) m += x[k] * linear_[static_cast<std::size_t>(k)];
    return m;
  }
  bool analytic_divergence(const Eigen::Ref<const Eigen::VectorXd>&, double,
                           Eigen::VectorXd& out) const override {
    out = div_;
    return true;
  }
  bool spatially_constant() const override {
    for (const auto& l : linear_)
      if (!l.isZero(0.0)) return false;
    return true;
  }
  bool constant() const override { return spatially_constant(); }

private:
  Eigen::MatrixXd c_;
  std::vector<Eigen::MatrixXd> linear_;
  Eigen::VectorXd div_;
};

class IsotropicScheduleField : public FieldImpl {
public:
  IsotropicScheduleField(int d, Schedule c, FieldRole role)
      : d_(d), c_(std::move(c)), role_(role) {}
  int dim() const override { return d_; }
  FieldRole role() const override { return role_; }
  Eigen::MatrixXd value(const Eigen::Ref<const Eigen::VectorXd>&, double t) const override {
    const double c = c_.value(t);
    if (role_ == FieldRole::psd && c < 0.0)
      throw Error(errc::not_psd, "schedule field is negative at t=" + std::to_string(t));
    return c * Eigen::MatrixXd::Identity(d_, d_);
  }
  bool analytic_divergence(const Eigen::Ref<const Eigen::VectorXd>&, double,
                           Eigen::VectorXd& out) const override {
    out = Eigen::VectorXd::Zero(d_);
    return true;
  }
  bool spatially_constant() const override { return true; }
  bool constant() const override { return c_.is_constant(); }

private:
  int d_;
  Schedule c_;
  FieldRole role_;
};

class TableField : public FieldImpl {
public:
  TableField(const RegularGrid& grid, const std::vector<Eigen::VectorXd>& entries, FieldRole role)
      : role_(role) {
    const int d = grid.dim();
    if (entries.size() != static_cast<std::size_t>(d * d))
      throw Error(errc::dimension, "table field needs d*d entry arrays");
    entries_.reserve(entries.size());
    for (const auto& e : entries) entries_.emplace_back(grid, e, "table");
    // Spot-check the declared role on grid nodes.
    for (std::int64_t i = 0; i < grid.size(); i += std::max<std::int64_t>(1, grid.size() / 64)) {
      require_role(value_at_flat(i), role_, "table field");
    }
  }
  int dim() const override { return entries_.front().grid.dim(); }
  FieldRole role() const override { return role_; }
  Eigen::MatrixXd value(const Eigen::Ref<const Eigen::VectorXd>& x, double) const override {
    const int d = dim();
    Eigen::MatrixXd m(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) m(i, j) = interpolate(entries_[static_cast<std::size_t>(i * d + j)], x);
    return m;
  }
  bool analytic_divergence(const Eigen::Ref<const Eigen::VectorXd>&, double,
                           Eigen::VectorXd&) const override {
    return false;
  }
  bool spatially_constant() const override { return false; }
  bool constant() const override { return false; }

private:
  Eigen::MatrixXd value_at_flat(std::int64_t flat) const {
    const int d = dim();
    Eigen::MatrixXd m(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) m(i, j) = entries_[static_cast<std::size_t>(i * d + j)].values[flat];
    return m;
  }
  std::vector<ScalarGridField> entries_;
  FieldRole role_;
};

class TimeReversedField : public FieldImpl {
public:
  TimeReversedField(std::shared_ptr<const FieldImpl> base, double horizon)
      : base_(std::move(base)), horizon_(horizon) {}
  int dim() const override { return base_->dim(); }
  FieldRole role() const override { return base_->role(); }
  Eigen::MatrixXd value(const Eigen::Ref<const Eigen::VectorXd>& x, double s) const override {
    return base_->value(x, horizon_ - s);
  }
  bool analytic_divergence(const Eigen::Ref<const Eigen::VectorXd>& x, double s,
                           Eigen::VectorXd& out) const override {
    return base_->analytic_divergence(x, horizon_ - s, out);
  }
  bool spatially_constant() const override { return base_->spatially_constant(); }
  bool constant() const override { return base_->constant(); }

private:
  std::shared_ptr<const FieldImpl> base_;
  double horizon_;
};

}  // namespace
}  // namespace detail

MatrixField::MatrixField(std::shared_ptr<const detail::FieldImpl> impl) : impl_(std::move(impl)) {}

int MatrixField::dim() const { return impl_->dim(); }
FieldRole MatrixField::role() const { return impl_->role(); }

Eigen::MatrixXd MatrixField::value(const Eigen::Ref<const Eigen::VectorXd>& x, double t) const {
  return impl_->value(x, t);
}

Eigen::VectorXd MatrixField::divergence(const Eigen::Ref<const Eigen::VectorXd>& x,
                                        double t) const {
  Eigen::VectorXd out;
  if (impl_->analytic_divergence(x, t, out)) return out;
  return divergence_fd(x, t);
}

Eigen::VectorXd MatrixField::divergence_fd(const Eigen::Ref<const Eigen::VectorXd>& x,
                                           double t) const {
  const int d = dim();
  const double h = 1e-5 * std::max(1.0, x.norm());
  Eigen::VectorXd out = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd xp(d), xm(d);
  for (int j = 0; j < d; ++j) {
    xp = x;
    xm = x;
    xp[j] += h;
    xm[j] -= h;
    const Eigen::MatrixXd diff = impl_->value(xp, t) - impl_->value(xm, t);
    out += diff.col(j) / (2.0 * h);
  }
  return out;
}

bool MatrixField::spatially_constant() const { return impl_->spatially_constant(); }
bool MatrixField::constant() const { return impl_->constant(); }

MatrixField MatrixField::time_reversed(double horizon) const {
  return MatrixField(std::make_shared<detail::TimeReversedField>(impl_, horizon));
}

MatrixField make_constant_field(const Eigen::MatrixXd& m, FieldRole role) {
  if (m.rows() != m.cols()) throw Error(errc::dimension, "field matrix must be square");
  require_role(m, role, "constant field");
  return MatrixField(std::make_shared<detail::ConstantField>(m, role));
}

MatrixField make_zero_field(int d, FieldRole role) {
  return make_constant_field(Eigen::MatrixXd::Zero(d, d), role);
}

MatrixField make_radial_isotropic_field(int d, double a, double b) {
  if (a <= 0.0) throw Error(errc::not_psd, "radial field requires a > 0");
  if (b < 0.0) throw Error(errc::not_psd, "radial field requires b >= 0");
  return MatrixField(std::make_shared<detail::RadialIsotropicField>(d, a, b));
}

MatrixField make_linear_skew_field(const Eigen::MatrixXd& constant_part,
                                   const std::vector<Eigen::MatrixXd>& linear_parts) {
  const auto d = constant_part.rows();
  if (constant_part.cols() != d) throw Error(errc::dimension, "field matrix must be square");
  if (linear_parts.size() != static_cast<std::size_t>(d))
    throw Error(errc::dimension, "linear skew field needs one matrix per axis");
  require_skew(constant_part, "linear skew field constant part");
  for (const auto& l : linear_parts) {
    if (l.rows() != d || l.cols() != d)
      throw Error(errc::dimension, "linear part dimension mismatch");
    require_skew(l, "linear skew field coefficient");
  }
  return MatrixField(std::make_shared<detail::LinearSkewField>(constant_part, linear_parts));
}

MatrixField make_isotropic_schedule_field(int d, const Schedule& c, FieldRole role) {
  if (role == FieldRole::skew) throw Error(errc::not_skew, "isotropic field cannot be skew");
  return MatrixField(std::make_shared<detail::IsotropicScheduleField>(d, c, role));
}

MatrixField make_table_field(const RegularGrid& grid, const std::vector<Eigen::VectorXd>& entries,
                             FieldRole role) {
  return MatrixField(std::make_shared<detail::TableField>(grid, entries, role));
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  require_symmetric(m, "psd_sqrt input");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  if (eig.info() != Eigen::Success) throw Error(errc::not_psd, "eigendecomposition failed");
  Eigen::VectorXd lambda = eig.eigenvalues();
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    if (lambda[i] < kEigFloor)
      throw Error(errc::not_psd, "matrix has eigenvalue " + std::to_string(lambda[i]));
    if (lambda[i] < 0.0) lambda[i] = 0.0;
  }
  return eig.eigenvectors() * lambda.cwiseSqrt().asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace mflow
