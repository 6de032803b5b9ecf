#pragma once

#include <vector>

#include <Eigen/Dense>

namespace mflow {

/// Piecewise polynomial in t with exact derivatives. Pieces are defined on
/// consecutive intervals [t_k, t_{k+1}] in the local variable u = t - t_k;
/// evaluation outside the covered range extrapolates with the end piece.
class Schedule {
public:
  Schedule();  // identically zero

  static Schedule constant(double c);
  static Schedule linear(double intercept, double slope);  // intercept + slope*t
  /// Single global polynomial sum_k coeffs[k] * t^k.
  static Schedule polynomial(Eigen::VectorXd coeffs);
  /// Piecewise: breaks.size() == pieces.size() + 1 when closed, or
  /// breaks.size() == pieces.size() (each piece starts at breaks[k]).
  static Schedule piecewise(std::vector<double> breaks, std::vector<Eigen::VectorXd> pieces);

  double operator()(double t) const { return value(t); }
  double value(double t) const;
  double derivative(double t) const;

  Schedule derivative_schedule() const;
  Schedule operator+(const Schedule& other) const;
  Schedule operator*(const Schedule& other) const;
  Schedule scaled(double c) const;
  Schedule squared() const { return (*this) * (*this); }

  bool is_constant() const;

private:
  // break_[k] is the start of piece k; pieces evaluated in u = t - break_[k].
  std::vector<double> breaks_;
  std::vector<Eigen::VectorXd> coeffs_;

  std::size_t piece_index(double t) const;
  static Schedule binary_op(const Schedule& a, const Schedule& b, bool multiply);
};

/// Matrix-valued schedule: one Schedule per entry, with value and exact
/// time-derivative evaluation. Used for Gaussian mean/covariance paths.
class MatrixSchedule {
public:
  MatrixSchedule() : rows_(0), cols_(0) {}
  MatrixSchedule(Eigen::Index rows, Eigen::Index cols);

  static MatrixSchedule constant(const Eigen::MatrixXd& m);
  static MatrixSchedule isotropic(Eigen::Index d, const Schedule& s);
  static MatrixSchedule diagonal(const std::vector<Schedule>& diag);

  Eigen::Index rows() const { return rows_; }
  Eigen::Index cols() const { return cols_; }

  Schedule& at(Eigen::Index i, Eigen::Index j);
  const Schedule& at(Eigen::Index i, Eigen::Index j) const;

  Eigen::MatrixXd value(double t) const;
  Eigen::MatrixXd derivative(double t) const;

  bool is_constant() const;

private:
  Eigen::Index rows_, cols_;
  std::vector<Schedule> entries_;
};

/// Vector-valued schedule (one Schedule per coordinate).
class VectorSchedule {
public:
  VectorSchedule() = default;
  explicit VectorSchedule(std::vector<Schedule> entries) : entries_(std::move(entries)) {}

  static VectorSchedule constant(const Eigen::VectorXd& v);

  Eigen::Index size() const { return static_cast<Eigen::Index>(entries_.size()); }
  Schedule& at(Eigen::Index i) { return entries_[static_cast<std::size_t>(i)]; }
  const Schedule& at(Eigen::Index i) const { return entries_[static_cast<std::size_t>(i)]; }

  Eigen::VectorXd value(double t) const;
  Eigen::VectorXd derivative(double t) const;

private:
  std::vector<Schedule> entries_;
};

}  // namespace mflow
