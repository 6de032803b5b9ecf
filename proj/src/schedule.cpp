#include "mflow/schedule.hpp"

#include <algorithm>
#include <cmath>

#include "mflow/error.hpp"

namespace mflow {
namespace {

double horner(const Eigen::VectorXd& c, double u) {
  double v = 0.0;
  for (Eigen::Index k = c.size() - 1; k >= 0; --k) v = v * u + c[k];
  return v;
}

Eigen::VectorXd differentiate(const Eigen::VectorXd& c) {
  if (c.size() <= 1) return Eigen::VectorXd::Zero(1);
  Eigen::VectorXd d(c.size() - 1);
  for (Eigen::Index k = 1; k < c.size(); ++k) d[k - 1] = static_cast<double>(k) * c[k];
  return d;
}

// Re-centers p(u) as q(v) with u = v + delta:
// q[j] = sum_{k>=j} c[k] * C(k,j) * delta^(k-j).
Eigen::VectorXd shift(const Eigen::VectorXd& c, double delta) {
  const Eigen::Index n = c.size();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double s = 0.0;
    double binom = 1.0;
    double pow_delta = 1.0;
    for (Eigen::Index k = j; k < n; ++k) {
      if (k > j) {
        binom = binom * static_cast<double>(k) / static_cast<double>(k - j);
        pow_delta *= delta;
      }
      s += c[k] * binom * pow_delta;
    }
    out[j] = s;
  }
  return out;
}

Eigen::VectorXd poly_mul(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(a.size() + b.size() - 1);
  for (Eigen::Index i = 0; i < a.size(); ++i)
    for (Eigen::Index j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
  return out;
}

Eigen::VectorXd poly_add(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(std::max(a.size(), b.size()));
  out.head(a.size()) += a;
  out.head(b.size()) += b;
  return out;
}

}  // namespace

Schedule::Schedule() : breaks_{0.0}, coeffs_{Eigen::VectorXd::Zero(1)} {}

Schedule Schedule::constant(double c) {
  Schedule s;
  s.coeffs_[0][0] = c;
  return s;
}

Schedule Schedule::linear(double intercept, double slope) {
  Schedule s;
  s.coeffs_[0] = Eigen::Vector2d(intercept, slope);
  return s;
}

Schedule Schedule::polynomial(Eigen::VectorXd coeffs) {
  if (coeffs.size() == 0) coeffs = Eigen::VectorXd::Zero(1);
  Schedule s;
  s.coeffs_[0] = std::move(coeffs);
  return s;
}

Schedule Schedule::piecewise(std::vector<double> breaks, std::vector<Eigen::VectorXd> pieces) {
  if (pieces.empty()) throw Error(errc::config_invalid, "schedule needs at least one piece");
  if (breaks.size() == pieces.size() + 1) breaks.pop_back();
  if (breaks.size() != pieces.size())
    throw Error(errc::config_invalid, "schedule breaks/pieces size mismatch");
  if (!std::is_sorted(breaks.begin(), breaks.end()))
    throw Error(errc::config_invalid, "schedule breaks must be sorted");
  Schedule s;
  s.breaks_ = std::move(breaks);
  s.coeffs_ = std::move(pieces);
  for (auto& c : s.coeffs_)
    if (c.size() == 0) c = Eigen::VectorXd::Zero(1);
  return s;
}

std::size_t Schedule::piece_index(double t) const {
  auto it = std::upper_bound(breaks_.begin(), breaks_.end(), t);
  if (it == breaks_.begin()) return 0;
  return static_cast<std::size_t>(std::distance(breaks_.begin(), it)) - 1;
}

double Schedule::value(double t) const {
  const std::size_t k = piece_index(t);
  return horner(coeffs_[k], t - breaks_[k]);
}

double Schedule::derivative(double t) const {
  const std::size_t k = piece_index(t);
  return horner(differentiate(coeffs_[k]), t - breaks_[k]);
}

Schedule Schedule::derivative_schedule() const {
  Schedule out;
  out.breaks_ = breaks_;
  out.coeffs_.clear();
  for (const auto& c : coeffs_) out.coeffs_.push_back(differentiate(c));
  return out;
}

Schedule Schedule::binary_op(const Schedule& a, const Schedule& b, bool multiply) {
  std::vector<double> merged = a.breaks_;
  merged.insert(merged.end(), b.breaks_.begin(), b.breaks_.end());
  std::sort(merged.begin(), merged.end());
  merged.erase(std::unique(merged.begin(), merged.end()), merged.end());

  Schedule out;
  out.breaks_ = merged;
  out.coeffs_.clear();
  for (double start : merged) {
    const std::size_t ka = a.piece_index(start);
    const std::size_t kb = b.piece_index(start);
    const Eigen::VectorXd pa = shift(a.coeffs_[ka], start - a.breaks_[ka]);
    const Eigen::VectorXd pb = shift(b.coeffs_[kb], start - b.breaks_[kb]);
    out.coeffs_.push_back(multiply ? poly_mul(pa, pb) : poly_add(pa, pb));
  }
  return out;
}

Schedule Schedule::operator+(const Schedule& other) const { return binary_op(*this, other, false); }
Schedule Schedule::operator*(const Schedule& other) const { return binary_op(*this, other, true); }

Schedule Schedule::scaled(double c) const {
  Schedule out = *this;
  for (auto& p : out.coeffs_) p *= c;
  return out;
}

bool Schedule::is_constant() const {
  const double v0 = coeffs_[0][0];
  for (const auto& c : coeffs_) {
    if (c[0] != v0) return false;
    for (Eigen::Index k = 1; k < c.size(); ++k)
      if (c[k] != 0.0) return false;
  }
  return true;
}

MatrixSchedule::MatrixSchedule(Eigen::Index rows, Eigen::Index cols)
    : rows_(rows), cols_(cols), entries_(static_cast<std::size_t>(rows * cols)) {}

MatrixSchedule MatrixSchedule::constant(const Eigen::MatrixXd& m) {
  MatrixSchedule out(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out.at(i, j) = Schedule::constant(m(i, j));
  return out;
}

MatrixSchedule MatrixSchedule::isotropic(Eigen::Index d, const Schedule& s) {
  MatrixSchedule out(d, d);
  for (Eigen::Index i = 0; i < d; ++i) out.at(i, i) = s;
  return out;
}

MatrixSchedule MatrixSchedule::diagonal(const std::vector<Schedule>& diag) {
  const auto d = static_cast<Eigen::Index>(diag.size());
  MatrixSchedule out(d, d);
  for (Eigen::Index i = 0; i < d; ++i) out.at(i, i) = diag[static_cast<std::size_t>(i)];
  return out;
}

Schedule& MatrixSchedule::at(Eigen::Index i, Eigen::Index j) {
  return entries_[static_cast<std::size_t>(i * cols_ + j)];
}
const Schedule& MatrixSchedule::at(Eigen::Index i, Eigen::Index j) const {
  return entries_[static_cast<std::size_t>(i * cols_ + j)];
}

Eigen::MatrixXd MatrixSchedule::value(double t) const {
  Eigen::MatrixXd m(rows_, cols_);
  for (Eigen::Index i = 0; i < rows_; ++i)
    for (Eigen::Index j = 0; j < cols_; ++j) m(i, j) = at(i, j).value(t);
  return m;
}

Eigen::MatrixXd MatrixSchedule::derivative(double t) const {
  Eigen::MatrixXd m(rows_, cols_);
  for (Eigen::Index i = 0; i < rows_; ++i)
    for (Eigen::Index j = 0; j < cols_; ++j) m(i, j) = at(i, j).derivative(t);
  return m;
}

bool MatrixSchedule::is_constant() const {
  for (const auto& e : entries_)
    if (!e.is_constant()) return false;
  return true;
}

VectorSchedule VectorSchedule::constant(const Eigen::VectorXd& v) {
  std::vector<Schedule> entries;
  entries.reserve(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) entries.push_back(Schedule::constant(v[i]));
  return VectorSchedule(std::move(entries));
}

Eigen::VectorXd VectorSchedule::value(double t) const {
  Eigen::VectorXd v(size());
  for (Eigen::Index i = 0; i < size(); ++i) v[i] = at(i).value(t);
  return v;
}

Eigen::VectorXd VectorSchedule::derivative(double t) const {
  Eigen::VectorXd v(size());
  for (Eigen::Index i = 0; i < size(); ++i) v[i] = at(i).derivative(t);
  return v;
}

}  // namespace mflow
