#include "mflow/grid.hpp"

#include <cmath>

#include "mflow/error.hpp"

namespace mflow {

namespace {
constexpr std::int64_t kMaxPoints = std::int64_t{1} << 27;
}

RegularGrid::RegularGrid(Eigen::VectorXd lo, Eigen::VectorXd hi, std::vector<int> n)
    : lo_(std::move(lo)), hi_(std::move(hi)), n_(std::move(n)) {
  const int d = static_cast<int>(n_.size());
  if (d < 1 || d > 3) throw Error(errc::dimension, "grid dimension must be 1, 2 or 3");
  if (lo_.size() != d || hi_.size() != d)
    throw Error(errc::dimension, "grid bounds dimension mismatch");
  h_.resize(d);
  total_ = 1;
  for (int a = 0; a < d; ++a) {
    if (!(hi_[a] > lo_[a])) throw Error(errc::config_invalid, "grid upper bound must exceed lower");
    if (n_[static_cast<std::size_t>(a)] < 8)
      throw Error(errc::config_invalid, "grid needs at least 8 points per axis");
    h_[a] = (hi_[a] - lo_[a]) / n_[static_cast<std::size_t>(a)];
    total_ *= n_[static_cast<std::size_t>(a)];
    if (total_ > kMaxPoints) throw Error(errc::config_invalid, "grid exceeds the point budget");
  }
}

RegularGrid RegularGrid::cube(int d, double lo, double hi, int n_per_axis) {
  return RegularGrid(Eigen::VectorXd::Constant(d, lo), Eigen::VectorXd::Constant(d, hi),
                     std::vector<int>(static_cast<std::size_t>(d), n_per_axis));
}

double RegularGrid::cell_volume() const {
  double v = 1.0;
  for (int a = 0; a < dim(); ++a) v *= h_[a];
  return v;
}

std::int64_t RegularGrid::index(const std::array<int, 3>& idx) const {
  std::int64_t flat = 0;
  for (int a = 0; a < dim(); ++a) flat = flat * n_[static_cast<std::size_t>(a)] + idx[static_cast<std::size_t>(a)];
  return flat;
}

std::array<int, 3> RegularGrid::unravel(std::int64_t flat) const {
  std::array<int, 3> idx = {0, 0, 0};
  for (int a = dim() - 1; a >= 0; --a) {
    const int n = n_[static_cast<std::size_t>(a)];
    idx[static_cast<std::size_t>(a)] = static_cast<int>(flat % n);
    flat /= n;
  }
  return idx;
}

Eigen::VectorXd RegularGrid::node(std::int64_t flat) const {
  const auto idx = unravel(flat);
  Eigen::VectorXd x(dim());
  for (int a = 0; a < dim(); ++a) x[a] = node_coord(a, idx[static_cast<std::size_t>(a)]);
  return x;
}

bool RegularGrid::on_boundary(std::int64_t flat) const {
  const auto idx = unravel(flat);
  for (int a = 0; a < dim(); ++a) {
    const int i = idx[static_cast<std::size_t>(a)];
    if (i == 0 || i == count(a) - 1) return true;
  }
  return false;
}

bool RegularGrid::in_interior(std::int64_t flat, int ring) const {
  const auto idx = unravel(flat);
  for (int a = 0; a < dim(); ++a) {
    const int i = idx[static_cast<std::size_t>(a)];
    if (i < ring || i >= count(a) - ring) return false;
  }
  return true;
}

bool RegularGrid::contains(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  for (int a = 0; a < dim(); ++a) {
    const double last = node_coord(a, count(a) - 1);
    if (x[a] < lo_[a] || x[a] > last) return false;
  }
  return true;
}

bool RegularGrid::operator==(const RegularGrid& other) const {
  return n_ == other.n_ && lo_ == other.lo_ && hi_ == other.hi_;
}

ScalarGridField::ScalarGridField(RegularGrid g, Eigen::VectorXd v, std::string lab)
    : grid(std::move(g)), values(std::move(v)), label(std::move(lab)) {
  if (values.size() != grid.size())
    throw Error(errc::dimension, "grid field value count mismatch");
}

VectorGridField::VectorGridField(RegularGrid g, std::string lab)
    : grid(std::move(g)), label(std::move(lab)) {
  components.assign(static_cast<std::size_t>(grid.dim()), Eigen::VectorXd::Zero(grid.size()));
}

Eigen::VectorXd VectorGridField::at(std::int64_t flat) const {
  Eigen::VectorXd v(grid.dim());
  for (int a = 0; a < grid.dim(); ++a) v[a] = components[static_cast<std::size_t>(a)][flat];
  return v;
}

namespace {

// Shared multilinear weight/corner computation.
struct InterpCell {
  std::array<int, 3> base;
  std::array<double, 3> frac;
};

InterpCell locate(const RegularGrid& g, const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (x.size() != g.dim()) throw Error(errc::dimension, "interpolation point dimension mismatch");
  if (!g.contains(x)) throw Error(errc::domain, "interpolation point outside grid box");
  InterpCell c{{0, 0, 0}, {0.0, 0.0, 0.0}};
  for (int a = 0; a < g.dim(); ++a) {
    const double s = (x[a] - g.lower(a)) / g.spacing(a);
    int i = static_cast<int>(std::floor(s));
    if (i > g.count(a) - 2) i = g.count(a) - 2;
    if (i < 0) i = 0;
    c.base[static_cast<std::size_t>(a)] = i;
    c.frac[static_cast<std::size_t>(a)] = s - i;
  }
  return c;
}

template <typename Fetch>
double multilinear(const RegularGrid& g, const InterpCell& c, Fetch&& fetch) {
  const int d = g.dim();
  double acc = 0.0;
  const int corners = 1 << d;
  for (int corner = 0; corner < corners; ++corner) {
    double w = 1.0;
    std::array<int, 3> idx = c.base;
    for (int a = 0; a < d; ++a) {
      const bool high = (corner >> a) & 1;
      const double f = c.frac[static_cast<std::size_t>(a)];
      w *= high ? f : (1.0 - f);
      if (high) idx[static_cast<std::size_t>(a)] += 1;
    }
    if (w != 0.0) acc += w * fetch(g.index(idx));
  }
  return acc;
}

}  // namespace

double interpolate(const ScalarGridField& f, const Eigen::Ref<const Eigen::VectorXd>& x) {
  const auto cell = locate(f.grid, x);
  return multilinear(f.grid, cell, [&](std::int64_t i) { return f.values[i]; });
}

Eigen::VectorXd interpolate(const VectorGridField& f,
                            const Eigen::Ref<const Eigen::VectorXd>& x) {
  const auto cell = locate(f.grid, x);
  Eigen::VectorXd out(f.grid.dim());
  for (int a = 0; a < f.grid.dim(); ++a)
    out[a] = multilinear(f.grid, cell,
                         [&](std::int64_t i) { return f.components[static_cast<std::size_t>(a)][i]; });
  return out;
}

double integrate(const ScalarGridField& f) { return f.values.sum() * f.grid.cell_volume(); }

}  // namespace mflow
