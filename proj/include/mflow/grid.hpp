#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace mflow {

/// Axis-aligned tensor-product grid, d in {1,2,3}. Nodes along axis a sit at
/// lo[a] + i*h[a] for i in [0, n[a]), with h = (hi-lo)/n; the upper bound is
/// the period end, so the last node is hi - h. This makes the node set
/// FFT-periodic and puts a node at the box center for even n.
class RegularGrid {
public:
  RegularGrid(Eigen::VectorXd lo, Eigen::VectorXd hi, std::vector<int> n);

  static RegularGrid cube(int d, double lo, double hi, int n_per_axis);

  int dim() const { return static_cast<int>(n_.size()); }
  const std::vector<int>& counts() const { return n_; }
  int count(int axis) const { return n_[static_cast<std::size_t>(axis)]; }
  double lower(int axis) const { return lo_[axis]; }
  double upper(int axis) const { return hi_[axis]; }
  double spacing(int axis) const { return h_[axis]; }
  const Eigen::VectorXd& lower() const { return lo_; }
  const Eigen::VectorXd& upper() const { return hi_; }

  std::int64_t size() const { return total_; }
  double cell_volume() const;

  /// Row-major linear index (last axis fastest).
  std::int64_t index(const std::array<int, 3>& idx) const;
  std::array<int, 3> unravel(std::int64_t flat) const;
  Eigen::VectorXd node(std::int64_t flat) const;
  double node_coord(int axis, int i) const { return lo_[axis] + h_[axis] * i; }

  bool on_boundary(std::int64_t flat) const;
  /// True when every axis index is at least `ring` cells from both ends.
  bool in_interior(std::int64_t flat, int ring) const;
  bool contains(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  bool operator==(const RegularGrid& other) const;

private:
  Eigen::VectorXd lo_, hi_, h_;
  std::vector<int> n_;
  std::int64_t total_;
};

/// Scalar values sampled on a grid (row-major).
struct ScalarGridField {
  RegularGrid grid;
  Eigen::VectorXd values;
  std::string label;

  ScalarGridField(RegularGrid g, std::string lab)
      : grid(std::move(g)), values(Eigen::VectorXd::Zero(grid.size())), label(std::move(lab)) {}
  ScalarGridField(RegularGrid g, Eigen::VectorXd v, std::string lab);

  double max_abs() const { return values.size() ? values.cwiseAbs().maxCoeff() : 0.0; }
};

/// d-component vector field on a grid, stored as one scalar array per
/// component.
struct VectorGridField {
  RegularGrid grid;
  std::vector<Eigen::VectorXd> components;
  std::string label;

  VectorGridField(RegularGrid g, std::string lab);

  Eigen::VectorXd at(std::int64_t flat) const;
};

/// Multilinear interpolation; exact at nodes. Throws DOMAIN when x lies
/// outside the node hull [lo, lo + (n-1)h].
double interpolate(const ScalarGridField& f, const Eigen::Ref<const Eigen::VectorXd>& x);
Eigen::VectorXd interpolate(const VectorGridField& f, const Eigen::Ref<const Eigen::VectorXd>& x);

/// Riemann/trapezoid mass sum(values) * cell volume (exact trapezoid on the
/// periodic node set for fields that vanish at the boundary).
double integrate(const ScalarGridField& f);

}  // namespace mflow
