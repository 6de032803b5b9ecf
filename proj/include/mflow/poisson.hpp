#pragma once

#include "mflow/density.hpp"
#include "mflow/grid.hpp"

namespace mflow {

enum class GridQuantity { density, dt_density };

/// Pointwise evaluation of p or dt p on grid nodes. Throws NONFINITE with the
/// node index if the path evaluates to a non-finite value.
ScalarGridField sample_on_grid(const DensityPath& path, const RegularGrid& grid, double t,
                               GridQuantity which);

struct PhiSolveResult {
  ScalarGridField u;    // solution of Lap u = -dtp with far-field decay
  ScalarGridField phi;  // u / p nodewise
  VectorGridField grad_u;  // i xi differentiation on the solver's padded box
  double padded_mean = 0.0;     // mean of u over the padded box (DC pinning)
  double imag_residual = 0.0;   // max |Im u| relative to max |u|
  double anchor = 0.0;          // far-shell constant subtracted (d=3)
};

/// Spectral backend: zero-padded box (factor 2 per axis, rounded to powers of
/// two), forward transform of dt p, multiplication by 1/|xi|^2 with the zero
/// mode pinned, inverse transform, crop. For d >= 2 the additive constant is
/// fixed by zeroing the average of u over a far shell, where the decaying
/// solution of a zero-mass source has vanishing average; in d=1 the periodic
/// zero-mean solution is returned as-is.
PhiSolveResult solve_phi_fourier(const ScalarGridField& p_grid, const ScalarGridField& dtp_grid);

/// Free-space backend (d=3 only): discrete convolution of dt p with the
/// kernel 1/(4 pi r) on the padded box, singular cell regularized by an
/// equal-volume ball average plus a lattice correction that cancels the
/// leading O(h^2) quadrature error.
PhiSolveResult solve_phi_green(const ScalarGridField& dtp_grid, const ScalarGridField& p_grid);

/// grad phi = (grad u - phi grad p) / p using the solver-native grad u;
/// grad p analytic (p * score) when a path is supplied, spectral otherwise.
VectorGridField grad_phi(const PhiSolveResult& solve, const ScalarGridField& p_grid,
                         const DensityPath* path = nullptr, double t = 0.0);

/// Spectral gradient of a scalar field via the zero-padded transform.
VectorGridField spectral_gradient(const ScalarGridField& f);

/// Nodes with p >= frac * max(p): the region where phi = u/p is trustworthy.
std::vector<std::uint8_t> high_density_mask(const ScalarGridField& p_grid, double frac);

/// Axis-aligned bounding box of the high-density region; grid-backed phi
/// drifts should be confined here (outside it u/p amplifies tail noise).
std::pair<Eigen::VectorXd, Eigen::VectorXd> high_density_box(const ScalarGridField& p_grid,
                                                             double frac);

/// Relative L2 distance between two fields over a node mask.
double masked_rel_l2(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                     const std::vector<std::uint8_t>& mask);

}  // namespace mflow
