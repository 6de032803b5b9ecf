#pragma once

// Shared fixtures and small numeric oracles for the test suites.

#include <functional>
#include <random>

#include <Eigen/Dense>

#include "mflow/density.hpp"
#include "mflow/schedule.hpp"

namespace testsup {

inline mflow::DensityPath stationary_normal(int d, double t_max = 1.0) {
  mflow::GaussianPathParams params;
  params.mean = mflow::VectorSchedule::constant(Eigen::VectorXd::Zero(d));
  params.cov = mflow::MatrixSchedule::constant(Eigen::MatrixXd::Identity(d, d));
  params.t_max = t_max;
  return mflow::make_gaussian_path(params);
}

// N(0, (1+t) I)
inline mflow::DensityPath heat_flow(int d, double t_max = 1.0) {
  mflow::GaussianPathParams params;
  params.mean = mflow::VectorSchedule::constant(Eigen::VectorXd::Zero(d));
  params.cov = mflow::MatrixSchedule::isotropic(d, mflow::Schedule::linear(1.0, 1.0));
  params.t_max = t_max;
  return mflow::make_gaussian_path(params);
}

// Equal-weight pair with means +/-(1 + 0.5 t) e1 and unit covariance.
inline mflow::DensityPath two_moving_gaussians(int d, double t_max = 1.0) {
  mflow::MixturePathParams params;
  for (double sign : {1.0, -1.0}) {
    mflow::GaussianPathParams c;
    std::vector<mflow::Schedule> mean;
    mean.push_back(mflow::Schedule::linear(sign * 1.0, sign * 0.5));
    for (int a = 1; a < d; ++a) mean.push_back(mflow::Schedule::constant(0.0));
    c.mean = mflow::VectorSchedule(std::move(mean));
    c.cov = mflow::MatrixSchedule::constant(Eigen::MatrixXd::Identity(d, d));
    c.t_max = t_max;
    params.components.push_back(std::move(c));
  }
  params.weights = Eigen::Vector2d(0.5, 0.5);
  params.t_max = t_max;
  return mflow::make_mixture_path(params);
}

// Single atom at the origin, s(t) = 1, sigma(t) = t.
inline mflow::DensityPath edm_single_atom(int d, double t_max = 1.0) {
  mflow::EdmScheduleParams params;
  params.scale = mflow::Schedule::constant(1.0);
  params.set_noise(mflow::Schedule::linear(0.0, 1.0));
  params.atoms = Eigen::MatrixXd::Zero(d, 1);
  params.t_max = t_max;
  return mflow::make_edm_path(params);
}

// Central difference d/dt f(t).
inline double central_dt(const std::function<double(double)>& f, double t, double h) {
  return (f(t + h) - f(t - h)) / (2.0 * h);
}

// Central difference gradient of a scalar function of x.
inline Eigen::VectorXd central_grad(const std::function<double(const Eigen::VectorXd&)>& f,
                                    const Eigen::VectorXd& x, double h) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    g[i] = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

// Deterministic test-point generator (independent of the library RNG).
struct PointGen {
  std::mt19937 gen;
  explicit PointGen(unsigned seed) : gen(seed) {}

  Eigen::VectorXd box(int d, double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Eigen::VectorXd x(d);
    for (int i = 0; i < d; ++i) x[i] = dist(gen);
    return x;
  }

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(gen);
  }
};

}  // namespace testsup
