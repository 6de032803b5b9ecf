#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "mflow/density.hpp"
#include "mflow/error.hpp"
#include "test_support.hpp"

using namespace mflow;

TEST_CASE("standard normal score is -x") {
  const auto path = testsup::stationary_normal(3);
  Eigen::Vector3d x(1.0, 0.0, 0.0);
  for (double t : {0.0, 0.3, 1.0}) {
    CHECK(path.score(x, t).isApprox(Eigen::Vector3d(-1.0, 0.0, 0.0), 1e-14));
    CHECK(path.dt_density(x, t) == 0.0);
  }
}

TEST_CASE("heat flow dt p at the origin matches the analytic value") {
  // dt p = (1/2) Lap p for N(0,(1+t)I); at x=0, t=0 this is -(3/2)(2pi)^{-3/2}.
  const auto path = testsup::heat_flow(3);
  const Eigen::Vector3d zero = Eigen::Vector3d::Zero();
  CHECK(path.dt_density(zero, 0.0) == doctest::Approx(-0.09524045390136143).epsilon(1e-12));
  CHECK(path.density(zero, 0.0) == doctest::Approx(0.06349363593424097).epsilon(1e-12));
}

TEST_CASE("closed-form dt p matches central time differences") {
  testsup::PointGen points(31);
  const double h = 1e-5;
  for (const auto& path : {testsup::heat_flow(3), testsup::two_moving_gaussians(3)}) {
    for (int trial = 0; trial < 100; ++trial) {
      const Eigen::VectorXd x = points.box(3, -3.0, 3.0);
      const double t = points.uniform(0.1, 0.9);
      const double fd = testsup::central_dt([&](double s) { return path.density(x, s); }, t, h);
      const double cf = path.dt_density(x, t);
      CHECK(cf == doctest::Approx(fd).epsilon(1e-6));
    }
  }
}

TEST_CASE("score matches central differences of log p") {
  testsup::PointGen points(77);
  for (const auto& path :
       {testsup::heat_flow(3), testsup::two_moving_gaussians(3), testsup::edm_single_atom(3)}) {
    for (int trial = 0; trial < 200; ++trial) {
      const Eigen::VectorXd x = points.box(3, -2.5, 2.5);
      const double t = points.uniform(0.2, 0.9);
      const Eigen::VectorXd fd = testsup::central_grad(
          [&](const Eigen::VectorXd& y) { return path.log_density(y, t); }, x, 1e-5);
      const Eigen::VectorXd cf = path.score(x, t);
      CHECK((cf - fd).norm() <= 1e-5 * std::max(1.0, fd.norm()));
    }
  }
}

TEST_CASE("K=1 mixture reduces to the plain gaussian") {
  GaussianPathParams gp;
  gp.mean = VectorSchedule({Schedule::linear(0.0, 1.0), Schedule::constant(0.5)});
  gp.cov = MatrixSchedule::isotropic(2, Schedule::linear(1.0, 0.5));
  const auto gauss = make_gaussian_path(gp);

  MixturePathParams mp;
  mp.components = {gp};
  mp.weights = Eigen::VectorXd::Ones(1);
  const auto mix = make_mixture_path(mp);

  testsup::PointGen points(5);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::VectorXd x = points.box(2, -3.0, 3.0);
    const double t = points.uniform(0.0, 1.0);
    CHECK(mix.log_density(x, t) == doctest::Approx(gauss.log_density(x, t)).epsilon(1e-14));
    CHECK(mix.score(x, t).isApprox(gauss.score(x, t), 1e-13));
    CHECK(mix.dt_density(x, t) == doctest::Approx(gauss.dt_density(x, t)).epsilon(1e-13));
  }
}

TEST_CASE("symmetric mixture has zero score at the origin") {
  const auto path = testsup::two_moving_gaussians(3);
  const Eigen::Vector3d zero = Eigen::Vector3d::Zero();
  CHECK(path.score(zero, 0.4).norm() < 1e-14);
}

TEST_CASE("mollified family matches the gaussian closed form") {
  // Single atom at the origin with s=1, sigma(t)=t: p(.,t) = N(0, t^2 I).
  const auto path = testsup::edm_single_atom(3);
  testsup::PointGen points(13);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::VectorXd x = points.box(3, -2.0, 2.0);
    const double t = points.uniform(0.3, 1.0);
    const double expected =
        std::pow(2.0 * std::numbers::pi * t * t, -1.5) * std::exp(-x.squaredNorm() / (2.0 * t * t));
    CHECK(path.density(x, t) == doctest::Approx(expected).epsilon(1e-12));
  }
  CHECK_THROWS_AS(path.density(Eigen::Vector3d::Zero(), 0.0), Error);
}

TEST_CASE("edm heat identity: dt p = (1/2) Lap p for sigma = sqrt(t)") {
  EdmScheduleParams params;
  params.scale = Schedule::constant(1.0);
  params.noise_sq = Schedule::linear(0.0, 1.0);  // sigma^2 = t
  params.atoms = Eigen::MatrixXd::Zero(3, 1);
  const auto path = make_edm_path(params);

  testsup::PointGen points(99);
  for (int trial = 0; trial < 40; ++trial) {
    const Eigen::VectorXd x = points.box(3, -1.5, 1.5);
    const double t = points.uniform(0.4, 1.0);
    // Laplacian by central differences of p.
    const double h = 1e-4;
    double lap = 0.0;
    const double pc = path.density(x, t);
    for (int a = 0; a < 3; ++a) {
      Eigen::VectorXd xp = x, xm = x;
      xp[a] += h;
      xm[a] -= h;
      lap += (path.density(xp, t) - 2.0 * pc + path.density(xm, t)) / (h * h);
    }
    CHECK(path.dt_density(x, t) == doctest::Approx(0.5 * lap).epsilon(1e-5));
  }
}

TEST_CASE("exact sampler moments and determinism") {
  const auto path = testsup::stationary_normal(3);
  const int n = 100000;
  const auto samples = sample_exact(path, 0.5, n, 99);
  REQUIRE(samples.cols() == n);
  const Eigen::Vector3d mean = samples.rowwise().mean();
  for (int a = 0; a < 3; ++a) CHECK(std::abs(mean[a]) < 3.0 / std::sqrt(static_cast<double>(n)));

  Eigen::MatrixXd centered = samples.colwise() - samples.rowwise().mean();
  Eigen::Matrix3d cov = centered * centered.transpose() / static_cast<double>(n - 1);
  for (int a = 0; a < 3; ++a)
    CHECK(std::abs(cov(a, a) - 1.0) < 4.0 * std::sqrt(2.0 / static_cast<double>(n)));

  const auto again = sample_exact(path, 0.5, n, 99);
  CHECK(samples == again);  // bit-identical
  const auto other = sample_exact(path, 0.5, n, 100);
  CHECK(samples != other);
}

TEST_CASE("gaussian sampler tracks schedule moments") {
  const auto path = testsup::heat_flow(2);
  const int n = 100000;
  const auto samples = sample_exact(path, 1.0, n, 7);
  Eigen::MatrixXd centered = samples.colwise() - samples.rowwise().mean();
  Eigen::Matrix2d cov = centered * centered.transpose() / static_cast<double>(n - 1);
  for (int a = 0; a < 2; ++a)
    CHECK(std::abs(cov(a, a) - 2.0) < 4.0 * 2.0 * std::sqrt(2.0 / static_cast<double>(n)));
}

TEST_CASE("rare mixture component counts follow the binomial") {
  MixturePathParams mp;
  for (double m : {-20.0, 20.0}) {
    GaussianPathParams c;
    c.mean = VectorSchedule::constant(Eigen::VectorXd::Constant(1, m));
    c.cov = MatrixSchedule::constant(Eigen::MatrixXd::Identity(1, 1));
    mp.components.push_back(std::move(c));
  }
  mp.weights = Eigen::Vector2d(0.999, 0.001);
  const auto path = make_mixture_path(mp);
  const int n = 100000;
  const auto samples = sample_exact(path, 0.5, n, 4);
  int rare = 0;
  for (int i = 0; i < n; ++i)
    if (samples(0, i) > 0.0) ++rare;
  const double expected = n * 0.001;
  const double sd = std::sqrt(n * 0.001 * 0.999);
  CHECK(std::abs(rare - expected) <= 4.0 * sd);
}

TEST_CASE("log density stays finite deep in the tails") {
  for (const auto& path : {testsup::heat_flow(3), testsup::two_moving_gaussians(3)}) {
    const Eigen::Vector3d far(30.0, -25.0, 40.0);
    const double lp = path.log_density(far, 0.5);
    CHECK(std::isfinite(lp));
    CHECK(std::isfinite(path.score(far, 0.5).sum()));
  }
}

TEST_CASE("validation report flags truncated boxes") {
  const auto path = testsup::stationary_normal(3);
  const auto good = validate_density(path, RegularGrid::cube(3, -8.0, 8.0, 64), 0.5);
  CHECK(good.mass_error < 1e-6);
  CHECK(good.boundary_ratio < 1e-12);
  CHECK(good.pass());

  const auto bad = validate_density(path, RegularGrid::cube(3, -1.0, 1.0, 16), 0.5);
  CHECK_FALSE(bad.boundary_ok);
  CHECK_FALSE(bad.pass());
}

TEST_CASE("heat flow dt p integrates to zero on a big box") {
  const auto path = testsup::heat_flow(3);
  const auto report = validate_density(path, RegularGrid::cube(3, -10.0, 10.0, 64), 0.5);
  CHECK(report.dtp_mass < 1e-6);
  CHECK(report.pass());
}

TEST_CASE("construction rejects bad parameters") {
  GaussianPathParams gp;
  gp.mean = VectorSchedule::constant(Eigen::Vector2d::Zero());
  gp.cov = MatrixSchedule::isotropic(2, Schedule::linear(1.0, -2.0));  // negative after t=0.5
  CHECK_THROWS_AS(make_gaussian_path(gp), Error);

  MixturePathParams mp;
  GaussianPathParams ok;
  ok.mean = VectorSchedule::constant(Eigen::Vector2d::Zero());
  ok.cov = MatrixSchedule::constant(Eigen::Matrix2d::Identity());
  mp.components = {ok, ok};
  mp.weights = Eigen::Vector2d(0.5, -0.5);
  CHECK_THROWS_AS(make_mixture_path(mp), Error);
}

TEST_CASE("time reversal flips the density derivative") {
  const auto path = testsup::heat_flow(3);
  const auto rev = path.time_reversed(1.0);
  const Eigen::Vector3d x(0.4, -0.2, 0.1);
  CHECK(rev.density(x, 0.25) == doctest::Approx(path.density(x, 0.75)).epsilon(1e-14));
  CHECK(rev.dt_density(x, 0.25) == doctest::Approx(-path.dt_density(x, 0.75)).epsilon(1e-14));
  CHECK(rev.score(x, 0.25).isApprox(path.score(x, 0.75), 1e-14));
}

TEST_CASE("sampler mean of a shifted atom converges to the atom") {
  EdmScheduleParams params;
  params.scale = Schedule::constant(1.0);
  params.set_noise(Schedule::linear(0.0, 1.0));
  params.atoms = Eigen::Vector3d(1.0, -2.0, 0.5);
  const auto path = make_edm_path(params);
  const int n = 10000;
  const auto samples = sample_exact(path, 0.5, n, 21);
  const Eigen::Vector3d mean = samples.rowwise().mean();
  const double se = 0.5 / std::sqrt(static_cast<double>(n));
  CHECK((mean - Eigen::Vector3d(1.0, -2.0, 0.5)).cwiseAbs().maxCoeff() < 3.0 * se);
}
