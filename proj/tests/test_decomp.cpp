#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mflow/decomp.hpp"
#include "mflow/error.hpp"
#include "mflow/poisson.hpp"
#include "test_support.hpp"

using namespace mflow;

namespace {

SdeSpec stationary_ou(int d) {
  SdeSpec sde;
  sde.dim = d;
  sde.drift = [](const Eigen::Ref<const Eigen::VectorXd>& x, double) { return (-x).eval(); };
  sde.sigma = make_constant_field(Eigen::MatrixXd::Identity(d, d), FieldRole::psd);
  return sde;
}

SdeSpec heat_flow_sde(int d) {
  SdeSpec sde;
  sde.dim = d;
  sde.drift = [d](const Eigen::Ref<const Eigen::VectorXd>&, double) {
    return Eigen::VectorXd::Zero(d).eval();
  };
  sde.sigma = make_constant_field(0.5 * Eigen::MatrixXd::Identity(d, d), FieldRole::psd);
  return sde;
}

}  // namespace

TEST_CASE("assembled overdamped dynamics from a stationary density") {
  DecompositionBundle bundle{testsup::stationary_normal(3), PhiSource::constant(0.0, 3),
                             make_constant_field(Eigen::Matrix3d::Identity(), FieldRole::psd),
                             make_zero_field(3, FieldRole::skew)};
  const auto sde = assemble_drift(bundle);
  const Eigen::Vector3d x(0.7, -1.1, 0.4);
  CHECK(sde.drift(x, 0.3).isApprox(-x, 1e-14));
  CHECK(sde.provenance == SdeProvenance::assembled);
}

TEST_CASE("assembled heat-flow probability flow") {
  DecompositionBundle bundle{testsup::heat_flow(3), PhiSource::constant(-0.5, 3),
                             make_zero_field(3, FieldRole::psd),
                             make_zero_field(3, FieldRole::skew)};
  const auto sde = assemble_drift(bundle);
  const Eigen::Vector3d x(1.0, 0.0, 0.0);
  CHECK(sde.drift(x, 0.0).isApprox(Eigen::Vector3d(0.5, 0.0, 0.0), 1e-14));
  // At time t the flow is x / (2 (1+t)).
  CHECK(sde.drift(x, 1.0)[0] == doctest::Approx(0.25).epsilon(1e-13));
}

TEST_CASE("constant skew rotation on a stationary density") {
  Eigen::Matrix3d q = Eigen::Matrix3d::Zero();
  q(0, 1) = 1.0;
  q(1, 0) = -1.0;
  DecompositionBundle bundle{testsup::stationary_normal(3), PhiSource::constant(0.0, 3),
                             make_zero_field(3, FieldRole::psd),
                             make_constant_field(q, FieldRole::skew)};
  const auto sde = assemble_drift(bundle);
  const Eigen::Vector3d x(1.0, 2.0, 0.0);
  CHECK(sde.drift(x, 0.0).isApprox(Eigen::Vector3d(-2.0, 1.0, 0.0), 1e-14));
}

TEST_CASE("role confusion is rejected") {
  DecompositionBundle bundle{testsup::stationary_normal(2), PhiSource::constant(0.0, 2),
                             make_zero_field(2, FieldRole::skew),   // wrong role for D
                             make_zero_field(2, FieldRole::skew)};
  CHECK_THROWS_AS(assemble_drift(bundle), Error);
}

TEST_CASE("matching with the same diffusion is the identity on drifts") {
  const auto path = testsup::stationary_normal(3);
  const auto sde = stationary_ou(3);
  const auto matched =
      sde_match(sde, path, sde.sigma, make_zero_field(3, FieldRole::skew));
  testsup::PointGen points(41);
  double max_dev = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Eigen::VectorXd x = points.box(3, -4.0, 4.0);
    const double t = points.uniform(0.0, 1.0);
    max_dev = std::max(max_dev, (matched.drift(x, t) - sde.drift(x, t)).cwiseAbs().maxCoeff());
  }
  CHECK(max_dev == 0.0);
  CHECK(matched.provenance == SdeProvenance::matched);
}

TEST_CASE("zero-diffusion match of stationary dynamics freezes the flow") {
  const auto path = testsup::stationary_normal(3);
  const auto sde = stationary_ou(3);
  const auto matched = sde_match(sde, path, make_zero_field(3, FieldRole::psd),
                                 make_zero_field(3, FieldRole::skew));
  testsup::PointGen points(43);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::VectorXd x = points.box(3, -4.0, 4.0);
    CHECK(matched.drift(x, 0.2).cwiseAbs().maxCoeff() <= 1e-14 * x.norm());
  }
}

TEST_CASE("heat-flow match to zero diffusion gives the probability flow") {
  const auto path = testsup::heat_flow(3);
  const auto sde = heat_flow_sde(3);
  const auto matched = sde_match(sde, path, make_zero_field(3, FieldRole::psd),
                                 make_zero_field(3, FieldRole::skew));
  const Eigen::Vector3d x(1.0, -2.0, 0.5);
  const double t = 0.5;
  CHECK(matched.drift(x, t).isApprox((x / (2.0 * (1.0 + t))).eval(), 1e-13));
}

TEST_CASE("stationary dynamics are their own reversal") {
  const auto path = testsup::stationary_normal(3);
  const auto sde = stationary_ou(3);
  const auto rev = time_reverse_strict(sde, path, 1.0);
  testsup::PointGen points(47);
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::VectorXd y = points.box(3, -4.0, 4.0);
    const double s = points.uniform(0.0, 1.0);
    CHECK((rev.drift(y, s) + y).cwiseAbs().maxCoeff() <= 1e-12);
  }
  CHECK(rev.provenance == SdeProvenance::reversed);
}

TEST_CASE("double reversal is the identity on drifts") {
  const auto path = testsup::heat_flow(3);
  const auto sde = heat_flow_sde(3);
  const double horizon = 1.0;
  const auto rev = time_reverse_strict(sde, path, horizon);
  const auto back = time_reverse_strict(rev, path.time_reversed(horizon), horizon);
  testsup::PointGen points(53);
  for (int trial = 0; trial < 1000; ++trial) {
    const Eigen::VectorXd x = points.box(3, -4.0, 4.0);
    const double t = points.uniform(0.0, 1.0);
    CHECK((back.drift(x, t) - sde.drift(x, t)).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("heat-flow strict reversal drift") {
  const auto path = testsup::heat_flow(3);
  const auto sde = heat_flow_sde(3);
  const double horizon = 1.0;
  const auto rev = time_reverse_strict(sde, path, horizon);
  const Eigen::Vector3d y(1.0, 0.0, -2.0);
  const double s = 0.25;
  // -f + 2 div Sigma + 2 Sigma score = score(y, T-s) = -y / (1 + (T-s)).
  CHECK(rev.drift(y, s).isApprox((-y / (1.0 + (horizon - s))).eval(), 1e-13));
}

TEST_CASE("weak family contains the strict reversal exactly") {
  const auto path = testsup::heat_flow(3);
  const auto sde = heat_flow_sde(3);
  const double horizon = 1.0;
  const auto strict = time_reverse_strict(sde, path, horizon);
  const auto weak = weak_reversal_family(sde, path, horizon, sde.sigma.time_reversed(horizon),
                                         make_zero_field(3, FieldRole::skew));
  testsup::PointGen points(59);
  for (int trial = 0; trial < 500; ++trial) {
    const Eigen::VectorXd y = points.box(3, -4.0, 4.0);
    const double s = points.uniform(0.0, 1.0);
    CHECK((weak.drift(y, s) - strict.drift(y, s)).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("weak family with zero fields freezes the stationary flow") {
  const auto path = testsup::stationary_normal(3);
  const auto sde = stationary_ou(3);
  const auto weak = weak_reversal_family(sde, path, 1.0, make_zero_field(3, FieldRole::psd),
                                         make_zero_field(3, FieldRole::skew));
  const Eigen::Vector3d y(0.3, 1.4, -0.2);
  // -f + Sigma score = y - y = 0.
  CHECK(weak.drift(y, 0.5).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("denoiser family reduces to the score-proportional flow") {
  EdmScheduleParams schedule;
  schedule.scale = Schedule::constant(1.0);
  schedule.set_noise(Schedule::linear(0.0, 1.0));
  schedule.atoms = Eigen::MatrixXd::Zero(3, 1);
  const double horizon = 1.0;

  const auto flow = denoiser_family(schedule, horizon, make_zero_field(3, FieldRole::psd),
                                    make_zero_field(3, FieldRole::skew));
  CHECK(flow.provenance == SdeProvenance::denoiser);

  const auto rev_path = make_edm_path(schedule).time_reversed(horizon);
  testsup::PointGen points(61);
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::VectorXd y = points.box(3, -2.0, 2.0);
    const double s = points.uniform(0.0, 0.9);
    const double phi = analytic_phi_edm(schedule, horizon, s);
    const Eigen::VectorXd expected = phi * rev_path.score(y, s);
    CHECK((flow.drift(y, s) - expected).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("denoiser with isotropic extra noise matches the beta recipe") {
  EdmScheduleParams schedule;
  schedule.scale = Schedule::constant(1.0);
  schedule.set_noise(Schedule::linear(0.0, 1.0));
  schedule.atoms = Eigen::MatrixXd::Zero(3, 1);
  const double horizon = 1.0;
  const double beta = 0.7;

  // D-bar = beta sigma-bar^2 I as a schedule in s: sigma-bar(s)^2 = (T-s)^2.
  const Schedule sigma_bar_sq =
      Schedule::polynomial(Eigen::Vector3d(horizon * horizon, -2.0 * horizon, 1.0));
  const auto d_bar = make_isotropic_schedule_field(3, sigma_bar_sq.scaled(beta), FieldRole::psd);
  const auto flow =
      denoiser_family(schedule, horizon, d_bar, make_zero_field(3, FieldRole::skew));

  const auto rev_path = make_edm_path(schedule).time_reversed(horizon);
  const Eigen::Vector3d y(0.4, -0.1, 0.9);
  const double s = 0.3;
  const double sigma_bar = horizon - s;
  const Eigen::VectorXd expected =
      (analytic_phi_edm(schedule, horizon, s) + beta * sigma_bar * sigma_bar) *
      rev_path.score(y, s);
  CHECK((flow.drift(y, s) - expected).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("analytic phi of the reversed noising flow") {
  EdmScheduleParams schedule;
  schedule.scale = Schedule::constant(1.0);
  schedule.set_noise(Schedule::linear(0.0, 1.0));
  schedule.atoms = Eigen::MatrixXd::Zero(3, 1);
  // sigma(t) = t, horizon 1: phi(s) = sigma sigma' at 1-s = 1-s.
  CHECK(analytic_phi_edm(schedule, 1.0, 0.25) == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(analytic_phi_edm(schedule, 1.0, 0.0) == doctest::Approx(1.0).epsilon(1e-14));

  EdmScheduleParams flat;
  flat.scale = Schedule::constant(1.0);
  flat.set_noise(Schedule::constant(2.0));
  flat.atoms = Eigen::MatrixXd::Zero(3, 1);
  CHECK(analytic_phi_edm(flat, 1.0, 0.5) == 0.0);

  EdmScheduleParams scaled = schedule;
  scaled.scale = Schedule::constant(2.0);
  CHECK_THROWS_AS(denoiser_family(scaled, 1.0, make_zero_field(3, FieldRole::psd),
                                  make_zero_field(3, FieldRole::skew)),
                  Error);
}

TEST_CASE("grid phi source interpolates slices and bounds the domain") {
  const auto path = testsup::heat_flow(3);
  const auto grid = RegularGrid::cube(3, -10.0, 10.0, 32);
  std::vector<PhiSource::GridSlice> slices;
  for (double t : {0.0, 1.0}) {
    const auto p = sample_on_grid(path, grid, t, GridQuantity::density);
    const auto dtp = sample_on_grid(path, grid, t, GridQuantity::dt_density);
    auto res = solve_phi_fourier(p, dtp);
    auto grad = grad_phi(res, p, &path, t);
    slices.push_back({t, std::move(res.phi), std::move(grad)});
  }
  const auto phi = PhiSource::grid(std::move(slices));
  const Eigen::Vector3d x(0.5, -0.5, 1.0);
  // Constant -1/2 at both ends, so interpolation in t stays near -1/2.
  CHECK(phi.value(x, 0.37) == doctest::Approx(-0.5).epsilon(2e-3));
  CHECK(phi.gradient(x, 0.37).cwiseAbs().maxCoeff() <= 5e-3);

  DecompositionBundle bundle{path, phi, make_zero_field(3, FieldRole::psd),
                             make_zero_field(3, FieldRole::skew)};
  const auto sde = assemble_drift(bundle);
  REQUIRE(sde.domain.has_value());
  CHECK(sde.domain->first[0] == doctest::Approx(-10.0));
  Eigen::Vector3d outside(11.0, 0.0, 0.0);
  CHECK_THROWS_AS(sde.drift(outside, 0.5), Error);
}
