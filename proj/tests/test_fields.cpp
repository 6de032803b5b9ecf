#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mflow/error.hpp"
#include "mflow/fields.hpp"
#include "test_support.hpp"

using namespace mflow;

TEST_CASE("constant field basics") {
  const auto id = make_constant_field(Eigen::Matrix3d::Identity(), FieldRole::psd);
  const Eigen::Vector3d x(0.3, -1.0, 2.0);
  CHECK(id.value(x, 0.5).isApprox(Eigen::Matrix3d::Identity()));
  CHECK(id.divergence(x, 0.5).isZero(0.0));
  CHECK(id.spatially_constant());

  Eigen::Matrix3d q = Eigen::Matrix3d::Zero();
  q(0, 1) = 1.0;
  q(1, 0) = -1.0;
  const auto skew = make_constant_field(q, FieldRole::skew);
  CHECK(skew.value(x, 0.0) == q);
}

TEST_CASE("role violations are rejected") {
  Eigen::Matrix2d asym;
  asym << 1.0, 0.5, 0.4, 1.0;
  CHECK_THROWS_AS(make_constant_field(asym, FieldRole::psd), Error);
  CHECK_THROWS_AS(make_constant_field(Eigen::Matrix2d::Identity(), FieldRole::skew), Error);

  Eigen::Matrix2d indefinite;
  indefinite << 1.0, 0.0, 0.0, -0.5;
  CHECK_THROWS_AS(make_constant_field(indefinite, FieldRole::psd), Error);
}

TEST_CASE("radial isotropic divergence") {
  const auto d3 = make_radial_isotropic_field(3, 1.0, 1.0);
  const Eigen::Vector3d x(1.0, 2.0, 0.0);
  CHECK(d3.divergence(x, 0.0).isApprox(Eigen::Vector3d(2.0, 4.0, 0.0)));
  CHECK(d3.divergence(Eigen::Vector3d::Zero(), 0.0).isZero(0.0));
  CHECK(d3.value(x, 0.0)(0, 0) == doctest::Approx(1.0 + 5.0));

  const auto flat = make_radial_isotropic_field(3, 2.0, 0.0);
  CHECK(flat.divergence(x, 0.0).isZero(0.0));
  CHECK(flat.spatially_constant());

  CHECK_THROWS_AS(make_radial_isotropic_field(3, 0.0, 1.0), Error);
}

TEST_CASE("linear skew field divergence and symmetry") {
  // Q12 = x2, Q21 = -x2 in d=3.
  std::vector<Eigen::MatrixXd> linear(3, Eigen::MatrixXd::Zero(3, 3));
  linear[1](0, 1) = 1.0;
  linear[1](1, 0) = -1.0;
  const auto q = make_linear_skew_field(Eigen::MatrixXd::Zero(3, 3), linear);
  const Eigen::Vector3d x(0.7, -0.3, 1.2);
  CHECK(q.divergence(x, 0.0).isApprox(Eigen::Vector3d(1.0, 0.0, 0.0)));

  testsup::PointGen points(3);
  for (int trial = 0; trial < 500; ++trial) {
    const Eigen::VectorXd y = points.box(3, -5.0, 5.0);
    const Eigen::MatrixXd m = q.value(y, 0.0);
    CHECK((m + m.transpose()).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(std::abs(y.dot(m * y)) < 1e-12 * y.squaredNorm());
  }

  // Violating coefficients are rejected.
  std::vector<Eigen::MatrixXd> bad(3, Eigen::MatrixXd::Zero(3, 3));
  bad[0](0, 1) = 1.0;  // no compensating -1
  CHECK_THROWS_AS(make_linear_skew_field(Eigen::MatrixXd::Zero(3, 3), bad), Error);
}

TEST_CASE("finite-difference divergence agrees with analytic forms") {
  testsup::PointGen points(11);
  const auto radial = make_radial_isotropic_field(3, 1.0, 0.7);
  std::vector<Eigen::MatrixXd> linear(3, Eigen::MatrixXd::Zero(3, 3));
  linear[1](0, 1) = 1.0;
  linear[1](1, 0) = -1.0;
  linear[2](1, 2) = -0.5;
  linear[2](2, 1) = 0.5;
  const auto skew = make_linear_skew_field(Eigen::MatrixXd::Zero(3, 3), linear);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::VectorXd x = points.box(3, -4.0, 4.0);
    const Eigen::VectorXd ra = radial.divergence(x, 0.0);
    CHECK((radial.divergence_fd(x, 0.0) - ra).norm() <= 1e-8 * std::max(1.0, ra.norm()));
    const Eigen::VectorXd sa = skew.divergence(x, 0.0);
    CHECK((skew.divergence_fd(x, 0.0) - sa).norm() <= 1e-6 * std::max(1.0, sa.norm()));
  }
}

TEST_CASE("psd role invariant holds at random points") {
  testsup::PointGen points(17);
  const auto radial = make_radial_isotropic_field(2, 0.5, 1.5);
  for (int trial = 0; trial < 500; ++trial) {
    const Eigen::VectorXd x = points.box(2, -3.0, 3.0);
    const Eigen::MatrixXd m = radial.value(x, points.uniform(0.0, 1.0));
    CHECK(m.isApprox(m.transpose(), 1e-12));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m, Eigen::EigenvaluesOnly);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-10);
  }
}

TEST_CASE("psd_sqrt basics and reconstruction") {
  CHECK(psd_sqrt(Eigen::Matrix3d::Identity()).isApprox(Eigen::Matrix3d::Identity(), 1e-14));

  Eigen::Matrix3d diag = Eigen::Vector3d(4.0, 1.0, 0.0).asDiagonal();
  CHECK(psd_sqrt(diag).isApprox(Eigen::Vector3d(2.0, 1.0, 0.0).asDiagonal().toDenseMatrix(), 1e-12));

  testsup::PointGen points(23);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::MatrixXd a(3, 3);
    for (int i = 0; i < 3; ++i) a.row(i) = points.box(3, -1.0, 1.0).transpose();
    Eigen::MatrixXd m = a * a.transpose();
    m = 0.5 * (m + m.transpose());
    const Eigen::MatrixXd s = psd_sqrt(m);
    CHECK((s * s - m).norm() <= 1e-10 * std::max(1e-30, m.norm()));
    CHECK(s.isApprox(s.transpose(), 1e-12));
  }

  Eigen::Matrix2d negative;
  negative << 1.0, 0.0, 0.0, -1e-6;
  CHECK_THROWS_AS(psd_sqrt(negative), Error);
}

TEST_CASE("sqrt of a squared psd matrix returns the original") {
  testsup::PointGen points(29);
  for (int trial = 0; trial < 25; ++trial) {
    Eigen::MatrixXd a(3, 3);
    for (int i = 0; i < 3; ++i) a.row(i) = points.box(3, -1.0, 1.0).transpose();
    Eigen::MatrixXd s0 = psd_sqrt(0.5 * (a * a.transpose() + (a * a.transpose()).transpose()));
    const Eigen::MatrixXd back = psd_sqrt(s0 * s0);
    CHECK((back - s0).norm() <= 1e-8 * std::max(1e-30, s0.norm()));
  }
}

TEST_CASE("schedule field reverses in time") {
  const auto field = make_isotropic_schedule_field(2, Schedule::linear(0.0, 1.0), FieldRole::psd);
  const auto rev = field.time_reversed(1.0);
  const Eigen::Vector2d x(0.1, 0.2);
  CHECK(rev.value(x, 0.25).isApprox(field.value(x, 0.75)));
  CHECK(field.value(x, 0.5)(0, 0) == doctest::Approx(0.5));
}

TEST_CASE("table field interpolates and differentiates") {
  const auto grid = RegularGrid::cube(2, -2.0, 2.0, 32);
  // A(x) = [[1, x1],[x1, 1]] sampled on the grid (symmetric psd-ish near 0).
  std::vector<Eigen::VectorXd> entries(4, Eigen::VectorXd::Zero(grid.size()));
  for (std::int64_t i = 0; i < grid.size(); ++i) {
    const auto x = grid.node(i);
    entries[0][i] = 2.0;
    entries[1][i] = 0.5 * x[0];
    entries[2][i] = 0.5 * x[0];
    entries[3][i] = 2.0;
  }
  const auto field = make_table_field(grid, entries, FieldRole::general);
  const Eigen::Vector2d x(0.3, -0.4);
  CHECK(field.value(x, 0.0)(0, 1) == doctest::Approx(0.15).epsilon(1e-10));
  // [div A]_1 = d1 A11 + d2 A12 = 0; [div A]_2 = d1 A21 = 0.5.
  const auto div = field.divergence(x, 0.0);
  CHECK(div[0] == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(div[1] == doctest::Approx(0.5).epsilon(1e-5));
}
