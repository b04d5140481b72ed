#include <doctest.h>

#include <percam/losses.hpp>
#include <percam/rng.hpp>
#include <percam/rotation.hpp>

#include <cmath>

using namespace percam;

TEST_CASE("depth loss values") {
  CHECK(l_depth(1.0, 1.0) == 0.0);
  CHECK(l_depth(1.2, 1.0) == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(l_depth(2.0, 4.0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK_THROWS_AS(l_depth(1.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(l_depth(1.0, -2.0), std::invalid_argument);
}

TEST_CASE("depth loss is invariant to joint rescaling") {
  CounterRng rng(3, 0);
  for (int i = 0; i < 100; ++i) {
    const double tz = rng.uniform(0.2, 8.0);
    const double tz_gt = rng.uniform(0.2, 8.0);
    const double a = rng.uniform(0.01, 100.0);
    CHECK(std::abs(l_depth(a * tz, a * tz_gt) - l_depth(tz, tz_gt)) < 1e-12);
  }
}

TEST_CASE("shape loss is a coefficient mean") {
  VecX zero = VecX::Zero(10);
  CHECK(l_shape(zero, zero) == 0.0);

  VecX e1 = VecX::Zero(10);
  e1(0) = 1.0;
  CHECK(l_shape(e1, zero) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(l_shape(-e1, e1) == doctest::Approx(0.2).epsilon(1e-12));

  CHECK_THROWS_AS(l_shape(VecX::Zero(10), VecX::Zero(9)), std::invalid_argument);
}

TEST_CASE("pose loss is the mean geodesic angle") {
  const int k = 16;
  const Pose zero = Pose::zero(k);
  CHECK(l_pose(zero, zero) == 0.0);

  Pose quarter = Pose::zero(k);
  quarter.joint_rotations(4, 0) = M_PI / 2;
  CHECK(l_pose(quarter, zero) == doctest::Approx(M_PI / 32).epsilon(1e-12));

  // Same rotation written two ways: theta about a, 2pi - theta about -a.
  const Vec3 axis = Vec3(0.3, -0.5, 0.8).normalized();
  const double theta = 0.9;
  Pose pa = Pose::zero(k), pb = Pose::zero(k);
  pa.joint_rotations.row(2) = (axis * theta).transpose();
  pb.joint_rotations.row(2) = (-axis * (2 * M_PI - theta)).transpose();
  CHECK(l_pose(pa, pb) < 1e-9);

  CHECK_THROWS_AS(l_pose(Pose::zero(16), Pose::zero(15)), std::invalid_argument);
}

TEST_CASE("joint and vertex losses are per-entry means") {
  Points3 j = Points3::Zero(8, 3);
  CHECK(l_joint(j, j) == 0.0);
  CHECK(l_vert(j, j) == 0.0);

  Points3 shifted = j;
  shifted.col(0).array() += 0.01;
  CHECK(l_joint(shifted, j) == doctest::Approx(0.01 / 3).epsilon(1e-12));
  CHECK(l_vert(shifted, j) == doctest::Approx(0.01 / 3).epsilon(1e-12));

  shifted.col(0).array() += 0.01;
  CHECK(l_joint(shifted, j) == doctest::Approx(0.02 / 3).epsilon(1e-12));

  CHECK_THROWS_AS(l_joint(Points3::Zero(8, 3), Points3::Zero(7, 3)),
                  std::invalid_argument);
}

TEST_CASE("total loss combines the weighted parts") {
  CHECK(total_loss({0, 0, 0, 0}, {}) == 0.0);
  CHECK(total_loss({0.1, 0.2, 0.01, 0.02}, {}) ==
        doctest::Approx(0.45).epsilon(1e-12));
  CHECK(total_loss({0.1, 0.2, 0.01, 0.02}, {0, 0, 0, 0}) == 0.0);

  // Linear in each part and in each weight.
  const LossParts parts{0.3, 0.1, 0.05, 0.07};
  const LossWeights w{2, 3, 4, 5};
  LossParts doubled = parts;
  doubled.shape *= 2;
  CHECK(total_loss(doubled, w) - total_loss(parts, w) ==
        doctest::Approx(w.shape * parts.shape).epsilon(1e-12));
  LossWeights wd = w;
  wd.vert *= 2;
  CHECK(total_loss(parts, wd) - total_loss(parts, w) ==
        doctest::Approx(w.vert * parts.vert).epsilon(1e-12));
}

TEST_CASE("losses are non-negative on random inputs") {
  CounterRng rng(17, 0);
  for (int i = 0; i < 20; ++i) {
    VecX a(6), b(6);
    for (int j = 0; j < 6; ++j) {
      a(j) = rng.uniform(-3, 3);
      b(j) = rng.uniform(-3, 3);
    }
    CHECK(l_shape(a, b) >= 0.0);
    Pose pa = Pose::zero(4), pb = Pose::zero(4);
    for (int j = 0; j < 4; ++j) {
      pa.joint_rotations.row(j) = (rng.unit_vector() * rng.uniform(0, 3)).transpose();
      pb.joint_rotations.row(j) = (rng.unit_vector() * rng.uniform(0, 3)).transpose();
    }
    CHECK(l_pose(pa, pb) >= 0.0);
  }
}
