#include <doctest.h>

#include <percam/rng.hpp>
#include <percam/rotation.hpp>

#include <Eigen/LU>

#include <cmath>

using namespace percam;

TEST_CASE("counter rng streams are deterministic and independent") {
  CounterRng a(123, 4, 5);
  CounterRng b(123, 4, 5);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  CounterRng c(123, 4, 6);
  CounterRng d(123, 5, 5);
  CounterRng e(124, 4, 5);
  CounterRng base(123, 4, 5);
  int same_c = 0, same_d = 0, same_e = 0;
  for (int i = 0; i < 64; ++i) {
    const std::uint64_t x = base.next_u64();
    same_c += x == c.next_u64();
    same_d += x == d.next_u64();
    same_e += x == e.next_u64();
  }
  CHECK(same_c == 0);
  CHECK(same_d == 0);
  CHECK(same_e == 0);
}

TEST_CASE("uniform draws stay in range with sane moments") {
  CounterRng rng(7, 0);
  double sum = 0, sum2 = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    sum += u;
    sum2 += u * u;
  }
  CHECK(sum / n == doctest::Approx(0.5).epsilon(0.02));
  CHECK(sum2 / n - (sum / n) * (sum / n) == doctest::Approx(1.0 / 12).epsilon(0.05));
}

TEST_CASE("normal and helpers") {
  CounterRng rng(9, 0);
  double sum = 0, sum2 = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sum2 += x * x;
  }
  CHECK(std::abs(sum / n) < 0.03);
  CHECK(sum2 / n == doctest::Approx(1.0).epsilon(0.05));

  for (int i = 0; i < 1000; ++i) {
    CHECK(std::abs(rng.truncated_normal(2.0)) <= 2.0);
    CHECK(rng.unit_vector().norm() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rng.index(17) < 17);
  }
}

TEST_CASE("rodrigues basics") {
  CHECK((rodrigues(Vec3::Zero()) - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-15);

  const Mat3 half_turn_y = rodrigues(Vec3(0, M_PI, 0));
  Mat3 expect;
  expect << -1, 0, 0, 0, 1, 0, 0, 0, -1;
  CHECK((half_turn_y - expect).cwiseAbs().maxCoeff() < 1e-12);

  // Rotation matrices are orthonormal with determinant one.
  CounterRng rng(11, 0);
  for (int i = 0; i < 20; ++i) {
    const Mat3 r = rodrigues(rng.unit_vector() * rng.uniform(0, 3.0));
    CHECK((r * r.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(r.determinant() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("axis-angle round trips through matrices") {
  CounterRng rng(13, 0);
  for (int i = 0; i < 50; ++i) {
    const Vec3 aa = rng.unit_vector() * rng.uniform(1e-4, M_PI - 1e-4);
    const Vec3 back = axis_angle_from_matrix(rodrigues(aa));
    CHECK((back - aa).norm() < 1e-9);
  }
}

TEST_CASE("geodesic angle between rotations") {
  const Vec3 axis = Vec3(1, 1, 0).normalized();
  CHECK(geodesic_angle(Mat3::Identity(), rodrigues(axis * 0.8)) ==
        doctest::Approx(0.8).epsilon(1e-9));
  CHECK(geodesic_angle(rodrigues(axis * 0.3), rodrigues(axis * 0.3)) ==
        doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("axis-angle canonicalization keeps the rotation") {
  const Vec3 v = Vec3(0.2, -0.4, 0.7);
  const Vec3 wrapped = v + 2 * M_PI * v.normalized();
  const Vec3 canon = canonicalize_axis_angle(wrapped);
  CHECK(canon.norm() < 2 * M_PI);
  CHECK(geodesic_angle(rodrigues(v), rodrigues(canon)) < 1e-9);
}
