#include <doctest.h>

#include <percam/rasterizer.hpp>
#include <percam/rng.hpp>

#include <cmath>

#include "test_helpers.hpp"

using namespace percam;
using testutil::quad_mesh;
using testutil::rect_mask;

TEST_CASE("one huge triangle fills the frame") {
  Mesh tri;
  tri.vertices.resize(3, 3);
  tri.vertices << -50, -50, 0, 100, -50, 0, -50, 100, 0;
  tri.faces.resize(1, 3);
  tri.faces << 0, 1, 2;
  tri.joints = Points3::Zero(1, 3);
  const SilhouetteMask mask =
      rasterize(tri, PerspectiveCamera::centered(100, 32, 32), {0, 0, 2});
  CHECK(mask.values.minCoeff() == 1.0);
}

TEST_CASE("mesh far outside the frustum renders empty") {
  const Mesh quad = quad_mesh(-0.5, -0.5, 0.5, 0.5, 0.0);
  CHECK_THROWS_AS(
      rasterize(quad, PerspectiveCamera::centered(100, 64, 64), {100, 0, 2}),
      EmptySilhouetteError);
}

TEST_CASE("behind-camera vertices are rejected") {
  // Valid translation, but the geometry pokes through the camera plane.
  const Mesh behind = quad_mesh(-0.5, -0.5, 0.5, 0.5, -2.0);
  CHECK_THROWS_AS(
      rasterize(behind, PerspectiveCamera::centered(100, 64, 64), {0, 0, 1.0}),
      BehindCameraError);

  const Mesh quad = quad_mesh(-0.5, -0.5, 0.5, 0.5, 0.0);
  CHECK_THROWS_AS(
      rasterize(quad, PerspectiveCamera::centered(100, 64, 64), {0, 0, -1.0}),
      std::invalid_argument);
}

TEST_CASE("unit square projects to the expected pixel square") {
  const Mesh quad = quad_mesh(-0.5, -0.5, 0.5, 0.5, 0.0);
  const PerspectiveCamera cam = PerspectiveCamera::centered(256, 512, 512);
  const SilhouetteMask mask = rasterize(quad, cam, {0, 0, 2});
  const double filled = mask.values.sum();
  CHECK(std::abs(filled - 128.0 * 128.0) <= 4 * 128);
  CHECK((mask.values == testutil::brute_force_rasterize(quad, cam, {0, 0, 2}).values).all());
}

TEST_CASE("rasterizer matches the per-pixel reference on random meshes") {
  const PerspectiveCamera cam = PerspectiveCamera::centered(60, 64, 48);
  const Translation t{0, 0, 2.2};
  int compared = 0;
  for (int seed = 0; compared < 10 && seed < 100; ++seed) {
    CounterRng rng(77, seed);
    const Mesh mesh = testutil::random_mesh(rng, 20);
    const SilhouetteMask oracle = testutil::brute_force_rasterize(mesh, cam, t);
    if (oracle.values.sum() == 0) {
      CHECK_THROWS_AS(rasterize(mesh, cam, t), EmptySilhouetteError);
      continue;
    }
    const SilhouetteMask fast = rasterize(mesh, cam, t);
    CHECK((fast.values == oracle.values).all());
    ++compared;
  }
  CHECK(compared == 10);
}

TEST_CASE("translating by whole pixels shifts the silhouette exactly") {
  const Mesh quad = quad_mesh(-0.3, -0.3, 0.3, 0.3, 0.0);
  const PerspectiveCamera cam = PerspectiveCamera::centered(100, 96, 96);
  const double tz = 2.0;
  const SilhouetteMask base = rasterize(quad, cam, {0, 0, tz});
  const int k = 7;
  const SilhouetteMask shifted = rasterize(quad, cam, {k * tz / 100.0, 0, tz});
  for (int y = 0; y < 96; ++y)
    for (int x = 0; x < 96 - k; ++x)
      CHECK(shifted.values(y, x + k) == base.values(y, x));
}

TEST_CASE("smoothing a constant mask is a no-op") {
  SilhouetteMask ones = SilhouetteMask::zeros(40, 40);
  ones.values.setConstant(1.0);
  const SilhouetteMask smooth = gaussian_smooth(ones, 2.0);
  CHECK((smooth.values - 1.0).abs().maxCoeff() < 1e-6);
}

TEST_CASE("smoothing a point matches the explicit kernel") {
  const int n = 31, c = 15;
  SilhouetteMask point = SilhouetteMask::zeros(n, n);
  point.values(c, c) = 1.0;
  const double sigma = 2.0;
  const SilhouetteMask smooth = gaussian_smooth(point, sigma);

  // Truncated-at-3-sigma normalized 1D kernel, squared at the center.
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  double norm = 0;
  for (int i = -radius; i <= radius; ++i)
    norm += std::exp(-0.5 * i * i / (sigma * sigma));
  const double center1d = 1.0 / norm;
  CHECK(smooth.values(c, c) == doctest::Approx(center1d * center1d).epsilon(1e-9));
  CHECK(smooth.values.sum() == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("smoothing twice composes like a wider kernel") {
  SilhouetteMask mask = rect_mask(64, 64, 24, 20, 44, 46);
  const SilhouetteMask twice = gaussian_smooth(gaussian_smooth(mask, 2.0), 2.0);
  const SilhouetteMask once = gaussian_smooth(mask, 2.0 * std::sqrt(2.0));
  CHECK((twice.values - once.values).abs().maxCoeff() < 1e-3);
}

TEST_CASE("smoothing never expands the value range") {
  CounterRng rng(13, 0);
  SilhouetteMask mask = SilhouetteMask::zeros(20, 20);
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 20; ++x) mask.values(y, x) = rng.uniform();
  const SilhouetteMask smooth = gaussian_smooth(mask, 1.5);
  CHECK(smooth.values.maxCoeff() <= mask.values.maxCoeff() + 1e-12);
  CHECK(smooth.values.minCoeff() >= mask.values.minCoeff() - 1e-12);
}

TEST_CASE("soft IoU basics") {
  const SilhouetteMask a = rect_mask(200, 120, 0, 10, 100, 110);
  CHECK(soft_iou(a, a) == 1.0);

  const SilhouetteMask b = rect_mask(200, 120, 100, 10, 200, 110);
  CHECK(soft_iou(a, b) == 0.0);

  // 100x100 rectangles overlapping in a 50x100 strip: 5000 / 15000.
  const SilhouetteMask c = rect_mask(200, 120, 50, 10, 150, 110);
  CHECK(soft_iou(a, c) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(soft_iou(a, c) == soft_iou(c, a));

  const SilhouetteMask empty = SilhouetteMask::zeros(200, 120);
  bool both_empty = false;
  CHECK(soft_iou(empty, empty, &both_empty) == 0.0);
  CHECK(both_empty);

  const SilhouetteMask wrong = SilhouetteMask::zeros(10, 10);
  CHECK_THROWS_AS(soft_iou(a, wrong), std::invalid_argument);
}

TEST_CASE("objective around the generating parameters") {
  const Mesh quad = quad_mesh(-0.4, -0.6, 0.4, 0.6, 0.0);
  const ObjectiveParams gen{200.0, 0.05, -0.1, 2.0};
  const SilhouetteMask target = gaussian_smooth(
      rasterize(quad, PerspectiveCamera::centered(gen.f_px, 128, 128),
                {gen.tx, gen.ty, gen.tz}),
      2.0);
  CHECK(objective(gen, quad, target, 2.0) < 0.01);

  ObjectiveParams far = gen;
  far.tx += 5 * 0.8;  // five body widths
  CHECK(objective(far, quad, target, 2.0) > 0.9);

  ObjectiveParams behind = gen;
  behind.tz = -2.0;
  CHECK(objective(behind, quad, target, 2.0) == kObjectivePenalty);
}

TEST_CASE("PGM round trip") {
  testutil::TempDir dir("pgm");
  const SilhouetteMask mask = rect_mask(33, 17, 5, 3, 20, 14);
  save_pgm(mask, dir.str("m.pgm"));
  const SilhouetteMask loaded = load_pgm(dir.str("m.pgm"));
  CHECK(loaded.width == 33);
  CHECK(loaded.height == 17);
  CHECK((loaded.values == mask.values).all());

  // Soft masks quantize to the nearest of 256 levels.
  SilhouetteMask soft = mask;
  soft.kind = MaskKind::Soft;
  soft.values(0, 0) = 0.5004;
  save_pgm(soft, dir.str("s.pgm"));
  const SilhouetteMask q = load_pgm(dir.str("s.pgm"));
  CHECK(q.values(0, 0) == doctest::Approx(std::round(0.5004 * 255.0) / 255.0)
                              .epsilon(1e-9));
}
