#include <doctest.h>

#include <percam/body_model.hpp>
#include <percam/rng.hpp>
#include <percam/rotation.hpp>

#include <fstream>

#include "test_helpers.hpp"

using namespace percam;

namespace {
const BodyModel& default_model() {
  static const BodyModel model = make_default_model();
  return model;
}
}  // namespace

TEST_CASE("zero shape and pose reproduce the template") {
  const BodyModel& m = default_model();
  const Mesh mesh =
      synthesize(m, Shape::zero(m.shape_count()), Pose::zero(m.joint_count()));
  CHECK((mesh.vertices - m.template_vertices).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(mesh.joints.row(0).norm() < 1e-9);
}

TEST_CASE("shape offsets are linear in the coefficients") {
  const BodyModel& m = default_model();
  const Pose pose0 = Pose::zero(m.joint_count());
  Shape b1 = Shape::zero(m.shape_count());
  Shape b2 = Shape::zero(m.shape_count());
  Shape b12 = Shape::zero(m.shape_count());
  b1.beta(0) = 1.3;
  b2.beta(1) = -0.7;
  b2.beta(2) = 0.4;
  b12.beta = b1.beta + b2.beta;

  const Points3 base = synthesize(m, Shape::zero(m.shape_count()), pose0).vertices;
  const Points3 d1 = synthesize(m, b1, pose0).vertices - base;
  const Points3 d2 = synthesize(m, b2, pose0).vertices - base;
  const Points3 d12 = synthesize(m, b12, pose0).vertices - base;
  CHECK((d12 - (d1 + d2)).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("single-coefficient shape equals template plus scaled blendshape") {
  const BodyModel& m = default_model();
  Shape s = Shape::zero(m.shape_count());
  s.beta(1) = 2.0;
  const Mesh mesh = synthesize(m, s, Pose::zero(m.joint_count()));
  // Undo the pelvis recentering to compare against the raw sum.
  const Points3 shaped = m.template_vertices + 2.0 * m.shape_blendshapes[1];
  const Eigen::RowVector3d pelvis = m.joint_regressor.row(0) * shaped;
  CHECK((mesh.vertices - (shaped.rowwise() - pelvis)).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("root rotation by pi about +Y mirrors x and z") {
  const BodyModel& m = default_model();
  const Shape shape = Shape::zero(m.shape_count());
  const Mesh base = synthesize(m, shape, Pose::zero(m.joint_count()));
  Pose pose = Pose::zero(m.joint_count());
  pose.joint_rotations.row(0) << 0.0, M_PI, 0.0;
  const Mesh turned = synthesize(m, shape, pose);
  Points3 mirrored = base.vertices;
  mirrored.col(0) *= -1.0;
  mirrored.col(2) *= -1.0;
  CHECK((turned.vertices - mirrored).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("any root rotation acts rigidly on the rest mesh") {
  const BodyModel& m = default_model();
  const Shape shape = Shape::zero(m.shape_count());
  const Mesh base = synthesize(m, shape, Pose::zero(m.joint_count()));
  const Vec3 aa = Vec3(1.0, 2.0, 3.0).normalized() * 0.7;
  Pose pose = Pose::zero(m.joint_count());
  pose.joint_rotations.row(0) = aa.transpose();
  const Mesh turned = synthesize(m, shape, pose);
  const Mat3 r = rodrigues(aa);
  const Points3 expect = base.vertices * r.transpose();
  CHECK((turned.vertices - expect).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((turned.joints - base.joints * r.transpose()).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("pelvis stays at the origin for random inputs") {
  const BodyModel& m = default_model();
  CounterRng rng(5, 0);
  for (int trial = 0; trial < 10; ++trial) {
    Shape shape = Shape::zero(m.shape_count());
    for (int b = 0; b < m.shape_count(); ++b) shape.beta(b) = rng.uniform(-2, 2);
    Pose pose = Pose::zero(m.joint_count());
    for (int k = 0; k < m.joint_count(); ++k)
      pose.joint_rotations.row(k) = (rng.unit_vector() * rng.uniform(0, 0.4)).transpose();
    const Mesh mesh = synthesize(m, shape, pose);
    CHECK(mesh.joints.row(0).norm() < 1e-9);
  }
}

TEST_CASE("default model construction") {
  const BodyModel m = make_default_model(8, 4);
  CHECK(m.joint_count() == 16);
  CHECK((m.skinning_weights.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-9);
  CHECK((m.joint_regressor.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-9);
  CHECK(m.skinning_weights.minCoeff() >= 0.0);

  const BodyModel again = make_default_model(8, 4);
  CHECK(m.template_vertices == again.template_vertices);
  CHECK(m.skinning_weights == again.skinning_weights);
  CHECK(m.joint_regressor == again.joint_regressor);
  CHECK(m.faces == again.faces);

  CHECK_THROWS_AS(make_default_model(2, 4), std::invalid_argument);
  CHECK_THROWS_AS(make_default_model(8, 1), std::invalid_argument);
}

TEST_CASE("model JSON round trip is lossless") {
  testutil::TempDir dir("model");
  const BodyModel m = default_model();
  save_model(m, dir.str("model.json"));
  const BodyModel loaded = load_model(dir.str("model.json"));
  CHECK(m.template_vertices == loaded.template_vertices);
  CHECK(m.faces == loaded.faces);
  CHECK(m.joint_regressor == loaded.joint_regressor);
  CHECK(m.skinning_weights == loaded.skinning_weights);
  CHECK(m.parent == loaded.parent);
  REQUIRE(m.shape_count() == loaded.shape_count());
  for (int b = 0; b < m.shape_count(); ++b)
    CHECK(m.shape_blendshapes[b] == loaded.shape_blendshapes[b]);
}

TEST_CASE("truncated model file fails to parse") {
  testutil::TempDir dir("model_trunc");
  save_model(default_model(), dir.str("model.json"));
  const std::string full = testutil::read_file(dir.str("model.json"));
  std::ofstream(dir.str("cut.json")) << full.substr(0, full.size() / 2);
  CHECK_THROWS_AS(load_model(dir.str("cut.json")), ParseError);
}

TEST_CASE("invalid skinning row is reported with its index") {
  testutil::TempDir dir("model_bad");
  BodyModel m = make_default_model(6, 3);
  m.skinning_weights(7, 0) -= 0.1;  // row 7 now sums to 0.9
  save_model(m, dir.str("bad.json"));
  try {
    load_model(dir.str("bad.json"));
    FAIL("expected validation error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find('7') != std::string::npos);
  }
}

TEST_CASE("OBJ export and import round trip") {
  testutil::TempDir dir("obj");
  const BodyModel& m = default_model();
  const Mesh mesh =
      synthesize(m, Shape::zero(m.shape_count()), Pose::zero(m.joint_count()));
  save_obj(mesh, dir.str("mesh.obj"));
  const Mesh loaded = load_obj(dir.str("mesh.obj"));
  CHECK(loaded.faces == mesh.faces);
  CHECK((loaded.vertices - mesh.vertices).cwiseAbs().maxCoeff() < 1e-6);

  const std::string text = testutil::read_file(dir.str("mesh.obj"));
  CHECK(text.find("v ") == 0);
  CHECK(text.find("f 1 ") != std::string::npos);  // 1-based indices
}

TEST_CASE("synthesize rejects mismatched dimensions") {
  const BodyModel& m = default_model();
  CHECK_THROWS_AS(
      synthesize(m, Shape::zero(m.shape_count() + 1), Pose::zero(m.joint_count())),
      std::invalid_argument);
  CHECK_THROWS_AS(
      synthesize(m, Shape::zero(m.shape_count()), Pose::zero(m.joint_count() - 1)),
      std::invalid_argument);
}
