#pragma once

#include "percam/types.hpp"

#include <string>
#include <vector>

namespace percam {

// Shape coefficients; unit-normal scale, sensible range roughly [-2, 2].
struct Shape {
  VecX beta;

  static Shape zero(int b) { return {VecX::Zero(b)}; }
};

// Per-joint axis-angle rotations, row 0 = root (pelvis).
struct Pose {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 3> joint_rotations;

  static Pose zero(int k) {
    return {Eigen::Matrix<Scalar, Eigen::Dynamic, 3>::Zero(k, 3)};
  }
  int joint_count() const { return static_cast<int>(joint_rotations.rows()); }
};

// Returns the pose with every row reduced mod 2*pi to magnitude in [0, pi].
Pose canonicalized(const Pose& pose);

// Posed output; vertices and joints are pelvis-centered (joint 0 at origin).
struct Mesh {
  Points3 vertices;
  Faces faces;
  Points3 joints;
};

// Rigged template: blendshaped vertices drive regressed joints, which drive
// linear blend skinning. Joint 0 is the pelvis root.
struct BodyModel {
  Points3 template_vertices;              // N x 3 rest pose
  Faces faces;                            // F x 3 triangle indices
  std::vector<Points3> shape_blendshapes; // B entries of N x 3 offsets
  MatX joint_regressor;                   // K x N, rows sum to 1
  MatX skinning_weights;                  // N x K, rows sum to 1, nonnegative
  Eigen::VectorXi parent;                 // K, parent[0] = -1, tree order
  std::vector<std::string> joint_names;   // K entries

  int vertex_count() const { return static_cast<int>(template_vertices.rows()); }
  int joint_count() const { return static_cast<int>(joint_regressor.rows()); }
  int shape_count() const { return static_cast<int>(shape_blendshapes.size()); }

  // Structural checks (dimensions, row sums, tree shape); throws ParseError
  // naming the offending field/row.
  void validate() const;
};

// Forward-kinematics linear blend skinning over a joint tree. root_offset
// translates the root transform; with weight rows summing to 1 it translates
// every output vertex by exactly that amount.
void skin_vertices(const Points3Ref& vertices, const Points3Ref& rest_joints,
                   const Pose& pose, const Eigen::VectorXi& parent,
                   const MatXRef& weights, const Vec3& root_offset,
                   Points3& out_vertices, Points3& out_joints);

// Blendshapes -> joint regression -> LBS -> pelvis recentering.
Mesh synthesize(const BodyModel& model, const Shape& shape, const Pose& pose);

// Deterministic capsule-limb humanoid (torso, head, 2 arms, 2 legs), K = 16
// joints, B = 10 blendshapes; `segments` >= 3 around each capsule, `rings` >= 2
// along it.
BodyModel make_default_model(int segments = 10, int rings = 4);

BodyModel load_model(const std::string& path);
void save_model(const BodyModel& model, const std::string& path);

// OBJ subset: v/f lines, 1-based indices. load_obj leaves joints empty.
void save_obj(const Mesh& mesh, const std::string& path);
Mesh load_obj(const std::string& path);

}  // namespace percam
