#include "percam/body_model.hpp"

#include "percam/io_util.hpp"
#include "percam/rotation.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>

namespace percam {

namespace {

using json = nlohmann::json;

// Joint tree; parents precede children so forward kinematics can run in index
// order. Indices 0/3/6/9/12/15 trace the pelvis-to-head core, which the scene
// generator uses as look-at targets.
struct JointSpec {
  const char* name;
  int parent;
  double x, y, z;
};

constexpr int kNumJoints = 16;
constexpr JointSpec kJoints[kNumJoints] = {
    {"pelvis", -1, 0.00, 0.00, 0.0},   {"hip_l", 0, 0.09, -0.06, 0.0},
    {"hip_r", 0, -0.09, -0.06, 0.0},   {"spine", 0, 0.00, 0.17, 0.0},
    {"knee_l", 1, 0.10, -0.50, 0.0},   {"knee_r", 2, -0.10, -0.50, 0.0},
    {"chest", 3, 0.00, 0.38, 0.0},     {"ankle_l", 4, 0.10, -0.92, 0.0},
    {"ankle_r", 5, -0.10, -0.92, 0.0}, {"neck", 6, 0.00, 0.55, 0.0},
    {"shoulder_l", 6, 0.18, 0.48, 0.0}, {"shoulder_r", 6, -0.18, 0.48, 0.0},
    {"head", 9, 0.00, 0.66, 0.0},      {"elbow_l", 10, 0.38, 0.28, 0.0},
    {"elbow_r", 11, -0.38, 0.28, 0.0}, {"head_top", 12, 0.00, 0.80, 0.0},
};

struct CapsuleSpec {
  int a, b;        // skinning joints for the two ends
  Vec3 p0, p1;     // geometric endpoints (p1 may be a virtual, joint-less tip)
  double radius;
  bool a_is_joint; // p0 coincides with joint a -> its ring feeds the regressor
  bool b_is_joint;
};

Vec3 joint_pos(int k) { return Vec3(kJoints[k].x, kJoints[k].y, kJoints[k].z); }

std::vector<CapsuleSpec> capsule_specs() {
  auto jp = joint_pos;
  const Vec3 arm_dir_l = (jp(13) - jp(10)).normalized();
  const Vec3 arm_dir_r = (jp(14) - jp(11)).normalized();
  return {
      {0, 3, jp(0), jp(3), 0.125, true, true},    // lower torso
      {3, 6, jp(3), jp(6), 0.115, true, true},    // upper torso
      {6, 9, jp(6), jp(9), 0.085, true, true},    // chest-neck
      {9, 12, jp(9), jp(12), 0.050, true, true},  // neck
      {12, 15, jp(12), jp(15), 0.085, true, true},  // head
      {6, 10, jp(6), jp(10), 0.050, true, true},  // clavicle l
      {6, 11, jp(6), jp(11), 0.050, true, true},  // clavicle r
      {10, 13, jp(10), jp(13), 0.043, true, true},  // upper arm l
      {11, 14, jp(11), jp(14), 0.043, true, true},  // upper arm r
      {13, 13, jp(13), jp(13) + 0.26 * arm_dir_l, 0.036, true, false},  // forearm l
      {14, 14, jp(14), jp(14) + 0.26 * arm_dir_r, 0.036, true, false},  // forearm r
      {1, 4, jp(1), jp(4), 0.068, true, true},    // thigh l
      {2, 5, jp(2), jp(5), 0.068, true, true},    // thigh r
      {4, 7, jp(4), jp(7), 0.052, true, true},    // shin l
      {5, 8, jp(5), jp(8), 0.052, true, true},    // shin r
  };
}

// Blend weight toward the far joint as a function of the axial parameter t:
// rigid to the near joint until t = 0.55, smoothstep to the far joint by 0.95.
double far_joint_weight(double t) {
  double s = std::clamp((t - 0.55) / 0.40, 0.0, 1.0);
  return s * s * (3.0 - 2.0 * s);
}

struct MeshAccum {
  std::vector<Vec3> vertices;
  std::vector<Eigen::Vector3i> faces;
  std::vector<std::array<double, 2>> skin;  // weight of (near, far) joint
  std::vector<std::array<int, 2>> skin_joints;
  std::vector<std::vector<int>> joint_rings =
      std::vector<std::vector<int>>(kNumJoints);
};

void add_capsule(MeshAccum& acc, const CapsuleSpec& spec, int segments, int rings) {
  const Vec3 axis = spec.p1 - spec.p0;
  const double len = axis.norm();
  const Vec3 dir = axis / len;
  // Orthonormal frame around the axis, anchored on the least-aligned unit axis.
  int least = 0;
  for (int i = 1; i < 3; ++i)
    if (std::abs(dir[i]) < std::abs(dir[least])) least = i;
  Vec3 u = dir.cross(Vec3::Unit(least)).normalized();
  Vec3 w = dir.cross(u);

  const int cap = std::max(1, rings / 2);
  struct Lat {
    Vec3 center;
    double radius;
    double t;
  };
  std::vector<Lat> lats;
  for (int j = 1; j <= cap; ++j) {  // bottom cap, ends exactly on p0
    double phi = -M_PI_2 + M_PI_2 * j / cap;
    lats.push_back({spec.p0 + spec.radius * std::sin(phi) * dir,
                    spec.radius * std::cos(phi), 0.0});
  }
  for (int j = 1; j <= rings; ++j) {  // cylinder, ends exactly on p1
    double t = static_cast<double>(j) / rings;
    lats.push_back({spec.p0 + t * axis, spec.radius, t});
  }
  for (int j = 1; j < cap; ++j) {  // top cap arcs (pole handled separately)
    double phi = M_PI_2 * j / cap;
    lats.push_back({spec.p1 + spec.radius * std::sin(phi) * dir,
                    spec.radius * std::cos(phi), 1.0});
  }

  auto push_vertex = [&](const Vec3& p, double t) {
    acc.vertices.push_back(p);
    double wb = spec.a == spec.b ? 0.0 : far_joint_weight(t);
    acc.skin.push_back({1.0 - wb, wb});
    acc.skin_joints.push_back({spec.a, spec.b});
    return static_cast<int>(acc.vertices.size()) - 1;
  };

  const int pole_b = push_vertex(spec.p0 - spec.radius * dir, 0.0);
  std::vector<std::vector<int>> ring_ids(lats.size());
  for (size_t li = 0; li < lats.size(); ++li) {
    for (int s = 0; s < segments; ++s) {
      double a = 2.0 * M_PI * s / segments;
      Vec3 p = lats[li].center + lats[li].radius * (std::cos(a) * u + std::sin(a) * w);
      ring_ids[li].push_back(push_vertex(p, lats[li].t));
    }
  }
  const int pole_t = push_vertex(spec.p1 + spec.radius * dir, 1.0);

  for (int s = 0; s < segments; ++s) {
    int sn = (s + 1) % segments;
    acc.faces.emplace_back(pole_b, ring_ids.front()[sn], ring_ids.front()[s]);
    acc.faces.emplace_back(pole_t, ring_ids.back()[s], ring_ids.back()[sn]);
  }
  for (size_t li = 0; li + 1 < ring_ids.size(); ++li) {
    for (int s = 0; s < segments; ++s) {
      int sn = (s + 1) % segments;
      int a = ring_ids[li][s], b = ring_ids[li][sn];
      int c = ring_ids[li + 1][s], d = ring_ids[li + 1][sn];
      acc.faces.emplace_back(a, b, d);
      acc.faces.emplace_back(a, d, c);
    }
  }

  // Rings that sit exactly on a joint define that joint's regression support.
  if (spec.a_is_joint)
    for (int id : ring_ids[cap - 1]) acc.joint_rings[spec.a].push_back(id);
  if (spec.b_is_joint)
    for (int id : ring_ids[cap - 1 + rings]) acc.joint_rings[spec.b].push_back(id);
}

std::vector<Points3> build_blendshapes(const Points3& v) {
  const Eigen::Index n = v.rows();
  std::vector<Points3> bs(10, Points3::Zero(n, 3));
  const Vec3 head_center(0.0, 0.66, 0.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = v(i, 0), y = v(i, 1), z = v(i, 2);
    const double sx = x >= 0 ? 1.0 : -1.0;
    bs[0].row(i) = 0.06 * v.row(i);                       // overall scale
    bs[1](i, 1) = 0.06 * y;                               // height
    bs[2](i, 0) = 0.05 * x;                               // girth
    bs[2](i, 2) = 0.05 * z;
    bs[3](i, 0) = sx * 0.10 * std::max(0.0, std::abs(x) - 0.18);  // arm length
    bs[4](i, 1) = 0.10 * std::min(0.0, y + 0.06);         // leg length
    bs[5](i, 1) = 0.08 * std::clamp(y, 0.0, 0.38);        // torso length
    double wh = std::clamp((y - 0.55) / 0.11, 0.0, 1.0);  // head size
    bs[6].row(i) = 0.25 * wh * (v.row(i) - head_center.transpose());
    bs[7](i, 0) = sx * 0.06 * std::min(std::abs(x) / 0.18, 1.0);  // shoulder width
    double g = std::max(0.0, 1.0 - std::pow((y - 0.08) / 0.30, 2));  // belly
    bs[8](i, 0) = 0.15 * g * x;
    bs[8](i, 2) = 0.15 * g * z;
    bs[9](i, 2) = 0.06 * z;                               // depth
  }
  return bs;
}

void check(bool cond, const std::string& msg) {
  if (!cond) throw ParseError("model: " + msg);
}

json points_to_json(const Points3Ref& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    rows.push_back({m(i, 0), m(i, 1), m(i, 2)});
  return rows;
}

Points3 points_from_json(const json& j, const std::string& field) {
  if (!j.is_array()) throw ParseError("model: " + field + " must be an array");
  Points3 m(static_cast<Eigen::Index>(j.size()), 3);
  for (size_t i = 0; i < j.size(); ++i) {
    const json& row = j[i];
    if (!row.is_array() || row.size() != 3)
      throw ParseError("model: " + field + " row " + std::to_string(i) +
                       " must have 3 entries");
    for (int c = 0; c < 3; ++c) m(static_cast<Eigen::Index>(i), c) = row[c].get<double>();
  }
  return m;
}

MatX matrix_from_json(const json& j, const std::string& field) {
  if (!j.is_array() || j.empty())
    throw ParseError("model: " + field + " must be a non-empty array");
  const size_t cols = j[0].size();
  MatX m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (size_t i = 0; i < j.size(); ++i) {
    const json& row = j[i];
    if (!row.is_array() || row.size() != cols)
      throw ParseError("model: " + field + " row " + std::to_string(i) +
                       " has inconsistent length");
    for (size_t c = 0; c < cols; ++c)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = row[c].get<double>();
  }
  return m;
}

}  // namespace

Pose canonicalized(const Pose& pose) {
  Pose out = pose;
  for (Eigen::Index k = 0; k < out.joint_rotations.rows(); ++k)
    out.joint_rotations.row(k) =
        canonicalize_axis_angle(pose.joint_rotations.row(k).transpose()).transpose();
  return out;
}

void BodyModel::validate() const {
  const int n = vertex_count();
  const int k = joint_count();
  const int b = shape_count();
  check(n >= 3, "needs at least 3 vertices");
  check(k >= 1, "needs at least 1 joint");
  check(joint_regressor.cols() == n, "joint_regressor column count != vertex count");
  check(skinning_weights.rows() == n && skinning_weights.cols() == k,
        "skinning_weights must be vertex_count x joint_count");
  check(parent.size() == k, "parent array size != joint count");
  check(parent(0) == -1, "parent[0] must be -1 (pelvis root)");
  for (int j = 1; j < k; ++j)
    check(parent(j) >= 0 && parent(j) < j,
          "parent[" + std::to_string(j) + "] must precede its child (tree order)");
  for (Eigen::Index f = 0; f < faces.rows(); ++f)
    for (int c = 0; c < 3; ++c)
      check(faces(f, c) >= 0 && faces(f, c) < n,
            "faces row " + std::to_string(f) + " references vertex out of range");
  for (int s = 0; s < b; ++s)
    check(shape_blendshapes[s].rows() == n,
          "shape_blendshapes[" + std::to_string(s) + "] row count != vertex count");
  for (int j = 0; j < k; ++j) {
    double sum = joint_regressor.row(j).sum();
    check(std::abs(sum - 1.0) <= 1e-9, "joint_regressor row " + std::to_string(j) +
                                           " sums to " + std::to_string(sum) +
                                           " (expected 1)");
  }
  for (int i = 0; i < n; ++i) {
    double sum = skinning_weights.row(i).sum();
    check(std::abs(sum - 1.0) <= 1e-9, "skinning_weights row " + std::to_string(i) +
                                           " sums to " + std::to_string(sum) +
                                           " (expected 1)");
    check(skinning_weights.row(i).minCoeff() >= -1e-12,
          "skinning_weights row " + std::to_string(i) + " has negative entries");
  }
  check(joint_names.empty() || static_cast<int>(joint_names.size()) == k,
        "joint_names size != joint count");
  check(template_vertices.allFinite(), "template_vertices must be finite");
}

void skin_vertices(const Points3Ref& vertices, const Points3Ref& rest_joints,
                   const Pose& pose, const Eigen::VectorXi& parent,
                   const MatXRef& weights, const Vec3& root_offset,
                   Points3& out_vertices, Points3& out_joints) {
  const Eigen::Index k = rest_joints.rows();
  const Eigen::Index n = vertices.rows();
  std::vector<Mat3> rot(k);
  std::vector<Vec3> trans(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const Mat3 local = rodrigues(pose.joint_rotations.row(j).transpose());
    if (j == 0) {
      rot[0] = local;
      trans[0] = rest_joints.row(0).transpose() + root_offset;
    } else {
      const int p = parent(j);
      rot[j] = rot[p] * local;
      trans[j] = rot[p] * (rest_joints.row(j) - rest_joints.row(p)).transpose() + trans[p];
    }
  }
  out_joints.resize(k, 3);
  std::vector<Vec3> offset(k);  // A_j = [rot_j | trans_j - rot_j * rest_j]
  for (Eigen::Index j = 0; j < k; ++j) {
    out_joints.row(j) = trans[j].transpose();
    offset[j] = trans[j] - rot[j] * rest_joints.row(j).transpose();
  }
  out_vertices.resize(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec3 v = vertices.row(i).transpose();
    Vec3 acc = Vec3::Zero();
    for (Eigen::Index j = 0; j < k; ++j) {
      const double w = weights(i, j);
      if (w != 0.0) acc += w * (rot[j] * v + offset[j]);
    }
    out_vertices.row(i) = acc.transpose();
  }
}

Mesh synthesize(const BodyModel& model, const Shape& shape, const Pose& pose) {
  if (shape.beta.size() != model.shape_count())
    throw std::invalid_argument("synthesize: shape has " +
                                std::to_string(shape.beta.size()) + " coefficients, model has " +
                                std::to_string(model.shape_count()));
  if (pose.joint_count() != model.joint_count())
    throw std::invalid_argument("synthesize: pose has " +
                                std::to_string(pose.joint_count()) + " joints, model has " +
                                std::to_string(model.joint_count()));

  Points3 shaped = model.template_vertices;
  for (int b = 0; b < model.shape_count(); ++b)
    shaped += shape.beta(b) * model.shape_blendshapes[b];
  const Points3 rest_joints = model.joint_regressor * shaped;

  Mesh mesh;
  mesh.faces = model.faces;
  skin_vertices(shaped, rest_joints, pose, model.parent, model.skinning_weights,
                Vec3::Zero(), mesh.vertices, mesh.joints);
  const Vec3 pelvis = mesh.joints.row(0).transpose();
  mesh.vertices.rowwise() -= pelvis.transpose();
  mesh.joints.rowwise() -= pelvis.transpose();
  return mesh;
}

BodyModel make_default_model(int segments, int rings) {
  if (segments < 3) throw std::invalid_argument("make_default_model: segments must be >= 3");
  if (rings < 2) throw std::invalid_argument("make_default_model: rings must be >= 2");

  MeshAccum acc;
  for (const CapsuleSpec& spec : capsule_specs()) add_capsule(acc, spec, segments, rings);

  const int n = static_cast<int>(acc.vertices.size());
  BodyModel model;
  model.template_vertices.resize(n, 3);
  for (int i = 0; i < n; ++i) model.template_vertices.row(i) = acc.vertices[i].transpose();
  model.faces.resize(static_cast<Eigen::Index>(acc.faces.size()), 3);
  for (size_t f = 0; f < acc.faces.size(); ++f)
    model.faces.row(static_cast<Eigen::Index>(f)) = acc.faces[f].transpose();

  model.skinning_weights = MatX::Zero(n, kNumJoints);
  for (int i = 0; i < n; ++i) {
    model.skinning_weights(i, acc.skin_joints[i][0]) += acc.skin[i][0];
    model.skinning_weights(i, acc.skin_joints[i][1]) += acc.skin[i][1];
  }
  model.joint_regressor = MatX::Zero(kNumJoints, n);
  for (int j = 0; j < kNumJoints; ++j) {
    const auto& ring = acc.joint_rings[j];
    for (int id : ring) model.joint_regressor(j, id) = 1.0 / ring.size();
  }
  model.parent.resize(kNumJoints);
  for (int j = 0; j < kNumJoints; ++j) {
    model.parent(j) = kJoints[j].parent;
    model.joint_names.push_back(kJoints[j].name);
  }
  model.shape_blendshapes = build_blendshapes(model.template_vertices);
  model.validate();
  return model;
}

void save_model(const BodyModel& model, const std::string& path) {
  json j;
  j["format_version"] = 1;
  j["template_vertices"] = points_to_json(model.template_vertices);
  json faces = json::array();
  for (Eigen::Index f = 0; f < model.faces.rows(); ++f)
    faces.push_back({model.faces(f, 0), model.faces(f, 1), model.faces(f, 2)});
  j["faces"] = faces;
  json bs = json::array();
  for (const Points3& b : model.shape_blendshapes) bs.push_back(points_to_json(b));
  j["shape_blendshapes"] = bs;
  json reg = json::array();
  for (Eigen::Index r = 0; r < model.joint_regressor.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < model.joint_regressor.cols(); ++c)
      row.push_back(model.joint_regressor(r, c));
    reg.push_back(row);
  }
  j["joint_regressor"] = reg;
  json sw = json::array();
  for (Eigen::Index r = 0; r < model.skinning_weights.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < model.skinning_weights.cols(); ++c)
      row.push_back(model.skinning_weights(r, c));
    sw.push_back(row);
  }
  j["skinning_weights"] = sw;
  j["parent"] = std::vector<int>(model.parent.data(), model.parent.data() + model.parent.size());
  j["joint_names"] = model.joint_names;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("model: cannot open for writing: " + path);
  out << j.dump(0) << '\n';
  if (!out) throw ParseError("model: write failed: " + path);
}

BodyModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("model: cannot open: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError("model: " + path + ": " + e.what());
  }
  try {
    if (!j.contains("format_version") || j["format_version"].get<int>() != 1)
      throw ParseError("model: " + path + ": missing or unsupported format_version");
    BodyModel model;
    model.template_vertices = points_from_json(j.at("template_vertices"), "template_vertices");
    const json& jf = j.at("faces");
    model.faces.resize(static_cast<Eigen::Index>(jf.size()), 3);
    for (size_t f = 0; f < jf.size(); ++f) {
      if (!jf[f].is_array() || jf[f].size() != 3)
        throw ParseError("model: faces row " + std::to_string(f) + " must have 3 entries");
      for (int c = 0; c < 3; ++c)
        model.faces(static_cast<Eigen::Index>(f), c) = jf[f][c].get<int>();
    }
    for (const json& b : j.at("shape_blendshapes"))
      model.shape_blendshapes.push_back(points_from_json(b, "shape_blendshapes"));
    model.joint_regressor = matrix_from_json(j.at("joint_regressor"), "joint_regressor");
    model.skinning_weights = matrix_from_json(j.at("skinning_weights"), "skinning_weights");
    const json& jp = j.at("parent");
    model.parent.resize(static_cast<Eigen::Index>(jp.size()));
    for (size_t k = 0; k < jp.size(); ++k)
      model.parent(static_cast<Eigen::Index>(k)) = jp[k].get<int>();
    if (j.contains("joint_names"))
      model.joint_names = j["joint_names"].get<std::vector<std::string>>();
    model.validate();
    return model;
  } catch (const json::exception& e) {
    throw ParseError("model: " + path + ": " + e.what());
  }
}

void save_obj(const Mesh& mesh, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("obj: cannot open for writing: " + path);
  for (Eigen::Index i = 0; i < mesh.vertices.rows(); ++i)
    out << "v " << format9(mesh.vertices(i, 0)) << ' ' << format9(mesh.vertices(i, 1))
        << ' ' << format9(mesh.vertices(i, 2)) << '\n';
  for (Eigen::Index f = 0; f < mesh.faces.rows(); ++f)
    out << "f " << mesh.faces(f, 0) + 1 << ' ' << mesh.faces(f, 1) + 1 << ' '
        << mesh.faces(f, 2) + 1 << '\n';
  if (!out) throw ParseError("obj: write failed: " + path);
}

Mesh load_obj(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("obj: cannot open: " + path);
  std::vector<Vec3> verts;
  std::vector<Eigen::Vector3i> faces;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag) || tag.empty() || tag[0] == '#') continue;
    if (tag == "v") {
      Vec3 v;
      if (!(ss >> v.x() >> v.y() >> v.z()))
        throw ParseError("obj: " + path + " line " + std::to_string(lineno) +
                         ": malformed vertex");
      verts.push_back(v);
    } else if (tag == "f") {
      Eigen::Vector3i f;
      for (int c = 0; c < 3; ++c) {
        std::string tok;
        if (!(ss >> tok))
          throw ParseError("obj: " + path + " line " + std::to_string(lineno) +
                           ": face needs 3 indices");
        f[c] = std::atoi(tok.substr(0, tok.find('/')).c_str());
      }
      faces.push_back(f);
    }
  }
  if (verts.empty()) throw ParseError("obj: " + path + ": no vertices");
  Mesh mesh;
  mesh.vertices.resize(static_cast<Eigen::Index>(verts.size()), 3);
  for (size_t i = 0; i < verts.size(); ++i)
    mesh.vertices.row(static_cast<Eigen::Index>(i)) = verts[i].transpose();
  mesh.faces.resize(static_cast<Eigen::Index>(faces.size()), 3);
  for (size_t f = 0; f < faces.size(); ++f) {
    for (int c = 0; c < 3; ++c) {
      int idx = faces[f][c];
      if (idx < 1 || idx > static_cast<int>(verts.size()))
        throw ParseError("obj: " + path + ": face " + std::to_string(f) +
                         " index out of range");
      mesh.faces(static_cast<Eigen::Index>(f), c) = idx - 1;
    }
  }
  mesh.joints.resize(0, 3);
  return mesh;
}

}  // namespace percam
