#include "percam/scenegen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "percam/io_util.hpp"
#include "percam/parallel.hpp"
#include "percam/rotation.hpp"

namespace percam {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr int kManifestFormatVersion = 1;

std::string record_id(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "rec_%06d", index);
  return buf;
}

void validate_config(const GenConfig& cfg) {
  auto fail = [](const char* field, const char* why) {
    throw std::invalid_argument(std::string("config.") + field + ": " + why);
  };
  if (cfg.n_records < 0) fail("n_records", "must be >= 0");
  if (cfg.image_size <= 0) fail("image_size", "must be > 0");
  if (!(cfg.near_fraction >= 0 && cfg.near_fraction <= 1))
    fail("near_fraction", "must be in [0, 1]");
  if (!(cfg.near_min > 0)) fail("near_min", "must be > 0");
  if (!(cfg.near_max > cfg.near_min)) fail("near_max", "must exceed near_min");
  if (!(cfg.far_max > cfg.near_max)) fail("far_max", "must exceed near_max");
  if (!(cfg.focal_jitter_lo > 0)) fail("focal_jitter_lo", "must be > 0");
  if (!(cfg.focal_jitter_hi >= cfg.focal_jitter_lo))
    fail("focal_jitter_hi", "must be >= focal_jitter_lo");
  if (!(cfg.f_default_mm > 0)) fail("f_default_mm", "must be > 0");
  if (!(cfg.sensor_mm > 0)) fail("sensor_mm", "must be > 0");
  if (!(cfg.phi_min >= 0 && cfg.phi_max <= M_PI && cfg.phi_min <= cfg.phi_max))
    fail("phi_min/phi_max", "must satisfy 0 <= phi_min <= phi_max <= pi");
  if (!(cfg.theta_min <= cfg.theta_max)) fail("theta_min/theta_max", "must be ordered");
  if (cfg.lookat_bones.empty()) fail("lookat_bones", "must be nonempty");
  for (const int b : cfg.lookat_bones)
    if (b < 0) fail("lookat_bones", "indices must be >= 0");
  if (!(cfg.lookat_noise >= 0)) fail("lookat_noise", "must be >= 0");
  if (!(cfg.pose_angle_max >= 0)) fail("pose_angle_max", "must be >= 0");
  if (cfg.max_camera_attempts < 1) fail("max_camera_attempts", "must be >= 1");
}

// Config floats are stored at full precision: regenerating any record from the
// loaded manifest must reproduce the batch run bit-exactly.
json config_to_json(const GenConfig& cfg) {
  json j;
  j["n_records"] = cfg.n_records;
  j["global_seed"] = cfg.global_seed;
  j["image_size"] = cfg.image_size;
  j["near_fraction"] = cfg.near_fraction;
  j["near_min"] = cfg.near_min;
  j["near_max"] = cfg.near_max;
  j["far_max"] = cfg.far_max;
  j["focal_jitter_lo"] = cfg.focal_jitter_lo;
  j["focal_jitter_hi"] = cfg.focal_jitter_hi;
  j["f_default_mm"] = cfg.f_default_mm;
  j["sensor_mm"] = cfg.sensor_mm;
  j["phi_min"] = cfg.phi_min;
  j["phi_max"] = cfg.phi_max;
  j["theta_min"] = cfg.theta_min;
  j["theta_max"] = cfg.theta_max;
  j["lookat_bones"] = cfg.lookat_bones;
  j["lookat_noise"] = cfg.lookat_noise;
  j["pose_angle_max"] = cfg.pose_angle_max;
  j["max_camera_attempts"] = cfg.max_camera_attempts;
  return j;
}

GenConfig config_from_json(const json& j) {
  GenConfig cfg;
  cfg.n_records = j.at("n_records").get<int>();
  cfg.global_seed = j.at("global_seed").get<std::uint64_t>();
  cfg.image_size = j.at("image_size").get<int>();
  cfg.near_fraction = j.at("near_fraction").get<double>();
  cfg.near_min = j.at("near_min").get<double>();
  cfg.near_max = j.at("near_max").get<double>();
  cfg.far_max = j.at("far_max").get<double>();
  cfg.focal_jitter_lo = j.at("focal_jitter_lo").get<double>();
  cfg.focal_jitter_hi = j.at("focal_jitter_hi").get<double>();
  cfg.f_default_mm = j.at("f_default_mm").get<double>();
  cfg.sensor_mm = j.at("sensor_mm").get<double>();
  cfg.phi_min = j.at("phi_min").get<double>();
  cfg.phi_max = j.at("phi_max").get<double>();
  cfg.theta_min = j.at("theta_min").get<double>();
  cfg.theta_max = j.at("theta_max").get<double>();
  cfg.lookat_bones = j.at("lookat_bones").get<std::vector<int>>();
  cfg.lookat_noise = j.at("lookat_noise").get<double>();
  cfg.pose_angle_max = j.at("pose_angle_max").get<double>();
  cfg.max_camera_attempts = j.at("max_camera_attempts").get<int>();
  return cfg;
}

json pose_to_json(const Pose& pose) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < pose.joint_rotations.rows(); ++r)
    rows.push_back({pose.joint_rotations(r, 0), pose.joint_rotations(r, 1),
                    pose.joint_rotations(r, 2)});
  return rows;
}

json record_to_json(const SceneRecord& r) {
  json j;
  j["id"] = r.id;
  j["shape"] = std::vector<double>(r.shape.beta.data(),
                                   r.shape.beta.data() + r.shape.beta.size());
  j["pose"] = pose_to_json(r.pose);
  j["camera"] = {{"focal_px", r.camera.focal_px}, {"cx", r.camera.cx},
                 {"cy", r.camera.cy},             {"width", r.camera.width},
                 {"height", r.camera.height}};
  j["t"] = {{"tx_m", r.t.tx}, {"ty_m", r.t.ty}, {"tz_m", r.t.tz}};
  json rot = json::array();
  for (int row = 0; row < 3; ++row)
    rot.push_back({r.camera_rotation(row, 0), r.camera_rotation(row, 1),
                   r.camera_rotation(row, 2)});
  j["camera_rotation"] = std::move(rot);
  j["mask_path"] = r.mask_path;
  j["seed"] = {{"global_seed", r.seed.global_seed},
               {"record_index", r.seed.record_index}};
  return j;
}

SceneRecord record_from_json(const json& j) {
  SceneRecord r;
  r.id = j.at("id").get<std::string>();
  const auto beta = j.at("shape").get<std::vector<double>>();
  r.shape.beta = Eigen::Map<const VecX>(beta.data(), static_cast<Eigen::Index>(beta.size()));
  const json& pose = j.at("pose");
  r.pose = Pose::zero(static_cast<int>(pose.size()));
  for (size_t row = 0; row < pose.size(); ++row) {
    if (!pose[row].is_array() || pose[row].size() != 3)
      throw ParseError("pose row " + std::to_string(row) + " is not a 3-vector");
    for (int c = 0; c < 3; ++c)
      r.pose.joint_rotations(static_cast<Eigen::Index>(row), c) = pose[row][c].get<double>();
  }
  const json& cam = j.at("camera");
  r.camera = {cam.at("focal_px").get<double>(), cam.at("cx").get<double>(),
              cam.at("cy").get<double>(), cam.at("width").get<int>(),
              cam.at("height").get<int>()};
  const json& t = j.at("t");
  r.t = {t.at("tx_m").get<double>(), t.at("ty_m").get<double>(),
         t.at("tz_m").get<double>()};
  const json& rot = j.at("camera_rotation");
  if (!rot.is_array() || rot.size() != 3)
    throw ParseError("camera_rotation is not a 3x3 matrix");
  for (int row = 0; row < 3; ++row) {
    if (!rot[row].is_array() || rot[row].size() != 3)
      throw ParseError("camera_rotation is not a 3x3 matrix");
    for (int c = 0; c < 3; ++c) r.camera_rotation(row, c) = rot[row][c].get<double>();
  }
  r.mask_path = j.at("mask_path").get<std::string>();
  const json& seed = j.at("seed");
  r.seed = {seed.at("global_seed").get<std::uint64_t>(),
            seed.at("record_index").get<int>()};
  return r;
}

// Every numeric record field is rounded before the mask is rendered, so a
// re-read of the manifest reproduces the mask bit-exactly.
void round9_record(SceneRecord& r) {
  for (Eigen::Index i = 0; i < r.shape.beta.size(); ++i)
    r.shape.beta(i) = round9(r.shape.beta(i));
  for (Eigen::Index row = 0; row < r.pose.joint_rotations.rows(); ++row)
    for (int c = 0; c < 3; ++c)
      r.pose.joint_rotations(row, c) = round9(r.pose.joint_rotations(row, c));
  r.camera.focal_px = round9(r.camera.focal_px);
  r.camera.cx = round9(r.camera.cx);
  r.camera.cy = round9(r.camera.cy);
  r.t.tx = round9(r.t.tx);
  r.t.ty = round9(r.t.ty);
  r.t.tz = round9(r.t.tz);
  for (int row = 0; row < 3; ++row)
    for (int c = 0; c < 3; ++c)
      r.camera_rotation(row, c) = round9(r.camera_rotation(row, c));
}

}  // namespace

double sample_tz(CounterRng& rng, const GenConfig& cfg) {
  const bool near = rng.uniform() < cfg.near_fraction;
  const double inv_tz = near ? rng.uniform(1.0 / cfg.near_max, 1.0 / cfg.near_min)
                             : rng.uniform(1.0 / cfg.far_max, 1.0 / cfg.near_max);
  return 1.0 / inv_tz;
}

std::pair<Vec3, Mat3> sample_camera(CounterRng& rng, const Points3Ref& joints,
                                    double tz, const GenConfig& cfg) {
  if (joints.rows() == 0) throw std::invalid_argument("sample_camera: no joints");
  if (!(tz > 0) || !std::isfinite(tz))
    throw std::invalid_argument("sample_camera: tz must be finite and > 0");

  const double theta = rng.uniform(cfg.theta_min, cfg.theta_max);
  const double phi = rng.uniform(cfg.phi_min, cfg.phi_max);
  const Vec3 pelvis = joints.row(0).transpose();
  const Vec3 position =
      pelvis + tz * Vec3(std::sin(phi) * std::cos(theta), std::cos(phi),
                         std::sin(phi) * std::sin(theta));

  for (int attempt = 0; attempt < 10; ++attempt) {
    const int raw = cfg.lookat_bones[rng.index(cfg.lookat_bones.size())];
    const Eigen::Index bone = std::min<Eigen::Index>(raw, joints.rows() - 1);
    Vec3 target = joints.row(bone).transpose();
    for (int c = 0; c < 3; ++c)
      target(c) += rng.uniform(-cfg.lookat_noise, cfg.lookat_noise);

    const Vec3 forward = target - position;
    if (forward.norm() < 1e-9) continue;
    const Vec3 z_axis = forward.normalized();
    Vec3 up = Vec3::UnitY();
    if (std::abs(z_axis.dot(up)) > std::cos(M_PI / 180.0)) up = Vec3::UnitZ();
    const Vec3 x_axis = z_axis.cross(up).normalized();
    const Vec3 y_axis = z_axis.cross(x_axis);

    Mat3 rotation;
    rotation.row(0) = x_axis.transpose();
    rotation.row(1) = y_axis.transpose();
    rotation.row(2) = z_axis.transpose();
    return {position, rotation};
  }
  throw DegenerateGeometryError(
      "sample_camera: look-at target kept coinciding with the camera position");
}

double sample_focal(CounterRng& rng, double tz, const GenConfig& cfg, int image_width) {
  if (!(tz > 0)) throw std::invalid_argument("sample_focal: tz must be > 0");
  if (image_width <= 0) throw std::invalid_argument("sample_focal: image_width must be > 0");
  const double jitter = rng.uniform(cfg.focal_jitter_lo, cfg.focal_jitter_hi);
  const double f_mm = cfg.f_default_mm * tz * jitter;
  return f_mm / cfg.sensor_mm * static_cast<double>(image_width);
}

std::optional<GeneratedRecord> generate_record(const GenConfig& cfg,
                                               const BodyModel& model, int index) {
  validate_config(cfg);

  auto shape_rng = make_stream(cfg.global_seed, static_cast<std::uint64_t>(index),
                               RngPurpose::Shape);
  Shape shape = Shape::zero(model.shape_count());
  for (Eigen::Index b = 0; b < shape.beta.size(); ++b)
    shape.beta(b) = shape_rng.truncated_normal(2.0);

  auto pose_rng = make_stream(cfg.global_seed, static_cast<std::uint64_t>(index),
                              RngPurpose::Pose);
  Pose pose = Pose::zero(model.joint_count());
  for (Eigen::Index j = 1; j < pose.joint_rotations.rows(); ++j) {
    const Vec3 axis = pose_rng.unit_vector();
    const double angle = pose_rng.uniform(0.0, cfg.pose_angle_max);
    pose.joint_rotations.row(j) = (angle * axis).transpose();
  }

  auto depth_rng = make_stream(cfg.global_seed, static_cast<std::uint64_t>(index),
                               RngPurpose::Depth);
  const double tz = sample_tz(depth_rng, cfg);

  const Mesh world = synthesize(model, shape, pose);

  auto camera_rng = make_stream(cfg.global_seed, static_cast<std::uint64_t>(index),
                                RngPurpose::Camera);
  auto focal_rng = make_stream(cfg.global_seed, static_cast<std::uint64_t>(index),
                               RngPurpose::Focal);

  // Retries redraw camera and focal at the fixed sampled depth so rejected
  // attempts cannot distort the emitted Tz distribution.
  for (int attempt = 0; attempt < cfg.max_camera_attempts; ++attempt) {
    const auto [position, rotation] = sample_camera(camera_rng, world.joints, tz, cfg);
    const double f_px = sample_focal(focal_rng, tz, cfg, cfg.image_size);
    const Vec3 t_vec = -(rotation * position);

    SceneRecord record;
    record.id = record_id(index);
    record.shape = shape;
    record.pose = pose;
    record.pose.joint_rotations.row(0) =
        axis_angle_from_matrix(
            rotation * rodrigues(pose.joint_rotations.row(0).transpose()))
            .transpose();
    record.camera = PerspectiveCamera::centered(f_px, cfg.image_size, cfg.image_size);
    record.t = {t_vec.x(), t_vec.y(), t_vec.z()};
    record.camera_rotation = rotation;
    record.mask_path = "masks/" + record.id + ".pgm";
    record.seed = {cfg.global_seed, index};
    round9_record(record);

    if (record.t.tz < cfg.near_min || record.t.tz > cfg.far_max) continue;

    try {
      const Mesh camera_mesh = synthesize(model, record.shape, record.pose);
      SilhouetteMask mask = rasterize(camera_mesh, record.camera, record.t);
      return GeneratedRecord{std::move(record), std::move(mask)};
    } catch (const BehindCameraError&) {
    } catch (const EmptySilhouetteError&) {
    }
  }
  return std::nullopt;
}

Manifest generate_dataset(const GenConfig& cfg, const BodyModel& model,
                          const std::string& out_dir, int threads) {
  validate_config(cfg);
  model.validate();

  const fs::path root(out_dir);
  std::error_code ec;
  fs::create_directories(root / "masks", ec);
  if (ec)
    throw std::runtime_error("cannot create output directory " +
                             (root / "masks").string() + ": " + ec.message());
  const fs::path manifest_path = root / "manifest.jsonl";
  std::ofstream out(manifest_path, std::ios::binary);
  if (!out)
    throw std::runtime_error("cannot open for writing: " + manifest_path.string());

  std::vector<std::optional<GeneratedRecord>> slots(
      static_cast<size_t>(cfg.n_records));
  parallel_for(slots.size(), threads,
               [&](size_t i) { slots[i] = generate_record(cfg, model, static_cast<int>(i)); });

  Manifest manifest;
  manifest.config = cfg;

  json header;
  header["format_version"] = kManifestFormatVersion;
  header["config"] = config_to_json(cfg);
  out << header.dump() << '\n';

  for (size_t i = 0; i < slots.size(); ++i) {
    if (slots[i]) {
      const GeneratedRecord& gen = *slots[i];
      save_pgm(gen.mask, (root / gen.record.mask_path).string());
      out << record_to_json(gen.record).dump() << '\n';
      manifest.records.push_back(gen.record);
    } else {
      SkippedRecord skip{static_cast<int>(i),
                         "no renderable camera after " +
                             std::to_string(cfg.max_camera_attempts) + " attempts"};
      json line;
      line["skipped_index"] = skip.record_index;
      line["reason"] = skip.reason;
      out << line.dump() << '\n';
      manifest.skipped.push_back(std::move(skip));
    }
  }
  if (!out) throw std::runtime_error("write failed: " + manifest_path.string());
  return manifest;
}

Manifest load_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open manifest: " + path);
  Manifest manifest;
  std::string line;
  int line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json doc = json::parse(line);
      if (!have_header) {
        const int version = doc.at("format_version").get<int>();
        if (version != kManifestFormatVersion)
          throw ParseError("unsupported manifest format_version " +
                           std::to_string(version));
        manifest.config = config_from_json(doc.at("config"));
        have_header = true;
      } else if (doc.contains("skipped_index")) {
        manifest.skipped.push_back({doc.at("skipped_index").get<int>(),
                                    doc.at("reason").get<std::string>()});
      } else {
        manifest.records.push_back(record_from_json(doc));
      }
    } catch (const json::exception& e) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!have_header) throw ParseError(path + ": missing manifest header line");
  return manifest;
}

}  // namespace percam
