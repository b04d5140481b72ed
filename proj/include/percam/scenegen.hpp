#pragma once

#include "percam/body_model.hpp"
#include "percam/projection.hpp"
#include "percam/rasterizer.hpp"
#include "percam/rng.hpp"
#include "percam/types.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace percam {

// Dataset sampling protocol. Depth is uniform in 1/Tz per band; the camera
// sits on a sphere of radius Tz around the pelvis and looks at a target bone
// plus noise; focal follows the dolly-zoom law f_mm = f_default_mm * Tz with
// multiplicative jitter on a 36 mm square sensor.
struct GenConfig {
  int n_records = 100;
  std::uint64_t global_seed = 0;
  int image_size = 256;  // square images

  double near_fraction = 0.8;
  double near_min = 0.3, near_max = 1.2;  // meters
  double far_max = 10.0;                  // far band is (near_max, far_max]

  double focal_jitter_lo = 0.7, focal_jitter_hi = 1.3;
  double f_default_mm = 15.0;  // at 1 m subject distance
  double sensor_mm = 36.0;

  double phi_min = 0.1 * M_PI, phi_max = 0.7 * M_PI;  // polar angle from +Y
  double theta_min = 0.0, theta_max = 2.0 * M_PI;
  std::vector<int> lookat_bones{0, 3, 6, 9, 12, 15};  // clamped to K - 1
  double lookat_noise = 0.05;  // per-axis uniform [-noise, noise] on the target
  double pose_angle_max = 0.4; // per-joint rotation magnitude, radians

  int max_camera_attempts = 20;
};

struct SeedProvenance {
  std::uint64_t global_seed = 0;
  int record_index = 0;
};

// One generated scene. The sampled camera rotation is already folded into
// pose's root row, so camera-space vertices = synthesize(...) vertices + t
// (translation-only extrinsics); camera_rotation is kept for provenance.
// All numeric fields are rounded to 9 significant digits before the mask is
// rendered, so re-reading the manifest reproduces the mask exactly.
struct SceneRecord {
  std::string id;
  Shape shape;
  Pose pose;
  PerspectiveCamera camera;
  Translation t;
  Mat3 camera_rotation;
  std::string mask_path;  // relative to the dataset directory
  SeedProvenance seed;
};

struct GeneratedRecord {
  SceneRecord record;
  SilhouetteMask mask;
};

struct SkippedRecord {
  int record_index = 0;
  std::string reason;
};

struct Manifest {
  GenConfig config;
  std::vector<SceneRecord> records;
  std::vector<SkippedRecord> skipped;
};

// Uniform in inverse depth within the near band [near_min, near_max] with
// probability near_fraction, else within (near_max, far_max]. Consumes one
// branch draw and one value draw.
double sample_tz(CounterRng& rng, const GenConfig& cfg);

// Camera position on the sphere of radius tz around the origin (pelvis) and
// the world-to-camera rotation from a look-at toward joints[bone] + noise.
// Camera convention: +Z forward, +Y down (image rows), +X right. Up is world
// +Y, falling back to +Z when the view axis is within 1 degree of vertical.
// Degenerate look-at (target == position) is resampled, max 10 attempts.
std::pair<Vec3, Mat3> sample_camera(CounterRng& rng, const Points3Ref& joints,
                                    double tz, const GenConfig& cfg);

// f_px = f_default_mm * tz * jitter / sensor_mm * image_width.
double sample_focal(CounterRng& rng, double tz, const GenConfig& cfg, int image_width);

// Fully deterministic per (cfg.global_seed, index); re-draws camera and focal
// at the fixed sampled Tz until the record renders (all vertices in front,
// nonempty mask, Tz within [near_min, far_max]), up to
// cfg.max_camera_attempts, then gives up with nullopt.
std::optional<GeneratedRecord> generate_record(const GenConfig& cfg,
                                               const BodyModel& model, int index);

// Writes masks/<id>.pgm and manifest.jsonl (header line with the config, one
// line per record, one gap line per skip) under out_dir. Byte-identical for
// identical cfg regardless of `threads`.
Manifest generate_dataset(const GenConfig& cfg, const BodyModel& model,
                          const std::string& out_dir, int threads = 1);

Manifest load_manifest(const std::string& path);

}  // namespace percam
