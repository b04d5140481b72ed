#pragma once

#include "percam/rasterizer.hpp"
#include "percam/scenegen.hpp"
#include "percam/types.hpp"

#include <optional>
#include <string>
#include <vector>

namespace percam {

// Camera-parameter error measures.
double e_f(double f_pred, double f_gt);          // |f_pred - f_gt| / f_gt
double e_tz(double tz_pred, double tz_gt);       // |tz_pred - tz_gt|
double e_inv_tz(double tz_pred, double tz_gt);   // |1/tz_pred - 1/tz_gt|
double e_txy(const Vec2& txy_pred, const Vec2& txy_gt);  // L2

// Mean per-point Euclidean distance in mm after subtracting the given pelvis
// positions (default: inputs already pelvis-centered).
double pve(const Points3Ref& v_pred, const Points3Ref& v_gt,
           const Vec3& pelvis_pred = Vec3::Zero(), const Vec3& pelvis_gt = Vec3::Zero());

// Root-relative: both sets are centered on their own joint 0 internally.
double mpjpe(const Points3Ref& j_pred, const Points3Ref& j_gt);

// Similarity-Procrustes-aligned MPJPE (rotation + uniform scale + translation,
// reflections excluded). Needs >= 3 non-collinear joints per set, else
// DegenerateGeometryError.
double pa_mpjpe(const Points3Ref& j_pred, const Points3Ref& j_gt);

// 100 * |A & B| / |A | B| with soft inputs thresholded at 0.5 (>= 0.5 is
// inside). Both-empty counts as identical: 100.
double miou(const SilhouetteMask& pred, const SilhouetteMask& gt);

struct EvalSample {
  double f_px = 0;
  Vec3 t = Vec3::Zero();
  Points3 joints;
  Points3 vertices;
  SilhouetteMask mask;
};

struct EvalPair {
  EvalSample pred;
  EvalSample gt;
};

struct RecordMetrics {
  std::string id;
  double e_f = 0, e_tz = 0, e_inv_tz = 0, e_txy = 0;
  double pve_mm = 0, mpjpe_mm = 0, pa_mpjpe_mm = 0;
  double miou_pct = 0;
};

RecordMetrics compute_metrics(const EvalPair& pair, const std::string& id);

struct MetricReport {
  std::vector<RecordMetrics> rows;
  RecordMetrics mean;    // id = "mean"
  RecordMetrics median;  // id = "median"
  std::vector<std::string> missing_ids;  // records without a prediction
  int warning_count = 0;
};

// Predicted camera (and optionally body params) for one record; absent shape
// or pose falls back to the record's ground truth.
struct PredictionRecord {
  std::string id;
  double f_px = 0;
  Vec3 t = Vec3::Zero();
  std::optional<Shape> shape;
  std::optional<Pose> pose;
};

// Joins records to predictions by id, re-renders the predicted silhouette,
// and aggregates mean/median per column. Missing predictions are listed and
// excluded with a warning count. dataset_dir resolves the stored mask paths.
MetricReport evaluate_dataset(const std::vector<SceneRecord>& records,
                              const std::vector<PredictionRecord>& predictions,
                              const BodyModel& model, const std::string& dataset_dir,
                              int threads = 1);

// CSV columns: id,e_f,e_tz,e_inv_tz,e_txy,pve_mm,mpjpe_mm,pa_mpjpe_mm,miou_pct
// plus mean/median rows; the JSON mirror carries the same values.
void write_report_csv(const MetricReport& report, const std::string& path);
void write_report_json(const MetricReport& report, const std::string& path);

// JSON-lines predictions: {"id", "f_px", "tx_m", "ty_m", "tz_m"[, "shape", "pose"]}.
std::vector<PredictionRecord> load_predictions(const std::string& path);
void save_predictions(const std::vector<PredictionRecord>& preds, const std::string& path);

}  // namespace percam
