#include "percam/metrics.hpp"

#include <Eigen/Geometry>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

#include "percam/io_util.hpp"
#include "percam/parallel.hpp"

namespace percam {

namespace {

using nlohmann::json;

constexpr double kMetersToMm = 1000.0;

double mean_point_distance(const Points3& a, const Points3& b) {
  return (a - b).rowwise().norm().mean();
}

// Collinear (or coincident) point sets have no usable second principal axis.
void check_non_collinear(const Points3Ref& points, const char* what) {
  if (points.rows() < 3)
    throw DegenerateGeometryError(std::string(what) + ": fewer than 3 joints");
  const Points3 centered = points.rowwise() - points.colwise().mean();
  Eigen::JacobiSVD<MatX> svd(centered);
  const VecX sv = svd.singularValues();
  if (!(sv(0) > 0) || sv(1) <= 1e-12 * sv(0))
    throw DegenerateGeometryError(std::string(what) + ": joints are collinear");
}

bool mask_inside(double v) { return v >= 0.5; }

double column_median(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const size_t n = values.size();
  if (n == 0) return 0.0;
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

struct ColumnAccess {
  const char* name;
  double RecordMetrics::* field;
};

constexpr ColumnAccess kColumns[] = {
    {"e_f", &RecordMetrics::e_f},
    {"e_tz", &RecordMetrics::e_tz},
    {"e_inv_tz", &RecordMetrics::e_inv_tz},
    {"e_txy", &RecordMetrics::e_txy},
    {"pve_mm", &RecordMetrics::pve_mm},
    {"mpjpe_mm", &RecordMetrics::mpjpe_mm},
    {"pa_mpjpe_mm", &RecordMetrics::pa_mpjpe_mm},
    {"miou_pct", &RecordMetrics::miou_pct},
};

json metrics_to_json(const RecordMetrics& m) {
  json row;
  row["id"] = m.id;
  for (const auto& col : kColumns) row[col.name] = round9(m.*(col.field));
  return row;
}

json pose_to_json(const Pose& pose) {
  json rows = json::array();
  for (Eigen::Index j = 0; j < pose.joint_rotations.rows(); ++j)
    rows.push_back({round9(pose.joint_rotations(j, 0)),
                    round9(pose.joint_rotations(j, 1)),
                    round9(pose.joint_rotations(j, 2))});
  return rows;
}

Pose pose_from_json(const json& rows) {
  Pose pose = Pose::zero(static_cast<int>(rows.size()));
  for (size_t j = 0; j < rows.size(); ++j) {
    if (!rows[j].is_array() || rows[j].size() != 3)
      throw ParseError("pose row " + std::to_string(j) + " is not a 3-vector");
    for (int c = 0; c < 3; ++c)
      pose.joint_rotations(static_cast<Eigen::Index>(j), c) = rows[j][c].get<double>();
  }
  return pose;
}

}  // namespace

double e_f(double f_pred, double f_gt) {
  if (!(f_gt > 0) || !std::isfinite(f_gt))
    throw std::invalid_argument("e_f: f_gt must be finite and > 0");
  return std::abs(f_pred - f_gt) / f_gt;
}

double e_tz(double tz_pred, double tz_gt) { return std::abs(tz_pred - tz_gt); }

double e_inv_tz(double tz_pred, double tz_gt) {
  if (!(tz_pred > 0) || !(tz_gt > 0))
    throw std::invalid_argument("e_inv_tz: both depths must be > 0");
  return std::abs(1.0 / tz_pred - 1.0 / tz_gt);
}

double e_txy(const Vec2& txy_pred, const Vec2& txy_gt) {
  return (txy_pred - txy_gt).norm();
}

double pve(const Points3Ref& v_pred, const Points3Ref& v_gt,
           const Vec3& pelvis_pred, const Vec3& pelvis_gt) {
  if (v_pred.rows() != v_gt.rows())
    throw std::invalid_argument("pve: vertex count mismatch");
  if (v_pred.rows() == 0) throw std::invalid_argument("pve: empty vertex sets");
  const Points3 a = v_pred.rowwise() - pelvis_pred.transpose();
  const Points3 b = v_gt.rowwise() - pelvis_gt.transpose();
  return kMetersToMm * mean_point_distance(a, b);
}

double mpjpe(const Points3Ref& j_pred, const Points3Ref& j_gt) {
  if (j_pred.rows() != j_gt.rows())
    throw std::invalid_argument("mpjpe: joint count mismatch");
  if (j_pred.rows() == 0) throw std::invalid_argument("mpjpe: empty joint sets");
  const Points3 a = j_pred.rowwise() - j_pred.row(0);
  const Points3 b = j_gt.rowwise() - j_gt.row(0);
  return kMetersToMm * mean_point_distance(a, b);
}

double pa_mpjpe(const Points3Ref& j_pred, const Points3Ref& j_gt) {
  if (j_pred.rows() != j_gt.rows())
    throw std::invalid_argument("pa_mpjpe: joint count mismatch");
  check_non_collinear(j_pred, "pa_mpjpe: prediction");
  check_non_collinear(j_gt, "pa_mpjpe: ground truth");
  const Eigen::Matrix4d transform =
      Eigen::umeyama(j_pred.transpose(), j_gt.transpose(), true);
  const Mat3 sr = transform.topLeftCorner<3, 3>();
  const Vec3 t = transform.topRightCorner<3, 1>();
  const Points3 aligned =
      (j_pred * sr.transpose()).rowwise() + t.transpose();
  return kMetersToMm * mean_point_distance(aligned, j_gt);
}

double miou(const SilhouetteMask& pred, const SilhouetteMask& gt) {
  if (pred.width != gt.width || pred.height != gt.height)
    throw std::invalid_argument("miou: mask dimension mismatch");
  long long inter = 0, uni = 0;
  for (Eigen::Index r = 0; r < pred.values.rows(); ++r)
    for (Eigen::Index c = 0; c < pred.values.cols(); ++c) {
      const bool a = mask_inside(pred.values(r, c));
      const bool b = mask_inside(gt.values(r, c));
      inter += a && b;
      uni += a || b;
    }
  if (uni == 0) return 100.0;
  return 100.0 * static_cast<double>(inter) / static_cast<double>(uni);
}

RecordMetrics compute_metrics(const EvalPair& pair, const std::string& id) {
  RecordMetrics m;
  m.id = id;
  m.e_f = e_f(pair.pred.f_px, pair.gt.f_px);
  m.e_tz = e_tz(pair.pred.t.z(), pair.gt.t.z());
  m.e_inv_tz = e_inv_tz(pair.pred.t.z(), pair.gt.t.z());
  m.e_txy = e_txy(pair.pred.t.head<2>(), pair.gt.t.head<2>());
  m.pve_mm = pve(pair.pred.vertices, pair.gt.vertices,
                 pair.pred.joints.row(0).transpose(),
                 pair.gt.joints.row(0).transpose());
  m.mpjpe_mm = mpjpe(pair.pred.joints, pair.gt.joints);
  m.pa_mpjpe_mm = pa_mpjpe(pair.pred.joints, pair.gt.joints);
  m.miou_pct = miou(pair.pred.mask, pair.gt.mask);
  return m;
}

MetricReport evaluate_dataset(const std::vector<SceneRecord>& records,
                              const std::vector<PredictionRecord>& predictions,
                              const BodyModel& model, const std::string& dataset_dir,
                              int threads) {
  std::unordered_map<std::string, const PredictionRecord*> by_id;
  for (const auto& p : predictions) by_id[p.id] = &p;

  MetricReport report;
  struct Job {
    const SceneRecord* record;
    const PredictionRecord* pred;
  };
  std::vector<Job> jobs;
  for (const auto& record : records) {
    const auto it = by_id.find(record.id);
    if (it == by_id.end()) {
      report.missing_ids.push_back(record.id);
      continue;
    }
    jobs.push_back({&record, it->second});
  }

  std::vector<RecordMetrics> rows(jobs.size());
  std::vector<char> render_failed(jobs.size(), 0);
  parallel_for(jobs.size(), threads, [&](size_t i) {
    const SceneRecord& record = *jobs[i].record;
    const PredictionRecord& pred = *jobs[i].pred;

    const Mesh gt_mesh = synthesize(model, record.shape, record.pose);
    EvalPair pair;
    pair.gt.f_px = record.camera.focal_px;
    pair.gt.t = record.t.vec();
    pair.gt.joints = gt_mesh.joints.rowwise() + record.t.vec().transpose();
    pair.gt.vertices = gt_mesh.vertices.rowwise() + record.t.vec().transpose();
    pair.gt.mask =
        load_pgm((std::filesystem::path(dataset_dir) / record.mask_path).string());

    const Mesh pred_mesh =
        (pred.shape || pred.pose)
            ? synthesize(model, pred.shape ? *pred.shape : record.shape,
                         pred.pose ? *pred.pose : record.pose)
            : gt_mesh;
    pair.pred.f_px = pred.f_px;
    pair.pred.t = pred.t;
    pair.pred.joints = pred_mesh.joints.rowwise() + pred.t.transpose();
    pair.pred.vertices = pred_mesh.vertices.rowwise() + pred.t.transpose();
    PerspectiveCamera pred_camera = record.camera;
    pred_camera.focal_px = pred.f_px;
    try {
      pair.pred.mask = rasterize(pred_mesh, pred_camera,
                                 {pred.t.x(), pred.t.y(), pred.t.z()});
    } catch (const BehindCameraError&) {
      pair.pred.mask = SilhouetteMask::zeros(pair.gt.mask.width, pair.gt.mask.height);
      render_failed[i] = 1;
    } catch (const EmptySilhouetteError&) {
      pair.pred.mask = SilhouetteMask::zeros(pair.gt.mask.width, pair.gt.mask.height);
      render_failed[i] = 1;
    }
    rows[i] = compute_metrics(pair, record.id);
  });

  report.rows = std::move(rows);
  report.warning_count = static_cast<int>(report.missing_ids.size());
  for (const char failed : render_failed) report.warning_count += failed;

  report.mean.id = "mean";
  report.median.id = "median";
  if (!report.rows.empty()) {
    for (const auto& col : kColumns) {
      std::vector<double> values;
      values.reserve(report.rows.size());
      for (const auto& row : report.rows) values.push_back(row.*(col.field));
      double sum = 0;
      for (const double v : values) sum += v;
      report.mean.*(col.field) = sum / static_cast<double>(values.size());
      report.median.*(col.field) = column_median(values);
    }
  }
  return report;
}

void write_report_csv(const MetricReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "id";
  for (const auto& col : kColumns) out << ',' << col.name;
  out << '\n';
  auto emit = [&](const RecordMetrics& m) {
    out << m.id;
    for (const auto& col : kColumns) out << ',' << format9(m.*(col.field));
    out << '\n';
  };
  for (const auto& row : report.rows) emit(row);
  emit(report.mean);
  emit(report.median);
  if (!out) throw std::runtime_error("write failed: " + path);
}

void write_report_json(const MetricReport& report, const std::string& path) {
  json doc;
  doc["rows"] = json::array();
  for (const auto& row : report.rows) doc["rows"].push_back(metrics_to_json(row));
  doc["mean"] = metrics_to_json(report.mean);
  doc["median"] = metrics_to_json(report.median);
  doc["missing_ids"] = report.missing_ids;
  doc["warning_count"] = report.warning_count;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << doc.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<PredictionRecord> load_predictions(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open predictions file: " + path);
  std::vector<PredictionRecord> preds;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json doc;
    try {
      doc = json::parse(line);
      PredictionRecord p;
      p.id = doc.at("id").get<std::string>();
      p.f_px = doc.at("f_px").get<double>();
      p.t = Vec3(doc.at("tx_m").get<double>(), doc.at("ty_m").get<double>(),
                 doc.at("tz_m").get<double>());
      if (doc.contains("shape")) {
        Shape s;
        const auto& arr = doc["shape"];
        s.beta.resize(static_cast<Eigen::Index>(arr.size()));
        for (size_t i = 0; i < arr.size(); ++i)
          s.beta(static_cast<Eigen::Index>(i)) = arr[i].get<double>();
        p.shape = std::move(s);
      }
      if (doc.contains("pose")) p.pose = pose_from_json(doc["pose"]);
      preds.push_back(std::move(p));
    } catch (const json::exception& e) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return preds;
}

void save_predictions(const std::vector<PredictionRecord>& preds,
                      const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  for (const auto& p : preds) {
    json doc;
    doc["id"] = p.id;
    doc["f_px"] = round9(p.f_px);
    doc["tx_m"] = round9(p.t.x());
    doc["ty_m"] = round9(p.t.y());
    doc["tz_m"] = round9(p.t.z());
    if (p.shape) {
      json arr = json::array();
      for (Eigen::Index i = 0; i < p.shape->beta.size(); ++i)
        arr.push_back(round9(p.shape->beta(i)));
      doc["shape"] = std::move(arr);
    }
    if (p.pose) doc["pose"] = pose_to_json(*p.pose);
    out << doc.dump() << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace percam
