#include "percam/projection.hpp"

#include "percam/body_model.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace percam {

namespace {

constexpr double kMinDepth = 1e-6;

bool finite(double x) { return std::isfinite(x); }

}  // namespace

void PerspectiveCamera::validate() const {
  if (!finite(focal_px) || focal_px <= 0)
    throw std::invalid_argument("camera: focal_px must be finite and > 0");
  if (width <= 0 || height <= 0)
    throw std::invalid_argument("camera: width/height must be > 0");
  if (!finite(cx) || !finite(cy) || cx < 0 || cx > width || cy < 0 || cy > height)
    throw std::invalid_argument("camera: principal point must lie inside the image");
}

void Translation::validate() const {
  if (!finite(tx) || !finite(ty) || !finite(tz))
    throw std::invalid_argument("translation: components must be finite");
  if (tz <= 0) throw std::invalid_argument("translation: tz must be > 0");
}

void OrthographicCamera::validate() const {
  if (!finite(scale) || scale <= 0)
    throw std::invalid_argument("orthographic camera: scale must be finite and > 0");
  if (!finite(tx) || !finite(ty))
    throw std::invalid_argument("orthographic camera: tx/ty must be finite");
}

Points2 project_perspective(const Points3Ref& points, const PerspectiveCamera& camera,
                            const Translation& t) {
  camera.validate();
  const Eigen::Index n = points.rows();
  std::vector<Eigen::Index> behind;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(points(i, 2) + t.tz > kMinDepth)) behind.push_back(i);
  }
  if (!behind.empty()) {
    std::ostringstream msg;
    msg << behind.size() << " of " << n << " points at or behind the camera plane"
        << " (z + tz <= " << kMinDepth << "); first indices:";
    for (size_t k = 0; k < behind.size() && k < 8; ++k) msg << ' ' << behind[k];
    throw BehindCameraError(msg.str(), std::move(behind));
  }
  Points2 out(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double inv = 1.0 / (points(i, 2) + t.tz);
    out(i, 0) = camera.focal_px * (points(i, 0) + t.tx) * inv + camera.cx;
    out(i, 1) = camera.focal_px * (points(i, 1) + t.ty) * inv + camera.cy;
  }
  return out;
}

Points2 project_orthographic(const Points3Ref& points, const OrthographicCamera& camera) {
  camera.validate();
  Points2 out(points.rows(), 2);
  out.col(0) = camera.scale * points.col(0).array() + camera.tx;
  out.col(1) = camera.scale * points.col(1).array() + camera.ty;
  return out;
}

OrthographicCamera fit_orthographic(const Points3Ref& points, const Points2Ref& projected) {
  const Eigen::Index n = points.rows();
  if (projected.rows() != n)
    throw std::invalid_argument("fit_orthographic: point/projection count mismatch");
  if (n < 3)
    throw DegenerateGeometryError("fit_orthographic: need at least 3 points");

  // Normal equations: with centered coords, s = <xy~, uv~> / |xy~|^2 and the
  // offsets follow from the means.
  const Vec2 mean_xy(points.col(0).mean(), points.col(1).mean());
  const Vec2 mean_uv(projected.col(0).mean(), projected.col(1).mean());
  Eigen::ArrayXd cx = points.col(0).array() - mean_xy.x();
  Eigen::ArrayXd cy = points.col(1).array() - mean_xy.y();
  Eigen::ArrayXd cu = projected.col(0).array() - mean_uv.x();
  Eigen::ArrayXd cv = projected.col(1).array() - mean_uv.y();

  const double denom = (cx.square() + cy.square()).sum();
  if (!(denom > 1e-18))
    throw DegenerateGeometryError("fit_orthographic: points have no x/y extent");
  // Collinearity: second singular value of the centered (x, y) cloud.
  MatX centered(n, 2);
  centered.col(0) = cx.matrix();
  centered.col(1) = cy.matrix();
  Eigen::JacobiSVD<MatX> svd(centered);
  if (svd.singularValues()(1) <= 1e-12 * svd.singularValues()(0))
    throw DegenerateGeometryError("fit_orthographic: points are collinear in x/y");

  const double s = (cx * cu + cy * cv).sum() / denom;
  OrthographicCamera fit;
  fit.scale = s;
  fit.tx = mean_uv.x() - s * mean_xy.x();
  fit.ty = mean_uv.y() - s * mean_xy.y();
  if (!(fit.scale > 0))
    throw DegenerateGeometryError("fit_orthographic: non-positive best-fit scale");
  return fit;
}

double distortion_magnitude(const Mesh& mesh, double tz) {
  if (!(tz > 0) || !finite(tz))
    throw std::invalid_argument("distortion_magnitude: tz must be finite and > 0");
  const Points3& v = mesh.vertices;
  if (v.rows() < 3)
    throw DegenerateGeometryError("distortion_magnitude: need at least 3 vertices");

  // Unit focal, zero principal point: the measure is focal-independent by
  // construction.
  const Eigen::Index n = v.rows();
  std::vector<Eigen::Index> behind;
  for (Eigen::Index i = 0; i < n; ++i)
    if (!(v(i, 2) + tz > kMinDepth)) behind.push_back(i);
  if (!behind.empty())
    throw BehindCameraError("distortion_magnitude: mesh extends to or behind the "
                            "camera plane at this tz",
                            std::move(behind));
  Points2 proj(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double inv = 1.0 / (v(i, 2) + tz);
    proj(i, 0) = v(i, 0) * inv;
    proj(i, 1) = v(i, 1) * inv;
  }

  const OrthographicCamera fit = fit_orthographic(v, proj);
  const Points2 approx = project_orthographic(v, fit);

  const double rms_residual = std::sqrt((proj - approx).rowwise().squaredNorm().mean());
  const Vec2 center(proj.col(0).mean(), proj.col(1).mean());
  const double rms_radius =
      std::sqrt((proj.rowwise() - center.transpose()).rowwise().squaredNorm().mean());
  if (!(rms_radius > 1e-18))
    throw DegenerateGeometryError("distortion_magnitude: projection has zero radius");
  return rms_residual / rms_radius;
}

double zolly_heuristic_focal(double scale, double image_height_px, double tz) {
  if (!(scale > 0) || !(image_height_px > 0) || !(tz > 0))
    throw std::invalid_argument("zolly_heuristic_focal: all inputs must be > 0");
  return scale * image_height_px * tz / 2.0;
}

}  // namespace percam
