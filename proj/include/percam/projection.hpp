#pragma once

#include "percam/types.hpp"

namespace percam {

struct Mesh;

// Pinhole intrinsics in pixels. Principal point must lie inside the image.
struct PerspectiveCamera {
  double focal_px = 0;
  double cx = 0, cy = 0;
  int width = 0, height = 0;

  static PerspectiveCamera centered(double focal_px, int width, int height) {
    return {focal_px, 0.5 * width, 0.5 * height, width, height};
  }
  void validate() const;
};

// Root translation applied after pelvis-centering; tz > 0 puts the subject in
// front of the camera.
struct Translation {
  double tx = 0, ty = 0, tz = 0;

  Vec3 vec() const { return Vec3(tx, ty, tz); }
  void validate() const;
};

// Scaled orthographic model: (u, v) = (s*x + tx, s*y + ty).
struct OrthographicCamera {
  double scale = 1;
  double tx = 0, ty = 0;

  void validate() const;
};

// (u, v) = f * ((x + Tx)/(z + Tz), (y + Ty)/(z + Tz)) + (cx, cy).
// Throws BehindCameraError listing offending rows when any z + Tz <= 1e-6.
Points2 project_perspective(const Points3Ref& points, const PerspectiveCamera& camera,
                            const Translation& t);

Points2 project_orthographic(const Points3Ref& points, const OrthographicCamera& camera);

// Least-squares (scale, tx, ty) mapping points' (x, y) onto the given 2-D
// targets. Throws DegenerateGeometryError for < 3 non-collinear points.
OrthographicCamera fit_orthographic(const Points3Ref& points, const Points2Ref& projected);

// Focal-independent perspective distortion: project at f = 1, c = (0, 0),
// T = (0, 0, tz), fit the best scaled-orthographic approximation, and return
// RMS residual / RMS radius of the projection. 0 means distortion-free.
double distortion_magnitude(const Mesh& mesh, double tz);

// Weak-perspective focal heuristic f = s * h * Tz / 2 used as a baseline.
double zolly_heuristic_focal(double scale, double image_height_px, double tz);

}  // namespace percam
