#pragma once

#include "percam/body_model.hpp"
#include "percam/projection.hpp"
#include "percam/types.hpp"

#include <string>

namespace percam {

enum class MaskKind { Binary, Soft };

// Silhouette image; values in [0, 1], (row, col) indexed, row 0 at the top.
// sigma_px is the accumulated Gaussian scale for Soft masks (0 if unknown).
struct SilhouetteMask {
  int width = 0, height = 0;
  MaskArray values;  // height rows x width cols
  MaskKind kind = MaskKind::Binary;
  double sigma_px = 0;

  static SilhouetteMask zeros(int width, int height) {
    return {width, height, MaskArray::Zero(height, width), MaskKind::Binary, 0};
  }
  // Fraction of pixels with value > 0.5.
  double coverage() const {
    return (values > 0.5).count() / static_cast<double>(values.size());
  }
};

// Pixel (ix, iy) is set to 1 iff its center (ix + 0.5, iy + 0.5) lies inside
// (boundary included) at least one projected triangle. Inside-ness is decided
// by the three edge functions E(a, b, p) = (bx-ax)(py-ay) - (by-ay)(px-ax)
// sharing the sign of the triangle's signed area; zero-area triangles are
// skipped. No depth test, no antialiasing. Throws BehindCameraError if any
// vertex has z + Tz <= 1e-6 and EmptySilhouetteError if no pixel is covered.
SilhouetteMask rasterize(const Mesh& mesh, const PerspectiveCamera& camera,
                         const Translation& t);

// Separable Gaussian blur, kernel truncated at 3*sigma and renormalized over
// the in-image taps at borders, so a constant image stays constant. sigma <= 0
// returns the input unchanged.
SilhouetteMask gaussian_smooth(const SilhouetteMask& mask, double sigma_px);

// Soft IoU = sum(min) / sum(max). Returns 0 and sets *both_empty (if given)
// when the denominator is 0. Throws std::invalid_argument on size mismatch.
double soft_iou(const SilhouetteMask& a, const SilhouetteMask& b,
                bool* both_empty = nullptr);

struct ObjectiveParams {
  double f_px = 0;
  double tx = 0, ty = 0, tz = 0;
};

// Returned by objective() when rendering at the probed params is infeasible
// (behind-camera or empty silhouette); larger than any reachable 1 - IoU.
inline constexpr double kObjectivePenalty = 2.0;

// 1 - soft_iou(gaussian_smooth(rasterize(mesh, camera(f), t), sigma), target)
// with the camera principal point at the target's image center. The target
// must already be smoothed with the same sigma. Infeasible params yield
// kObjectivePenalty instead of throwing. Lower is better.
double objective(const ObjectiveParams& params, const Mesh& mesh,
                 const SilhouetteMask& target, double sigma_px);

// 8-bit binary PGM (P5), 255 = inside; soft masks quantized round-to-nearest.
SilhouetteMask load_pgm(const std::string& path);
void save_pgm(const SilhouetteMask& mask, const std::string& path);

}  // namespace percam
