#include "percam/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace percam {

namespace {

// Edge function shared by contract with any independent per-pixel oracle:
// E(a, b, p) = (bx-ax)(py-ay) - (by-ay)(px-ax).
inline double edge_fn(double ax, double ay, double bx, double by, double px,
                      double py) {
  return (bx - ax) * (py - ay) - (by - ay) * (px - ax);
}

struct Bbox {
  int x0, x1, y0, y1;  // inclusive pixel range, empty when x0 > x1
  bool empty() const { return x0 > x1 || y0 > y1; }
};

// Support bounding box of values > 0; empty box when the mask is all zero.
Bbox support_bbox(const MaskArray& values) {
  int h = static_cast<int>(values.rows()), w = static_cast<int>(values.cols());
  Bbox box{w, -1, h, -1};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (values(y, x) > 0.0) {
        box.x0 = std::min(box.x0, x);
        box.x1 = std::max(box.x1, x);
        box.y0 = std::min(box.y0, y);
        box.y1 = std::max(box.y1, y);
      }
  return box;
}

}  // namespace

SilhouetteMask rasterize(const Mesh& mesh, const PerspectiveCamera& camera,
                         const Translation& t) {
  camera.validate();
  t.validate();
  if (mesh.faces.rows() == 0)
    throw EmptySilhouetteError("rasterize: mesh has no faces");
  const Points2 p = project_perspective(mesh.vertices, camera, t);

  SilhouetteMask mask = SilhouetteMask::zeros(camera.width, camera.height);
  bool any = false;
  for (Eigen::Index f = 0; f < mesh.faces.rows(); ++f) {
    const double ax = p(mesh.faces(f, 0), 0), ay = p(mesh.faces(f, 0), 1);
    const double bx = p(mesh.faces(f, 1), 0), by = p(mesh.faces(f, 1), 1);
    const double cx = p(mesh.faces(f, 2), 0), cy = p(mesh.faces(f, 2), 1);
    const double area = edge_fn(ax, ay, bx, by, cx, cy);
    if (area == 0.0) continue;  // degenerate projection covers nothing

    // Pixel centers at (ix + 0.5, iy + 0.5); one pixel of slack so boundary
    // centers are never culled by the box.
    int x0 = std::max(0, static_cast<int>(std::floor(std::min({ax, bx, cx}) - 0.5)) - 1);
    int x1 = std::min(camera.width - 1,
                      static_cast<int>(std::ceil(std::max({ax, bx, cx}) - 0.5)) + 1);
    int y0 = std::max(0, static_cast<int>(std::floor(std::min({ay, by, cy}) - 0.5)) - 1);
    int y1 = std::min(camera.height - 1,
                      static_cast<int>(std::ceil(std::max({ay, by, cy}) - 0.5)) + 1);
    for (int iy = y0; iy <= y1; ++iy) {
      const double py = iy + 0.5;
      for (int ix = x0; ix <= x1; ++ix) {
        if (mask.values(iy, ix) != 0.0) continue;
        const double px = ix + 0.5;
        const double e0 = edge_fn(bx, by, cx, cy, px, py);
        const double e1 = edge_fn(cx, cy, ax, ay, px, py);
        const double e2 = edge_fn(ax, ay, bx, by, px, py);
        const bool inside = area > 0.0 ? (e0 >= 0.0 && e1 >= 0.0 && e2 >= 0.0)
                                       : (e0 <= 0.0 && e1 <= 0.0 && e2 <= 0.0);
        if (inside) {
          mask.values(iy, ix) = 1.0;
          any = true;
        }
      }
    }
  }
  if (!any)
    throw EmptySilhouetteError("rasterize: no pixel center covered (mesh degenerate "
                               "or outside the frame)");
  return mask;
}

SilhouetteMask gaussian_smooth(const SilhouetteMask& mask, double sigma_px) {
  if (sigma_px <= 0.0) return mask;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma_px));
  std::vector<double> kernel(2 * radius + 1);
  for (int i = -radius; i <= radius; ++i)
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma_px * sigma_px));

  const int w = mask.width, h = mask.height;
  SilhouetteMask out;
  out.width = w;
  out.height = h;
  out.kind = MaskKind::Soft;
  out.sigma_px = mask.kind == MaskKind::Soft ? std::hypot(mask.sigma_px, sigma_px)
                                             : sigma_px;

  // Zero input smooths to zero, so it is enough to convolve the support box
  // dilated by the kernel radius; border renormalization only applies at the
  // image edge, which keeps this exactly equal to the full convolution.
  Bbox box = support_bbox(mask.values);
  if (box.empty()) {
    out.values = MaskArray::Zero(h, w);
    return out;
  }
  const int rx0 = std::max(0, box.x0 - radius), rx1 = std::min(w - 1, box.x1 + radius);
  const int ry0 = std::max(0, box.y0 - radius), ry1 = std::min(h - 1, box.y1 + radius);

  MaskArray tmp = MaskArray::Zero(h, w);  // horizontal pass
  for (int y = std::max(0, box.y0); y <= std::min(h - 1, box.y1); ++y) {
    for (int x = rx0; x <= rx1; ++x) {
      double acc = 0.0, wsum = 0.0;
      const int j0 = std::max(-radius, -x), j1 = std::min(radius, w - 1 - x);
      for (int j = j0; j <= j1; ++j) {
        const double kw = kernel[j + radius];
        acc += kw * mask.values(y, x + j);
        wsum += kw;
      }
      tmp(y, x) = acc / wsum;
    }
  }
  out.values = MaskArray::Zero(h, w);  // vertical pass
  for (int y = ry0; y <= ry1; ++y) {
    for (int x = rx0; x <= rx1; ++x) {
      double acc = 0.0, wsum = 0.0;
      const int j0 = std::max(-radius, -y), j1 = std::min(radius, h - 1 - y);
      for (int j = j0; j <= j1; ++j) {
        const double kw = kernel[j + radius];
        acc += kw * tmp(y + j, x);
        wsum += kw;
      }
      out.values(y, x) = acc / wsum;
    }
  }
  return out;
}

double soft_iou(const SilhouetteMask& a, const SilhouetteMask& b, bool* both_empty) {
  if (a.width != b.width || a.height != b.height)
    throw std::invalid_argument("soft_iou: mask dimensions differ");
  if (both_empty) *both_empty = false;
  const double denom = a.values.max(b.values).sum();
  if (denom <= 0.0) {
    if (both_empty) *both_empty = true;
    return 0.0;
  }
  return a.values.min(b.values).sum() / denom;
}

double objective(const ObjectiveParams& params, const Mesh& mesh,
                 const SilhouetteMask& target, double sigma_px) {
  if (!(params.f_px > 0) || !(params.tz > 0) || !std::isfinite(params.f_px) ||
      !std::isfinite(params.tx) || !std::isfinite(params.ty) ||
      !std::isfinite(params.tz))
    return kObjectivePenalty;
  const PerspectiveCamera camera =
      PerspectiveCamera::centered(params.f_px, target.width, target.height);
  try {
    const SilhouetteMask rendered =
        gaussian_smooth(rasterize(mesh, camera, {params.tx, params.ty, params.tz}),
                        sigma_px);
    return 1.0 - soft_iou(rendered, target);
  } catch (const BehindCameraError&) {
    return kObjectivePenalty;
  } catch (const EmptySilhouetteError&) {
    return kObjectivePenalty;
  }
}

void save_pgm(const SilhouetteMask& mask, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("pgm: cannot open for writing: " + path);
  out << "P5\n" << mask.width << ' ' << mask.height << "\n255\n";
  std::vector<std::uint8_t> row(mask.width);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      const double v = std::clamp(mask.values(y, x), 0.0, 1.0);
      row[x] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
    out.write(reinterpret_cast<const char*>(row.data()), row.size());
  }
  if (!out) throw ParseError("pgm: write failed: " + path);
}

SilhouetteMask load_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("pgm: cannot open: " + path);
  std::string magic;
  in >> magic;
  if (magic != "P5") throw ParseError("pgm: " + path + ": expected P5 magic");
  auto next_int = [&](const char* what) {
    // Skip whitespace and '#' comment lines between header tokens.
    for (;;) {
      int c = in.peek();
      if (c == '#') {
        std::string comment;
        std::getline(in, comment);
      } else if (c != EOF && std::isspace(static_cast<unsigned char>(c))) {
        in.get();
      } else {
        break;
      }
    }
    long v = -1;
    in >> v;
    if (!in || v < 0) throw ParseError("pgm: " + path + ": bad " + std::string(what));
    return v;
  };
  const long w = next_int("width"), h = next_int("height"), maxval = next_int("maxval");
  if (w <= 0 || h <= 0) throw ParseError("pgm: " + path + ": non-positive dimensions");
  if (maxval <= 0 || maxval > 255)
    throw ParseError("pgm: " + path + ": maxval must be in [1, 255]");
  in.get();  // single whitespace after maxval
  std::vector<std::uint8_t> data(static_cast<size_t>(w) * h);
  in.read(reinterpret_cast<char*>(data.data()), data.size());
  if (in.gcount() != static_cast<std::streamsize>(data.size()))
    throw ParseError("pgm: " + path + ": truncated raster");

  SilhouetteMask mask;
  mask.width = static_cast<int>(w);
  mask.height = static_cast<int>(h);
  mask.values.resize(h, w);
  bool binary = true;
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x) {
      const std::uint8_t raw = data[y * w + x];
      mask.values(y, x) = static_cast<double>(raw) / maxval;
      if (raw != 0 && raw != maxval) binary = false;
    }
  mask.kind = binary ? MaskKind::Binary : MaskKind::Soft;
  mask.sigma_px = 0;
  return mask;
}

}  // namespace percam
