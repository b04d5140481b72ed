#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>
#include <vector>

namespace percam {

using Scalar = double;

// Dense row-per-point storage; free functions take const Ref so blocks and
// expressions bind without copies.
using Points3 = Eigen::Matrix<Scalar, Eigen::Dynamic, 3>;
using Points2 = Eigen::Matrix<Scalar, Eigen::Dynamic, 2>;
using Faces = Eigen::Matrix<int, Eigen::Dynamic, 3>;
using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;
// Image-like storage, row 0 = top image row, (row, col) = (y, x).
using MaskArray = Eigen::ArrayXXd;

using Points3Ref = Eigen::Ref<const Points3>;
using Points2Ref = Eigen::Ref<const Points2>;
using VecXRef = Eigen::Ref<const VecX>;
using MatXRef = Eigen::Ref<const MatX>;

// Points at or behind the camera plane (z + Tz <= eps); carries the offenders.
class BehindCameraError : public std::runtime_error {
 public:
  BehindCameraError(std::string msg, std::vector<Eigen::Index> indices)
      : std::runtime_error(std::move(msg)), indices_(std::move(indices)) {}
  const std::vector<Eigen::Index>& indices() const { return indices_; }

 private:
  std::vector<Eigen::Index> indices_;
};

// Rasterization produced no covered pixel (degenerate or out-of-frame mesh).
class EmptySilhouetteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Geometry too degenerate for the requested operation (collinear points etc).
class DegenerateGeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SolverDivergedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file; message carries file/line/field context.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace percam
