// Copyright 2026 the stereoflow authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "sflow/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sflow {

void Intrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw std::invalid_argument("Intrinsics: focal lengths must be positive");
  }
}

RigidTransform RigidTransform::translate(double x, double y, double z) {
  RigidTransform t;
  t.translation = Vec3(x, y, z);
  return t;
}

RigidTransform RigidTransform::from_axis_angle(const Vec3& axis_angle, const Vec3& t) {
  RigidTransform out;
  const double angle = axis_angle.norm();
  if (angle > 0.0) {
    out.rotation = Eigen::AngleAxisd(angle, axis_angle / angle).toRotationMatrix();
  }
  out.translation = t;
  return out;
}

RigidTransform RigidTransform::inverse() const {
  RigidTransform out;
  out.rotation = rotation.transpose();
  out.translation = -(rotation.transpose() * translation);
  return out;
}

RigidTransform RigidTransform::compose(const RigidTransform& other) const {
  RigidTransform out;
  out.rotation = rotation * other.rotation;
  out.translation = rotation * other.translation + translation;
  return out;
}

double RigidTransform::orthonormality_error() const {
  const Mat3 e = rotation.transpose() * rotation - Mat3::Identity();
  double err = e.cwiseAbs().maxCoeff();
  err = std::max(err, std::abs(rotation.determinant() - 1.0));
  return err;
}

bool RigidTransform::is_rigid(double tol) const {
  return orthonormality_error() <= tol;
}

Vec3 unproject(const Pixel& p, double depth, const Intrinsics& K) {
  K.validate();
  if (!(depth > 0.0)) {
    throw std::invalid_argument("unproject: depth must be positive");
  }
  return Vec3(depth * (p.u - K.cx) / K.fx, depth * (p.v - K.cy) / K.fy, depth);
}

Projection project(const Vec3& X, const Intrinsics& K) {
  K.validate();
  if (!(X.z() > 0.0)) {
    throw std::invalid_argument("project: point is behind the camera");
  }
  Projection out;
  out.pixel.u = K.fx * X.x() / X.z() + K.cx;
  out.pixel.v = K.fy * X.y() / X.z() + K.cy;
  out.depth = X.z();
  return out;
}

WarpResult warp_pixel(const Pixel& p, double D_p, const Vec3& F_p,
                      const Intrinsics& K_src, const Intrinsics& K_dst,
                      const RigidTransform& T_rel) {
  K_src.validate();
  K_dst.validate();
  if (!(D_p > 0.0)) {
    throw std::invalid_argument("warp_pixel: depth must be positive");
  }

  // Ray direction with unit z; X = D * g + F, Y = R X + t.
  const Vec3 g((p.u - K_src.cx) / K_src.fx, (p.v - K_src.cy) / K_src.fy, 1.0);
  const Vec3 X = D_p * g + F_p;
  const Vec3 Y = T_rel.rotation * X + T_rel.translation;

  WarpResult out;
  out.depth = Y.z();
  if (!(Y.z() > 0.0)) {
    out.valid = false;
    return out;
  }
  out.valid = true;
  out.pixel.u = K_dst.fx * Y.x() / Y.z() + K_dst.cx;
  out.pixel.v = K_dst.fy * Y.y() / Y.z() + K_dst.cy;

  // d(u,v,z)/dY, chained with dY/d(D,F) = [R g | R].
  Eigen::Matrix<double, 3, 3> P;
  const double iz = 1.0 / Y.z();
  P << K_dst.fx * iz, 0.0, -K_dst.fx * Y.x() * iz * iz,
       0.0, K_dst.fy * iz, -K_dst.fy * Y.y() * iz * iz,
       0.0, 0.0, 1.0;
  Eigen::Matrix<double, 3, 4> dY;
  dY.col(0) = T_rel.rotation * g;
  dY.block<3, 3>(0, 1) = T_rel.rotation;
  out.jacobian = P * dY;
  return out;
}

Intrinsics roi_intrinsics(const Intrinsics& K, const RoiBox& box, int w_r, int h_r) {
  K.validate();
  if (!box.is_valid() || w_r <= 0 || h_r <= 0) {
    throw std::invalid_argument("roi_intrinsics: box and crop size must be positive");
  }
  const double sx = double(w_r) / box.w;
  const double sy = double(h_r) / box.h;
  return Intrinsics{K.fx * sx, K.fy * sy, (K.cx - box.x) * sx, (K.cy - box.y) * sy};
}

RoiBox expand_box(const RoiBox& box, double frac, int image_w, int image_h) {
  double x0 = box.x - frac * box.w;
  double y0 = box.y - frac * box.h;
  double x1 = box.x + box.w * (1.0 + frac);
  double y1 = box.y + box.h * (1.0 + frac);
  x0 = std::max(x0, 0.0);
  y0 = std::max(y0, 0.0);
  x1 = std::min(x1, double(image_w));
  y1 = std::min(y1, double(image_h));
  return RoiBox{x0, y0, x1 - x0, y1 - y0};
}

}  // namespace sflow
