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

#pragma once

#include <Eigen/Dense>
#include <array>

// Pinhole camera geometry and the rigid warp used everywhere else.
//
// Conventions (fixed for the whole project):
//   - the camera looks down +z; x points right, y points down;
//   - pixel (0, 0) is the *center* of the top-left pixel;
//   - poses are world-from-camera;
//   - 3D scene flow lives in the reference camera frame at time t and is
//     added to the point *before* the relative pose is applied.

namespace sflow {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct Pixel {
  double u = 0.0;
  double v = 0.0;
};

struct Intrinsics {
  double fx = 0.0, fy = 0.0, cx = 0.0, cy = 0.0;

  bool is_valid() const { return fx > 0.0 && fy > 0.0; }
  // Throws std::invalid_argument when focal lengths are not positive.
  void validate() const;
};

struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }
  static RigidTransform translate(double x, double y, double z);
  // Rodrigues; axis_angle's norm is the rotation angle in radians.
  static RigidTransform from_axis_angle(const Vec3& axis_angle, const Vec3& t);

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  RigidTransform inverse() const;
  // this * other: apply `other` first.
  RigidTransform compose(const RigidTransform& other) const;

  // max |R^T R - I| entry; also checks det(R) = +1.
  double orthonormality_error() const;
  bool is_rigid(double tol = 1e-9) const;
};

inline RigidTransform operator*(const RigidTransform& a, const RigidTransform& b) {
  return a.compose(b);
}

// Axis-aligned pixel-space box; continuous coordinates, positive extent.
struct RoiBox {
  double x = 0.0, y = 0.0, w = 0.0, h = 0.0;
  bool is_valid() const { return w > 0.0 && h > 0.0; }
};

// p, depth -> 3D point in the camera frame. Throws on depth <= 0.
Vec3 unproject(const Pixel& p, double depth, const Intrinsics& K);

struct Projection {
  Pixel pixel;
  double depth = 0.0;
};

// 3D point in camera frame -> pixel + depth. Throws when X.z <= 0.
Projection project(const Vec3& X, const Intrinsics& K);

struct WarpResult {
  Pixel pixel;
  double depth = 0.0;  // z in the destination camera frame
  bool valid = false;  // false when the moved point lands behind the camera
  // d(u, v, depth) / d(D, Fx, Fy, Fz); rows u, v, depth.
  Eigen::Matrix<double, 3, 4> jacobian = Eigen::Matrix<double, 3, 4>::Zero();
};

// Rigid reverse-warp of one pixel: unproject at depth D_p, add scene flow F_p
// (reference frame), move through T_rel (destination-from-reference), project
// with K_dst. Invalid input depth throws; a behind-camera result is flagged,
// not thrown, so callers can exclude the pixel from losses.
WarpResult warp_pixel(const Pixel& p, double D_p, const Vec3& F_p,
                      const Intrinsics& K_src, const Intrinsics& K_dst,
                      const RigidTransform& T_rel);

// Intrinsics of a w_r x h_r resampled crop over `box`: projecting a 3D point
// with the result lands on the crop coordinates of its full-image projection.
Intrinsics roi_intrinsics(const Intrinsics& K, const RoiBox& box, int w_r, int h_r);

// Box grown by `frac` of its extent on every side, clipped to the image.
RoiBox expand_box(const RoiBox& box, double frac, int image_w, int image_h);

// The four-camera rig every pipeline stage works with.
struct CameraRig {
  enum Cam { kLeftT = 0, kRightT = 1, kLeftT1 = 2, kRightT1 = 3 };

  Intrinsics intrinsics;
  std::array<RigidTransform, 4> world_from_camera = {
      RigidTransform::identity(), RigidTransform::identity(),
      RigidTransform::identity(), RigidTransform::identity()};

  // target_from_ref.
  RigidTransform relative(Cam target, Cam ref) const {
    return world_from_camera[target].inverse() * world_from_camera[ref];
  }
  // Stereo baseline is encoded in the right-camera pose.
  double baseline() const {
    return relative(kRightT, kLeftT).translation.norm();
  }
};

}  // namespace sflow
