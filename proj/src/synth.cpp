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

#include "sflow/synth.hpp"

#include <cmath>
#include <stdexcept>

#include "sflow/rng.hpp"

namespace sflow {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kOccRel = 0.05;  // relative depth slack of the GT cover tests

double shade(const TextureSpec& t, double s, double v) {
  double val = t.base + t.checker_amp * std::sin(kPi * s / t.checker_cell) *
                            std::sin(kPi * v / t.checker_cell);
  val += t.noise_amp *
         (2.0 * value_noise(t.seed, s / t.noise_cell, v / t.noise_cell) - 1.0);
  if (t.noise2_amp != 0.0) {
    val += t.noise2_amp *
           (2.0 * value_noise(t.seed ^ 0xda3e39cb94b95bdbull, s / t.noise2_cell,
                              v / t.noise2_cell) -
            1.0);
  }
  return std::clamp(val, 0.0, 1.0);
}

// A textured planar patch; half extents <= 0 mean an unbounded plane.
struct Surface {
  Vec3 center = Vec3::Zero();
  Mat3 R = Mat3::Identity();  // columns: in-plane s axis, t axis, normal
  double half_w = -1.0, half_h = -1.0;
  const TextureSpec* tex = nullptr;
  int id = -1;  // -1 background, otherwise object index
};

Mat3 tilt_rotation(double tilt_x, double tilt_y) {
  const Mat3 rx =
      RigidTransform::from_axis_angle(Vec3(tilt_x, 0, 0), Vec3::Zero()).rotation;
  const Mat3 ry =
      RigidTransform::from_axis_angle(Vec3(0, tilt_y, 0), Vec3::Zero()).rotation;
  return rx * ry;
}

std::vector<Surface> surfaces_at(const SceneSpec& spec, bool at_t1) {
  std::vector<Surface> out;
  out.reserve(spec.objects.size() + 1);
  for (size_t i = 0; i < spec.objects.size(); ++i) {
    const ObjectSpec& o = spec.objects[i];
    Surface s;
    s.half_w = o.half_w;
    s.half_h = o.half_h;
    s.tex = &o.texture;
    s.id = int(i);
    const Mat3 base = tilt_rotation(o.tilt_x, o.tilt_y);
    if (at_t1) {
      const Mat3 rm =
          RigidTransform::from_axis_angle(o.rotation, Vec3::Zero()).rotation;
      s.center = o.center + o.motion;
      s.R = rm * base;
    } else {
      s.center = o.center;
      s.R = base;
    }
    out.push_back(s);
  }
  Surface bg;
  bg.center = Vec3(0, 0, spec.background.depth);
  bg.R = tilt_rotation(spec.background.tilt_x, spec.background.tilt_y);
  bg.tex = &spec.background.texture;
  bg.id = -1;
  out.push_back(bg);
  return out;
}

struct Hit {
  double s = 0.0;       // ray parameter == camera depth for d_cam = (gx, gy, 1)
  double u_loc = 0.0, v_loc = 0.0;
  const Surface* surface = nullptr;
};

// Nearest intersection of o + s*d with the surfaces, s > eps.
bool cast_ray(const std::vector<Surface>& surfaces, const Vec3& o, const Vec3& d,
              Hit* hit) {
  bool found = false;
  for (const Surface& sf : surfaces) {
    const Vec3 n = sf.R.col(2);
    const double denom = n.dot(d);
    if (std::abs(denom) < 1e-12) continue;
    const double s = n.dot(sf.center - o) / denom;
    if (s <= 1e-9) continue;
    if (found && s >= hit->s) continue;
    const Vec3 rel = o + s * d - sf.center;
    const double u = sf.R.col(0).dot(rel), v = sf.R.col(1).dot(rel);
    if (sf.half_w > 0.0 && (std::abs(u) > sf.half_w || std::abs(v) > sf.half_h)) {
      continue;
    }
    hit->s = s;
    hit->u_loc = u;
    hit->v_loc = v;
    hit->surface = &sf;
    found = true;
  }
  return found;
}

// Camera-frame ray through the pixel center; its z component is 1, so the
// ray parameter of any intersection equals camera depth.
Vec3 pixel_ray(const Pixel& p, const Intrinsics& K) {
  return Vec3((p.u - K.cx) / K.fx, (p.v - K.cy) / K.fy, 1.0);
}

struct CastView {
  const std::vector<Surface>* surfaces;
  Vec3 origin;
  Mat3 rot;
  const Intrinsics* K;

  bool cast(const Pixel& p, Hit* hit) const {
    return cast_ray(*surfaces, origin, rot * pixel_ray(p, *K), hit);
  }
};

ImageBuffer render_view(const CastView& view, int W, int H) {
  ImageBuffer img(W, H, 1, 0.0);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      Hit h;
      if (!view.cast(Pixel{double(x), double(y)}, &h)) continue;
      img.at(x, y, 0) = shade(*h.surface->tex, h.u_loc, h.v_loc);
    }
  }
  return img;
}

DepthMap render_depth(const CastView& view, int W, int H) {
  DepthMap d(W, H);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      Hit h;
      if (!view.cast(Pixel{double(x), double(y)}, &h)) continue;
      d.at(x, y) = h.s;
      d.valid[d.idx(x, y)] = 1;
    }
  }
  return d;
}

// Visibility of a warped reference pixel in a target view: the warp must land
// strictly inside the integer grid, nothing may cover it, and the bilinear
// footprint must sit on depths consistent with the warped depth so that
// interpolated samples describe the same surface.
bool visible_in_target(const WarpResult& wr, const CastView& target,
                       const DepthMap& target_depth) {
  if (!wr.valid) return false;
  const int W = target_depth.width, H = target_depth.height;
  if (!(wr.pixel.u >= 0.0 && wr.pixel.u <= double(W - 1) && wr.pixel.v >= 0.0 &&
        wr.pixel.v <= double(H - 1))) {
    return false;
  }
  Hit h;
  if (!target.cast(wr.pixel, &h)) return false;
  if (h.s < wr.depth * (1.0 - kOccRel)) return false;
  const auto t = detail::make_tap(W, H, wr.pixel.u, wr.pixel.v, BorderMode::kClamp);
  const int xs[2] = {t.x0, t.x1}, ys[2] = {t.y0, t.y1};
  for (int yy : ys) {
    for (int xx : xs) {
      if (!target_depth.is_valid(xx, yy)) return false;
      if (std::abs(target_depth.at(xx, yy) - wr.depth) > kOccRel * wr.depth) {
        return false;
      }
    }
  }
  return true;
}

}  // namespace

GroundTruthBundle render(const SceneSpec& spec) {
  if (spec.width <= 0 || spec.height <= 0) {
    throw std::invalid_argument("render: non-positive image size");
  }
  spec.intrinsics.validate();
  if (!(spec.baseline > 0.0)) {
    throw std::invalid_argument("render: baseline must be positive");
  }
  if (!spec.ego.is_rigid(1e-9)) {
    throw std::invalid_argument("render: ego transform is not rigid");
  }
  for (const ObjectSpec& o : spec.objects) {
    if (!(o.half_w > 0.0 && o.half_h > 0.0)) {
      throw std::invalid_argument("render: object with non-positive extent");
    }
  }

  GroundTruthBundle b;
  b.spec = spec;
  b.rig.intrinsics = spec.intrinsics;
  b.rig.world_from_camera[CameraRig::kLeftT] = RigidTransform::identity();
  b.rig.world_from_camera[CameraRig::kRightT] =
      RigidTransform::translate(spec.baseline, 0, 0);
  b.rig.world_from_camera[CameraRig::kLeftT1] = spec.ego;
  b.rig.world_from_camera[CameraRig::kRightT1] =
      spec.ego * RigidTransform::translate(spec.baseline, 0, 0);

  const int W = spec.width, H = spec.height;
  const Intrinsics& K = spec.intrinsics;
  const std::vector<Surface> at_t = surfaces_at(spec, false);
  const std::vector<Surface> at_t1 = surfaces_at(spec, true);
  const auto view = [&](const std::vector<Surface>& s, CameraRig::Cam cam) {
    const RigidTransform& pose = b.rig.world_from_camera[cam];
    return CastView{&s, pose.translation, pose.rotation, &K};
  };
  const CastView left_t = view(at_t, CameraRig::kLeftT);
  const CastView right_t = view(at_t, CameraRig::kRightT);
  const CastView left_t1 = view(at_t1, CameraRig::kLeftT1);
  const CastView right_t1 = view(at_t1, CameraRig::kRightT1);

  b.frames.left_t = render_view(left_t, W, H);
  b.frames.right_t = render_view(right_t, W, H);
  b.frames.left_t1 = render_view(left_t1, W, H);
  b.frames.right_t1 = render_view(right_t1, W, H);
  b.depth_t = render_depth(left_t, W, H);
  b.depth_t1 = render_depth(left_t1, W, H);
  const DepthMap depth_rt = render_depth(right_t, W, H);
  const DepthMap depth_rt1 = render_depth(right_t1, W, H);

  // Per-object rigid motion for the flow field.
  std::vector<Mat3> rot_m(spec.objects.size());
  for (size_t i = 0; i < spec.objects.size(); ++i) {
    rot_m[i] =
        RigidTransform::from_axis_angle(spec.objects[i].rotation, Vec3::Zero())
            .rotation;
  }

  b.flow = FlowField3D(W, H);
  b.instance_masks.assign(spec.objects.size(), OcclusionMask(W, H, 0));
  std::vector<int> hit_id(size_t(W) * H, -2);  // -2 = no surface hit
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      Hit h;
      if (!left_t.cast(Pixel{double(x), double(y)}, &h)) continue;
      hit_id[size_t(y) * W + x] = h.surface->id;
      if (h.surface->id < 0) continue;
      const ObjectSpec& o = spec.objects[size_t(h.surface->id)];
      const Vec3 X = h.s * pixel_ray(Pixel{double(x), double(y)}, K);
      b.flow.set(x, y, o.motion + (rot_m[size_t(h.surface->id)] * (X - o.center) -
                                   (X - o.center)));
      b.instance_masks[size_t(h.surface->id)].set(x, y, 1);
    }
  }

  // Ground-truth visibility masks.
  b.occ_lr_t = OcclusionMask(W, H, 0);
  b.occ_lr_t1 = OcclusionMask(W, H, 0);
  b.occ_temporal = OcclusionMask(W, H, 0);
  const RigidTransform T_rt_lt = b.rig.relative(CameraRig::kRightT, CameraRig::kLeftT);
  const RigidTransform T_rt1_lt1 =
      b.rig.relative(CameraRig::kRightT1, CameraRig::kLeftT1);
  const RigidTransform T_lt1_lt =
      b.rig.relative(CameraRig::kLeftT1, CameraRig::kLeftT);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const Pixel p{double(x), double(y)};
      if (b.depth_t.is_valid(x, y)) {
        const double z = b.depth_t.at(x, y);
        const WarpResult lr =
            warp_pixel(p, z, Vec3::Zero(), K, K, T_rt_lt);
        if (visible_in_target(lr, right_t, depth_rt)) b.occ_lr_t.set(x, y, 1);
        const WarpResult tm = warp_pixel(p, z, b.flow.at(x, y), K, K, T_lt1_lt);
        if (visible_in_target(tm, left_t1, b.depth_t1)) b.occ_temporal.set(x, y, 1);
      }
      if (b.depth_t1.is_valid(x, y)) {
        const WarpResult lr1 = warp_pixel(p, b.depth_t1.at(x, y), Vec3::Zero(),
                                          K, K, T_rt1_lt1);
        if (visible_in_target(lr1, right_t1, depth_rt1)) b.occ_lr_t1.set(x, y, 1);
      }
    }
  }
  return b;
}

BundleCheck verify_bundle(const GroundTruthBundle& b) {
  const Intrinsics& K = b.rig.intrinsics;
  const int W = b.frames.left_t.width(), H = b.frames.left_t.height();
  const FlowField3D zero = FlowField3D::zero(W, H);

  // Mean absolute image residual over a ground-truth visibility mask; a
  // masked pixel the warp cannot reach counts as a full-scale error.
  const auto masked_residual = [&](const ImageBuffer& ref, const WarpedImage& wi,
                                   const OcclusionMask& m) {
    double acc = 0.0;
    long n = 0;
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        if (!m.at(x, y)) continue;
        ++n;
        if (!wi.validity.at(x, y)) {
          acc += 1.0;
          continue;
        }
        acc += std::abs(ref.at(x, y, 0) - wi.image.at(x, y, 0));
      }
    }
    return n > 0 ? acc / double(n) : 0.0;
  };

  BundleCheck c;
  c.lr_t_residual = masked_residual(
      b.frames.left_t,
      reverse_warp(b.frames.right_t, b.depth_t, zero, K, K,
                   b.rig.relative(CameraRig::kRightT, CameraRig::kLeftT)),
      b.occ_lr_t);
  c.lr_t1_residual = masked_residual(
      b.frames.left_t1,
      reverse_warp(b.frames.right_t1, b.depth_t1, zero, K, K,
                   b.rig.relative(CameraRig::kRightT1, CameraRig::kLeftT1)),
      b.occ_lr_t1);
  const RigidTransform T_lt1_lt =
      b.rig.relative(CameraRig::kLeftT1, CameraRig::kLeftT);
  c.temporal_residual = masked_residual(
      b.frames.left_t,
      reverse_warp(b.frames.left_t1, b.depth_t, b.flow, K, K, T_lt1_lt),
      b.occ_temporal);

  const WarpedDepth wd =
      reverse_warp_depth(b.depth_t1, b.depth_t, b.flow, K, K, T_lt1_lt);
  double acc = 0.0;
  long n = 0;
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      if (!b.occ_temporal.at(x, y)) continue;
      ++n;
      if (!wd.validity.at(x, y)) {
        acc += 1.0;
        continue;
      }
      acc += std::abs(b.depth_t.at(x, y) + b.flow.at(x, y).z() - wd.depth.at(x, y));
    }
  }
  c.geometric_residual = n > 0 ? acc / double(n) : 0.0;
  return c;
}

bool raycast_depth(const SceneSpec& spec, const RigidTransform& world_from_cam,
                   const Pixel& p, bool at_t1, double* depth, int* surface_id) {
  const std::vector<Surface> surfaces = surfaces_at(spec, at_t1);
  const CastView view{&surfaces, world_from_cam.translation,
                      world_from_cam.rotation, &spec.intrinsics};
  Hit h;
  if (!view.cast(p, &h)) return false;
  if (depth) *depth = h.s;
  if (surface_id) *surface_id = h.surface->id;
  return true;
}

}  // namespace sflow
