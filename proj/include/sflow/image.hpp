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

#include <cstdint>
#include <vector>

#include "sflow/geometry.hpp"

// Dense image containers plus the differentiable sampling / warping kernels.
// Everything is double precision; gradients here feed the solver and must
// survive a central-difference audit, so no float shortcuts.

namespace sflow {

class ImageBuffer {
 public:
  ImageBuffer() = default;
  ImageBuffer(int width, int height, int channels, double fill = 0.0)
      : width_(width), height_(height), channels_(channels),
        data_(size_t(width) * height * channels, fill) {}

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  bool empty() const { return data_.empty(); }
  bool same_shape(const ImageBuffer& o) const {
    return width_ == o.width_ && height_ == o.height_ && channels_ == o.channels_;
  }

  double& at(int x, int y, int c) {
    return data_[(size_t(y) * width_ + x) * channels_ + c];
  }
  double at(int x, int y, int c) const {
    return data_[(size_t(y) * width_ + x) * channels_ + c];
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

 private:
  int width_ = 0, height_ = 0, channels_ = 0;
  std::vector<double> data_;
};

struct DepthMap {
  int width = 0, height = 0;
  std::vector<double> depth;    // > 0 where valid
  std::vector<uint8_t> valid;

  DepthMap() = default;
  DepthMap(int w, int h, double fill = 0.0, bool valid_fill = false)
      : width(w), height(h), depth(size_t(w) * h, fill),
        valid(size_t(w) * h, valid_fill ? 1 : 0) {}
  static DepthMap constant(int w, int h, double z) { return DepthMap(w, h, z, true); }

  size_t idx(int x, int y) const { return size_t(y) * width + x; }
  double at(int x, int y) const { return depth[idx(x, y)]; }
  double& at(int x, int y) { return depth[idx(x, y)]; }
  bool is_valid(int x, int y) const { return valid[idx(x, y)] != 0; }
};

struct FlowField3D {
  int width = 0, height = 0;
  std::vector<double> data;  // 3 interleaved components per pixel

  FlowField3D() = default;
  FlowField3D(int w, int h) : width(w), height(h), data(size_t(w) * h * 3, 0.0) {}
  static FlowField3D zero(int w, int h) { return FlowField3D(w, h); }

  size_t idx(int x, int y) const { return (size_t(y) * width + x) * 3; }
  Vec3 at(int x, int y) const {
    size_t i = idx(x, y);
    return Vec3(data[i], data[i + 1], data[i + 2]);
  }
  void set(int x, int y, const Vec3& f) {
    size_t i = idx(x, y);
    data[i] = f.x(); data[i + 1] = f.y(); data[i + 2] = f.z();
  }
};

// Binary per-pixel weight; 1 = the pixel participates in a loss.
struct OcclusionMask {
  int width = 0, height = 0;
  std::vector<uint8_t> w;

  OcclusionMask() = default;
  OcclusionMask(int width_, int height_, uint8_t fill = 0)
      : width(width_), height(height_), w(size_t(width_) * height_, fill) {}
  static OcclusionMask ones(int width, int height) { return {width, height, 1}; }

  uint8_t at(int x, int y) const { return w[size_t(y) * width + x]; }
  void set(int x, int y, uint8_t v) { w[size_t(y) * width + x] = v; }
  long count() const {
    long n = 0;
    for (uint8_t b : w) n += b;
    return n;
  }
};

// The four input views.
struct StereoQuad {
  ImageBuffer left_t, right_t, left_t1, right_t1;
};

enum class BorderMode {
  kInvalidate,  // outside [-0.5, W-0.5] x [-0.5, H-0.5] -> invalid sample
  kClamp,       // replicate border values (used by crop/paste resampling)
};

namespace detail {

// Four-tap footprint of one bilinear sample; shared by every sampler so
// forward values and scattered gradients always agree.
struct BilinearTap {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  double ax = 0.0, ay = 0.0;  // fractional weights toward (x1, y1)
  bool valid = false;

  double w00() const { return (1.0 - ax) * (1.0 - ay); }
  double w10() const { return ax * (1.0 - ay); }
  double w01() const { return (1.0 - ax) * ay; }
  double w11() const { return ax * ay; }
};

BilinearTap make_tap(int width, int height, double u, double v, BorderMode mode);

}  // namespace detail

struct BilinearSample {
  std::vector<double> value;  // one entry per channel
  std::vector<double> du, dv; // analytic d(value)/d(u), d(value)/d(v)
  bool valid = false;
};

// Bilinear lookup at p with analytic gradients w.r.t. the sample position.
// Out-of-bounds positions are flagged invalid, never thrown: warped samples
// routinely leave the image and must simply drop out of losses.
BilinearSample sample_bilinear(const ImageBuffer& img, const Pixel& p);

// Backward view synthesis: Ihat(p) = src(warp(p)). The returned mask is 1
// where the warp stayed in front of the camera and inside the source image.
struct WarpedImage {
  ImageBuffer image;
  OcclusionMask validity;
};
WarpedImage reverse_warp(const ImageBuffer& src, const DepthMap& D_ref,
                         const FlowField3D& F, const Intrinsics& K_ref,
                         const Intrinsics& K_src, const RigidTransform& T_rel);

enum class WarpDepthMode {
  kDepth,     // interpolate depth values directly
  kNearness,  // interpolate 1/depth, then invert (companion variant)
};

// Same warp for depth maps; any invalid source pixel under the bilinear
// footprint invalidates the output pixel.
struct WarpedDepth {
  DepthMap depth;
  OcclusionMask validity;
};
WarpedDepth reverse_warp_depth(const DepthMap& src, const DepthMap& D_ref,
                               const FlowField3D& F, const Intrinsics& K_ref,
                               const Intrinsics& K_src, const RigidTransform& T_rel,
                               WarpDepthMode mode = WarpDepthMode::kDepth);

// Occlusion estimate from a reverse-warp depth test: mask(p) = 0 when the
// warp leaves the target view, goes behind the camera, or the sampled target
// depth disagrees with the warped depth by more than tau_rel * zhat.
OcclusionMask occlusion_mask(const DepthMap& D_ref, const FlowField3D& F,
                             const DepthMap& D_other, const Intrinsics& K_ref,
                             const Intrinsics& K_other, const RigidTransform& T_rel,
                             double tau_rel = 0.05);

// Visibility for a (near-)rectified stereo pair from the reference depth map
// alone: p is occluded when another pixel of the same row warps into the same
// target column (within px_radius) at depth smaller by more than tau_rel.
// The depth-test mask above needs the target view's depth map, which the
// scene state does not carry for the right camera; this test does not.
// `kink_margin`, when given, receives the smallest distance of any pairwise
// test to its decision boundary (used to audit finite-difference safety).
OcclusionMask stereo_visibility_mask(const DepthMap& D_ref, const Intrinsics& K_ref,
                                     const Intrinsics& K_src,
                                     const RigidTransform& src_from_ref,
                                     double tau_rel = 0.05, double px_radius = 1.0,
                                     double* kink_margin = nullptr);

// Per-channel SSIM over a uniform 3x3 window (clipped at image borders),
// stabilizers C1 = 0.01^2, C2 = 0.03^2 for data in [0, 1].
ImageBuffer ssim_map(const ImageBuffer& a, const ImageBuffer& b);

// Reverse-mode step for sum_p upstream(p, c) * SSIM(a, b)(p, c): returns the
// gradient with respect to `a`. `b` is treated as constant.
ImageBuffer ssim_backprop(const ImageBuffer& a, const ImageBuffer& b,
                          const ImageBuffer& upstream);

}  // namespace sflow
