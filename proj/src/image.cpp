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

#include "sflow/image.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sflow {

namespace detail {

BilinearTap make_tap(int width, int height, double u, double v, BorderMode mode) {
  BilinearTap t;
  if (mode == BorderMode::kInvalidate) {
    if (!(u >= -0.5 && u <= width - 0.5 && v >= -0.5 && v <= height - 0.5)) {
      t.valid = false;
      return t;
    }
  }
  const double fx = std::floor(u);
  const double fy = std::floor(v);
  t.ax = u - fx;
  t.ay = v - fy;
  t.x0 = std::clamp(int(fx), 0, width - 1);
  t.x1 = std::clamp(int(fx) + 1, 0, width - 1);
  t.y0 = std::clamp(int(fy), 0, height - 1);
  t.y1 = std::clamp(int(fy) + 1, 0, height - 1);
  t.valid = true;
  return t;
}

}  // namespace detail

BilinearSample sample_bilinear(const ImageBuffer& img, const Pixel& p) {
  BilinearSample s;
  const auto t = detail::make_tap(img.width(), img.height(), p.u, p.v,
                                  BorderMode::kInvalidate);
  if (!t.valid) return s;
  s.valid = true;
  const int C = img.channels();
  s.value.resize(C);
  s.du.resize(C);
  s.dv.resize(C);
  for (int c = 0; c < C; ++c) {
    const double v00 = img.at(t.x0, t.y0, c);
    const double v10 = img.at(t.x1, t.y0, c);
    const double v01 = img.at(t.x0, t.y1, c);
    const double v11 = img.at(t.x1, t.y1, c);
    s.value[c] = t.w00() * v00 + t.w10() * v10 + t.w01() * v01 + t.w11() * v11;
    // Clamped duplicate taps zero the derivative automatically.
    s.du[c] = (1.0 - t.ay) * (v10 - v00) + t.ay * (v11 - v01);
    s.dv[c] = (1.0 - t.ax) * (v01 - v00) + t.ax * (v11 - v10);
  }
  return s;
}

WarpedImage reverse_warp(const ImageBuffer& src, const DepthMap& D_ref,
                         const FlowField3D& F, const Intrinsics& K_ref,
                         const Intrinsics& K_src, const RigidTransform& T_rel) {
  if (D_ref.width != F.width || D_ref.height != F.height) {
    throw std::invalid_argument("reverse_warp: depth/flow shapes differ");
  }
  const int W = D_ref.width, H = D_ref.height;
  WarpedImage out{ImageBuffer(W, H, src.channels(), 0.0), OcclusionMask(W, H, 0)};
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      if (!D_ref.is_valid(x, y)) continue;
      const WarpResult w = warp_pixel(Pixel{double(x), double(y)}, D_ref.at(x, y),
                                      F.at(x, y), K_ref, K_src, T_rel);
      if (!w.valid) continue;
      const BilinearSample s = sample_bilinear(src, w.pixel);
      if (!s.valid) continue;
      for (int c = 0; c < src.channels(); ++c) out.image.at(x, y, c) = s.value[c];
      out.validity.set(x, y, 1);
    }
  }
  return out;
}

WarpedDepth reverse_warp_depth(const DepthMap& src, const DepthMap& D_ref,
                               const FlowField3D& F, const Intrinsics& K_ref,
                               const Intrinsics& K_src, const RigidTransform& T_rel,
                               WarpDepthMode mode) {
  if (D_ref.width != F.width || D_ref.height != F.height) {
    throw std::invalid_argument("reverse_warp_depth: depth/flow shapes differ");
  }
  const int W = D_ref.width, H = D_ref.height;
  WarpedDepth out{DepthMap(W, H), OcclusionMask(W, H, 0)};
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      if (!D_ref.is_valid(x, y)) continue;
      const WarpResult w = warp_pixel(Pixel{double(x), double(y)}, D_ref.at(x, y),
                                      F.at(x, y), K_ref, K_src, T_rel);
      if (!w.valid) continue;
      const auto t = detail::make_tap(src.width, src.height, w.pixel.u, w.pixel.v,
                                      BorderMode::kInvalidate);
      if (!t.valid) continue;
      if (!src.is_valid(t.x0, t.y0) || !src.is_valid(t.x1, t.y0) ||
          !src.is_valid(t.x0, t.y1) || !src.is_valid(t.x1, t.y1)) {
        continue;
      }
      double value;
      if (mode == WarpDepthMode::kDepth) {
        value = t.w00() * src.at(t.x0, t.y0) + t.w10() * src.at(t.x1, t.y0) +
                t.w01() * src.at(t.x0, t.y1) + t.w11() * src.at(t.x1, t.y1);
      } else {
        const double n = t.w00() / src.at(t.x0, t.y0) + t.w10() / src.at(t.x1, t.y0) +
                         t.w01() / src.at(t.x0, t.y1) + t.w11() / src.at(t.x1, t.y1);
        value = 1.0 / n;
      }
      out.depth.at(x, y) = value;
      out.depth.valid[out.depth.idx(x, y)] = 1;
      out.validity.set(x, y, 1);
    }
  }
  return out;
}

OcclusionMask occlusion_mask(const DepthMap& D_ref, const FlowField3D& F,
                             const DepthMap& D_other, const Intrinsics& K_ref,
                             const Intrinsics& K_other, const RigidTransform& T_rel,
                             double tau_rel) {
  const int W = D_ref.width, H = D_ref.height;
  OcclusionMask m(W, H, 0);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      if (!D_ref.is_valid(x, y)) continue;
      const WarpResult w = warp_pixel(Pixel{double(x), double(y)}, D_ref.at(x, y),
                                      F.at(x, y), K_ref, K_other, T_rel);
      if (!w.valid) continue;
      const auto t = detail::make_tap(D_other.width, D_other.height, w.pixel.u,
                                      w.pixel.v, BorderMode::kInvalidate);
      if (!t.valid) continue;
      if (!D_other.is_valid(t.x0, t.y0) || !D_other.is_valid(t.x1, t.y0) ||
          !D_other.is_valid(t.x0, t.y1) || !D_other.is_valid(t.x1, t.y1)) {
        continue;
      }
      const double dhat =
          t.w00() * D_other.at(t.x0, t.y0) + t.w10() * D_other.at(t.x1, t.y0) +
          t.w01() * D_other.at(t.x0, t.y1) + t.w11() * D_other.at(t.x1, t.y1);
      if (std::abs(w.depth - dhat) > tau_rel * w.depth) continue;
      m.set(x, y, 1);
    }
  }
  return m;
}

OcclusionMask stereo_visibility_mask(const DepthMap& D_ref, const Intrinsics& K_ref,
                                     const Intrinsics& K_src,
                                     const RigidTransform& src_from_ref,
                                     double tau_rel, double px_radius,
                                     double* kink_margin) {
  const int W = D_ref.width, H = D_ref.height;
  OcclusionMask m(W, H, 0);
  double margin = 1e300;
  std::vector<double> us(W), vs(W), zs(W);
  std::vector<uint8_t> ok(W);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      ok[x] = 0;
      if (!D_ref.is_valid(x, y)) continue;
      const WarpResult w = warp_pixel(Pixel{double(x), double(y)}, D_ref.at(x, y),
                                      Vec3::Zero(), K_ref, K_src, src_from_ref);
      if (!w.valid) continue;
      us[x] = w.pixel.u;
      vs[x] = w.pixel.v;
      zs[x] = w.depth;
      ok[x] = 1;
    }
    for (int x = 0; x < W; ++x) {
      if (!ok[x]) continue;
      // The source image shares the reference extent in this pipeline.
      if (!(us[x] >= -0.5 && us[x] <= W - 0.5 && vs[x] >= -0.5 && vs[x] <= H - 0.5)) {
        continue;
      }
      margin = std::min({margin, us[x] + 0.5, W - 0.5 - us[x],
                         vs[x] + 0.5, H - 0.5 - vs[x]});
      bool covered = false;
      for (int q = 0; q < W; ++q) {
        if (q == x || !ok[q]) continue;
        margin = std::min({margin, std::abs(std::abs(us[q] - us[x]) - px_radius),
                           std::abs(std::abs(vs[q] - vs[x]) - px_radius),
                           std::abs(zs[q] - zs[x] * (1.0 - tau_rel))});
        if (std::abs(us[q] - us[x]) <= px_radius &&
            std::abs(vs[q] - vs[x]) <= px_radius &&
            zs[q] < zs[x] * (1.0 - tau_rel)) {
          covered = true;
        }
      }
      if (!covered) m.set(x, y, 1);
    }
  }
  if (kink_margin) *kink_margin = std::min(*kink_margin, margin);
  return m;
}

namespace {

constexpr double kSsimC1 = 0.01 * 0.01;
constexpr double kSsimC2 = 0.03 * 0.03;

struct SsimMoments {
  double mu_a, mu_b, var_a, var_b, cov;
  double n;
};

inline SsimMoments window_moments(const ImageBuffer& a, const ImageBuffer& b,
                                  int x, int y, int c) {
  double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
  int n = 0;
  const int x0 = std::max(0, x - 1), x1 = std::min(a.width() - 1, x + 1);
  const int y0 = std::max(0, y - 1), y1 = std::min(a.height() - 1, y + 1);
  for (int yy = y0; yy <= y1; ++yy) {
    for (int xx = x0; xx <= x1; ++xx) {
      const double va = a.at(xx, yy, c), vb = b.at(xx, yy, c);
      sa += va; sb += vb; saa += va * va; sbb += vb * vb; sab += va * vb;
      ++n;
    }
  }
  SsimMoments m;
  m.n = double(n);
  m.mu_a = sa / m.n;
  m.mu_b = sb / m.n;
  m.var_a = saa / m.n - m.mu_a * m.mu_a;
  m.var_b = sbb / m.n - m.mu_b * m.mu_b;
  m.cov = sab / m.n - m.mu_a * m.mu_b;
  return m;
}

inline double ssim_from_moments(const SsimMoments& m) {
  const double n1 = 2.0 * m.mu_a * m.mu_b + kSsimC1;
  const double n2 = 2.0 * m.cov + kSsimC2;
  const double d1 = m.mu_a * m.mu_a + m.mu_b * m.mu_b + kSsimC1;
  const double d2 = m.var_a + m.var_b + kSsimC2;
  return (n1 * n2) / (d1 * d2);
}

}  // namespace

ImageBuffer ssim_map(const ImageBuffer& a, const ImageBuffer& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("ssim_map: shape mismatch");
  ImageBuffer out(a.width(), a.height(), a.channels(), 0.0);
  for (int y = 0; y < a.height(); ++y) {
    for (int x = 0; x < a.width(); ++x) {
      for (int c = 0; c < a.channels(); ++c) {
        out.at(x, y, c) = ssim_from_moments(window_moments(a, b, x, y, c));
      }
    }
  }
  return out;
}

ImageBuffer ssim_backprop(const ImageBuffer& a, const ImageBuffer& b,
                          const ImageBuffer& upstream) {
  if (!a.same_shape(b) || !a.same_shape(upstream)) {
    throw std::invalid_argument("ssim_backprop: shape mismatch");
  }
  ImageBuffer grad(a.width(), a.height(), a.channels(), 0.0);
  for (int y = 0; y < a.height(); ++y) {
    for (int x = 0; x < a.width(); ++x) {
      for (int c = 0; c < a.channels(); ++c) {
        const double up = upstream.at(x, y, c);
        if (up == 0.0) continue;
        const SsimMoments m = window_moments(a, b, x, y, c);
        const double n1 = 2.0 * m.mu_a * m.mu_b + kSsimC1;
        const double n2 = 2.0 * m.cov + kSsimC2;
        const double d1 = m.mu_a * m.mu_a + m.mu_b * m.mu_b + kSsimC1;
        const double d2 = m.var_a + m.var_b + kSsimC2;
        const double s = (n1 * n2) / (d1 * d2);
        const double ds_dmu = 2.0 * m.mu_b * n2 / (d1 * d2) - 2.0 * m.mu_a * s / d1;
        const double ds_dvar = -s / d2;
        const double ds_dcov = 2.0 * n1 / (d1 * d2);
        const int x0 = std::max(0, x - 1), x1 = std::min(a.width() - 1, x + 1);
        const int y0 = std::max(0, y - 1), y1 = std::min(a.height() - 1, y + 1);
        for (int yy = y0; yy <= y1; ++yy) {
          for (int xx = x0; xx <= x1; ++xx) {
            const double va = a.at(xx, yy, c), vb = b.at(xx, yy, c);
            const double d = ds_dmu / m.n + ds_dvar * 2.0 * (va - m.mu_a) / m.n +
                             ds_dcov * (vb - m.mu_b) / m.n;
            grad.at(xx, yy, c) += up * d;
          }
        }
      }
    }
  }
  return grad;
}

}  // namespace sflow
