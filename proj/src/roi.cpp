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

#include "sflow/roi.hpp"

#include <cmath>
#include <stdexcept>

#include "sflow/metrics.hpp"

namespace sflow {

double RoiPrediction::mask_at(int x, int y) const {
  return 1.0 / (1.0 + std::exp(-mask_logits[idx(x, y)]));
}

CropResult crop_resize(const ImageBuffer& img, const Intrinsics& K,
                       const RoiBox& box, int w_r, int h_r) {
  if (!box.is_valid() || w_r <= 0 || h_r <= 0) {
    throw std::invalid_argument("crop_resize: box and crop size must be positive");
  }
  CropResult out{ImageBuffer(w_r, h_r, img.channels(), 0.0),
                 roi_intrinsics(K, box, w_r, h_r)};
  const double sx = box.w / w_r, sy = box.h / h_r;
  for (int j = 0; j < h_r; ++j) {
    for (int i = 0; i < w_r; ++i) {
      const double u = box.x + i * sx, v = box.y + j * sy;
      const auto t = detail::make_tap(img.width(), img.height(), u, v,
                                      BorderMode::kClamp);
      for (int c = 0; c < img.channels(); ++c) {
        out.image.at(i, j, c) = t.w00() * img.at(t.x0, t.y0, c) +
                                t.w10() * img.at(t.x1, t.y0, c) +
                                t.w01() * img.at(t.x0, t.y1, c) +
                                t.w11() * img.at(t.x1, t.y1, c);
      }
    }
  }
  return out;
}

CropDepthResult crop_resize_depth(const DepthMap& d, const Intrinsics& K,
                                  const RoiBox& box, int w_r, int h_r) {
  if (!box.is_valid() || w_r <= 0 || h_r <= 0) {
    throw std::invalid_argument("crop_resize_depth: box and crop size must be positive");
  }
  CropDepthResult out{DepthMap(w_r, h_r), roi_intrinsics(K, box, w_r, h_r)};
  const double sx = box.w / w_r, sy = box.h / h_r;
  for (int j = 0; j < h_r; ++j) {
    for (int i = 0; i < w_r; ++i) {
      const double u = box.x + i * sx, v = box.y + j * sy;
      const auto t = detail::make_tap(d.width, d.height, u, v, BorderMode::kClamp);
      if (!d.is_valid(t.x0, t.y0) || !d.is_valid(t.x1, t.y0) ||
          !d.is_valid(t.x0, t.y1) || !d.is_valid(t.x1, t.y1)) {
        continue;
      }
      out.depth.at(i, j) = t.w00() * d.at(t.x0, t.y0) + t.w10() * d.at(t.x1, t.y0) +
                           t.w01() * d.at(t.x0, t.y1) + t.w11() * d.at(t.x1, t.y1);
      out.depth.valid[out.depth.idx(i, j)] = 1;
    }
  }
  return out;
}

FlowField3D assemble_flow(const std::vector<RoiPrediction>& rois,
                          int width, int height) {
  FlowField3D F(width, height);
  std::vector<double> m(rois.size());
  std::vector<Vec3> f(rois.size());
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double s = 0.0;
      size_t n = 0;
      for (const RoiPrediction& r : rois) {
        if (x < r.box.x || x >= r.box.x + r.box.w ||
            y < r.box.y || y >= r.box.y + r.box.h) {
          continue;
        }
        const double u = (x - r.box.x) * r.width / r.box.w;
        const double v = (y - r.box.y) * r.height / r.box.h;
        const auto t = detail::make_tap(r.width, r.height, u, v, BorderMode::kClamp);
        const auto lerp = [&](auto&& get) {
          return t.w00() * get(t.x0, t.y0) + t.w10() * get(t.x1, t.y0) +
                 t.w01() * get(t.x0, t.y1) + t.w11() * get(t.x1, t.y1);
        };
        m[n] = lerp([&](int i, int j) { return r.mask_at(i, j); });
        f[n] = Vec3(lerp([&](int i, int j) { return r.flow_at(i, j).x(); }),
                    lerp([&](int i, int j) { return r.flow_at(i, j).y(); }),
                    lerp([&](int i, int j) { return r.flow_at(i, j).z(); }));
        s += m[n];
        ++n;
      }
      if (n == 0) continue;
      // Over-subscribed pixels become a convex combination.
      const double scale = s > 1.0 ? 1.0 / s : 1.0;
      Vec3 acc = Vec3::Zero();
      for (size_t k = 0; k < n; ++k) acc += (m[k] * scale) * f[k];
      F.set(x, y, acc);
    }
  }
  return F;
}

std::vector<OcclusionMask> moving_instance_masks(
    const std::vector<RoiPrediction>& rois, int width, int height,
    double flow_threshold, std::vector<int>* source_index) {
  std::vector<OcclusionMask> out;
  if (source_index) source_index->clear();
  for (size_t j = 0; j < rois.size(); ++j) {
    const RoiPrediction& r = rois[j];
    // Dominant flow over the region's own thresholded support.
    FlowField3D rf(r.width, r.height);
    OcclusionMask support(r.width, r.height, 0);
    for (int y = 0; y < r.height; ++y) {
      for (int x = 0; x < r.width; ++x) {
        rf.set(x, y, r.flow_at(x, y));
        if (r.mask_at(x, y) > 0.5) support.set(x, y, 1);
      }
    }
    const auto dom = dominant_flow(rf, support);
    if (!dom || dom->norm() <= flow_threshold) continue;

    OcclusionMask full(width, height, 0);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        if (x < r.box.x || x >= r.box.x + r.box.w ||
            y < r.box.y || y >= r.box.y + r.box.h) {
          continue;
        }
        const double u = (x - r.box.x) * r.width / r.box.w;
        const double v = (y - r.box.y) * r.height / r.box.h;
        const auto t = detail::make_tap(r.width, r.height, u, v, BorderMode::kClamp);
        const double m = t.w00() * r.mask_at(t.x0, t.y0) +
                         t.w10() * r.mask_at(t.x1, t.y0) +
                         t.w01() * r.mask_at(t.x0, t.y1) +
                         t.w11() * r.mask_at(t.x1, t.y1);
        if (m > 0.5) full.set(x, y, 1);
      }
    }
    out.push_back(std::move(full));
    if (source_index) source_index->push_back(int(j));
  }
  return out;
}

}  // namespace sflow
