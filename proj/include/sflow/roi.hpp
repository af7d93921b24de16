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

#include <vector>

#include "sflow/image.hpp"

// Region-of-interest predictions and their assembly into a full-frame
// 3D flow field. Per-region flow is expressed in the full-image reference
// camera frame at time t, so assembly is a masked sum, not a change of frame.

namespace sflow {

struct RoiPrediction {
  RoiBox box;              // full-image pixel coordinates
  int width = 0, height = 0;  // prediction grid resolution (w_r x h_r)
  std::vector<double> flow;        // 3 interleaved components, width*height
  std::vector<double> mask_logits; // width*height; mask = logistic(logits)

  RoiPrediction() = default;
  RoiPrediction(const RoiBox& b, int w, int h)
      : box(b), width(w), height(h), flow(size_t(w) * h * 3, 0.0),
        mask_logits(size_t(w) * h, 0.0) {}

  size_t idx(int x, int y) const { return size_t(y) * width + x; }
  Vec3 flow_at(int x, int y) const {
    size_t i = idx(x, y) * 3;
    return Vec3(flow[i], flow[i + 1], flow[i + 2]);
  }
  void set_flow(int x, int y, const Vec3& f) {
    size_t i = idx(x, y) * 3;
    flow[i] = f.x(); flow[i + 1] = f.y(); flow[i + 2] = f.z();
  }
  double mask_at(int x, int y) const;  // logistic(mask_logits)
};

// Everything the solver optimizes.
struct SceneState {
  DepthMap depth_t, depth_t1;     // reference left camera at t and t+1
  std::vector<RoiPrediction> rois;
};

// Crop `box` out of a full image and resample it to w_r x h_r. Sampling uses
// the same pixel mapping as roi_intrinsics: crop pixel i sits at full-image
// coordinate box.x + i * box.w / w_r, so projecting with the returned
// intrinsics lands on the resampled location of the full-image projection.
struct CropResult {
  ImageBuffer image;
  Intrinsics intrinsics;
};
CropResult crop_resize(const ImageBuffer& img, const Intrinsics& K,
                       const RoiBox& box, int w_r, int h_r);

// Depth variant; values are resampled, not rescaled (depth is frame-relative,
// not resolution-relative). Invalid inputs under a footprint invalidate.
struct CropDepthResult {
  DepthMap depth;
  Intrinsics intrinsics;
};
CropDepthResult crop_resize_depth(const DepthMap& d, const Intrinsics& K,
                                  const RoiBox& box, int w_r, int h_r);

// F = sum_j resampled-mask_j * resampled-flow_j, with masks renormalized at
// pixels where they sum above 1 so the result stays a convex combination.
// Pixels covered by no box are zero.
FlowField3D assemble_flow(const std::vector<RoiPrediction>& rois,
                          int width, int height);

// Full-frame binary masks (resampled mask > 0.5) of the instances whose
// dominant flow magnitude exceeds flow_threshold. `source_index`, when given,
// receives the originating RoI index of each returned mask.
std::vector<OcclusionMask> moving_instance_masks(
    const std::vector<RoiPrediction>& rois, int width, int height,
    double flow_threshold = 0.5, std::vector<int>* source_index = nullptr);

}  // namespace sflow
