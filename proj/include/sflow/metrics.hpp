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

#include <optional>
#include <string>
#include <vector>

#include "sflow/image.hpp"

// Evaluation statistics for 3D scene flow, 2D flow and disparity. Medians use
// the lower middle element on even counts; every statistic is reproduced by a
// brute-force reference in the tests and must match it exactly.

namespace sflow {

// Component-wise median of the flow vectors under the mask. Empty -> nullopt.
std::optional<Vec3> dominant_flow(const FlowField3D& flow, const OcclusionMask& mask);

// Per-instance 3D flow statistics: angle = arccos of the normalized dot
// product (degrees), speed error = | |pred| - |gt| |. Instances with
// zero-magnitude GT flow are skipped for angle stats but counted for speed.
struct AngularSpeedStats {
  std::optional<double> amae, amad;     // mean / median angular error, degrees
  std::optional<double> ae_le_15, ae_le_30;   // percent of instances
  std::optional<double> smae, smad;     // mean / median speed error
  std::optional<double> se_le_015, se_le_03;  // percent, absolute units
  long angle_count = 0, speed_count = 0;
};
AngularSpeedStats angular_speed_stats(const std::vector<Vec3>& pred,
                                      const std::vector<Vec3>& gt,
                                      double se_thresh_lo = 0.15,
                                      double se_thresh_hi = 0.3);

// Mean 2D end-point error over pixels valid in both fields and the mask.
// Fields are 2-channel ImageBuffers (u-flow, v-flow); NaN marks invalid.
double flow_epe(const ImageBuffer& pred, const ImageBuffer& gt,
                const OcclusionMask& mask, long* count = nullptr);

// KITTI-style outlier counting: a pixel is correct when its error is <= 3
// pixels or <= 5% of the GT magnitude; rates are percentages of outliers.
struct OutlierRates {
  std::optional<double> bg, fg, all;
  long n_bg = 0, n_fg = 0;
};
// 1-channel buffers = disparity, 2-channel = flow (error = end-point norm).
OutlierRates outlier_rates(const ImageBuffer& pred, const ImageBuffer& gt,
                           const OcclusionMask& fg_mask,
                           double abs_thresh = 3.0, double rel_thresh = 0.05);

// Intersection-over-union of binary masks. Empty union -> 1 if both masks are
// empty, else 0. Instance IoU restricts to each GT instance's bounding box
// (or the given boxes) and averages across instances.
double mask_iou(const OcclusionMask& pred, const OcclusionMask& gt);
std::optional<double> instance_iou(const OcclusionMask& pred,
                                   const std::vector<OcclusionMask>& gt_instances,
                                   const std::vector<RoiBox>* boxes = nullptr);

// 2D flow induced by depth + 3D flow + the temporal pose: warp(p) - p.
// Invalid pixels (no depth / behind camera) become NaN.
ImageBuffer project_flow_2d(const FlowField3D& F, const DepthMap& D,
                            const Intrinsics& K_ref, const Intrinsics& K_dst,
                            const RigidTransform& T_rel);

struct MetricReport {
  AngularSpeedStats flow3d;
  std::optional<double> epe_all, epe_noc;
  OutlierRates d1, d2, fl;
  std::optional<double> iou_image, iou_instance;
  long n_instances = 0;

  std::string to_key_values() const;  // machine readable, absent -> "absent"
  std::string to_table() const;       // human readable
};

}  // namespace sflow
