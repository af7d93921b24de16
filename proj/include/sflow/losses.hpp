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
#include "sflow/roi.hpp"

// The self-supervised objective: photometric + geometric view-synthesis
// terms, edge-aware smoothness, optional weak disparity supervision, and the
// full assembled objective with analytic gradients w.r.t. the scene state.
//
// Every loss is a mean over its valid pixels; masked-out pixels never touch
// the value or the gradients. Masks are constants during differentiation.

namespace sflow {

struct LossWeights {
  double alpha = 0.85;     // SSIM share inside the photometric term
  double lambda_p = 1.0;   // photometric
  double lambda_g = 0.1;   // geometric (depth/flow-z consistency)
  double lambda_s = 0.1;   // smoothness
  double lambda_w = 0.0;   // weak disparity supervision
};

struct LossTerm {
  double value = 0.0;   // already weighted by its lambda
  long count = 0;       // valid pixels that contributed
};

struct LossReport {
  double total = 0.0;   // exact sum of the five term values
  LossTerm lr;          // left/right photometric, both time instants
  LossTerm roi;         // per-region photometric + geometric
  LossTerm temporal;    // full-frame photometric + geometric over time
  LossTerm smooth;      // edge-aware smoothness priors
  LossTerm weak;        // weak disparity terms
  bool empty_warp_warning = false;  // some photometric term had 0 valid pixels

  // One line per term: "iter term value count".
  std::string to_log_lines(long iter) const;
};

// Mean over valid pixels of alpha*(1-SSIM)/2 + (1-alpha)*|I_ref - I_hat|,
// averaged across channels. When alpha > 0 validity is eroded by the 3x3
// SSIM window so masked-out values cannot leak through window statistics.
// Zero valid pixels -> 0 with *empty_warn set. grad_Ihat (overwritten, not
// accumulated) may be null. `min_abs_residual`, when given, shrinks toward
// the smallest contributing |I_ref - I_hat|.
double photometric_loss(const ImageBuffer& I_ref, const ImageBuffer& I_hat,
                        const OcclusionMask& mask, double alpha,
                        ImageBuffer* grad_Ihat = nullptr, long* valid_count = nullptr,
                        bool* empty_warn = nullptr, double* min_abs_residual = nullptr);

// Mean over valid pixels of |D_ref - D_hat + F_z|; F_z is the z-component of
// the predicted scene flow, scanned from `Fz` (scalar field, size of D_ref).
double geometric_loss(const DepthMap& D_ref, const DepthMap& D_hat,
                      const std::vector<double>& Fz, const OcclusionMask& mask,
                      std::vector<double>* grad_Dref = nullptr,
                      std::vector<double>* grad_Dhat = nullptr,
                      std::vector<double>* grad_Fz = nullptr,
                      long* valid_count = nullptr);

// Edge-aware smoothness: mean over horizontal+vertical first differences and
// channels of |d field| * exp(-|d guide|), guide gradient averaged over its
// channels. Returns gradients w.r.t. the field only; grad_field must hold
// width*height*channels entries and is overwritten. `min_abs_diff`, when
// given, shrinks toward the smallest contributing |d field|.
double smoothness_loss_raw(const double* field, int width, int height, int channels,
                           const std::vector<uint8_t>* field_valid,
                           const ImageBuffer& guide, double* grad_field = nullptr,
                           long* site_count = nullptr, double* min_abs_diff = nullptr);
double smoothness_loss(const DepthMap& field, const ImageBuffer& guide,
                       std::vector<double>* grad = nullptr, long* count = nullptr);
double smoothness_loss(const FlowField3D& field, const ImageBuffer& guide,
                       std::vector<double>* grad = nullptr, long* count = nullptr);

// Mean over valid sparse-disparity pixels of |fx * baseline / D - disp|.
// `disparity` reuses DepthMap storage: value = disparity, valid = coverage.
double weak_disparity_loss(const DepthMap& D_pred, const DepthMap& disparity,
                           const Intrinsics& K, double baseline,
                           std::vector<double>* grad_D = nullptr,
                           long* valid_count = nullptr,
                           double* min_abs_residual = nullptr);

// Gradients w.r.t. every state variable, laid out exactly like SceneState.
struct StateGrad {
  std::vector<double> d_depth_t, d_depth_t1;  // per-pixel d(total)/d(depth)
  struct RoiGrad {
    std::vector<double> d_flow;    // 3 interleaved per RoI pixel
    std::vector<double> d_logits;
  };
  std::vector<RoiGrad> rois;

  void resize_like(const SceneState& s);
  void set_zero();
};

struct ObjectiveOptions {
  LossWeights weights;
  double occlusion_tau = 0.05;   // temporal depth-test tolerance
  double roi_expand = 0.2;       // warp-target box growth per side
  bool motion_terms = true;      // false: lr + smoothness + weak only
  WarpDepthMode depth_mode = WarpDepthMode::kDepth;
};

// Numeric-margin audit of one objective evaluation. The gradient check
// differentiates through subgradient kinks (L1 signs, bilinear cell crossings,
// mask threshold flips); instances whose margins are too small for the finite
// difference step are redrawn. Filled only when requested.
struct KinkAudit {
  double min_l1_residual = 1e300;     // photometric/geometric/weak/smooth sites
  // Warp-coordinate distance to the half-integer lattice divided by that
  // coordinate's parameter rate, so it reads as "smallest parameter move that
  // could cross a bilinear cell boundary".
  double min_lattice_dist = 1e300;
  double min_occlusion_margin = 1e300;  // | |zhat-Dhat| - tau*zhat | and row-test margins
  double min_renorm_margin = 1e300;   // |sum of masks - 1| at assembled pixels
  double max_warp_sensitivity = 0.0;  // largest |d coord / d param| seen
};

// The full objective:
//   lr       = photometric(I_t^l  vs right_t warped, zero flow)
//            + photometric(I_t1^l vs right_t1 warped, zero flow)
//   roi      = sum_j photometric + geometric inside each RoI with crop
//              intrinsics and the region's own flow
//   temporal = photometric + geometric on the assembled full-frame flow
//   smooth   = depth_t, depth_t1 and assembled-flow smoothness
//   weak     = optional disparity terms for t and t+1
// Left/right occlusion uses stereo_visibility_mask; temporal occlusion uses
// the depth test against depth_t1.
LossReport total_objective(const SceneState& state, const StereoQuad& quad,
                           const CameraRig& rig, const ObjectiveOptions& opts,
                           StateGrad* grad = nullptr,
                           const DepthMap* weak_disp_t = nullptr,
                           const DepthMap* weak_disp_t1 = nullptr,
                           KinkAudit* audit = nullptr);

}  // namespace sflow
