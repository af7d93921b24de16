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

#include <utility>
#include <vector>

#include "sflow/image.hpp"

// Frustum-shaped plane-sweep grids sampled uniformly in nearness (inverse
// depth) and the winner-take-all depth initializer built on them.

namespace sflow {

struct PlanesweepConfig {
  int n_bins = 64;
  // Nearness range covering the synthetic scene scale (depth 2..80) with
  // sub-pixel disparity spacing at the shipped focal/baseline.
  double near_min = 1.0 / 80.0;
  double near_max = 1.0 / 2.0;
};

// One view's features sampled on the reference frustum grid.
struct NearnessGrid {
  int width = 0, height = 0, n_bins = 0, channels = 0;
  double near_min = 0.0, near_max = 0.0;
  std::vector<double> feat;    // [(y*W + x)*n_bins + k]*channels + c
  std::vector<uint8_t> valid;  // per (x, y, k) cell

  // Bin centers sit at half offsets inside the uniform nearness range.
  double nearness(int bin) const {
    return near_min + (bin + 0.5) * (near_max - near_min) / n_bins;
  }
  double bin_width() const { return (near_max - near_min) / n_bins; }

  size_t cell(int x, int y, int k) const {
    return (size_t(y) * width + x) * n_bins + k;
  }
  double* feat_at(int x, int y, int k) { return &feat[cell(x, y, k) * channels]; }
  const double* feat_at(int x, int y, int k) const {
    return &feat[cell(x, y, k) * channels];
  }
};

struct SweepView {
  const ImageBuffer* image = nullptr;
  Intrinsics intrinsics;
  RigidTransform view_from_ref;
};

// Populate one grid per view: each cell center (pixel, bin) is unprojected in
// the reference camera, moved into the view and sampled bilinearly. Cells
// whose projection leaves the view (or goes behind it) are invalid.
std::vector<NearnessGrid> build_grids(const Intrinsics& ref_K, int width, int height,
                                      const std::vector<SweepView>& views,
                                      const PlanesweepConfig& cfg);

// Stereo pairs are element-wise max-pooled, time instants concatenated:
//   G_t  = concat(max(left_t, right_t), max(left_t1, right_t1))
//   G_t1 = the same halves with the t+1 features first.
// Invalid cells propagate (a pooled cell is valid only if all inputs are).
std::pair<NearnessGrid, NearnessGrid> pool_grids(const NearnessGrid& left_t,
                                                 const NearnessGrid& right_t,
                                                 const NearnessGrid& left_t1,
                                                 const NearnessGrid& right_t1);

struct CostVolume {
  int width = 0, height = 0, n_bins = 0;
  double near_min = 0.0, near_max = 0.0;
  std::vector<double> cost;    // +inf pattern avoided: invalid flagged instead
  std::vector<uint8_t> valid;

  double nearness(int bin) const {
    return near_min + (bin + 0.5) * (near_max - near_min) / n_bins;
  }
  size_t cell(int x, int y, int k) const {
    return (size_t(y) * width + x) * n_bins + k;
  }
};

// Mean absolute feature difference between the two grids, aggregated over a
// 3x3 spatial window (clipped at borders, invalid cells skipped).
CostVolume stereo_cost(const NearnessGrid& left, const NearnessGrid& right);

// Winner-take-all depth: per pixel the minimum-cost bin (ties -> lower bin
// index), refined by fitting a parabola through the neighboring costs in
// nearness coordinates (skipped at edge bins or invalid neighbors). Pixels
// with no valid bin are invalid.
DepthMap wta_depth(const CostVolume& cv);

// Matching features for the cost: mean intensity plus a 3x3 census signature
// (8 neighbor-vs-center comparisons, replicate border), which is what makes
// the cost invariant to a constant intensity shift of both views.
ImageBuffer census_features(const ImageBuffer& img);

}  // namespace sflow
