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

#include <cmath>

#include "doctest.h"
#include "sflow/planesweep.hpp"
#include "sflow/rng.hpp"

using namespace sflow;

namespace {

const Intrinsics kK{100.0, 100.0, 31.5, 23.5};

ImageBuffer ramp_image(int w, int h, double a, double b) {
  ImageBuffer img(w, h, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) img.at(x, y, 0) = a + b * x;
  return img;
}

NearnessGrid tiny_grid(int w, int h, int bins, int channels) {
  NearnessGrid g;
  g.width = w;
  g.height = h;
  g.n_bins = bins;
  g.channels = channels;
  g.near_min = 0.1;
  g.near_max = 0.5;
  g.feat.assign(size_t(w) * h * bins * channels, 0.0);
  g.valid.assign(size_t(w) * h * bins, 1);
  return g;
}

}  // namespace

TEST_CASE("identity view fills every bin with the pixel's own feature") {
  Rng rng(3);
  ImageBuffer img(8, 6, 2);
  for (double& v : img.data()) v = rng.next_double();
  PlanesweepConfig cfg;
  cfg.n_bins = 7;
  std::vector<SweepView> views(1);
  views[0] = {&img, kK, RigidTransform::identity()};
  const auto grids = build_grids(kK, 8, 6, views, cfg);
  REQUIRE(grids.size() == 1);
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 8; ++x)
      for (int k = 0; k < 7; ++k) {
        REQUIRE(grids[0].valid[grids[0].cell(x, y, k)] == 1);
        const double* f = grids[0].feat_at(x, y, k);
        CHECK(std::abs(f[0] - img.at(x, y, 0)) <= 1e-12);
        CHECK(std::abs(f[1] - img.at(x, y, 1)) <= 1e-12);
      }
}

TEST_CASE("stereo view samples at the bin's disparity") {
  const int W = 64, H = 8;
  const double a = 0.2, slope = 0.01;
  const ImageBuffer img = ramp_image(W, H, a, slope);
  PlanesweepConfig cfg;
  cfg.n_bins = 16;
  const double baseline = 0.5;
  std::vector<SweepView> views(1);
  views[0] = {&img, kK, RigidTransform::translate(-baseline, 0.0, 0.0)};
  const auto grids = build_grids(kK, W, H, views, cfg);
  const NearnessGrid& g = grids[0];
  const int y = 4;
  for (int k = 0; k < cfg.n_bins; ++k) {
    const double disp = kK.fx * baseline * g.nearness(k);
    for (const int x : {8, 30, 55}) {
      const double u = x - disp;
      const size_t cell = g.cell(x, y, k);
      if (u < -0.5 || u > W - 0.5) {
        CHECK(g.valid[cell] == 0);
      } else if (u >= 0.0 && u <= W - 1.0) {
        REQUIRE(g.valid[cell] == 1);
        CHECK(g.feat_at(x, y, k)[0] == doctest::Approx(a + slope * u).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("pool_grids max-pools pairs and concatenates time instants") {
  NearnessGrid lt = tiny_grid(1, 1, 2, 1);
  NearnessGrid rt = tiny_grid(1, 1, 2, 1);
  NearnessGrid lt1 = tiny_grid(1, 1, 2, 1);
  NearnessGrid rt1 = tiny_grid(1, 1, 2, 1);
  // bin 0 values: lt 0.3, rt 0.7, lt1 0.2, rt1 0.1
  lt.feat = {0.3, 0.5};
  rt.feat = {0.7, 0.4};
  lt1.feat = {0.2, 0.9};
  rt1.feat = {0.1, 0.6};
  rt1.valid[1] = 0;  // bin 1 invalid in one input

  const auto [G_t, G_t1] = pool_grids(lt, rt, lt1, rt1);
  REQUIRE(G_t.channels == 2);
  REQUIRE(G_t.valid[0] == 1);
  CHECK(G_t.feat_at(0, 0, 0)[0] == doctest::Approx(0.7));   // max(lt, rt)
  CHECK(G_t.feat_at(0, 0, 0)[1] == doctest::Approx(0.2));   // max(lt1, rt1)
  CHECK(G_t1.feat_at(0, 0, 0)[0] == doctest::Approx(0.2));  // t+1 half first
  CHECK(G_t1.feat_at(0, 0, 0)[1] == doctest::Approx(0.7));
  // Invalidity propagates to both pooled grids.
  CHECK(G_t.valid[1] == 0);
  CHECK(G_t1.valid[1] == 0);
}

TEST_CASE("stereo cost is the mean absolute difference over a 3x3 window") {
  const int W = 3, H = 3, bins = 2, C = 2;
  NearnessGrid L = tiny_grid(W, H, bins, C);
  NearnessGrid R = tiny_grid(W, H, bins, C);
  Rng rng(7);
  for (double& v : L.feat) v = rng.next_double();
  for (double& v : R.feat) v = rng.next_double();
  R.valid[R.cell(2, 2, 1)] = 0;

  const CostVolume cv = stereo_cost(L, R);
  for (int k = 0; k < bins; ++k) {
    // Center pixel: full window, minus invalid cells for bin 1.
    double sum = 0.0;
    long n = 0;
    for (int y = 0; y < 3; ++y)
      for (int x = 0; x < 3; ++x) {
        const size_t cell = L.cell(x, y, k);
        if (!L.valid[cell] || !R.valid[cell]) continue;
        for (int c = 0; c < C; ++c)
          sum += std::abs(L.feat[cell * C + c] - R.feat[cell * C + c]);
        ++n;
      }
    CHECK(cv.cost[cv.cell(1, 1, k)] ==
          doctest::Approx(sum / (double(n) * C)).epsilon(1e-12));
    CHECK(cv.valid[cv.cell(1, 1, k)] == 1);

    // Corner pixel: clipped 2x2 window.
    double csum = 0.0;
    long cn = 0;
    for (int y = 0; y < 2; ++y)
      for (int x = 0; x < 2; ++x) {
        const size_t cell = L.cell(x, y, k);
        if (!L.valid[cell] || !R.valid[cell]) continue;
        for (int c = 0; c < C; ++c)
          csum += std::abs(L.feat[cell * C + c] - R.feat[cell * C + c]);
        ++cn;
      }
    CHECK(cv.cost[cv.cell(0, 0, k)] ==
          doctest::Approx(csum / (double(cn) * C)).epsilon(1e-12));
  }
}

TEST_CASE("wta refines the minimum with a parabola in nearness") {
  CostVolume cv;
  cv.width = 1;
  cv.height = 1;
  cv.n_bins = 5;
  cv.near_min = 0.1;
  cv.near_max = 0.6;
  cv.cost = {5.0, 1.0, 0.5, 1.5, 4.0};
  cv.valid.assign(5, 1);
  const DepthMap d = wta_depth(cv);
  REQUIRE(d.is_valid(0, 0));
  const double bw = (0.6 - 0.1) / 5.0;
  const double c0 = 1.0, c1 = 0.5, c2 = 1.5;
  const double delta = 0.5 * (c0 - c2) / (c0 - 2 * c1 + c2);
  const double nu = (0.1 + 2.5 * bw) + delta * bw;
  CHECK(d.at(0, 0) == doctest::Approx(1.0 / nu).epsilon(1e-12));

  // Edge-bin minimum: no refinement.
  cv.cost = {0.2, 1.0, 2.0, 3.0, 4.0};
  const DepthMap e = wta_depth(cv);
  CHECK(e.at(0, 0) == doctest::Approx(1.0 / (0.1 + 0.5 * bw)).epsilon(1e-12));

  // Tie: the lower bin index wins (then refines with its neighbors).
  cv.cost = {3.0, 1.0, 1.0, 3.0, 4.0};
  const DepthMap t = wta_depth(cv);
  const double tie_delta = 0.5 * (3.0 - 1.0) / (3.0 - 2.0 + 1.0);
  CHECK(t.at(0, 0) ==
        doctest::Approx(1.0 / (0.1 + 1.5 * bw + tie_delta * bw)).epsilon(1e-12));

  // Invalid neighbor: refinement skipped, bin center kept.
  cv.cost = {5.0, 1.0, 0.5, 1.5, 4.0};
  cv.valid[1] = 0;
  const DepthMap s = wta_depth(cv);
  CHECK(s.at(0, 0) == doctest::Approx(1.0 / (0.1 + 2.5 * bw)).epsilon(1e-12));

  // No valid bin at all: invalid output.
  cv.valid.assign(5, 0);
  const DepthMap inv = wta_depth(cv);
  CHECK_FALSE(inv.is_valid(0, 0));

  // Refinement never leaves the winning bin: delta clamps to half a bin.
  cv.valid.assign(5, 1);
  cv.cost = {5.0, 1.00001, 1.0, 1.00001, 4.0};
  const DepthMap flat = wta_depth(cv);
  const double nu_flat = 1.0 / flat.at(0, 0);
  CHECK(nu_flat >= 0.1 + 2.0 * bw);
  CHECK(nu_flat <= 0.1 + 3.0 * bw);
}
