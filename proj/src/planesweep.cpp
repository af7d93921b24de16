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

#include "sflow/planesweep.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sflow {

ImageBuffer census_features(const ImageBuffer& img) {
  const int W = img.width(), H = img.height(), C = img.channels();
  ImageBuffer out(W, H, 9, 0.0);
  const auto intensity = [&](int x, int y) {
    const int xc = std::clamp(x, 0, W - 1), yc = std::clamp(y, 0, H - 1);
    double s = 0.0;
    for (int c = 0; c < C; ++c) s += img.at(xc, yc, c);
    return s / double(C);
  };
  static constexpr int kOff[8][2] = {{-1, -1}, {0, -1}, {1, -1}, {-1, 0},
                                     {1, 0},   {-1, 1}, {0, 1},  {1, 1}};
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const double center = intensity(x, y);
      out.at(x, y, 0) = center;
      for (int k = 0; k < 8; ++k) {
        out.at(x, y, 1 + k) =
            intensity(x + kOff[k][0], y + kOff[k][1]) > center ? 1.0 : 0.0;
      }
    }
  }
  return out;
}

std::vector<NearnessGrid> build_grids(const Intrinsics& ref_K, int width, int height,
                                      const std::vector<SweepView>& views,
                                      const PlanesweepConfig& cfg) {
  ref_K.validate();
  if (cfg.n_bins <= 0 || !(cfg.near_min > 0.0) || !(cfg.near_max > cfg.near_min)) {
    throw std::invalid_argument("build_grids: malformed sweep config");
  }
  std::vector<NearnessGrid> grids;
  grids.reserve(views.size());
  for (const SweepView& view : views) {
    if (!view.image) throw std::invalid_argument("build_grids: view without image");
    const int C = view.image->channels();
    NearnessGrid g;
    g.width = width;
    g.height = height;
    g.n_bins = cfg.n_bins;
    g.channels = C;
    g.near_min = cfg.near_min;
    g.near_max = cfg.near_max;
    g.feat.assign(size_t(width) * height * cfg.n_bins * C, 0.0);
    g.valid.assign(size_t(width) * height * cfg.n_bins, 0);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        for (int k = 0; k < cfg.n_bins; ++k) {
          const double z = 1.0 / g.nearness(k);
          const WarpResult w =
              warp_pixel(Pixel{double(x), double(y)}, z, Vec3::Zero(), ref_K,
                         view.intrinsics, view.view_from_ref);
          if (!w.valid) continue;
          const BilinearSample s = sample_bilinear(*view.image, w.pixel);
          if (!s.valid) continue;
          double* f = g.feat_at(x, y, k);
          for (int c = 0; c < C; ++c) f[c] = s.value[c];
          g.valid[g.cell(x, y, k)] = 1;
        }
      }
    }
    grids.push_back(std::move(g));
  }
  return grids;
}

std::pair<NearnessGrid, NearnessGrid> pool_grids(const NearnessGrid& left_t,
                                                 const NearnessGrid& right_t,
                                                 const NearnessGrid& left_t1,
                                                 const NearnessGrid& right_t1) {
  const NearnessGrid* all[4] = {&left_t, &right_t, &left_t1, &right_t1};
  for (const NearnessGrid* g : all) {
    if (g->width != left_t.width || g->height != left_t.height ||
        g->n_bins != left_t.n_bins || g->channels != left_t.channels ||
        g->near_min != left_t.near_min || g->near_max != left_t.near_max) {
      throw std::invalid_argument("pool_grids: grid layouts differ");
    }
  }
  const int C = left_t.channels;
  const size_t cells = size_t(left_t.width) * left_t.height * left_t.n_bins;

  NearnessGrid G_t;
  G_t.width = left_t.width;
  G_t.height = left_t.height;
  G_t.n_bins = left_t.n_bins;
  G_t.channels = 2 * C;
  G_t.near_min = left_t.near_min;
  G_t.near_max = left_t.near_max;
  G_t.feat.assign(cells * 2 * C, 0.0);
  G_t.valid.assign(cells, 0);
  NearnessGrid G_t1 = G_t;

  for (size_t i = 0; i < cells; ++i) {
    if (!(left_t.valid[i] && right_t.valid[i] && left_t1.valid[i] &&
          right_t1.valid[i])) {
      continue;
    }
    G_t.valid[i] = 1;
    G_t1.valid[i] = 1;
    for (int c = 0; c < C; ++c) {
      const double mt = std::max(left_t.feat[i * C + c], right_t.feat[i * C + c]);
      const double mt1 =
          std::max(left_t1.feat[i * C + c], right_t1.feat[i * C + c]);
      G_t.feat[i * 2 * C + c] = mt;
      G_t.feat[i * 2 * C + C + c] = mt1;
      G_t1.feat[i * 2 * C + c] = mt1;
      G_t1.feat[i * 2 * C + C + c] = mt;
    }
  }
  return {std::move(G_t), std::move(G_t1)};
}

CostVolume stereo_cost(const NearnessGrid& left, const NearnessGrid& right) {
  if (left.width != right.width || left.height != right.height ||
      left.n_bins != right.n_bins || left.channels != right.channels ||
      left.near_min != right.near_min || left.near_max != right.near_max) {
    throw std::invalid_argument("stereo_cost: grid layouts differ");
  }
  const int W = left.width, H = left.height, K = left.n_bins, C = left.channels;
  CostVolume cv;
  cv.width = W;
  cv.height = H;
  cv.n_bins = K;
  cv.near_min = left.near_min;
  cv.near_max = left.near_max;
  cv.cost.assign(size_t(W) * H * K, 0.0);
  cv.valid.assign(size_t(W) * H * K, 0);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const int x0 = std::max(0, x - 1), x1 = std::min(W - 1, x + 1);
      const int y0 = std::max(0, y - 1), y1 = std::min(H - 1, y + 1);
      for (int k = 0; k < K; ++k) {
        double sum = 0.0;
        long n = 0;
        for (int yy = y0; yy <= y1; ++yy) {
          for (int xx = x0; xx <= x1; ++xx) {
            const size_t cell = left.cell(xx, yy, k);
            if (!(left.valid[cell] && right.valid[cell])) continue;
            const double* a = &left.feat[cell * C];
            const double* b = &right.feat[cell * C];
            for (int c = 0; c < C; ++c) sum += std::abs(a[c] - b[c]);
            ++n;
          }
        }
        if (n == 0) continue;
        cv.cost[cv.cell(x, y, k)] = sum / (double(n) * C);
        cv.valid[cv.cell(x, y, k)] = 1;
      }
    }
  }
  return cv;
}

DepthMap wta_depth(const CostVolume& cv) {
  DepthMap out(cv.width, cv.height);
  const double bw = (cv.near_max - cv.near_min) / cv.n_bins;
  for (int y = 0; y < cv.height; ++y) {
    for (int x = 0; x < cv.width; ++x) {
      int best = -1;
      double best_cost = 0.0;
      for (int k = 0; k < cv.n_bins; ++k) {
        if (!cv.valid[cv.cell(x, y, k)]) continue;
        const double c = cv.cost[cv.cell(x, y, k)];
        if (best < 0 || c < best_cost) {
          best = k;
          best_cost = c;
        }
      }
      if (best < 0) continue;
      double nu = cv.nearness(best);
      if (best > 0 && best + 1 < cv.n_bins && cv.valid[cv.cell(x, y, best - 1)] &&
          cv.valid[cv.cell(x, y, best + 1)]) {
        const double c0 = cv.cost[cv.cell(x, y, best - 1)];
        const double c2 = cv.cost[cv.cell(x, y, best + 1)];
        const double denom = c0 - 2.0 * best_cost + c2;
        if (denom > 0.0) {
          const double delta = std::clamp(0.5 * (c0 - c2) / denom, -0.5, 0.5);
          nu += delta * bw;
        }
      }
      out.at(x, y) = 1.0 / nu;
      out.valid[out.idx(x, y)] = 1;
    }
  }
  return out;
}

}  // namespace sflow
