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

#include "sflow/solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace sflow {

namespace {

void check_finite(const LossReport& r, int iter) {
  const struct { const char* name; double v; } terms[] = {
      {"lr", r.lr.value},         {"roi", r.roi.value},
      {"temporal", r.temporal.value}, {"smooth", r.smooth.value},
      {"weak", r.weak.value},     {"total", r.total},
  };
  for (const auto& t : terms) {
    if (!std::isfinite(t.v)) {
      throw NumericalFailure(std::string(t.name) + " term is non-finite at iteration " +
                             std::to_string(iter));
    }
  }
}

void fill_invalid_with_median(DepthMap* d, double fallback) {
  std::vector<double> vals;
  vals.reserve(d->depth.size());
  for (size_t i = 0; i < d->depth.size(); ++i) {
    if (d->valid[i]) vals.push_back(d->depth[i]);
  }
  double fill = fallback;
  if (!vals.empty()) {
    std::sort(vals.begin(), vals.end());
    fill = vals[(vals.size() - 1) / 2];
  }
  for (size_t i = 0; i < d->depth.size(); ++i) {
    if (!d->valid[i]) d->depth[i] = fill;
    d->valid[i] = 1;
  }
}

// Flat parameter layout: [depth_t | depth_t1 | roi0 flow | roi0 logits | ...],
// depths stored as log(depth) when requested.
struct ParamLayout {
  size_t n_depth = 0;
  size_t total = 0;
};

ParamLayout layout_of(const SceneState& s) {
  ParamLayout l;
  l.n_depth = s.depth_t.depth.size();
  l.total = 2 * l.n_depth;
  for (const RoiPrediction& r : s.rois) {
    l.total += r.flow.size() + r.mask_logits.size();
  }
  return l;
}

std::vector<double> flatten(const SceneState& s, const ParamLayout& l, bool log_depth) {
  std::vector<double> p(l.total);
  for (size_t i = 0; i < l.n_depth; ++i) {
    p[i] = log_depth ? std::log(s.depth_t.depth[i]) : s.depth_t.depth[i];
    p[l.n_depth + i] =
        log_depth ? std::log(s.depth_t1.depth[i]) : s.depth_t1.depth[i];
  }
  size_t o = 2 * l.n_depth;
  for (const RoiPrediction& r : s.rois) {
    std::copy(r.flow.begin(), r.flow.end(), p.begin() + long(o));
    o += r.flow.size();
    std::copy(r.mask_logits.begin(), r.mask_logits.end(), p.begin() + long(o));
    o += r.mask_logits.size();
  }
  return p;
}

void unflatten(const std::vector<double>& p, const ParamLayout& l, bool log_depth,
               SceneState* s) {
  // Raw-depth mode can step through zero; clamp so projection stays defined.
  constexpr double kMinDepth = 1e-6;
  for (size_t i = 0; i < l.n_depth; ++i) {
    s->depth_t.depth[i] =
        log_depth ? std::exp(p[i]) : std::max(p[i], kMinDepth);
    s->depth_t1.depth[i] =
        log_depth ? std::exp(p[l.n_depth + i]) : std::max(p[l.n_depth + i], kMinDepth);
  }
  size_t o = 2 * l.n_depth;
  for (RoiPrediction& r : s->rois) {
    std::copy(p.begin() + long(o), p.begin() + long(o + r.flow.size()), r.flow.begin());
    o += r.flow.size();
    std::copy(p.begin() + long(o), p.begin() + long(o + r.mask_logits.size()),
              r.mask_logits.begin());
    o += r.mask_logits.size();
  }
}

std::vector<double> flatten_grad(const StateGrad& g, const SceneState& s,
                                 const ParamLayout& l, bool log_depth) {
  std::vector<double> out(l.total, 0.0);
  for (size_t i = 0; i < l.n_depth; ++i) {
    // d/d(log z) = z * d/dz
    out[i] = log_depth ? g.d_depth_t[i] * s.depth_t.depth[i] : g.d_depth_t[i];
    out[l.n_depth + i] =
        log_depth ? g.d_depth_t1[i] * s.depth_t1.depth[i] : g.d_depth_t1[i];
  }
  size_t o = 2 * l.n_depth;
  for (size_t j = 0; j < s.rois.size(); ++j) {
    std::copy(g.rois[j].d_flow.begin(), g.rois[j].d_flow.end(), out.begin() + long(o));
    o += g.rois[j].d_flow.size();
    std::copy(g.rois[j].d_logits.begin(), g.rois[j].d_logits.end(),
              out.begin() + long(o));
    o += g.rois[j].d_logits.size();
  }
  return out;
}

}  // namespace

SceneState init_state(const StereoQuad& quad, const CameraRig& rig,
                      const std::vector<RoiBox>& rois, int roi_size,
                      const PlanesweepConfig& sweep) {
  if (!quad.left_t.same_shape(quad.right_t) ||
      !quad.left_t.same_shape(quad.left_t1) ||
      !quad.left_t.same_shape(quad.right_t1)) {
    throw std::invalid_argument("init_state: the four views differ in shape");
  }
  if (roi_size <= 0) throw std::invalid_argument("init_state: roi_size must be positive");
  for (const RoiBox& b : rois) {
    if (!b.is_valid()) throw std::invalid_argument("init_state: malformed RoI box");
  }
  const int W = quad.left_t.width(), H = quad.left_t.height();
  const Intrinsics& K = rig.intrinsics;

  const ImageBuffer f_lt = census_features(quad.left_t);
  const ImageBuffer f_rt = census_features(quad.right_t);
  const ImageBuffer f_lt1 = census_features(quad.left_t1);
  const ImageBuffer f_rt1 = census_features(quad.right_t1);

  // Same-instant stereo sweeps; temporal views would mislead the matcher
  // wherever objects move.
  const auto stereo_wta = [&](const ImageBuffer& ref_feat, const ImageBuffer& src_feat,
                              CameraRig::Cam ref_cam, CameraRig::Cam src_cam) {
    std::vector<SweepView> views(2);
    views[0] = {&ref_feat, K, RigidTransform::identity()};
    views[1] = {&src_feat, K, rig.relative(src_cam, ref_cam)};
    const std::vector<NearnessGrid> grids = build_grids(K, W, H, views, sweep);
    return wta_depth(stereo_cost(grids[0], grids[1]));
  };
  SceneState s;
  s.depth_t = stereo_wta(f_lt, f_rt, CameraRig::kLeftT, CameraRig::kRightT);
  s.depth_t1 = stereo_wta(f_lt1, f_rt1, CameraRig::kLeftT1, CameraRig::kRightT1);
  const double fallback = 2.0 / (sweep.near_min + sweep.near_max);
  fill_invalid_with_median(&s.depth_t, fallback);
  fill_invalid_with_median(&s.depth_t1, fallback);

  s.rois.reserve(rois.size());
  for (const RoiBox& b : rois) s.rois.emplace_back(b, roi_size, roi_size);
  // A box asserts "object here", so start the mask on rather than ambivalent:
  // a 0.5 start halves the assembled flow, and sigmoid gradients vanish too
  // fast near saturation to recover that scale quickly.
  for (RoiPrediction& rp : s.rois) {
    std::fill(rp.mask_logits.begin(), rp.mask_logits.end(), 2.0);
  }

  // Block-match each box between the two left frames and convert the winning
  // pixel displacement into a constant world-flow start. Gradient descent from
  // zero flow stalls once the residual misalignment exceeds the finest texture
  // quarter-wavelength; a matched start keeps every pixel inside the basin.
  const RigidTransform t_rel = rig.relative(CameraRig::kLeftT1, CameraRig::kLeftT);
  for (size_t j = 0; j < s.rois.size(); ++j) {
    const RoiBox& b = rois[j];
    const int x0 = std::max(0, (int)std::floor(b.x));
    const int y0 = std::max(0, (int)std::floor(b.y));
    const int x1 = std::min(W, (int)std::ceil(b.x + b.w));
    const int y1 = std::min(H, (int)std::ceil(b.y + b.h));
    if (x1 <= x0 || y1 <= y0) continue;
    const int radius = 8;
    double best_cost = std::numeric_limits<double>::infinity();
    int best_dx = 0, best_dy = 0;
    for (int dy = -radius; dy <= radius; ++dy) {
      for (int dx = -radius; dx <= radius; ++dx) {
        double cost = 0.0;
        long n = 0;
        for (int y = y0; y < y1; ++y) {
          const int ys = y + dy;
          if (ys < 0 || ys >= H) continue;
          for (int x = x0; x < x1; ++x) {
            const int xs = x + dx;
            if (xs < 0 || xs >= W) continue;
            for (int c = 0; c < f_lt.channels(); ++c) {
              cost += std::abs(f_lt.at(x, y, c) - f_lt1.at(xs, ys, c));
            }
            ++n;
          }
        }
        if (n * 2 < (long)(x1 - x0) * (y1 - y0)) continue;
        cost /= (double)n;
        if (cost < best_cost) {
          best_cost = cost;
          best_dx = dx;
          best_dy = dy;
        }
      }
    }
    // Median plane-sweep depth inside the box anchors the conversion.
    std::vector<double> zs;
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x)
        if (s.depth_t.valid[s.depth_t.idx(x, y)])
          zs.push_back(s.depth_t.depth[s.depth_t.idx(x, y)]);
    if (zs.empty() || !std::isfinite(best_cost)) continue;
    std::nth_element(zs.begin(), zs.begin() + zs.size() / 2, zs.end());
    const double z = zs[zs.size() / 2];
    // u' - u = fx*(X + Fx + t_x)/z - fx*X/z  =>  Fx = dx*z/fx - t_x  (R ~ I)
    const Vec3 f_init(best_dx * z / K.fx - t_rel.translation[0],
                      best_dy * z / K.fy - t_rel.translation[1], 0.0);
    for (int gy = 0; gy < s.rois[j].height; ++gy)
      for (int gx = 0; gx < s.rois[j].width; ++gx) s.rois[j].set_flow(gx, gy, f_init);
  }
  return s;
}

SolveTrace solve(const SceneState& init, const StereoQuad& quad,
                 const CameraRig& rig, const SolverConfig& cfg,
                 const DepthMap* weak_disp_t, const DepthMap* weak_disp_t1) {
  if (!(cfg.step > 0.0) || cfg.beta1 < 0.0 || cfg.beta1 >= 1.0 || cfg.beta2 < 0.0 ||
      cfg.beta2 >= 1.0 || cfg.max_iters < 0 || cfg.tolerance_window < 1) {
    throw std::invalid_argument("solve: malformed solver config");
  }
  SceneState state = init;
  const ParamLayout l = layout_of(state);
  std::vector<double> params = flatten(state, l, cfg.log_depth);
  unflatten(params, l, cfg.log_depth, &state);  // round-trip once for consistency

  std::vector<double> m(l.total, 0.0), v(l.total, 0.0);
  long t_adam = 0;

  SolveTrace tr;
  tr.state = state;
  double best = std::numeric_limits<double>::infinity();
  std::vector<double> best_hist;
  best_hist.reserve(size_t(cfg.max_iters) + 1);

  for (int iter = 0;; ++iter) {
    const bool phase1 = iter < cfg.depth_iters;
    const bool last = iter >= cfg.max_iters;
    StateGrad grad;
    LossReport rep;
    if (!phase1 && !last) {
      rep = total_objective(state, quad, rig, cfg.objective, &grad, weak_disp_t,
                            weak_disp_t1);
    } else {
      rep = total_objective(state, quad, rig, cfg.objective, nullptr, weak_disp_t,
                            weak_disp_t1);
    }
    check_finite(rep, iter);
    tr.reports.push_back(rep);
    if (iter == 0) tr.initial_loss = rep.total;
    if (rep.total < best) {
      best = rep.total;
      tr.state = state;
    }
    best_hist.push_back(best);

    // The warm-up phase optimizes a reduced objective, so a flat stretch there
    // says nothing about the joint problem; arm the stop only once the joint
    // phase has run a full window.
    if (int(best_hist.size()) > cfg.tolerance_window &&
        iter >= cfg.depth_iters + cfg.tolerance_window) {
      const double prev = best_hist[best_hist.size() - 1 - size_t(cfg.tolerance_window)];
      if (prev - best < cfg.tolerance * std::max(std::abs(prev), 1e-30)) {
        tr.converged = true;
        break;
      }
    }
    if (last) break;

    if (phase1) {
      // Warm-up gradient: motion terms off, so depth is shaped by the stereo
      // and prior terms alone. The recorded report above stays the full one.
      ObjectiveOptions off = cfg.objective;
      off.motion_terms = false;
      total_objective(state, quad, rig, off, &grad, weak_disp_t, weak_disp_t1);
    }
    if (iter == cfg.depth_iters) {
      // Joint phase starts with fresh moments; the warm-up moments describe a
      // different objective.
      std::fill(m.begin(), m.end(), 0.0);
      std::fill(v.begin(), v.end(), 0.0);
      t_adam = 0;
    }
    std::vector<double> g = flatten_grad(grad, state, l, cfg.log_depth);
    if (!phase1 && cfg.freeze_depth) {
      std::fill(g.begin(), g.begin() + long(2 * l.n_depth), 0.0);
    }
    ++t_adam;
    const double bc1 = 1.0 - std::pow(cfg.beta1, double(t_adam));
    const double bc2 = 1.0 - std::pow(cfg.beta2, double(t_adam));
    for (size_t i = 0; i < l.total; ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      params[i] -= cfg.step * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.adam_eps);
    }
    unflatten(params, l, cfg.log_depth, &state);
    tr.iterations = iter + 1;
  }
  tr.final_loss = best;
  return tr;
}

std::string SolveTrace::to_log() const {
  std::string s;
  for (size_t i = 0; i < reports.size(); ++i) {
    s += reports[i].to_log_lines(long(i));
  }
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "# iterations %d\n# converged %d\n# initial_loss %.17g\n"
                "# final_loss %.17g\n",
                iterations, converged ? 1 : 0, initial_loss, final_loss);
  s += buf;
  return s;
}

}  // namespace sflow
