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

#include "sflow/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "sflow/losses.hpp"
#include "sflow/rng.hpp"

namespace sflow {

namespace {

// Denominator floor 1e-5: central differences at step h on an objective of
// magnitude ~0.1 carry ~1e-10 of absolute rounding noise, so entries below
// the floor are held to absolute agreement at that noise scale instead of a
// relative bound they cannot meaningfully satisfy.
double rel_err(double ga, double gf) {
  return std::abs(ga - gf) / std::max({std::abs(ga), std::abs(gf), 1e-5});
}

ImageBuffer random_image(Rng& rng, int W, int H, double lo, double hi) {
  ImageBuffer img(W, H, 1, 0.0);
  for (double& v : img.data()) v = rng.uniform(lo, hi);
  return img;
}

OcclusionMask random_mask(Rng& rng, int W, int H, double p_valid) {
  OcclusionMask m(W, H, 0);
  for (uint8_t& b : m.w) b = rng.next_double() < p_valid ? 1 : 0;
  return m;
}

double signed_uniform(Rng& rng, double lo, double hi) {
  const double s = rng.next_double() < 0.5 ? -1.0 : 1.0;
  return s * rng.uniform(lo, hi);
}

// ---- standalone loss terms; inputs constructed with explicit L1 margins ----

GradcheckTerm check_photometric(Rng rng, int size, double step, double tol) {
  const int W = size, H = size;
  // Value ranges are disjoint, so no absolute-difference sign can flip
  // within the finite-difference step.
  ImageBuffer I_ref = random_image(rng, W, H, 0.30, 0.45);
  ImageBuffer I_hat = random_image(rng, W, H, 0.55, 0.70);
  const OcclusionMask mask = random_mask(rng, W, H, 0.85);
  const double alpha = 0.85;

  ImageBuffer ga;
  photometric_loss(I_ref, I_hat, mask, alpha, &ga);
  GradcheckTerm t;
  t.name = "photometric";
  t.n_params = long(I_hat.data().size());
  for (size_t i = 0; i < I_hat.data().size(); ++i) {
    const double saved = I_hat.data()[i];
    I_hat.data()[i] = saved + step;
    const double fp = photometric_loss(I_ref, I_hat, mask, alpha);
    I_hat.data()[i] = saved - step;
    const double fm = photometric_loss(I_ref, I_hat, mask, alpha);
    I_hat.data()[i] = saved;
    t.max_rel_err = std::max(t.max_rel_err,
                             rel_err(ga.data()[i], (fp - fm) / (2.0 * step)));
  }
  t.pass = t.max_rel_err < tol;
  return t;
}

GradcheckTerm check_geometric(Rng rng, int size, double step, double tol) {
  const int W = size, H = size;
  const size_t n = size_t(W) * H;
  DepthMap D_ref(W, H), D_hat(W, H);
  std::vector<double> Fz(n);
  for (size_t i = 0; i < n; ++i) {
    D_ref.depth[i] = rng.uniform(5.0, 10.0);
    D_ref.valid[i] = 1;
    D_hat.depth[i] = rng.uniform(11.0, 16.0);
    D_hat.valid[i] = rng.next_double() < 0.9 ? 1 : 0;
    Fz[i] = rng.uniform(-0.5, 0.5);  // residual stays <= -0.5 everywhere
  }
  const OcclusionMask mask = random_mask(rng, W, H, 0.8);

  std::vector<double> g_ref, g_hat, g_fz;
  geometric_loss(D_ref, D_hat, Fz, mask, &g_ref, &g_hat, &g_fz);
  GradcheckTerm t;
  t.name = "geometric";
  t.n_params = long(3 * n);
  const auto fd = [&](double* p, double ga) {
    const double saved = *p;
    *p = saved + step;
    const double fp = geometric_loss(D_ref, D_hat, Fz, mask);
    *p = saved - step;
    const double fm = geometric_loss(D_ref, D_hat, Fz, mask);
    *p = saved;
    t.max_rel_err = std::max(t.max_rel_err, rel_err(ga, (fp - fm) / (2.0 * step)));
  };
  for (size_t i = 0; i < n; ++i) fd(&D_ref.depth[i], g_ref[i]);
  for (size_t i = 0; i < n; ++i) fd(&D_hat.depth[i], g_hat[i]);
  for (size_t i = 0; i < n; ++i) fd(&Fz[i], g_fz[i]);
  t.pass = t.max_rel_err < tol;
  return t;
}

GradcheckTerm check_smooth_depth(Rng rng, int size, double step, double tol) {
  const int W = size, H = size;
  DepthMap d(W, H);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      // Ramp dominates the jitter: every first difference keeps its sign.
      d.at(x, y) = 5.0 + 0.2 * x + 0.1 * y + 0.04 * rng.next_double();
      d.valid[d.idx(x, y)] = rng.next_double() < 0.9 ? 1 : 0;
    }
  }
  const ImageBuffer guide = random_image(rng, W, H, 0.0, 1.0);

  std::vector<double> ga;
  smoothness_loss(d, guide, &ga);
  GradcheckTerm t;
  t.name = "smooth_depth";
  t.n_params = long(d.depth.size());
  for (size_t i = 0; i < d.depth.size(); ++i) {
    const double saved = d.depth[i];
    d.depth[i] = saved + step;
    const double fp = smoothness_loss(d, guide);
    d.depth[i] = saved - step;
    const double fm = smoothness_loss(d, guide);
    d.depth[i] = saved;
    t.max_rel_err = std::max(t.max_rel_err, rel_err(ga[i], (fp - fm) / (2.0 * step)));
  }
  t.pass = t.max_rel_err < tol;
  return t;
}

GradcheckTerm check_smooth_flow(Rng rng, int size, double step, double tol) {
  const int W = size, H = size;
  FlowField3D f(W, H);
  const double sx[3] = {0.2, -0.15, 0.1}, sy[3] = {0.1, 0.12, -0.2};
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      Vec3 v;
      for (int c = 0; c < 3; ++c) {
        v[c] = sx[c] * x + sy[c] * y + 0.04 * rng.next_double();
      }
      f.set(x, y, v);
    }
  }
  const ImageBuffer guide = random_image(rng, W, H, 0.0, 1.0);

  std::vector<double> ga;
  smoothness_loss(f, guide, &ga);
  GradcheckTerm t;
  t.name = "smooth_flow";
  t.n_params = long(f.data.size());
  for (size_t i = 0; i < f.data.size(); ++i) {
    const double saved = f.data[i];
    f.data[i] = saved + step;
    const double fp = smoothness_loss(f, guide);
    f.data[i] = saved - step;
    const double fm = smoothness_loss(f, guide);
    f.data[i] = saved;
    t.max_rel_err = std::max(t.max_rel_err, rel_err(ga[i], (fp - fm) / (2.0 * step)));
  }
  t.pass = t.max_rel_err < tol;
  return t;
}

GradcheckTerm check_weak(Rng rng, int size, double step, double tol) {
  const int W = size, H = size;
  const Intrinsics K{100.0, 100.0, (W - 1) / 2.0, (H - 1) / 2.0};
  const double baseline = 0.5;
  DepthMap D(W, H), disp(W, H);
  for (size_t i = 0; i < D.depth.size(); ++i) {
    D.depth[i] = rng.uniform(5.0, 10.0);
    D.valid[i] = 1;
    // Disparity offset away from the prediction keeps the residual sign.
    disp.depth[i] = K.fx * baseline / D.depth[i] + signed_uniform(rng, 0.2, 0.5);
    disp.valid[i] = rng.next_double() < 0.7 ? 1 : 0;
  }
  std::vector<double> ga;
  weak_disparity_loss(D, disp, K, baseline, &ga);
  GradcheckTerm t;
  t.name = "weak";
  t.n_params = long(D.depth.size());
  for (size_t i = 0; i < D.depth.size(); ++i) {
    const double saved = D.depth[i];
    D.depth[i] = saved + step;
    const double fp = weak_disparity_loss(D, disp, K, baseline);
    D.depth[i] = saved - step;
    const double fm = weak_disparity_loss(D, disp, K, baseline);
    D.depth[i] = saved;
    t.max_rel_err = std::max(t.max_rel_err, rel_err(ga[i], (fp - fm) / (2.0 * step)));
  }
  t.pass = t.max_rel_err < tol;
  return t;
}

GradcheckTerm check_ssim(Rng rng, int size, double step, double tol) {
  const int W = size, H = size;
  ImageBuffer a = random_image(rng, W, H, 0.0, 1.0);
  const ImageBuffer b = random_image(rng, W, H, 0.0, 1.0);
  ImageBuffer up(W, H, 1, 0.0);
  for (double& v : up.data()) v = rng.uniform(-1.0, 1.0);

  const auto value = [&]() {
    const ImageBuffer s = ssim_map(a, b);
    double acc = 0.0;
    for (size_t i = 0; i < s.data().size(); ++i) acc += up.data()[i] * s.data()[i];
    return acc;
  };
  const ImageBuffer ga = ssim_backprop(a, b, up);
  GradcheckTerm t;
  t.name = "ssim";
  t.n_params = long(a.data().size());
  for (size_t i = 0; i < a.data().size(); ++i) {
    const double saved = a.data()[i];
    a.data()[i] = saved + step;
    const double fp = value();
    a.data()[i] = saved - step;
    const double fm = value();
    a.data()[i] = saved;
    t.max_rel_err = std::max(t.max_rel_err, rel_err(ga.data()[i], (fp - fm) / (2.0 * step)));
  }
  t.pass = t.max_rel_err < tol;
  return t;
}

// ---- full objective ----

struct TotalInstance {
  SceneState state;
  StereoQuad quad;
  CameraRig rig;
  ObjectiveOptions opts;
  DepthMap weak_t, weak_t1;
};

DepthMap ramp_depth(Rng& rng, int W, int H, double base) {
  DepthMap d(W, H);
  // Slopes shrink with size so the ramp never approaches zero depth.
  const double k = 16.0 / W;
  const double ax = k * rng.uniform(0.25, 0.33), ay = k * rng.uniform(0.18, 0.24);
  const double cx = (W - 1) / 2.0, cy = (H - 1) / 2.0;
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      d.at(x, y) = base + ax * (x - cx) + ay * (y - cy) +
                   0.02 * rng.uniform(-1.0, 1.0);
      d.valid[d.idx(x, y)] = 1;
    }
  }
  return d;
}

TotalInstance draw_total_instance(Rng& rng, int size, WarpDepthMode mode) {
  const int W = size, H = size;
  TotalInstance in;
  // Image value ranges are pairwise disjoint per warp target, so photometric
  // residuals keep their sign under any state perturbation (bilinear samples
  // stay in the convex hull of the source range).
  in.quad.left_t = random_image(rng, W, H, 0.75, 0.95);
  in.quad.right_t = random_image(rng, W, H, 0.05, 0.45);
  in.quad.left_t1 = random_image(rng, W, H, 0.55, 0.70);
  in.quad.right_t1 = random_image(rng, W, H, 0.05, 0.45);

  // A small focal length keeps warp sensitivities O(1), which keeps the kink
  // margins required by the audit modest.
  in.rig.intrinsics = Intrinsics{8.0, 8.0, (W - 1) / 2.0, (H - 1) / 2.0};
  in.rig.world_from_camera[CameraRig::kLeftT] = RigidTransform::identity();
  in.rig.world_from_camera[CameraRig::kRightT] = RigidTransform::translate(0.5, 0, 0);
  const RigidTransform ego =
      RigidTransform::from_axis_angle(Vec3(0, 0, 0.02), Vec3(0.12, 0.07, 0));
  in.rig.world_from_camera[CameraRig::kLeftT1] = ego;
  in.rig.world_from_camera[CameraRig::kRightT1] =
      ego * RigidTransform::translate(0.5, 0, 0);

  in.state.depth_t = ramp_depth(rng, W, H, 10.0);
  in.state.depth_t1 = ramp_depth(rng, W, H, 10.0 + rng.uniform(-0.6, 0.6));

  const double s = double(size);
  const RoiBox boxes[2] = {
      {0.07 * s + rng.uniform(0.0, 0.09 * s), 0.07 * s + rng.uniform(0.0, 0.09 * s),
       rng.uniform(0.40 * s, 0.47 * s), rng.uniform(0.34 * s, 0.41 * s)},
      {0.30 * s + rng.uniform(0.0, 0.12 * s), 0.28 * s + rng.uniform(0.0, 0.12 * s),
       rng.uniform(0.38 * s, 0.47 * s), rng.uniform(0.34 * s, 0.44 * s)},
  };
  for (const RoiBox& b : boxes) {
    RoiPrediction r(b, 8, 8);
    double ax[3], ay[3];
    for (int c = 0; c < 3; ++c) {
      ax[c] = signed_uniform(rng, 0.8, 1.4);
      ay[c] = signed_uniform(rng, 0.8, 1.4);
    }
    const double g0 = rng.uniform(-0.5, 0.5);
    const double g1 = signed_uniform(rng, 1.0, 2.0);
    const double g2 = signed_uniform(rng, 1.0, 2.0);
    for (int y = 0; y < r.height; ++y) {
      for (int x = 0; x < r.width; ++x) {
        const double u = double(x) / r.width - 0.5, v = double(y) / r.height - 0.5;
        Vec3 f;
        for (int c = 0; c < 3; ++c) {
          f[c] = ax[c] * u + ay[c] * v + 0.01 * rng.uniform(-1.0, 1.0);
        }
        r.set_flow(x, y, f);
        r.mask_logits[r.idx(x, y)] =
            g0 + g1 * u + g2 * v + 0.05 * rng.uniform(-1.0, 1.0);
      }
    }
    in.state.rois.push_back(std::move(r));
  }

  const double fb = in.rig.intrinsics.fx * 0.5;
  in.weak_t = DepthMap(W, H);
  in.weak_t1 = DepthMap(W, H);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      if (rng.next_double() < 0.6) {
        in.weak_t.at(x, y) =
            fb / in.state.depth_t.at(x, y) + signed_uniform(rng, 0.2, 0.5);
        in.weak_t.valid[in.weak_t.idx(x, y)] = 1;
      }
      if (rng.next_double() < 0.6) {
        in.weak_t1.at(x, y) =
            fb / in.state.depth_t1.at(x, y) + signed_uniform(rng, 0.2, 0.5);
        in.weak_t1.valid[in.weak_t1.idx(x, y)] = 1;
      }
    }
  }

  in.opts.weights = LossWeights{0.85, 1.0, 0.1, 0.1, 0.3};
  in.opts.occlusion_tau = 0.05;
  in.opts.roi_expand = 0.2;
  in.opts.motion_terms = true;
  in.opts.depth_mode = mode;
  return in;
}

// Flat raw-parameter view of the scene state, matching the solver layout.
std::vector<double*> param_view(SceneState& s) {
  std::vector<double*> p;
  for (double& v : s.depth_t.depth) p.push_back(&v);
  for (double& v : s.depth_t1.depth) p.push_back(&v);
  for (RoiPrediction& r : s.rois) {
    for (double& v : r.flow) p.push_back(&v);
    for (double& v : r.mask_logits) p.push_back(&v);
  }
  return p;
}

std::vector<double> flat_grad(const StateGrad& g) {
  std::vector<double> out;
  out.insert(out.end(), g.d_depth_t.begin(), g.d_depth_t.end());
  out.insert(out.end(), g.d_depth_t1.begin(), g.d_depth_t1.end());
  for (const StateGrad::RoiGrad& r : g.rois) {
    out.insert(out.end(), r.d_flow.begin(), r.d_flow.end());
    out.insert(out.end(), r.d_logits.begin(), r.d_logits.end());
  }
  return out;
}

GradcheckTerm check_total(uint64_t seed, int size, double step, double tol,
                          WarpDepthMode mode, const char* name, int* redraws,
                          bool break_gradient) {
  GradcheckTerm t;
  t.name = name;
  for (int attempt = 0; attempt < 64; ++attempt) {
    Rng rng = Rng(seed).fork(1000 + uint64_t(attempt));
    TotalInstance in = draw_total_instance(rng, size, mode);
    KinkAudit audit;
    StateGrad grad;
    total_objective(in.state, in.quad, in.rig, in.opts, &grad, &in.weak_t,
                    &in.weak_t1, &audit);
    // Margins must exceed the largest move any parameter step h can cause;
    // sensitivities are bounded by the audited warp jacobian.
    const double S = std::max(1.0, audit.max_warp_sensitivity);
    const bool clean = audit.min_lattice_dist >= 4.0 * step &&
                       audit.min_l1_residual >= 4.0 * S * step &&
                       audit.min_occlusion_margin >= 4.0 * S * step &&
                       audit.min_renorm_margin >= 4.0 * step;
    if (!clean) {
      ++*redraws;
      continue;
    }

    std::vector<double> ga = flat_grad(grad);
    if (break_gradient && !ga.empty()) {
      ga[0] += 1.0 + std::abs(ga[0]);  // negative control
    }
    std::vector<double*> params = param_view(in.state);
    t.n_params = long(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      const double saved = *params[i];
      *params[i] = saved + step;
      const double fp = total_objective(in.state, in.quad, in.rig, in.opts,
                                        nullptr, &in.weak_t, &in.weak_t1).total;
      *params[i] = saved - step;
      const double fm = total_objective(in.state, in.quad, in.rig, in.opts,
                                        nullptr, &in.weak_t, &in.weak_t1).total;
      *params[i] = saved;
      const double gfd = (fp - fm) / (2.0 * step);
      t.max_rel_err = std::max(t.max_rel_err, rel_err(ga[i], gfd));
    }
    t.pass = t.max_rel_err < tol;
    return t;
  }
  t.max_rel_err = 1e300;  // no audit-clean instance found
  t.pass = false;
  return t;
}

}  // namespace

GradcheckReport run_gradcheck(uint64_t seed, int size, double step, double tol,
                              bool break_gradient) {
  if (size < 4) throw std::invalid_argument("run_gradcheck: size must be >= 4");
  const Rng master(seed);
  GradcheckReport rep;
  rep.terms.push_back(check_photometric(master.fork(1), size, step, tol));
  rep.terms.push_back(check_geometric(master.fork(2), size, step, tol));
  rep.terms.push_back(check_smooth_depth(master.fork(3), size, step, tol));
  rep.terms.push_back(check_smooth_flow(master.fork(4), size, step, tol));
  rep.terms.push_back(check_weak(master.fork(5), size, step, tol));
  rep.terms.push_back(check_ssim(master.fork(6), size, step, tol));
  rep.terms.push_back(check_total(seed, size, step, tol, WarpDepthMode::kDepth,
                                  "total_objective", &rep.redraws, break_gradient));
  rep.terms.push_back(check_total(seed ^ 0x5bd1e995u, size, step, tol,
                                  WarpDepthMode::kNearness,
                                  "total_objective_nearness", &rep.redraws, false));
  rep.all_pass = true;
  for (const GradcheckTerm& t : rep.terms) rep.all_pass = rep.all_pass && t.pass;
  return rep;
}

std::string GradcheckReport::to_text() const {
  std::string s;
  char buf[200];
  for (const GradcheckTerm& t : terms) {
    std::snprintf(buf, sizeof(buf), "%-26s max_rel_err %-12.3e params %-6ld %s\n",
                  t.name.c_str(), t.max_rel_err, t.n_params,
                  t.pass ? "PASS" : "FAIL");
    s += buf;
  }
  std::snprintf(buf, sizeof(buf), "redraws %d\nall %s\n", redraws,
                all_pass ? "PASS" : "FAIL");
  s += buf;
  return s;
}

}  // namespace sflow
