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

#include "sflow/losses.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace sflow {

namespace {

inline double sgn(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

// A pixel survives erosion when its whole clipped 3x3 neighborhood is valid,
// so SSIM window statistics never read a masked-out (zero-filled) sample.
std::vector<uint8_t> erode3x3(const OcclusionMask& m) {
  std::vector<uint8_t> out(m.w.size(), 0);
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      if (!m.at(x, y)) continue;
      bool all = true;
      const int x0 = std::max(0, x - 1), x1 = std::min(m.width - 1, x + 1);
      const int y0 = std::max(0, y - 1), y1 = std::min(m.height - 1, y + 1);
      for (int yy = y0; yy <= y1 && all; ++yy) {
        for (int xx = x0; xx <= x1; ++xx) {
          if (!m.at(xx, yy)) { all = false; break; }
        }
      }
      out[size_t(y) * m.width + x] = all ? 1 : 0;
    }
  }
  return out;
}

}  // namespace

double photometric_loss(const ImageBuffer& I_ref, const ImageBuffer& I_hat,
                        const OcclusionMask& mask, double alpha,
                        ImageBuffer* grad_Ihat, long* valid_count,
                        bool* empty_warn, double* min_abs_residual) {
  if (!I_ref.same_shape(I_hat)) {
    throw std::invalid_argument("photometric_loss: image shapes differ");
  }
  if (mask.width != I_ref.width() || mask.height != I_ref.height()) {
    throw std::invalid_argument("photometric_loss: mask shape differs");
  }
  const int W = I_ref.width(), H = I_ref.height(), C = I_ref.channels();
  if (grad_Ihat) *grad_Ihat = ImageBuffer(W, H, C, 0.0);

  std::vector<uint8_t> eff;
  if (alpha > 0.0) {
    eff = erode3x3(mask);
  } else {
    eff.assign(mask.w.begin(), mask.w.end());
  }
  long N = 0;
  for (uint8_t b : eff) N += b;
  if (valid_count) *valid_count = N;
  if (N == 0) {
    if (empty_warn) *empty_warn = true;
    return 0.0;
  }

  ImageBuffer S, upstream;
  if (alpha > 0.0) {
    S = ssim_map(I_ref, I_hat);
    if (grad_Ihat) upstream = ImageBuffer(W, H, C, 0.0);
  }
  const double norm = 1.0 / (double(N) * double(C));
  double acc = 0.0;
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      if (!eff[size_t(y) * W + x]) continue;
      for (int c = 0; c < C; ++c) {
        const double d = I_ref.at(x, y, c) - I_hat.at(x, y, c);
        if (min_abs_residual) {
          *min_abs_residual = std::min(*min_abs_residual, std::abs(d));
        }
        double term = (1.0 - alpha) * std::abs(d);
        if (alpha > 0.0) term += 0.5 * alpha * (1.0 - S.at(x, y, c));
        acc += term;
        if (grad_Ihat) {
          grad_Ihat->at(x, y, c) = -(1.0 - alpha) * sgn(d) * norm;
          if (alpha > 0.0) upstream.at(x, y, c) = -0.5 * alpha * norm;
        }
      }
    }
  }
  if (grad_Ihat && alpha > 0.0) {
    const ImageBuffer gs = ssim_backprop(I_hat, I_ref, upstream);
    for (size_t i = 0; i < grad_Ihat->data().size(); ++i) {
      grad_Ihat->data()[i] += gs.data()[i];
    }
  }
  return acc * norm;
}

double geometric_loss(const DepthMap& D_ref, const DepthMap& D_hat,
                      const std::vector<double>& Fz, const OcclusionMask& mask,
                      std::vector<double>* grad_Dref,
                      std::vector<double>* grad_Dhat,
                      std::vector<double>* grad_Fz, long* valid_count) {
  if (D_ref.width != D_hat.width || D_ref.height != D_hat.height ||
      D_ref.width != mask.width || D_ref.height != mask.height ||
      Fz.size() != size_t(D_ref.width) * D_ref.height) {
    throw std::invalid_argument("geometric_loss: shape mismatch");
  }
  const size_t n = size_t(D_ref.width) * D_ref.height;
  if (grad_Dref) grad_Dref->assign(n, 0.0);
  if (grad_Dhat) grad_Dhat->assign(n, 0.0);
  if (grad_Fz) grad_Fz->assign(n, 0.0);

  long N = 0;
  for (size_t i = 0; i < n; ++i) {
    if (mask.w[i] && D_ref.valid[i] && D_hat.valid[i]) ++N;
  }
  if (valid_count) *valid_count = N;
  if (N == 0) return 0.0;

  const double norm = 1.0 / double(N);
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) {
    if (!(mask.w[i] && D_ref.valid[i] && D_hat.valid[i])) continue;
    const double r = D_ref.depth[i] + Fz[i] - D_hat.depth[i];
    acc += std::abs(r);
    const double s = sgn(r) * norm;
    if (grad_Dref) (*grad_Dref)[i] = s;
    if (grad_Fz) (*grad_Fz)[i] = s;
    if (grad_Dhat) (*grad_Dhat)[i] = -s;
  }
  return acc * norm;
}

double smoothness_loss_raw(const double* field, int width, int height, int channels,
                           const std::vector<uint8_t>* field_valid,
                           const ImageBuffer& guide, double* grad_field,
                           long* site_count, double* min_abs_diff) {
  if (guide.width() != width || guide.height() != height) {
    throw std::invalid_argument("smoothness_loss_raw: guide shape differs");
  }
  const int Cg = guide.channels();
  if (grad_field) {
    std::fill(grad_field, grad_field + size_t(width) * height * channels, 0.0);
  }
  const auto valid_at = [&](int x, int y) {
    return !field_valid || (*field_valid)[size_t(y) * width + x] != 0;
  };

  long sites = 0;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x + 1 < width; ++x) {
      if (valid_at(x, y) && valid_at(x + 1, y)) ++sites;
    }
  }
  for (int y = 0; y + 1 < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (valid_at(x, y) && valid_at(x, y + 1)) ++sites;
    }
  }
  if (site_count) *site_count = sites;
  if (sites == 0) return 0.0;

  const double norm = 1.0 / (double(sites) * double(channels));
  double acc = 0.0;
  const auto edge = [&](int xa, int ya, int xb, int yb) {
    double g = 0.0;
    for (int c = 0; c < Cg; ++c) g += std::abs(guide.at(xb, yb, c) - guide.at(xa, ya, c));
    const double w = std::exp(-g / double(Cg));
    const size_t a = (size_t(ya) * width + xa) * channels;
    const size_t b = (size_t(yb) * width + xb) * channels;
    for (int c = 0; c < channels; ++c) {
      const double d = field[b + c] - field[a + c];
      acc += std::abs(d) * w;
      if (min_abs_diff) *min_abs_diff = std::min(*min_abs_diff, std::abs(d));
      if (grad_field) {
        grad_field[b + c] += sgn(d) * w * norm;
        grad_field[a + c] -= sgn(d) * w * norm;
      }
    }
  };
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x + 1 < width; ++x) {
      if (valid_at(x, y) && valid_at(x + 1, y)) edge(x, y, x + 1, y);
    }
  }
  for (int y = 0; y + 1 < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (valid_at(x, y) && valid_at(x, y + 1)) edge(x, y, x, y + 1);
    }
  }
  return acc * norm;
}

double smoothness_loss(const DepthMap& field, const ImageBuffer& guide,
                       std::vector<double>* grad, long* count) {
  if (grad) grad->assign(size_t(field.width) * field.height, 0.0);
  return smoothness_loss_raw(field.depth.data(), field.width, field.height, 1,
                             &field.valid, guide, grad ? grad->data() : nullptr,
                             count);
}

double smoothness_loss(const FlowField3D& field, const ImageBuffer& guide,
                       std::vector<double>* grad, long* count) {
  if (grad) grad->assign(size_t(field.width) * field.height * 3, 0.0);
  return smoothness_loss_raw(field.data.data(), field.width, field.height, 3,
                             nullptr, guide, grad ? grad->data() : nullptr, count);
}

double weak_disparity_loss(const DepthMap& D_pred, const DepthMap& disparity,
                           const Intrinsics& K, double baseline,
                           std::vector<double>* grad_D, long* valid_count,
                           double* min_abs_residual) {
  if (D_pred.width != disparity.width || D_pred.height != disparity.height) {
    throw std::invalid_argument("weak_disparity_loss: shape mismatch");
  }
  K.validate();
  const size_t n = size_t(D_pred.width) * D_pred.height;
  if (grad_D) grad_D->assign(n, 0.0);

  long N = 0;
  for (size_t i = 0; i < n; ++i) {
    if (disparity.valid[i] && D_pred.valid[i] && D_pred.depth[i] > 0.0) ++N;
  }
  if (valid_count) *valid_count = N;
  if (N == 0) return 0.0;

  const double fb = K.fx * baseline;
  const double norm = 1.0 / double(N);
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) {
    if (!(disparity.valid[i] && D_pred.valid[i] && D_pred.depth[i] > 0.0)) continue;
    const double d = D_pred.depth[i];
    const double r = fb / d - disparity.depth[i];
    acc += std::abs(r);
    if (min_abs_residual) *min_abs_residual = std::min(*min_abs_residual, std::abs(r));
    if (grad_D) (*grad_D)[i] = sgn(r) * (-fb / (d * d)) * norm;
  }
  return acc * norm;
}

void StateGrad::resize_like(const SceneState& s) {
  d_depth_t.assign(size_t(s.depth_t.width) * s.depth_t.height, 0.0);
  d_depth_t1.assign(size_t(s.depth_t1.width) * s.depth_t1.height, 0.0);
  rois.resize(s.rois.size());
  for (size_t j = 0; j < s.rois.size(); ++j) {
    rois[j].d_flow.assign(size_t(s.rois[j].width) * s.rois[j].height * 3, 0.0);
    rois[j].d_logits.assign(size_t(s.rois[j].width) * s.rois[j].height, 0.0);
  }
}

void StateGrad::set_zero() {
  std::fill(d_depth_t.begin(), d_depth_t.end(), 0.0);
  std::fill(d_depth_t1.begin(), d_depth_t1.end(), 0.0);
  for (RoiGrad& r : rois) {
    std::fill(r.d_flow.begin(), r.d_flow.end(), 0.0);
    std::fill(r.d_logits.begin(), r.d_logits.end(), 0.0);
  }
}

std::string LossReport::to_log_lines(long iter) const {
  const long total_count =
      lr.count + roi.count + temporal.count + smooth.count + weak.count;
  char buf[160];
  std::string s;
  const auto line = [&](const char* name, double v, long c) {
    std::snprintf(buf, sizeof(buf), "%ld %s %.17g %ld\n", iter, name, v, c);
    s += buf;
  };
  line("total", total, total_count);
  line("lr", lr.value, lr.count);
  line("roi", roi.value, roi.count);
  line("temporal", temporal.value, temporal.count);
  line("smooth", smooth.value, smooth.count);
  line("weak", weak.value, weak.count);
  return s;
}

namespace {

// -------- warp-based photometric + geometric term --------
//
// One evaluation of "reference image vs. source image warped back through
// (D_ref, F, T_rel)", optionally with the depth-consistency residual against
// a source-view depth map. The backward pass recomputes the (deterministic)
// per-pixel warp instead of storing it.

struct TermSinks {
  std::vector<double>* d_Dref = nullptr;  // += , laid out like D_ref
  std::vector<double>* d_F = nullptr;     // += , 3 interleaved like F
  std::vector<double>* d_Dsrc = nullptr;  // += , laid out like D_src
  bool any() const { return d_Dref || d_F || d_Dsrc; }
};

struct TermValues {
  double photo = 0.0;
  long photo_count = 0;
  double geo = 0.0;
  long geo_count = 0;
  bool empty = false;
};

void audit_warp(KinkAudit* a, const WarpResult& wr, bool flow_params) {
  // Distance to the bilinear cell boundary, normalized by the coordinate's
  // rate over the term's live parameters only: v under a pure-x stereo warp
  // sits exactly on the lattice but cannot move, and the flow columns only
  // count for terms that actually optimize a flow.
  const int n_cols = flow_params ? 4 : 1;
  const double pixel_scale = wr.jacobian.leftCols(n_cols).cwiseAbs().maxCoeff();
  for (int r = 0; r < 2; ++r) {
    const double coord = r == 0 ? wr.pixel.u : wr.pixel.v;
    const double dist = 0.5 * std::abs(2.0 * coord - std::round(2.0 * coord));
    const double rate = wr.jacobian.row(r).head(n_cols).cwiseAbs().maxCoeff();
    if (rate > 1e-9 * pixel_scale) {
      a->min_lattice_dist = std::min(a->min_lattice_dist, dist / rate);
    }
  }
  a->max_warp_sensitivity = std::max(a->max_warp_sensitivity, pixel_scale);
}

TermValues warp_term(const ImageBuffer& I_ref, const DepthMap& D_ref,
                     const FlowField3D* F, const ImageBuffer& I_src,
                     const DepthMap* D_src, const Intrinsics& K_ref,
                     const Intrinsics& K_src, const RigidTransform& T_rel,
                     const OcclusionMask& base_mask, const ObjectiveOptions& opts,
                     bool do_geo, TermSinks sinks, KinkAudit* audit) {
  const int W = D_ref.width, H = D_ref.height, C = I_ref.channels();
  if (I_ref.width() != W || I_ref.height() != H ||
      base_mask.width != W || base_mask.height != H ||
      (F && (F->width != W || F->height != H))) {
    throw std::invalid_argument("warp_term: reference shapes differ");
  }
  if (do_geo && !D_src) {
    throw std::invalid_argument("warp_term: geometric term needs a source depth");
  }
  const double tau = opts.occlusion_tau;

  TermValues out;
  ImageBuffer I_hat(W, H, C, 0.0);
  OcclusionMask M(W, H, 0);
  DepthMap Dhat(W, H);
  std::vector<double> Fz(do_geo ? size_t(W) * H : 0, 0.0);

  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      if (!base_mask.at(x, y) || !D_ref.is_valid(x, y)) continue;
      const Vec3 f = F ? F->at(x, y) : Vec3(Vec3::Zero());
      const WarpResult wr = warp_pixel(Pixel{double(x), double(y)},
                                       D_ref.at(x, y), f, K_ref, K_src, T_rel);
      if (!wr.valid) continue;
      if (audit) audit_warp(audit, wr, F != nullptr);
      const BilinearSample s = sample_bilinear(I_src, wr.pixel);
      if (!s.valid) continue;
      if (D_src) {
        const auto t = detail::make_tap(D_src->width, D_src->height, wr.pixel.u,
                                        wr.pixel.v, BorderMode::kInvalidate);
        if (!t.valid) continue;
        if (!D_src->is_valid(t.x0, t.y0) || !D_src->is_valid(t.x1, t.y0) ||
            !D_src->is_valid(t.x0, t.y1) || !D_src->is_valid(t.x1, t.y1)) {
          continue;
        }
        double dhat;
        if (opts.depth_mode == WarpDepthMode::kDepth) {
          dhat = t.w00() * D_src->at(t.x0, t.y0) + t.w10() * D_src->at(t.x1, t.y0) +
                 t.w01() * D_src->at(t.x0, t.y1) + t.w11() * D_src->at(t.x1, t.y1);
        } else {
          const double q =
              t.w00() / D_src->at(t.x0, t.y0) + t.w10() / D_src->at(t.x1, t.y0) +
              t.w01() / D_src->at(t.x0, t.y1) + t.w11() / D_src->at(t.x1, t.y1);
          dhat = 1.0 / q;
        }
        if (audit) {
          audit->min_occlusion_margin =
              std::min(audit->min_occlusion_margin,
                       std::abs(std::abs(wr.depth - dhat) - tau * wr.depth));
        }
        if (std::abs(wr.depth - dhat) > tau * wr.depth) continue;
        Dhat.at(x, y) = dhat;
        Dhat.valid[Dhat.idx(x, y)] = 1;
        if (do_geo) Fz[Dhat.idx(x, y)] = f.z();
      }
      for (int c = 0; c < C; ++c) I_hat.at(x, y, c) = s.value[c];
      M.set(x, y, 1);
    }
  }

  const bool want_grad = sinks.any();
  ImageBuffer gIhat;
  out.photo = photometric_loss(I_ref, I_hat, M, opts.weights.alpha,
                               want_grad ? &gIhat : nullptr, &out.photo_count,
                               &out.empty,
                               audit ? &audit->min_l1_residual : nullptr);
  std::vector<double> gDref, gDhat, gFz;
  if (do_geo) {
    out.geo = geometric_loss(D_ref, Dhat, Fz, M, want_grad ? &gDref : nullptr,
                             want_grad ? &gDhat : nullptr,
                             want_grad ? &gFz : nullptr, &out.geo_count);
    if (audit) {
      for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
          const size_t i = Dhat.idx(x, y);
          if (!(M.w[i] && D_ref.valid[i] && Dhat.valid[i])) continue;
          audit->min_l1_residual =
              std::min(audit->min_l1_residual,
                       std::abs(D_ref.depth[i] + Fz[i] - Dhat.depth[i]));
        }
      }
    }
  }
  if (!want_grad) return out;

  const double pw = opts.weights.lambda_p, gw = opts.weights.lambda_g;
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      if (!M.at(x, y)) continue;
      const size_t i = size_t(y) * W + x;
      const Vec3 f = F ? F->at(x, y) : Vec3(Vec3::Zero());
      const WarpResult wr = warp_pixel(Pixel{double(x), double(y)},
                                       D_ref.at(x, y), f, K_ref, K_src, T_rel);
      const BilinearSample s = sample_bilinear(I_src, wr.pixel);
      double du = 0.0, dv = 0.0;
      for (int c = 0; c < C; ++c) {
        const double g = pw * gIhat.at(x, y, c);
        du += g * s.du[c];
        dv += g * s.dv[c];
      }
      double d_Dref_direct = 0.0, d_Fz_direct = 0.0;
      if (do_geo && Dhat.valid[i]) {
        const double gh = gw * gDhat[i];
        const auto t = detail::make_tap(D_src->width, D_src->height, wr.pixel.u,
                                        wr.pixel.v, BorderMode::kInvalidate);
        const double z00 = D_src->at(t.x0, t.y0), z10 = D_src->at(t.x1, t.y0);
        const double z01 = D_src->at(t.x0, t.y1), z11 = D_src->at(t.x1, t.y1);
        if (opts.depth_mode == WarpDepthMode::kDepth) {
          du += gh * ((1.0 - t.ay) * (z10 - z00) + t.ay * (z11 - z01));
          dv += gh * ((1.0 - t.ax) * (z01 - z00) + t.ax * (z11 - z10));
          if (sinks.d_Dsrc) {
            (*sinks.d_Dsrc)[D_src->idx(t.x0, t.y0)] += gh * t.w00();
            (*sinks.d_Dsrc)[D_src->idx(t.x1, t.y0)] += gh * t.w10();
            (*sinks.d_Dsrc)[D_src->idx(t.x0, t.y1)] += gh * t.w01();
            (*sinks.d_Dsrc)[D_src->idx(t.x1, t.y1)] += gh * t.w11();
          }
        } else {
          const double r00 = 1.0 / z00, r10 = 1.0 / z10;
          const double r01 = 1.0 / z01, r11 = 1.0 / z11;
          const double q = t.w00() * r00 + t.w10() * r10 + t.w01() * r01 +
                           t.w11() * r11;
          const double inv_q2 = 1.0 / (q * q);
          du += gh * (-inv_q2) * ((1.0 - t.ay) * (r10 - r00) + t.ay * (r11 - r01));
          dv += gh * (-inv_q2) * ((1.0 - t.ax) * (r01 - r00) + t.ax * (r11 - r10));
          if (sinks.d_Dsrc) {
            (*sinks.d_Dsrc)[D_src->idx(t.x0, t.y0)] += gh * inv_q2 * t.w00() * r00 * r00;
            (*sinks.d_Dsrc)[D_src->idx(t.x1, t.y0)] += gh * inv_q2 * t.w10() * r10 * r10;
            (*sinks.d_Dsrc)[D_src->idx(t.x0, t.y1)] += gh * inv_q2 * t.w01() * r01 * r01;
            (*sinks.d_Dsrc)[D_src->idx(t.x1, t.y1)] += gh * inv_q2 * t.w11() * r11 * r11;
          }
        }
        d_Dref_direct = gw * gDref[i];
        d_Fz_direct = gw * gFz[i];
      }
      const auto& J = wr.jacobian;
      if (sinks.d_Dref) {
        (*sinks.d_Dref)[i] += du * J(0, 0) + dv * J(1, 0) + d_Dref_direct;
      }
      if (sinks.d_F) {
        (*sinks.d_F)[3 * i + 0] += du * J(0, 1) + dv * J(1, 1);
        (*sinks.d_F)[3 * i + 1] += du * J(0, 2) + dv * J(1, 2);
        (*sinks.d_F)[3 * i + 2] += du * J(0, 3) + dv * J(1, 3) + d_Fz_direct;
      }
    }
  }
  return out;
}

// -------- flow assembly with a backprop context --------
//
// Mirrors assemble_flow() arithmetic exactly; additionally remembers, per
// pixel, every covering region's resampled mask/flow so the gradient can be
// scattered back without re-deriving the forward decisions.

struct AsmEntry {
  int roi = 0;
  detail::BilinearTap tap;
  double m = 0.0;
  Vec3 f = Vec3::Zero();
};

struct AsmCtx {
  FlowField3D F;
  std::vector<AsmEntry> entries;
  std::vector<int> begin;  // W*H + 1 offsets into entries
  std::vector<double> ssum;
};

AsmCtx assemble_with_context(const std::vector<RoiPrediction>& rois, int width,
                             int height, KinkAudit* audit) {
  AsmCtx ctx;
  ctx.F = FlowField3D(width, height);
  ctx.begin.assign(size_t(width) * height + 1, 0);
  ctx.ssum.assign(size_t(width) * height, 0.0);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const size_t i = size_t(y) * width + x;
      ctx.begin[i] = int(ctx.entries.size());
      double s = 0.0;
      for (size_t j = 0; j < rois.size(); ++j) {
        const RoiPrediction& r = rois[j];
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
        AsmEntry e;
        e.roi = int(j);
        e.tap = t;
        e.m = lerp([&](int a, int b) { return r.mask_at(a, b); });
        e.f = Vec3(lerp([&](int a, int b) { return r.flow_at(a, b).x(); }),
                   lerp([&](int a, int b) { return r.flow_at(a, b).y(); }),
                   lerp([&](int a, int b) { return r.flow_at(a, b).z(); }));
        s += e.m;
        ctx.entries.push_back(e);
      }
      ctx.ssum[i] = s;
      const int n = int(ctx.entries.size()) - ctx.begin[i];
      if (n == 0) continue;
      if (audit) {
        audit->min_renorm_margin =
            std::min(audit->min_renorm_margin, std::abs(s - 1.0));
      }
      const double scale = s > 1.0 ? 1.0 / s : 1.0;
      Vec3 acc = Vec3::Zero();
      for (int k = ctx.begin[i]; k < int(ctx.entries.size()); ++k) {
        acc += (ctx.entries[k].m * scale) * ctx.entries[k].f;
      }
      ctx.F.set(x, y, acc);
    }
  }
  ctx.begin[size_t(width) * height] = int(ctx.entries.size());
  return ctx;
}

void assemble_backprop(const AsmCtx& ctx, const std::vector<RoiPrediction>& rois,
                       const std::vector<double>& dF, StateGrad* grad) {
  const int W = ctx.F.width, H = ctx.F.height;
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const size_t i = size_t(y) * W + x;
      const int b = ctx.begin[i], e = ctx.begin[i + 1];
      if (b == e) continue;
      const Vec3 gF(dF[3 * i], dF[3 * i + 1], dF[3 * i + 2]);
      if (gF.isZero(0.0)) continue;
      const double s = ctx.ssum[i];
      const double scale = s > 1.0 ? 1.0 / s : 1.0;
      const Vec3 Fv = ctx.F.at(x, y);
      for (int k = b; k < e; ++k) {
        const AsmEntry& en = ctx.entries[k];
        const RoiPrediction& r = rois[size_t(en.roi)];
        StateGrad::RoiGrad& rg = grad->rois[size_t(en.roi)];
        const Vec3 df = (en.m * scale) * gF;
        const double dm = s > 1.0 ? gF.dot((en.f - Fv) / s) : gF.dot(en.f);
        const auto scatter = [&](int xa, int ya, double w) {
          const size_t p = r.idx(xa, ya);
          rg.d_flow[3 * p + 0] += w * df.x();
          rg.d_flow[3 * p + 1] += w * df.y();
          rg.d_flow[3 * p + 2] += w * df.z();
          const double sig = r.mask_at(xa, ya);
          rg.d_logits[p] += dm * w * sig * (1.0 - sig);
        };
        scatter(en.tap.x0, en.tap.y0, en.tap.w00());
        scatter(en.tap.x1, en.tap.y0, en.tap.w10());
        scatter(en.tap.x0, en.tap.y1, en.tap.w01());
        scatter(en.tap.x1, en.tap.y1, en.tap.w11());
      }
    }
  }
}

// Scatters a crop-resolution gradient back through the fixed resampling taps
// of crop_resize_depth.
void scatter_crop_grad(const std::vector<double>& g_crop, const RoiBox& box,
                       int w_r, int h_r, int full_w, int full_h,
                       std::vector<double>* d_full) {
  const double sx = box.w / w_r, sy = box.h / h_r;
  for (int j = 0; j < h_r; ++j) {
    for (int i = 0; i < w_r; ++i) {
      const double gv = g_crop[size_t(j) * w_r + i];
      if (gv == 0.0) continue;
      const double u = box.x + i * sx, v = box.y + j * sy;
      const auto t = detail::make_tap(full_w, full_h, u, v, BorderMode::kClamp);
      (*d_full)[size_t(t.y0) * full_w + t.x0] += gv * t.w00();
      (*d_full)[size_t(t.y0) * full_w + t.x1] += gv * t.w10();
      (*d_full)[size_t(t.y1) * full_w + t.x0] += gv * t.w01();
      (*d_full)[size_t(t.y1) * full_w + t.x1] += gv * t.w11();
    }
  }
}

}  // namespace

LossReport total_objective(const SceneState& state, const StereoQuad& quad,
                           const CameraRig& rig, const ObjectiveOptions& opts,
                           StateGrad* grad, const DepthMap* weak_disp_t,
                           const DepthMap* weak_disp_t1, KinkAudit* audit) {
  const int W = quad.left_t.width(), H = quad.left_t.height();
  if (!quad.left_t.same_shape(quad.right_t) ||
      !quad.left_t.same_shape(quad.left_t1) ||
      !quad.left_t.same_shape(quad.right_t1)) {
    throw std::invalid_argument("total_objective: the four views differ in shape");
  }
  if (state.depth_t.width != W || state.depth_t.height != H ||
      state.depth_t1.width != W || state.depth_t1.height != H) {
    throw std::invalid_argument("total_objective: depth/image shapes differ");
  }
  for (const RoiPrediction& r : state.rois) {
    if (!r.box.is_valid() || r.width <= 0 || r.height <= 0) {
      throw std::invalid_argument("total_objective: malformed RoI prediction");
    }
  }
  const Intrinsics& K = rig.intrinsics;
  K.validate();
  if (grad) grad->resize_like(state);

  const LossWeights& wt = opts.weights;
  LossReport rep;
  const RigidTransform T_t1_t =
      rig.relative(CameraRig::kLeftT1, CameraRig::kLeftT);

  // Left/right photometric terms, zero flow, visibility from the depth alone.
  const struct {
    const ImageBuffer* ref;
    const ImageBuffer* src;
    const DepthMap* depth;
    CameraRig::Cam right, left;
    std::vector<double>* sink;
  } lr_specs[2] = {
      {&quad.left_t, &quad.right_t, &state.depth_t, CameraRig::kRightT,
       CameraRig::kLeftT, grad ? &grad->d_depth_t : nullptr},
      {&quad.left_t1, &quad.right_t1, &state.depth_t1, CameraRig::kRightT1,
       CameraRig::kLeftT1, grad ? &grad->d_depth_t1 : nullptr},
  };
  for (const auto& spec : lr_specs) {
    const RigidTransform T = rig.relative(spec.right, spec.left);
    const OcclusionMask vis = stereo_visibility_mask(
        *spec.depth, K, K, T, opts.occlusion_tau, 1.0,
        audit ? &audit->min_occlusion_margin : nullptr);
    TermSinks sinks;
    sinks.d_Dref = spec.sink;
    const TermValues tv = warp_term(*spec.ref, *spec.depth, nullptr, *spec.src,
                                    nullptr, K, K, T, vis, opts, false, sinks,
                                    audit);
    rep.lr.value += wt.lambda_p * tv.photo;
    rep.lr.count += tv.photo_count;
    rep.empty_warp_warning = rep.empty_warp_warning || tv.empty;
  }

  if (opts.motion_terms) {
    AsmCtx actx = assemble_with_context(state.rois, W, H, audit);
    std::vector<double> dF_up;
    if (grad) dF_up.assign(size_t(W) * H * 3, 0.0);

    // Full-frame temporal term on the assembled flow.
    {
      TermSinks sinks;
      if (grad) {
        sinks.d_Dref = &grad->d_depth_t;
        sinks.d_F = &dF_up;
        sinks.d_Dsrc = &grad->d_depth_t1;
      }
      const OcclusionMask ones = OcclusionMask::ones(W, H);
      const TermValues tv =
          warp_term(quad.left_t, state.depth_t, &actx.F, quad.left_t1,
                    &state.depth_t1, K, K, T_t1_t, ones, opts, true, sinks, audit);
      rep.temporal.value = wt.lambda_p * tv.photo + wt.lambda_g * tv.geo;
      rep.temporal.count = tv.photo_count + tv.geo_count;
      rep.empty_warp_warning = rep.empty_warp_warning || tv.empty;
    }

    // Per-region terms at crop resolution with crop intrinsics.
    for (size_t j = 0; j < state.rois.size(); ++j) {
      const RoiPrediction& r = state.rois[j];
      const CropResult ref_crop = crop_resize(quad.left_t, K, r.box, r.width, r.height);
      const CropDepthResult ref_depth =
          crop_resize_depth(state.depth_t, K, r.box, r.width, r.height);
      const RoiBox eb = expand_box(r.box, opts.roi_expand, W, H);
      const int w_e = std::max(1, int(std::lround(r.width * eb.w / r.box.w)));
      const int h_e = std::max(1, int(std::lround(r.height * eb.h / r.box.h)));
      const CropResult src_crop = crop_resize(quad.left_t1, K, eb, w_e, h_e);
      const CropDepthResult src_depth =
          crop_resize_depth(state.depth_t1, K, eb, w_e, h_e);
      FlowField3D fj(r.width, r.height);
      fj.data = r.flow;

      std::vector<double> dDj, dDsrcj;
      TermSinks sinks;
      if (grad) {
        dDj.assign(size_t(r.width) * r.height, 0.0);
        dDsrcj.assign(size_t(w_e) * h_e, 0.0);
        sinks.d_Dref = &dDj;
        sinks.d_F = &grad->rois[j].d_flow;
        sinks.d_Dsrc = &dDsrcj;
      }
      const OcclusionMask ones = OcclusionMask::ones(r.width, r.height);
      const TermValues tv = warp_term(ref_crop.image, ref_depth.depth, &fj,
                                      src_crop.image, &src_depth.depth,
                                      ref_crop.intrinsics, src_crop.intrinsics,
                                      T_t1_t, ones, opts, true, sinks, audit);
      rep.roi.value += wt.lambda_p * tv.photo + wt.lambda_g * tv.geo;
      rep.roi.count += tv.photo_count + tv.geo_count;
      rep.empty_warp_warning = rep.empty_warp_warning || tv.empty;
      if (grad) {
        scatter_crop_grad(dDj, r.box, r.width, r.height, W, H, &grad->d_depth_t);
        scatter_crop_grad(dDsrcj, eb, w_e, h_e, W, H, &grad->d_depth_t1);
      }
    }

    // Assembled-flow smoothness, then one scatter of all flow gradients.
    {
      std::vector<double> gs;
      if (grad) gs.assign(size_t(W) * H * 3, 0.0);
      long cnt = 0;
      const double v = smoothness_loss_raw(actx.F.data.data(), W, H, 3, nullptr,
                                           quad.left_t,
                                           grad ? gs.data() : nullptr, &cnt,
                                           nullptr);
      rep.smooth.value += wt.lambda_s * v;
      rep.smooth.count += cnt;
      if (grad) {
        for (size_t i = 0; i < gs.size(); ++i) dF_up[i] += wt.lambda_s * gs[i];
        assemble_backprop(actx, state.rois, dF_up, grad);
      }
      if (audit) {
        // Audit only differences with a parameter-dependent endpoint; pixels
        // outside every box hold structural zeros that no parameter can move.
        const auto covered = [&](int x, int y) {
          const size_t i = size_t(y) * W + x;
          return actx.begin[i + 1] > actx.begin[i];
        };
        const auto fold = [&](int x0, int y0, int x1, int y1) {
          if (!covered(x0, y0) && !covered(x1, y1)) return;
          const Vec3 d = actx.F.at(x0, y0) - actx.F.at(x1, y1);
          for (int c = 0; c < 3; ++c) {
            audit->min_l1_residual =
                std::min(audit->min_l1_residual, std::abs(d[c]));
          }
        };
        for (int y = 0; y < H; ++y) {
          for (int x = 0; x < W; ++x) {
            if (x + 1 < W) fold(x, y, x + 1, y);
            if (y + 1 < H) fold(x, y, x, y + 1);
          }
        }
      }
    }
  }

  // Depth smoothness for both instants.
  const struct {
    const DepthMap* depth;
    const ImageBuffer* guide;
    std::vector<double>* sink;
  } sm_specs[2] = {
      {&state.depth_t, &quad.left_t, grad ? &grad->d_depth_t : nullptr},
      {&state.depth_t1, &quad.left_t1, grad ? &grad->d_depth_t1 : nullptr},
  };
  for (const auto& spec : sm_specs) {
    std::vector<double> gs;
    if (grad) gs.assign(size_t(W) * H, 0.0);
    long cnt = 0;
    const double v = smoothness_loss_raw(
        spec.depth->depth.data(), W, H, 1, &spec.depth->valid, *spec.guide,
        grad ? gs.data() : nullptr, &cnt,
        audit ? &audit->min_l1_residual : nullptr);
    rep.smooth.value += wt.lambda_s * v;
    rep.smooth.count += cnt;
    if (grad) {
      for (size_t i = 0; i < gs.size(); ++i) (*spec.sink)[i] += wt.lambda_s * gs[i];
    }
  }

  // Optional weak disparity supervision.
  const struct {
    const DepthMap* depth;
    const DepthMap* disp;
    std::vector<double>* sink;
  } wk_specs[2] = {
      {&state.depth_t, weak_disp_t, grad ? &grad->d_depth_t : nullptr},
      {&state.depth_t1, weak_disp_t1, grad ? &grad->d_depth_t1 : nullptr},
  };
  for (const auto& spec : wk_specs) {
    if (!spec.disp) continue;
    std::vector<double> gw;
    long cnt = 0;
    const double v = weak_disparity_loss(
        *spec.depth, *spec.disp, K, rig.baseline(), grad ? &gw : nullptr, &cnt,
        audit ? &audit->min_l1_residual : nullptr);
    rep.weak.value += wt.lambda_w * v;
    rep.weak.count += cnt;
    if (grad) {
      for (size_t i = 0; i < gw.size(); ++i) (*spec.sink)[i] += wt.lambda_w * gw[i];
    }
  }

  rep.total = rep.lr.value + rep.roi.value + rep.temporal.value +
              rep.smooth.value + rep.weak.value;
  return rep;
}

}  // namespace sflow
