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

#include "sflow/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace sflow {

namespace {

constexpr double kRad2Deg = 180.0 / 3.14159265358979323846;

// Lower middle element on even counts; mutates its scratch argument.
double lower_median(std::vector<double>& v) {
  std::sort(v.begin(), v.end());
  return v[(v.size() - 1) / 2];
}

std::string fmt_opt(const std::optional<double>& v) {
  if (!v) return "absent";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", *v);
  return buf;
}

}  // namespace

std::optional<Vec3> dominant_flow(const FlowField3D& flow, const OcclusionMask& mask) {
  if (flow.width != mask.width || flow.height != mask.height) {
    throw std::invalid_argument("dominant_flow: shape mismatch");
  }
  std::vector<double> xs, ys, zs;
  for (int y = 0; y < flow.height; ++y) {
    for (int x = 0; x < flow.width; ++x) {
      if (!mask.at(x, y)) continue;
      const Vec3 f = flow.at(x, y);
      xs.push_back(f.x());
      ys.push_back(f.y());
      zs.push_back(f.z());
    }
  }
  if (xs.empty()) return std::nullopt;
  return Vec3(lower_median(xs), lower_median(ys), lower_median(zs));
}

AngularSpeedStats angular_speed_stats(const std::vector<Vec3>& pred,
                                      const std::vector<Vec3>& gt,
                                      double se_thresh_lo, double se_thresh_hi) {
  if (pred.size() != gt.size()) {
    throw std::invalid_argument("angular_speed_stats: instance counts differ");
  }
  std::vector<double> angles, speeds;
  for (size_t i = 0; i < pred.size(); ++i) {
    const double np = pred[i].norm(), ng = gt[i].norm();
    speeds.push_back(std::abs(np - ng));
    if (ng == 0.0) continue;  // direction undefined, speed still counted
    const double denom = std::max(np * ng, 1e-300);
    const double c = std::clamp(pred[i].dot(gt[i]) / denom, -1.0, 1.0);
    angles.push_back(std::acos(c) * kRad2Deg);
  }
  AngularSpeedStats s;
  s.angle_count = long(angles.size());
  s.speed_count = long(speeds.size());
  if (!angles.empty()) {
    double sum = 0.0;
    long le15 = 0, le30 = 0;
    for (double a : angles) {
      sum += a;
      if (a <= 15.0) ++le15;
      if (a <= 30.0) ++le30;
    }
    s.amae = sum / double(angles.size());
    std::vector<double> scratch = angles;
    s.amad = lower_median(scratch);
    s.ae_le_15 = 100.0 * double(le15) / double(angles.size());
    s.ae_le_30 = 100.0 * double(le30) / double(angles.size());
  }
  if (!speeds.empty()) {
    double sum = 0.0;
    long lo = 0, hi = 0;
    for (double e : speeds) {
      sum += e;
      if (e <= se_thresh_lo) ++lo;
      if (e <= se_thresh_hi) ++hi;
    }
    s.smae = sum / double(speeds.size());
    std::vector<double> scratch = speeds;
    s.smad = lower_median(scratch);
    s.se_le_015 = 100.0 * double(lo) / double(speeds.size());
    s.se_le_03 = 100.0 * double(hi) / double(speeds.size());
  }
  return s;
}

double flow_epe(const ImageBuffer& pred, const ImageBuffer& gt,
                const OcclusionMask& mask, long* count) {
  if (!pred.same_shape(gt) || pred.channels() != 2) {
    throw std::invalid_argument("flow_epe: need matching 2-channel fields");
  }
  double sum = 0.0;
  long n = 0;
  for (int y = 0; y < pred.height(); ++y) {
    for (int x = 0; x < pred.width(); ++x) {
      if (!mask.at(x, y)) continue;
      const double gu = gt.at(x, y, 0), gv = gt.at(x, y, 1);
      const double pu = pred.at(x, y, 0), pv = pred.at(x, y, 1);
      if (!std::isfinite(gu) || !std::isfinite(gv)) continue;
      if (!std::isfinite(pu) || !std::isfinite(pv)) continue;
      const double du = pu - gu, dv = pv - gv;
      sum += std::sqrt(du * du + dv * dv);
      ++n;
    }
  }
  if (count) *count = n;
  return n > 0 ? sum / double(n) : 0.0;
}

OutlierRates outlier_rates(const ImageBuffer& pred, const ImageBuffer& gt,
                           const OcclusionMask& fg_mask,
                           double abs_thresh, double rel_thresh) {
  if (!pred.same_shape(gt) || (pred.channels() != 1 && pred.channels() != 2)) {
    throw std::invalid_argument("outlier_rates: need matching 1- or 2-channel maps");
  }
  long n_bg = 0, n_fg = 0, out_bg = 0, out_fg = 0;
  for (int y = 0; y < pred.height(); ++y) {
    for (int x = 0; x < pred.width(); ++x) {
      double err, mag;
      if (pred.channels() == 1) {
        const double g = gt.at(x, y, 0);
        if (!std::isfinite(g)) continue;
        const double p = pred.at(x, y, 0);
        err = std::isfinite(p) ? std::abs(p - g) : std::numeric_limits<double>::infinity();
        mag = std::abs(g);
      } else {
        const double gu = gt.at(x, y, 0), gv = gt.at(x, y, 1);
        if (!std::isfinite(gu) || !std::isfinite(gv)) continue;
        const double pu = pred.at(x, y, 0), pv = pred.at(x, y, 1);
        if (std::isfinite(pu) && std::isfinite(pv)) {
          err = std::sqrt((pu - gu) * (pu - gu) + (pv - gv) * (pv - gv));
        } else {
          err = std::numeric_limits<double>::infinity();
        }
        mag = std::sqrt(gu * gu + gv * gv);
      }
      const bool ok = err <= abs_thresh || err <= rel_thresh * mag;
      if (fg_mask.at(x, y)) {
        ++n_fg;
        if (!ok) ++out_fg;
      } else {
        ++n_bg;
        if (!ok) ++out_bg;
      }
    }
  }
  OutlierRates r;
  r.n_bg = n_bg;
  r.n_fg = n_fg;
  if (n_bg > 0) r.bg = 100.0 * double(out_bg) / double(n_bg);
  if (n_fg > 0) r.fg = 100.0 * double(out_fg) / double(n_fg);
  if (n_bg + n_fg > 0) r.all = 100.0 * double(out_bg + out_fg) / double(n_bg + n_fg);
  return r;
}

double mask_iou(const OcclusionMask& pred, const OcclusionMask& gt) {
  if (pred.width != gt.width || pred.height != gt.height) {
    throw std::invalid_argument("mask_iou: shape mismatch");
  }
  long inter = 0, uni = 0;
  for (size_t i = 0; i < pred.w.size(); ++i) {
    const bool a = pred.w[i] != 0, b = gt.w[i] != 0;
    inter += (a && b) ? 1 : 0;
    uni += (a || b) ? 1 : 0;
  }
  if (uni == 0) return 1.0;
  return double(inter) / double(uni);
}

std::optional<double> instance_iou(const OcclusionMask& pred,
                                   const std::vector<OcclusionMask>& gt_instances,
                                   const std::vector<RoiBox>* boxes) {
  if (gt_instances.empty()) return std::nullopt;
  double sum = 0.0;
  long n = 0;
  for (size_t k = 0; k < gt_instances.size(); ++k) {
    const OcclusionMask& g = gt_instances[k];
    int x0 = g.width, y0 = g.height, x1 = -1, y1 = -1;
    if (boxes && k < boxes->size()) {
      const RoiBox& b = (*boxes)[k];
      x0 = std::max(0, int(std::floor(b.x)));
      y0 = std::max(0, int(std::floor(b.y)));
      x1 = std::min(g.width - 1, int(std::ceil(b.x + b.w)) - 1);
      y1 = std::min(g.height - 1, int(std::ceil(b.y + b.h)) - 1);
    } else {
      for (int y = 0; y < g.height; ++y) {
        for (int x = 0; x < g.width; ++x) {
          if (!g.at(x, y)) continue;
          x0 = std::min(x0, x); x1 = std::max(x1, x);
          y0 = std::min(y0, y); y1 = std::max(y1, y);
        }
      }
    }
    if (x1 < x0 || y1 < y0) continue;  // empty instance, no box: skip
    long inter = 0, uni = 0;
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const bool a = pred.at(x, y) != 0, b = g.at(x, y) != 0;
        inter += (a && b) ? 1 : 0;
        uni += (a || b) ? 1 : 0;
      }
    }
    sum += uni == 0 ? 1.0 : double(inter) / double(uni);
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / double(n);
}

ImageBuffer project_flow_2d(const FlowField3D& F, const DepthMap& D,
                            const Intrinsics& K_ref, const Intrinsics& K_dst,
                            const RigidTransform& T_rel) {
  if (F.width != D.width || F.height != D.height) {
    throw std::invalid_argument("project_flow_2d: shape mismatch");
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  ImageBuffer out(F.width, F.height, 2, nan);
  for (int y = 0; y < F.height; ++y) {
    for (int x = 0; x < F.width; ++x) {
      if (!D.is_valid(x, y)) continue;
      const WarpResult w = warp_pixel(Pixel{double(x), double(y)}, D.at(x, y),
                                      F.at(x, y), K_ref, K_dst, T_rel);
      if (!w.valid) continue;
      out.at(x, y, 0) = w.pixel.u - double(x);
      out.at(x, y, 1) = w.pixel.v - double(y);
    }
  }
  return out;
}

std::string MetricReport::to_key_values() const {
  std::string s;
  const auto put = [&s](const char* k, const std::optional<double>& v) {
    s += k;
    s += " = ";
    s += fmt_opt(v);
    s += "\n";
  };
  put("amae", flow3d.amae);
  put("amad", flow3d.amad);
  put("ae_le_15", flow3d.ae_le_15);
  put("ae_le_30", flow3d.ae_le_30);
  put("smae", flow3d.smae);
  put("smad", flow3d.smad);
  put("se_le_015", flow3d.se_le_015);
  put("se_le_03", flow3d.se_le_03);
  put("epe_all", epe_all);
  put("epe_noc", epe_noc);
  put("d1_bg", d1.bg); put("d1_fg", d1.fg); put("d1_all", d1.all);
  put("d2_bg", d2.bg); put("d2_fg", d2.fg); put("d2_all", d2.all);
  put("fl_bg", fl.bg); put("fl_fg", fl.fg); put("fl_all", fl.all);
  put("iou_image", iou_image);
  put("iou_instance", iou_instance);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "n_instances = %ld\n", n_instances);
  s += buf;
  return s;
}

std::string MetricReport::to_table() const {
  std::string s;
  char buf[160];
  const auto row = [&](const char* name, const std::optional<double>& v,
                       const char* unit) {
    if (v) {
      std::snprintf(buf, sizeof(buf), "  %-12s %10.4f %s\n", name, *v, unit);
    } else {
      std::snprintf(buf, sizeof(buf), "  %-12s %10s\n", name, "absent");
    }
    s += buf;
  };
  s += "3D flow (per instance):\n";
  row("AMAE", flow3d.amae, "deg");
  row("AMAD", flow3d.amad, "deg");
  row("AE<=15", flow3d.ae_le_15, "%");
  row("AE<=30", flow3d.ae_le_30, "%");
  row("SMAE", flow3d.smae, "u/frame");
  row("SMAD", flow3d.smad, "u/frame");
  row("SE<=0.15", flow3d.se_le_015, "%");
  row("SE<=0.3", flow3d.se_le_03, "%");
  s += "2D flow:\n";
  row("EPE all", epe_all, "px");
  row("EPE noc", epe_noc, "px");
  s += "Outlier rates (bg / fg / all, %):\n";
  const auto rates = [&](const char* name, const OutlierRates& r) {
    std::snprintf(buf, sizeof(buf), "  %-12s %10s %10s %10s\n", name,
                  fmt_opt(r.bg).c_str(), fmt_opt(r.fg).c_str(),
                  fmt_opt(r.all).c_str());
    s += buf;
  };
  rates("D1", d1);
  rates("D2", d2);
  rates("FL", fl);
  s += "Segmentation:\n";
  row("IoU image", iou_image, "");
  row("IoU instance", iou_instance, "");
  std::snprintf(buf, sizeof(buf), "  %-12s %10ld\n", "instances", n_instances);
  s += buf;
  return s;
}

}  // namespace sflow
