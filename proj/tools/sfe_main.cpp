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

// Command-line driver: generate synthetic bundles, solve for scene state,
// evaluate against ground truth, audit gradients, and render quick plots.
// Exit codes: 0 ok, 1 check failed, 2 bad input, 3 numerical failure.

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sflow/gradcheck.hpp"
#include "sflow/io.hpp"
#include "sflow/metrics.hpp"
#include "sflow/solver.hpp"

namespace fs = std::filesystem;
using namespace sflow;

namespace {

constexpr int kOk = 0, kCheckFailed = 1, kBadInput = 2, kNumerical = 3;

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

// ---- ground truth for evaluation; occlusion and instances may be absent ----

struct EvalGt {
  CameraRig rig;
  DepthMap depth_t, depth_t1;
  FlowField3D flow;
  std::vector<OcclusionMask> instances;
  std::optional<OcclusionMask> occ_temporal;
};

EvalGt load_eval_gt(const fs::path& dir) {
  EvalGt gt;
  bool have_rig = false, have_dt = false, have_dt1 = false, have_flow = false;
  // Reuse the bundle manifest but only demand what the metrics need.
  std::ifstream is(dir / "manifest.txt");
  if (!is) throw IoError((dir / "manifest.txt").string() + ": cannot open");
  std::string role, file;
  while (is >> role >> file) {
    const fs::path p = dir / file;
    if (role == "cameras") {
      gt.rig = read_cameras(p);
      have_rig = true;
    } else if (role == "depth_t") {
      gt.depth_t = read_fmap_depth(p);
      have_dt = true;
    } else if (role == "depth_t1") {
      gt.depth_t1 = read_fmap_depth(p);
      have_dt1 = true;
    } else if (role == "flow") {
      gt.flow = read_fmap_flow(p);
      have_flow = true;
    } else if (role == "instance_mask") {
      gt.instances.push_back(read_mask_pgm(p));
    } else if (role == "occ_temporal") {
      gt.occ_temporal = read_mask_pgm(p);
    }
  }
  if (!have_rig || !have_dt || !have_dt1 || !have_flow) {
    throw IoError(dir.string() + ": ground truth needs cameras, depths and flow");
  }
  return gt;
}

EvalGt gt_from_bundle(const GroundTruthBundle& b) {
  EvalGt gt;
  gt.rig = b.rig;
  gt.depth_t = b.depth_t;
  gt.depth_t1 = b.depth_t1;
  gt.flow = b.flow;
  gt.instances = b.instance_masks;
  gt.occ_temporal = b.occ_temporal;
  return gt;
}

// ---- metric assembly shared by `solve` and `eval` ----

ImageBuffer disparity_map(const DepthMap& d, double fb) {
  ImageBuffer o(d.width, d.height, 1, std::nan(""));
  for (size_t i = 0; i < d.depth.size(); ++i) {
    if (d.valid[i] && d.depth[i] > 1e-9) o.data()[i] = fb / d.depth[i];
  }
  return o;
}

ImageBuffer second_disparity_map(const DepthMap& d, const FlowField3D& f, double fb) {
  ImageBuffer o(d.width, d.height, 1, std::nan(""));
  for (int y = 0; y < d.height; ++y) {
    for (int x = 0; x < d.width; ++x) {
      const size_t i = d.idx(x, y);
      if (!d.valid[i]) continue;
      const double z2 = d.depth[i] + f.at(x, y).z();
      if (z2 > 1e-9) o.data()[i] = fb / z2;
    }
  }
  return o;
}

MetricReport compute_metrics(const DepthMap& pred_depth_t,
                             const FlowField3D& pred_flow,
                             const OcclusionMask* pred_moving, const EvalGt& gt,
                             double moving_threshold) {
  const int W = gt.depth_t.width, H = gt.depth_t.height;
  if (pred_depth_t.width != W || pred_depth_t.height != H ||
      pred_flow.width != W || pred_flow.height != H ||
      (pred_moving && (pred_moving->width != W || pred_moving->height != H))) {
    throw IoError("prediction / ground truth shape mismatch");
  }

  MetricReport rep;
  rep.n_instances = long(gt.instances.size());

  std::vector<Vec3> pred_v, gt_v;
  for (const OcclusionMask& inst : gt.instances) {
    const std::optional<Vec3> p = dominant_flow(pred_flow, inst);
    const std::optional<Vec3> g = dominant_flow(gt.flow, inst);
    if (p && g) {
      pred_v.push_back(*p);
      gt_v.push_back(*g);
    }
  }
  rep.flow3d = angular_speed_stats(pred_v, gt_v);

  const Intrinsics& K = gt.rig.intrinsics;
  const RigidTransform T = gt.rig.relative(CameraRig::kLeftT1, CameraRig::kLeftT);
  const ImageBuffer p2 = project_flow_2d(pred_flow, pred_depth_t, K, K, T);
  const ImageBuffer g2 = project_flow_2d(gt.flow, gt.depth_t, K, K, T);

  OcclusionMask everywhere(W, H, 1);
  long cnt = 0;
  const double epe = flow_epe(p2, g2, everywhere, &cnt);
  if (cnt > 0) rep.epe_all = epe;
  if (gt.occ_temporal) {
    const double e = flow_epe(p2, g2, *gt.occ_temporal, &cnt);
    if (cnt > 0) rep.epe_noc = e;
  }

  OcclusionMask fg(W, H, 0);
  for (const OcclusionMask& inst : gt.instances) {
    for (size_t i = 0; i < fg.w.size(); ++i) fg.w[i] |= inst.w[i];
  }
  const double fb = K.fx * gt.rig.baseline();
  rep.d1 = outlier_rates(disparity_map(pred_depth_t, fb),
                         disparity_map(gt.depth_t, fb), fg);
  rep.d2 = outlier_rates(second_disparity_map(pred_depth_t, pred_flow, fb),
                         second_disparity_map(gt.depth_t, gt.flow, fb), fg);
  rep.fl = outlier_rates(p2, g2, fg);

  if (pred_moving) {
    OcclusionMask gt_moving(W, H, 0);
    std::vector<OcclusionMask> moving_instances;
    for (const OcclusionMask& inst : gt.instances) {
      const std::optional<Vec3> g = dominant_flow(gt.flow, inst);
      if (g && g->norm() > moving_threshold) {
        moving_instances.push_back(inst);
        for (size_t i = 0; i < gt_moving.w.size(); ++i) gt_moving.w[i] |= inst.w[i];
      }
    }
    rep.iou_image = mask_iou(*pred_moving, gt_moving);
    rep.iou_instance = instance_iou(*pred_moving, moving_instances);
  }
  return rep;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError(path.string() + ": cannot open for writing");
  os << text;
  os.flush();
  if (!os) throw IoError(path.string() + ": write failed");
}

// ---- commands ----

int cmd_generate(const fs::path& scene, const fs::path& out, bool skip_verify) {
  const SceneSpec spec = parse_scene_spec(scene);
  const GroundTruthBundle bundle = render(spec);
  const BundleCheck chk = verify_bundle(bundle);
  std::printf("self-check residuals: lr_t %.3g  lr_t1 %.3g  temporal %.3g  geometric %.3g\n",
              chk.lr_t_residual, chk.lr_t1_residual, chk.temporal_residual,
              chk.geometric_residual);
  if (!chk.pass() && !skip_verify) {
    std::fprintf(stderr, "bundle self-check failed (budget 1e-3)\n");
    return kCheckFailed;
  }
  DirLock lock(out);
  write_bundle(out, bundle);
  std::printf("bundle '%s' written to %s\n", spec.name.c_str(), out.string().c_str());
  return kOk;
}

int cmd_solve(const fs::path& config, int max_iters_override) {
  KeyValueFile kv = KeyValueFile::parse_file(config);
  const fs::path base = config.parent_path();
  const fs::path bundle_dir = resolve(base, kv.get_string("bundle_dir"));
  const fs::path out_dir = resolve(base, kv.get_string("out_dir"));

  const GroundTruthBundle bundle = read_bundle(bundle_dir);
  std::vector<RoiBox> rois;
  if (kv.has("roi_file")) {
    rois = read_rois(resolve(base, kv.get_string("roi_file")));
  } else {
    rois = bundle_rois(bundle_dir);
  }

  PlanesweepConfig sweep;
  sweep.n_bins = int(kv.get_long("n_bins", sweep.n_bins));
  sweep.near_min = kv.get_double("near_min", sweep.near_min);
  sweep.near_max = kv.get_double("near_max", sweep.near_max);

  SolverConfig cfg;
  cfg.step = kv.get_double("step", cfg.step);
  cfg.beta1 = kv.get_double("beta1", cfg.beta1);
  cfg.beta2 = kv.get_double("beta2", cfg.beta2);
  cfg.adam_eps = kv.get_double("adam_eps", cfg.adam_eps);
  cfg.max_iters = int(kv.get_long("max_iters", cfg.max_iters));
  cfg.tolerance = kv.get_double("tolerance", cfg.tolerance);
  cfg.tolerance_window = int(kv.get_long("tolerance_window", cfg.tolerance_window));
  cfg.depth_iters = int(kv.get_long("depth_iters", cfg.depth_iters));
  cfg.log_depth = kv.get_long("log_depth", 1) != 0;
  cfg.freeze_depth = kv.get_long("freeze_depth", cfg.freeze_depth ? 1 : 0) != 0;
  cfg.seed = uint64_t(kv.get_long("seed", 1));
  cfg.objective.weights.alpha = kv.get_double("alpha", cfg.objective.weights.alpha);
  cfg.objective.weights.lambda_p = kv.get_double("lambda_p", cfg.objective.weights.lambda_p);
  cfg.objective.weights.lambda_g = kv.get_double("lambda_g", cfg.objective.weights.lambda_g);
  cfg.objective.weights.lambda_s = kv.get_double("lambda_s", cfg.objective.weights.lambda_s);
  cfg.objective.weights.lambda_w = kv.get_double("lambda_w", cfg.objective.weights.lambda_w);
  cfg.objective.occlusion_tau = kv.get_double("occlusion_tau", cfg.objective.occlusion_tau);
  cfg.objective.roi_expand = kv.get_double("roi_expand", cfg.objective.roi_expand);
  const std::string mode = kv.get_string("depth_mode", "depth");
  if (mode == "depth") {
    cfg.objective.depth_mode = WarpDepthMode::kDepth;
  } else if (mode == "nearness") {
    cfg.objective.depth_mode = WarpDepthMode::kNearness;
  } else {
    throw IoError(config.string() + ": depth_mode must be 'depth' or 'nearness'");
  }
  const int roi_size = int(kv.get_long("roi_size", 32));
  const double moving_threshold = kv.get_double("moving_threshold", 0.5);
  kv.require_all_consumed();
  if (max_iters_override > 0) cfg.max_iters = max_iters_override;

  const int W = bundle.frames.left_t.width(), H = bundle.frames.left_t.height();
  const SceneState init = init_state(bundle.frames, bundle.rig, rois, roi_size, sweep);

  // Weak disparity supervision comes from the classical plane-sweep matcher;
  // only pixels with a valid winner contribute.
  DepthMap weak_t, weak_t1;
  const bool use_weak = cfg.objective.weights.lambda_w > 0.0;
  if (use_weak) {
    const auto wta_for = [&](bool at_t1) {
      const ImageBuffer& ref = at_t1 ? bundle.frames.left_t1 : bundle.frames.left_t;
      const ImageBuffer& src = at_t1 ? bundle.frames.right_t1 : bundle.frames.right_t;
      const auto ref_cam = at_t1 ? CameraRig::kLeftT1 : CameraRig::kLeftT;
      const auto src_cam = at_t1 ? CameraRig::kRightT1 : CameraRig::kRightT;
      const ImageBuffer ref_feat = census_features(ref);
      const ImageBuffer src_feat = census_features(src);
      std::vector<SweepView> views(2);
      views[0] = {&ref_feat, bundle.rig.intrinsics, RigidTransform::identity()};
      views[1] = {&src_feat, bundle.rig.intrinsics,
                  bundle.rig.relative(src_cam, ref_cam)};
      const std::vector<NearnessGrid> grids =
          build_grids(bundle.rig.intrinsics, W, H, views, sweep);
      return wta_depth(stereo_cost(grids[0], grids[1]));
    };
    const double fb = bundle.rig.intrinsics.fx * bundle.rig.baseline();
    for (const bool at_t1 : {false, true}) {
      const DepthMap z = wta_for(at_t1);
      DepthMap disp(W, H);
      for (size_t i = 0; i < z.depth.size(); ++i) {
        if (z.valid[i] && z.depth[i] > 1e-9) {
          disp.depth[i] = fb / z.depth[i];
          disp.valid[i] = 1;
        }
      }
      (at_t1 ? weak_t1 : weak_t) = disp;
    }
  }

  DirLock lock(out_dir);
  const SolveTrace tr = solve(init, bundle.frames, bundle.rig, cfg,
                              use_weak ? &weak_t : nullptr,
                              use_weak ? &weak_t1 : nullptr);

  write_fmap_depth(out_dir / "depth_t.fmap", tr.state.depth_t);
  write_fmap_depth(out_dir / "depth_t1.fmap", tr.state.depth_t1);
  const FlowField3D flow = assemble_flow(tr.state.rois, W, H);
  write_fmap_flow(out_dir / "flow.fmap", flow);

  std::vector<int> source_index;
  const std::vector<OcclusionMask> moving =
      moving_instance_masks(tr.state.rois, W, H, moving_threshold, &source_index);
  OcclusionMask moving_union(W, H, 0);
  for (size_t i = 0; i < moving.size(); ++i) {
    for (size_t k = 0; k < moving_union.w.size(); ++k) {
      moving_union.w[k] |= moving[i].w[k];
    }
    char name[48];
    std::snprintf(name, sizeof(name), "moving_mask_%02d.pgm", source_index[i]);
    write_mask_pgm(out_dir / name, moving[i]);
  }
  write_mask_pgm(out_dir / "moving_mask.pgm", moving_union);
  write_text(out_dir / "trace.log", tr.to_log());

  const MetricReport rep = compute_metrics(tr.state.depth_t, flow, &moving_union,
                                           gt_from_bundle(bundle), moving_threshold);
  write_text(out_dir / "metrics.txt", rep.to_key_values());

  char head[256];
  std::snprintf(head, sizeof(head),
                "scene %s\niterations %d\nconverged %d\ninitial_loss %.17g\n"
                "final_loss %.17g\n\n",
                bundle.spec.name.c_str(), tr.iterations, tr.converged ? 1 : 0,
                tr.initial_loss, tr.final_loss);
  const std::string report = std::string(head) + rep.to_table();
  write_text(out_dir / "report.txt", report);
  std::fputs(report.c_str(), stdout);
  return kOk;
}

int cmd_eval(const fs::path& pred_dir, const fs::path& gt_dir, const fs::path& out_dir,
             double moving_threshold) {
  const EvalGt gt = load_eval_gt(gt_dir);
  const DepthMap pred_depth_t = read_fmap_depth(pred_dir / "depth_t.fmap");
  const FlowField3D pred_flow = read_fmap_flow(pred_dir / "flow.fmap");
  std::optional<OcclusionMask> moving;
  if (fs::exists(pred_dir / "moving_mask.pgm")) {
    moving = read_mask_pgm(pred_dir / "moving_mask.pgm");
  }
  const MetricReport rep = compute_metrics(pred_depth_t, pred_flow,
                                           moving ? &*moving : nullptr, gt,
                                           moving_threshold);
  fs::create_directories(out_dir);
  write_text(out_dir / "metrics.txt", rep.to_key_values());
  write_text(out_dir / "metrics_table.txt", rep.to_table());
  std::fputs(rep.to_table().c_str(), stdout);
  return kOk;
}

int cmd_gradcheck(uint64_t seed, int size, double step, double tol, bool broken) {
  const GradcheckReport rep = run_gradcheck(seed, size, step, tol, broken);
  std::fputs(rep.to_text().c_str(), stdout);
  return rep.all_pass ? kOk : kCheckFailed;
}

// ---- plot ----

void draw_series(ImageBuffer& img, const std::vector<double>& ys, double y_lo,
                 double y_hi, const double rgb[3]) {
  const int W = img.width(), H = img.height();
  if (ys.empty()) return;
  const auto to_px = [&](double v) {
    const double t = (v - y_lo) / std::max(y_hi - y_lo, 1e-12);
    return std::clamp(int(std::lround((1.0 - t) * (H - 1))), 0, H - 1);
  };
  int prev = -1;
  for (int px = 0; px < W; ++px) {
    const double t = ys.size() == 1 ? 0.0
                                    : double(px) * (double(ys.size()) - 1.0) / (W - 1);
    const size_t i0 = size_t(t);
    const size_t i1 = std::min(i0 + 1, ys.size() - 1);
    const double v = ys[i0] + (t - double(i0)) * (ys[i1] - ys[i0]);
    const int y = to_px(v);
    const int a = prev < 0 ? y : std::min(prev, y), b = prev < 0 ? y : std::max(prev, y);
    for (int yy = a; yy <= b; ++yy) {
      for (int c = 0; c < 3; ++c) img.at(px, yy, c) = rgb[c];
    }
    prev = y;
  }
}

int cmd_plot_trace(const fs::path& trace, const fs::path& out) {
  std::ifstream is(trace);
  if (!is) throw IoError(trace.string() + ": cannot open");
  std::map<std::string, std::vector<double>> series;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    long iter = 0, count = 0;
    std::string term;
    double value = 0.0;
    if (!(ls >> iter >> term >> value >> count)) {
      throw IoError(trace.string() + ": malformed trace line: " + line);
    }
    series[term].push_back(std::log10(std::max(value, 1e-12)));
  }
  if (series.empty()) throw IoError(trace.string() + ": no data lines");
  double lo = 1e300, hi = -1e300;
  for (const auto& [name, ys] : series) {
    for (double v : ys) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (hi <= lo) hi = lo + 1.0;

  ImageBuffer img(720, 360, 3, 1.0);
  const std::map<std::string, std::array<double, 3>> palette = {
      {"total", {0.0, 0.0, 0.0}},   {"lr", {0.85, 0.1, 0.1}},
      {"roi", {0.1, 0.6, 0.1}},     {"temporal", {0.1, 0.2, 0.9}},
      {"smooth", {0.7, 0.1, 0.7}},  {"weak", {0.0, 0.6, 0.6}},
  };
  for (const auto& [name, ys] : series) {
    const auto it = palette.find(name);
    const std::array<double, 3> rgb =
        it != palette.end() ? it->second : std::array<double, 3>{0.5, 0.5, 0.5};
    draw_series(img, ys, lo, hi, rgb.data());
  }
  write_pnm(out, img);
  std::printf("loss curves (log10 scale, %zu terms) -> %s\n", series.size(),
              out.string().c_str());
  return kOk;
}

int cmd_plot_fmap(const fs::path& fmap, const fs::path& out) {
  const ImageBuffer m = read_fmap(fmap);
  const int W = m.width(), H = m.height();
  ImageBuffer mag(W, H, 1, std::nan(""));
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      double s = 0.0;
      bool ok = true;
      for (int c = 0; c < m.channels(); ++c) {
        const double v = m.at(x, y, c);
        if (!std::isfinite(v)) ok = false;
        s += v * v;
      }
      if (ok) mag.at(x, y, 0) = m.channels() == 1 ? m.at(x, y, 0) : std::sqrt(s);
    }
  }
  double lo = 1e300, hi = -1e300;
  for (double v : mag.data()) {
    if (std::isfinite(v)) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (lo > hi) throw IoError(fmap.string() + ": no finite values to plot");
  const double span = hi > lo ? hi - lo : 1.0;
  ImageBuffer img(W, H, 3, 0.0);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const double v = mag.at(x, y, 0);
      if (std::isfinite(v)) {
        const double t = (v - lo) / span;
        for (int c = 0; c < 3; ++c) img.at(x, y, c) = t;
      } else {
        img.at(x, y, 0) = 1.0;  // invalid pixels stand out in red
      }
    }
  }
  write_pnm(out, img);
  std::printf("value range [%.6g, %.6g] -> %s\n", lo, hi, out.string().c_str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stereo scene-flow engine"};
  app.require_subcommand(1);

  std::string scene_path, out_path, config_path, pred_path, gt_path;
  std::string trace_path, fmap_path;
  bool skip_verify = false, break_gradient = false;
  int max_iters_override = -1;
  uint64_t seed = 1;
  int size = 16;
  double step = 1e-5, tol = 1e-4, moving_threshold = 0.5;

  CLI::App* gen = app.add_subcommand("generate", "render a scene spec into a ground-truth bundle");
  gen->add_option("--scene", scene_path, "scene spec file")->required();
  gen->add_option("--out", out_path, "output bundle directory")->required();
  gen->add_flag("--skip-verify", skip_verify, "write the bundle even if the self-check fails");

  CLI::App* sol = app.add_subcommand("solve", "recover depth and object motion from a bundle");
  sol->add_option("--config", config_path, "solve configuration file")->required();
  sol->add_option("--max-iters", max_iters_override, "override the configured iteration cap");

  CLI::App* ev = app.add_subcommand("eval", "score a prediction directory against ground truth");
  ev->add_option("--pred", pred_path, "prediction directory (depth_t/flow float maps)")->required();
  ev->add_option("--gt", gt_path, "ground-truth bundle directory")->required();
  ev->add_option("--out", out_path, "report directory (default: prediction directory)");
  ev->add_option("--moving-threshold", moving_threshold, "dominant-flow magnitude that counts as moving");

  CLI::App* gc = app.add_subcommand("gradcheck", "compare analytic gradients with central differences");
  gc->add_option("--seed", seed, "RNG seed");
  gc->add_option("--size", size, "scene side length in pixels (>= 4)");
  gc->add_option("--step", step, "finite-difference step");
  gc->add_option("--tol", tol, "max relative error to pass");
  gc->add_flag("--break-gradient", break_gradient, "corrupt one gradient entry (negative control)");

  CLI::App* pl = app.add_subcommand("plot", "render a trace log or a float map as a PNM image");
  CLI::Option* opt_trace = pl->add_option("--trace", trace_path, "trace.log with loss curves");
  CLI::Option* opt_fmap = pl->add_option("--fmap", fmap_path, "float map to visualize");
  pl->add_option("--out", out_path, "output image path")->required();
  opt_trace->excludes(opt_fmap);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kBadInput;
  }

  try {
    if (gen->parsed()) return cmd_generate(scene_path, out_path, skip_verify);
    if (sol->parsed()) return cmd_solve(config_path, max_iters_override);
    if (ev->parsed()) {
      return cmd_eval(pred_path, gt_path, out_path.empty() ? pred_path : out_path,
                      moving_threshold);
    }
    if (gc->parsed()) return cmd_gradcheck(seed, size, step, tol, break_gradient);
    if (pl->parsed()) {
      if (!trace_path.empty()) return cmd_plot_trace(trace_path, out_path);
      if (!fmap_path.empty()) return cmd_plot_fmap(fmap_path, out_path);
      std::fprintf(stderr, "plot needs --trace or --fmap\n");
      return kBadInput;
    }
  } catch (const NumericalFailure& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kNumerical;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kBadInput;
  }
  return kBadInput;
}
