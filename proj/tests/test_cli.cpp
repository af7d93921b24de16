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

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "sflow/io.hpp"
#include "sflow/roi.hpp"
#include "sflow/solver.hpp"
#include "sflow/synth.hpp"

using namespace sflow;
namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(SFLOW_BIN) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  if (rc == -1) return -1;
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

fs::path temp_dir(const char* tag) {
  const fs::path d = fs::temp_directory_path() / (std::string("sflow_cli_") + tag);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

// 48x36 scene with one clearly moving patch; small enough that generate,
// solve and eval together stay within a couple of seconds.
SceneSpec cli_scene() {
  SceneSpec spec;
  spec.name = "cli-unit";
  spec.width = 48;
  spec.height = 36;
  spec.intrinsics = {60.0, 60.0, 23.5, 17.5};
  spec.baseline = 0.5;
  spec.seed = 19;
  spec.background.depth = 12.0;
  spec.background.tilt_x = 0.15;
  spec.background.tilt_y = 0.2;
  spec.background.texture.seed = 61;
  spec.background.texture.base = 0.55;
  spec.background.texture.checker_amp = 0.12;
  spec.background.texture.checker_cell = 2.0;
  spec.background.texture.noise_amp = 0.06;
  spec.background.texture.noise_cell = 1.6;
  spec.background.texture.noise2_amp = 0.1;
  spec.background.texture.noise2_cell = 3.2;
  ObjectSpec obj;
  obj.center = Vec3(0.2, 0.1, 6.0);
  obj.half_w = 0.7;
  obj.half_h = 0.55;
  obj.motion = Vec3(0.15, -0.05, 0.0);
  obj.texture.seed = 67;
  obj.texture.base = 0.35;
  obj.texture.checker_amp = 0.1;
  obj.texture.checker_cell = 0.4;
  obj.texture.noise_amp = 0.08;
  obj.texture.noise_cell = 0.35;
  obj.texture.noise2_amp = 0.12;
  obj.texture.noise2_cell = 1.0;
  spec.objects.push_back(obj);
  return spec;
}

void write_config(const fs::path& path, const fs::path& bundle,
                  const fs::path& out, int max_iters) {
  std::ofstream f(path);
  f << "bundle_dir = " << bundle.string() << "\n"
    << "out_dir = " << out.string() << "\n"
    << "n_bins = 32\n"
    << "roi_size = 4\n"
    << "max_iters = " << max_iters << "\n"
    << "depth_iters = 5\n"
    << "tolerance = 1e-12\n"
    << "tolerance_window = 200\n"
    << "lambda_s = 0.02\n"
    << "moving_threshold = 0.1\n";
}

}  // namespace

TEST_CASE("generate, solve and eval run end to end") {
  const fs::path dir = temp_dir("e2e");
  write_scene_spec(dir / "scene.scene", cli_scene());

  REQUIRE(run("generate --scene " + (dir / "scene.scene").string() + " --out " +
              (dir / "bundle").string()) == 0);
  REQUIRE(fs::exists(dir / "bundle" / "manifest.txt"));
  const GroundTruthBundle b = read_bundle(dir / "bundle");
  CHECK(b.spec.name == "cli-unit");
  CHECK(b.instance_masks.size() == 1);

  write_config(dir / "solve.cfg", dir / "bundle", dir / "solve_out", 15);
  REQUIRE(run("solve --config " + (dir / "solve.cfg").string()) == 0);
  for (const char* f : {"depth_t.fmap", "depth_t1.fmap", "flow.fmap",
                        "moving_mask.pgm", "trace.log", "metrics.txt",
                        "report.txt"}) {
    CHECK(fs::exists(dir / "solve_out" / f));
  }
  const DepthMap solved = read_fmap_depth(dir / "solve_out" / "depth_t.fmap");
  CHECK(solved.width == 48);

  REQUIRE(run("eval --pred " + (dir / "solve_out").string() + " --gt " +
              (dir / "bundle").string() + " --out " + (dir / "eval_out").string() +
              " --moving-threshold 0.1") == 0);
  CHECK(fs::exists(dir / "eval_out" / "metrics.txt"));
  CHECK(fs::exists(dir / "eval_out" / "metrics_table.txt"));
  KeyValueFile kv = KeyValueFile::parse_file(dir / "eval_out" / "metrics.txt");
  CHECK(kv.get_long("n_instances") == 1);

  // Plot both artifact kinds.
  CHECK(run("plot --trace " + (dir / "solve_out" / "trace.log").string() +
            " --out " + (dir / "trace.ppm").string()) == 0);
  CHECK(run("plot --fmap " + (dir / "solve_out" / "depth_t.fmap").string() +
            " --out " + (dir / "depth.ppm").string()) == 0);
  CHECK(fs::exists(dir / "trace.ppm"));
  CHECK(fs::exists(dir / "depth.ppm"));
}

TEST_CASE("solving with zero iterations reproduces the initialization") {
  const fs::path dir = temp_dir("init");
  write_scene_spec(dir / "scene.scene", cli_scene());
  REQUIRE(run("generate --scene " + (dir / "scene.scene").string() + " --out " +
              (dir / "bundle").string()) == 0);
  write_config(dir / "solve.cfg", dir / "bundle", dir / "out0", 0);
  REQUIRE(run("solve --config " + (dir / "solve.cfg").string()) == 0);

  const GroundTruthBundle b = read_bundle(dir / "bundle");
  PlanesweepConfig sweep;
  sweep.n_bins = 32;
  const SceneState init =
      init_state(b.frames, b.rig, bundle_rois(dir / "bundle"), 4, sweep);

  // Written depth passed through log/exp and float32; compare accordingly.
  const DepthMap got = read_fmap_depth(dir / "out0" / "depth_t.fmap");
  REQUIRE(got.width == init.depth_t.width);
  for (size_t i = 0; i < got.depth.size(); ++i) {
    CHECK(got.valid[i] == init.depth_t.valid[i]);
    CHECK(std::abs(got.depth[i] - init.depth_t.depth[i]) <=
          3e-7 * init.depth_t.depth[i]);
  }
  const FlowField3D got_flow = read_fmap_flow(dir / "out0" / "flow.fmap");
  const FlowField3D want_flow =
      assemble_flow(init.rois, init.depth_t.width, init.depth_t.height);
  for (int y = 0; y < got_flow.height; ++y)
    for (int x = 0; x < got_flow.width; ++x) {
      CHECK((got_flow.at(x, y) - want_flow.at(x, y)).norm() <= 1e-6);
    }
}

TEST_CASE("evaluating the ground truth against itself scores perfectly") {
  const fs::path dir = temp_dir("selfgt");
  write_scene_spec(dir / "scene.scene", cli_scene());
  REQUIRE(run("generate --scene " + (dir / "scene.scene").string() + " --out " +
              (dir / "bundle").string()) == 0);
  const GroundTruthBundle b = read_bundle(dir / "bundle");

  fs::create_directories(dir / "pred");
  write_fmap_depth(dir / "pred" / "depth_t.fmap", b.depth_t);
  write_fmap_flow(dir / "pred" / "flow.fmap", b.flow);
  // The moving mask a perfect solver would output: all instances whose
  // dominant GT flow exceeds the threshold.
  OcclusionMask moving(b.depth_t.width, b.depth_t.height, 0);
  for (size_t i = 0; i < moving.w.size(); ++i)
    moving.w[i] = b.instance_masks[0].w[i];
  write_mask_pgm(dir / "pred" / "moving_mask.pgm", moving);

  REQUIRE(run("eval --pred " + (dir / "pred").string() + " --gt " +
              (dir / "bundle").string() + " --out " + (dir / "out").string() +
              " --moving-threshold 0.1") == 0);
  KeyValueFile kv = KeyValueFile::parse_file(dir / "out" / "metrics.txt");
  CHECK(kv.get_double("epe_all") == 0.0);
  CHECK(kv.get_double("epe_noc") == 0.0);
  CHECK(kv.get_double("d1_all") == 0.0);
  CHECK(kv.get_double("d2_all") == 0.0);
  CHECK(kv.get_double("fl_all") == 0.0);
  CHECK(kv.get_double("amae") == 0.0);
  CHECK(kv.get_double("smae") == 0.0);
  CHECK(kv.get_double("iou_image") == 1.0);
  CHECK(kv.get_double("iou_instance") == 1.0);
}

TEST_CASE("bad inputs exit with the input-error code") {
  const fs::path dir = temp_dir("errs");
  CHECK(run("") == 2);  // a subcommand is required
  CHECK(run("generate --scene " + (dir / "missing.scene").string() + " --out " +
            (dir / "b").string()) == 2);
  CHECK(run("solve --config " + (dir / "missing.cfg").string()) == 2);
  std::ofstream f(dir / "bad.cfg");
  f << "bundle_dir = nowhere\nout_dir = out\nnot_a_known_key = 1\n";
  f.close();
  CHECK(run("solve --config " + (dir / "bad.cfg").string()) == 2);
  CHECK(run("eval --pred " + (dir / "nope").string() + " --gt " +
            (dir / "nope").string() + " --out " + (dir / "o").string()) == 2);
  CHECK(run("plot --out " + (dir / "p.ppm").string()) == 2);
}

TEST_CASE("gradient self-test passes clean and catches a seeded corruption") {
  CHECK(run("gradcheck --seed 2 --size 8") == 0);
  CHECK(run("gradcheck --seed 2 --size 8 --break-gradient") == 1);
}
