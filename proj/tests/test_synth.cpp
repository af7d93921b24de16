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
#include "sflow/rng.hpp"
#include "sflow/synth.hpp"

using namespace sflow;

namespace {

// Small scene with one translating patch; fast enough for unit runs.
SceneSpec small_scene() {
  SceneSpec spec;
  spec.name = "unit";
  spec.width = 64;
  spec.height = 48;
  spec.intrinsics = {80.0, 80.0, 31.5, 23.5};
  spec.baseline = 0.5;
  spec.seed = 5;
  spec.ego = RigidTransform::translate(0.05, 0.02, 0.0);
  spec.background.depth = 15.0;
  spec.background.tilt_x = 0.15;
  spec.background.tilt_y = 0.2;
  spec.background.texture.seed = 21;
  spec.background.texture.base = 0.55;
  spec.background.texture.checker_amp = 0.12;
  spec.background.texture.checker_cell = 2.5;
  spec.background.texture.noise_amp = 0.06;
  spec.background.texture.noise_cell = 2.0;
  spec.background.texture.noise2_amp = 0.1;
  spec.background.texture.noise2_cell = 4.0;
  ObjectSpec obj;
  obj.center = Vec3(0.3, 0.2, 8.0);
  obj.half_w = 0.9;
  obj.half_h = 0.7;
  obj.motion = Vec3(0.18, -0.08, 0.0);
  obj.texture.seed = 33;
  obj.texture.base = 0.3;
  obj.texture.checker_amp = 0.1;
  obj.texture.checker_cell = 0.5;
  obj.texture.noise_amp = 0.08;
  obj.texture.noise_cell = 0.4;
  obj.texture.noise2_amp = 0.12;
  obj.texture.noise2_cell = 1.2;
  spec.objects.push_back(obj);
  return spec;
}

}  // namespace

TEST_CASE("rendering is deterministic") {
  const SceneSpec spec = small_scene();
  const GroundTruthBundle a = render(spec);
  const GroundTruthBundle b = render(spec);
  CHECK(a.frames.left_t.data() == b.frames.left_t.data());
  CHECK(a.frames.right_t.data() == b.frames.right_t.data());
  CHECK(a.frames.left_t1.data() == b.frames.left_t1.data());
  CHECK(a.frames.right_t1.data() == b.frames.right_t1.data());
  CHECK(a.depth_t.depth == b.depth_t.depth);
  CHECK(a.flow.data == b.flow.data);
}

TEST_CASE("ground-truth depth matches the analytic raycast") {
  const SceneSpec spec = small_scene();
  const GroundTruthBundle b = render(spec);
  Rng rng(2);
  int hits = 0;
  for (int i = 0; i < 300; ++i) {
    const int x = rng.uniform_int(0, spec.width - 1);
    const int y = rng.uniform_int(0, spec.height - 1);
    double z = 0.0;
    int id = -1;
    if (!raycast_depth(spec, RigidTransform::identity(),
                       Pixel{double(x), double(y)}, false, &z, &id)) {
      CHECK_FALSE(b.depth_t.is_valid(x, y));
      continue;
    }
    ++hits;
    REQUIRE(b.depth_t.is_valid(x, y));
    CHECK(b.depth_t.at(x, y) == doctest::Approx(z).epsilon(1e-12));
  }
  CHECK(hits > 250);
}

TEST_CASE("instance masks partition flow: object motion inside, zero outside") {
  const SceneSpec spec = small_scene();
  const GroundTruthBundle b = render(spec);
  REQUIRE(b.instance_masks.size() == 1);
  long inside = 0;
  for (int y = 0; y < spec.height; ++y)
    for (int x = 0; x < spec.width; ++x) {
      if (!b.depth_t.is_valid(x, y)) continue;
      const Vec3 f = b.flow.at(x, y);
      if (b.instance_masks[0].at(x, y)) {
        ++inside;
        // Pure translation: the surface-point motion equals the object's.
        CHECK((f - spec.objects[0].motion).norm() <= 1e-12);
        double z = 0.0;
        int id = -1;
        REQUIRE(raycast_depth(spec, RigidTransform::identity(),
                              Pixel{double(x), double(y)}, false, &z, &id));
        CHECK(id == 0);  // surface ids: -1 background, objects in spec order
      } else {
        CHECK(f.norm() == 0.0);
      }
    }
  CHECK(inside > 100);
}

TEST_CASE("rotating objects move surface points tangentially") {
  SceneSpec spec = small_scene();
  spec.objects[0].motion = Vec3::Zero();
  spec.objects[0].rotation = Vec3(0.0, 0.0, 0.3);  // about the patch center
  const GroundTruthBundle b = render(spec);
  const Vec3 c = spec.objects[0].center;
  const Mat3 R =
      RigidTransform::from_axis_angle(spec.objects[0].rotation, Vec3::Zero())
          .rotation;
  long checked = 0;
  for (int y = 0; y < spec.height; ++y)
    for (int x = 0; x < spec.width; ++x) {
      if (!b.instance_masks[0].at(x, y) || !b.depth_t.is_valid(x, y)) continue;
      const Vec3 X = unproject(Pixel{double(x), double(y)}, b.depth_t.at(x, y),
                               spec.intrinsics);
      const Vec3 want = R * (X - c) + c - X;
      CHECK((b.flow.at(x, y) - want).norm() <= 1e-9);
      ++checked;
    }
  CHECK(checked > 100);
}

TEST_CASE("occlusion masks only pass pixels that synthesize cleanly") {
  const SceneSpec spec = small_scene();
  const GroundTruthBundle b = render(spec);
  // Every marked-visible pixel must carry valid depth.
  long visible = 0;
  for (int y = 0; y < spec.height; ++y)
    for (int x = 0; x < spec.width; ++x) {
      if (b.occ_lr_t.at(x, y)) {
        ++visible;
        CHECK(b.depth_t.is_valid(x, y));
      }
    }
  CHECK(visible > 0.8 * spec.width * spec.height);
  // And the masked photometric residuals stay under the oracle budget.
  const BundleCheck chk = verify_bundle(b);
  CHECK(chk.lr_t_residual < 1e-3);
  CHECK(chk.lr_t1_residual < 1e-3);
  CHECK(chk.temporal_residual < 1e-3);
  CHECK(chk.geometric_residual < 1e-3);
  CHECK(chk.pass());
}

TEST_CASE("objects occlude the background in the temporal mask") {
  SceneSpec spec = small_scene();
  // Strong x motion: the patch vacates and covers background bands.
  spec.objects[0].motion = Vec3(0.5, 0.0, 0.0);
  const GroundTruthBundle b = render(spec);
  // Pixels the object moves onto at t+1 are background at t that become
  // covered: they must be marked not-visible in the temporal mask.
  long newly_covered = 0, masked = 0;
  for (int y = 0; y < spec.height; ++y)
    for (int x = 0; x < spec.width; ++x) {
      if (!b.depth_t.is_valid(x, y) || b.instance_masks[0].at(x, y)) continue;
      double z1 = 0.0;
      int id1 = -1;
      // Static background pixel: at t+1 the same ray may now hit the object.
      const RigidTransform cam_t1 = spec.ego;
      const Vec3 X = unproject(Pixel{double(x), double(y)}, b.depth_t.at(x, y),
                               spec.intrinsics);
      const Vec3 x_t1 = cam_t1.inverse().apply(X);
      if (x_t1.z() <= 0.0) continue;
      const Projection p1 = project(x_t1, spec.intrinsics);
      if (p1.pixel.u < 1 || p1.pixel.u > spec.width - 2 || p1.pixel.v < 1 ||
          p1.pixel.v > spec.height - 2) {
        continue;
      }
      if (!raycast_depth(spec, cam_t1, p1.pixel, true, &z1, &id1)) continue;
      if (id1 == 0 && z1 < p1.depth * 0.99) {
        ++newly_covered;
        if (!b.occ_temporal.at(x, y)) ++masked;
      }
    }
  CHECK(newly_covered > 50);
  CHECK(masked == newly_covered);
}
