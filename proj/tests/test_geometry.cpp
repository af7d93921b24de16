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
#include "sflow/geometry.hpp"
#include "sflow/rng.hpp"

using namespace sflow;

namespace {

Intrinsics test_K() { return {100.0, 110.0, 63.5, 47.5}; }

RigidTransform random_pose(Rng& rng, double rot_scale, double trans_scale) {
  const Vec3 aa(rng.uniform(-rot_scale, rot_scale),
                rng.uniform(-rot_scale, rot_scale),
                rng.uniform(-rot_scale, rot_scale));
  const Vec3 t(rng.uniform(-trans_scale, trans_scale),
               rng.uniform(-trans_scale, trans_scale),
               rng.uniform(-trans_scale, trans_scale));
  return RigidTransform::from_axis_angle(aa, t);
}

}  // namespace

TEST_CASE("project and unproject invert each other") {
  const Intrinsics K = test_K();
  Rng rng(42);
  for (int i = 0; i < 10000; ++i) {
    const Pixel p{rng.uniform(-20.0, 160.0), rng.uniform(-20.0, 120.0)};
    const double z = rng.uniform(0.1, 100.0);
    const Vec3 X = unproject(p, z, K);
    const Projection q = project(X, K);
    CHECK(std::abs(q.pixel.u - p.u) <= 1e-12 * std::max(1.0, std::abs(p.u)));
    CHECK(std::abs(q.pixel.v - p.v) <= 1e-12 * std::max(1.0, std::abs(p.v)));
    CHECK(q.depth == doctest::Approx(z).epsilon(1e-14));
  }
}

TEST_CASE("project and unproject reject non-positive depth") {
  const Intrinsics K = test_K();
  CHECK_THROWS(unproject(Pixel{0, 0}, 0.0, K));
  CHECK_THROWS(unproject(Pixel{0, 0}, -1.0, K));
  CHECK_THROWS(project(Vec3(0, 0, 0), K));
  CHECK_THROWS(project(Vec3(0, 0, -2), K));
  CHECK_THROWS(Intrinsics{0.0, 1.0, 0.0, 0.0}.validate());
}

TEST_CASE("identity warp with zero flow is the identity map") {
  const Intrinsics K = test_K();
  Rng rng(7);
  for (int i = 0; i < 1000; ++i) {
    const Pixel p{rng.uniform(0.0, 127.0), rng.uniform(0.0, 95.0)};
    const double z = rng.uniform(0.5, 50.0);
    const WarpResult w =
        warp_pixel(p, z, Vec3::Zero(), K, K, RigidTransform::identity());
    REQUIRE(w.valid);
    CHECK(std::abs(w.pixel.u - p.u) <= 1e-12 * std::max(1.0, p.u));
    CHECK(std::abs(w.pixel.v - p.v) <= 1e-12 * std::max(1.0, p.v));
    CHECK(w.depth == doctest::Approx(z).epsilon(1e-14));
  }
}

TEST_CASE("stereo warp of a fronto-parallel point moves by fx*b/z") {
  const Intrinsics K = test_K();
  // Right camera sits at +x in the world; the destination-from-reference
  // transform therefore translates by -baseline.
  const double b = 0.5;
  const RigidTransform T_rl = RigidTransform::translate(-b, 0.0, 0.0);
  for (const double z : {2.0, 5.0, 20.0, 60.0}) {
    const Pixel p{40.0, 30.0};
    const WarpResult w = warp_pixel(p, z, Vec3::Zero(), K, K, T_rl);
    REQUIRE(w.valid);
    CHECK(w.pixel.u == doctest::Approx(p.u - K.fx * b / z).epsilon(1e-13));
    CHECK(w.pixel.v == doctest::Approx(p.v).epsilon(1e-13));
    CHECK(w.depth == doctest::Approx(z).epsilon(1e-14));
  }
}

TEST_CASE("scene flow is applied before the relative pose") {
  const Intrinsics K = test_K();
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const Pixel p{rng.uniform(5.0, 120.0), rng.uniform(5.0, 90.0)};
    const double z = rng.uniform(3.0, 30.0);
    const Vec3 F(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0),
                 rng.uniform(-1.0, 1.0));
    const RigidTransform T = random_pose(rng, 0.2, 1.0);
    const WarpResult w = warp_pixel(p, z, F, K, K, T);
    const Vec3 moved = T.apply(unproject(p, z, K) + F);
    if (moved.z() <= 0.0) {
      CHECK_FALSE(w.valid);
      continue;
    }
    REQUIRE(w.valid);
    const Projection q = project(moved, K);
    CHECK(w.pixel.u == doctest::Approx(q.pixel.u).epsilon(1e-12));
    CHECK(w.pixel.v == doctest::Approx(q.pixel.v).epsilon(1e-12));
    CHECK(w.depth == doctest::Approx(q.depth).epsilon(1e-12));
  }
}

TEST_CASE("warp jacobian matches central differences") {
  const Intrinsics K = test_K();
  Rng rng(11);
  int checked = 0;
  for (int i = 0; i < 300; ++i) {
    const Pixel p{rng.uniform(5.0, 120.0), rng.uniform(5.0, 90.0)};
    const double z = rng.uniform(3.0, 30.0);
    Vec3 F(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5),
           rng.uniform(-0.5, 0.5));
    const RigidTransform T = random_pose(rng, 0.3, 0.8);
    const WarpResult w = warp_pixel(p, z, F, K, K, T);
    if (!w.valid || w.depth < 0.5) continue;
    ++checked;
    const double h = 1e-6;
    for (int j = 0; j < 4; ++j) {
      double zp = z, zm = z;
      Vec3 Fp = F, Fm = F;
      if (j == 0) {
        zp += h;
        zm -= h;
      } else {
        Fp[j - 1] += h;
        Fm[j - 1] -= h;
      }
      const WarpResult wp = warp_pixel(p, zp, Fp, K, K, T);
      const WarpResult wm = warp_pixel(p, zm, Fm, K, K, T);
      REQUIRE(wp.valid);
      REQUIRE(wm.valid);
      const double fd[3] = {(wp.pixel.u - wm.pixel.u) / (2 * h),
                            (wp.pixel.v - wm.pixel.v) / (2 * h),
                            (wp.depth - wm.depth) / (2 * h)};
      for (int r = 0; r < 3; ++r) {
        CHECK(std::abs(w.jacobian(r, j) - fd[r]) <=
              1e-5 * std::max(1.0, std::abs(fd[r])));
      }
    }
  }
  CHECK(checked > 200);
}

TEST_CASE("behind-camera warps are flagged invalid, not thrown") {
  const Intrinsics K = test_K();
  // Flow pushes the point through the camera plane.
  const WarpResult w = warp_pixel(Pixel{40, 30}, 2.0, Vec3(0, 0, -5.0), K, K,
                                  RigidTransform::identity());
  CHECK_FALSE(w.valid);
  CHECK_THROWS(warp_pixel(Pixel{0, 0}, -1.0, Vec3::Zero(), K, K,
                          RigidTransform::identity()));
}

TEST_CASE("roi intrinsics reproduce the crop pixel mapping") {
  const Intrinsics K = test_K();
  Rng rng(19);
  for (int i = 0; i < 10000; ++i) {
    RoiBox box;
    box.x = rng.uniform(-10.0, 100.0);
    box.y = rng.uniform(-10.0, 80.0);
    box.w = rng.uniform(2.0, 60.0);
    box.h = rng.uniform(2.0, 50.0);
    const int wr = rng.uniform_int(2, 48);
    const int hr = rng.uniform_int(2, 48);
    const Intrinsics Kr = roi_intrinsics(K, box, wr, hr);

    const Pixel p{rng.uniform(0.0, 127.0), rng.uniform(0.0, 95.0)};
    const double z = rng.uniform(0.5, 60.0);
    const Vec3 X = unproject(p, z, K);
    const Projection full = project(X, K);
    const Projection crop = project(X, Kr);
    // Crop pixel i sits at full-image coordinate box.x + i * box.w / wr.
    const double expect_u = (full.pixel.u - box.x) * wr / box.w;
    const double expect_v = (full.pixel.v - box.y) * hr / box.h;
    CHECK(std::abs(crop.pixel.u - expect_u) <= 1e-9 * std::max(1.0, std::abs(expect_u)));
    CHECK(std::abs(crop.pixel.v - expect_v) <= 1e-9 * std::max(1.0, std::abs(expect_v)));
    CHECK(crop.depth == doctest::Approx(full.depth).epsilon(1e-14));
  }
}

TEST_CASE("expand_box grows each side by a fraction and clips to the image") {
  const RoiBox b{10.0, 20.0, 30.0, 20.0};
  const RoiBox g = expand_box(b, 0.2, 128, 96);
  CHECK(g.x == doctest::Approx(10.0 - 6.0));
  CHECK(g.y == doctest::Approx(20.0 - 4.0));
  CHECK(g.w == doctest::Approx(30.0 + 12.0));
  CHECK(g.h == doctest::Approx(20.0 + 8.0));

  const RoiBox edge{1.0, 1.0, 120.0, 90.0};
  const RoiBox c = expand_box(edge, 0.5, 128, 96);
  CHECK(c.x >= 0.0);
  CHECK(c.y >= 0.0);
  CHECK(c.x + c.w <= 128.0);
  CHECK(c.y + c.h <= 96.0);

  const RoiBox same = expand_box(b, 0.0, 128, 96);
  CHECK(same.x == doctest::Approx(b.x));
  CHECK(same.w == doctest::Approx(b.w));
}

TEST_CASE("rigid transform algebra") {
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const RigidTransform T = random_pose(rng, 1.5, 2.0);
    CHECK(T.is_rigid());
    const RigidTransform I = T * T.inverse();
    CHECK(I.orthonormality_error() < 1e-12);
    CHECK(I.translation.norm() < 1e-12);
    CHECK((I.rotation - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-12);

    const Vec3 p(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5));
    const RigidTransform U = random_pose(rng, 1.0, 1.0);
    const Vec3 a = (T * U).apply(p);
    const Vec3 b = T.apply(U.apply(p));
    CHECK((a - b).norm() < 1e-12 * std::max(1.0, b.norm()));
  }

  // Rodrigues against the closed-form quarter turn about z.
  const double half_pi = std::acos(0.0);
  const RigidTransform Rz =
      RigidTransform::from_axis_angle(Vec3(0, 0, half_pi), Vec3::Zero());
  const Vec3 e1(1, 0, 0);
  CHECK((Rz.apply(e1) - Vec3(0, 1, 0)).norm() < 1e-12);

  RigidTransform broken;
  broken.rotation(0, 0) = 2.0;
  CHECK_FALSE(broken.is_rigid());
}

TEST_CASE("camera rig relative poses and baseline") {
  CameraRig rig;
  rig.intrinsics = test_K();
  rig.world_from_camera[CameraRig::kRightT] =
      RigidTransform::translate(0.5, 0.0, 0.0);
  rig.world_from_camera[CameraRig::kLeftT1] =
      RigidTransform::translate(0.1, 0.05, 0.0);
  rig.world_from_camera[CameraRig::kRightT1] =
      RigidTransform::translate(0.6, 0.05, 0.0);

  CHECK(rig.baseline() == doctest::Approx(0.5).epsilon(1e-15));
  const RigidTransform self = rig.relative(CameraRig::kLeftT, CameraRig::kLeftT);
  CHECK(self.translation.norm() < 1e-15);

  // A world point projected through relative poses lands consistently:
  // x_right = relative(right, left) * x_left.
  const Vec3 Xw(0.3, -0.2, 8.0);
  const Vec3 x_left =
      rig.world_from_camera[CameraRig::kLeftT].inverse().apply(Xw);
  const Vec3 x_right =
      rig.world_from_camera[CameraRig::kRightT].inverse().apply(Xw);
  const Vec3 mapped =
      rig.relative(CameraRig::kRightT, CameraRig::kLeftT).apply(x_left);
  CHECK((mapped - x_right).norm() < 1e-12);
}
