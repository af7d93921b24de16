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

#pragma once

#include <string>
#include <vector>

#include "sflow/image.hpp"

// Synthetic planar-patch scenes with exact ground truth. This is the
// verification oracle for the whole pipeline: every surface is ray-cast
// analytically, so depth, flow, instance and occlusion ground truth carry no
// approximation beyond IEEE arithmetic.
//
// World frame == left camera frame at time t. Units are arbitrary "scene
// units": backgrounds sit at depth 10..40, baseline defaults to 0.5 and
// object motions are 0.2..2 per frame.

namespace sflow {

struct TextureSpec {
  uint64_t seed = 1;
  double base = 0.45;          // mean intensity
  double checker_amp = 0.18;   // sinusoidal checker amplitude
  double checker_cell = 2.0;   // world units per checker half-period
  double noise_amp = 0.12;     // smooth value-noise amplitude
  double noise_cell = 1.4;     // world units per noise lattice cell
  // Second octave, gentler and broader; set amp 0 to disable.
  double noise2_amp = 0.08;
  double noise2_cell = 3.1;
};

struct BackgroundSpec {
  double depth = 20.0;         // plane z at the optical axis
  double tilt_x = 0.0;         // plane normal tilt about the x axis, radians
  double tilt_y = 0.0;
  TextureSpec texture;
};

struct ObjectSpec {
  Vec3 center = Vec3(0, 0, 10);    // patch center at time t, world frame
  double half_w = 1.0, half_h = 1.0;
  double tilt_x = 0.0, tilt_y = 0.0;  // patch orientation at time t
  Vec3 motion = Vec3::Zero();      // rigid translation t -> t+1
  Vec3 rotation = Vec3::Zero();    // axis-angle about the patch center
  TextureSpec texture;
};

struct SceneSpec {
  std::string name = "scene";
  int width = 128, height = 96;
  Intrinsics intrinsics{100.0, 100.0, 63.5, 47.5};
  double baseline = 0.5;
  // world_from_left_t1; shipped scenes keep this z-preserving (pure x/y
  // translation) so the geometric consistency oracle is exact.
  RigidTransform ego = RigidTransform::identity();
  BackgroundSpec background;
  std::vector<ObjectSpec> objects;
  uint64_t seed = 1;
};

// Renders plus exhaustive ground truth.
struct GroundTruthBundle {
  SceneSpec spec;
  CameraRig rig;
  StereoQuad frames;
  DepthMap depth_t;    // left camera at t
  DepthMap depth_t1;   // left camera at t+1
  FlowField3D flow;    // 3D motion of the surface point at each left_t pixel,
                       // reference frame; zero on the background
  std::vector<OcclusionMask> instance_masks;  // one per object, left_t pixels
  // 1 = visible in the named target view (and safely interpolable there).
  OcclusionMask occ_lr_t;     // ref left_t  -> right_t
  OcclusionMask occ_lr_t1;    // ref left_t1 -> right_t1
  OcclusionMask occ_temporal; // ref left_t  -> left_t1 (after object motion)
};

GroundTruthBundle render(const SceneSpec& spec);

/// Self-check: reverse-warp each target view with the ground truth and demand
// photometric and geometric residuals below the oracle budget.
struct BundleCheck {
  double lr_t_residual = 0.0;
  double lr_t1_residual = 0.0;
  double temporal_residual = 0.0;
  double geometric_residual = 0.0;
  bool pass(double budget = 1e-3) const {
    return lr_t_residual < budget && lr_t1_residual < budget &&
           temporal_residual < budget && geometric_residual < budget;
  }
};
BundleCheck verify_bundle(const GroundTruthBundle& b);

// Analytic ray-cast depth of one camera's continuous pixel, used by tests to
// cross-check occlusion reasoning. at_t1 selects object poses at t+1.
// Returns false when no surface is hit.
bool raycast_depth(const SceneSpec& spec, const RigidTransform& world_from_cam,
                   const Pixel& p, bool at_t1, double* depth, int* surface_id);

}  // namespace sflow
