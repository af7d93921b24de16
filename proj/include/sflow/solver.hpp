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

#include <stdexcept>
#include <string>
#include <vector>

#include "sflow/losses.hpp"
#include "sflow/planesweep.hpp"

// Direct optimization of the scene state against the self-supervised
// objective: adaptive-moment gradient descent on log-depth, RoI flows and
// mask logits. Single-threaded with a fixed reduction order, so traces are
// bit-identical for identical seeds and configs.

namespace sflow {

struct SolverConfig {
  double step = 1e-2;
  double beta1 = 0.9, beta2 = 0.999;
  double adam_eps = 1e-8;
  int max_iters = 2000;
  // Converged when the relative decrease of the best total loss over the
  // trailing window falls below `tolerance`.
  double tolerance = 1e-5;
  int tolerance_window = 50;
  // Depth-only warm-up: only depth parameters move, and their gradient comes
  // from the lr + smoothness + weak terms so unknown motion cannot corrupt it.
  int depth_iters = 300;
  // Keep depth fixed once the joint phase starts. Log-depth steps move depth
  // by step*z world units per iteration against the flow's step*1, so a free
  // depth can zero the depth-consistency residual before the z flow moves.
  bool freeze_depth = true;
  bool log_depth = true;  // optimize log(depth); keeps depth positive
  uint64_t seed = 1;
  ObjectiveOptions objective;
};

struct SolveTrace {
  std::vector<LossReport> reports;   // full objective, every iteration
  SceneState state;                  // best-total state seen
  bool converged = false;
  int iterations = 0;
  double initial_loss = 0.0, final_loss = 0.0;

  std::string to_log() const;
};

// Raised when a loss turns non-finite; names the offending term.
class NumericalFailure : public std::runtime_error {
 public:
  explicit NumericalFailure(const std::string& what) : std::runtime_error(what) {}
};

// Plane-sweep winner-take-all depths for both time instants; per-RoI flow
// starts from an integer block match between the two left frames and the
// mask logits start saturated on. Invalid WTA pixels are filled with the
// median valid depth so log-depth parameterization is well-defined.
SceneState init_state(const StereoQuad& quad, const CameraRig& rig,
                      const std::vector<RoiBox>& rois, int roi_size,
                      const PlanesweepConfig& sweep);

SolveTrace solve(const SceneState& init, const StereoQuad& quad,
                 const CameraRig& rig, const SolverConfig& cfg,
                 const DepthMap* weak_disp_t = nullptr,
                 const DepthMap* weak_disp_t1 = nullptr);

}  // namespace sflow
