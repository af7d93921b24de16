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

#include <cstdint>
#include <string>
#include <vector>

// Central-difference audit of every analytic gradient in the objective.
//
// L1 terms and bilinear sampling are only piecewise smooth. Instances are
// therefore drawn with margins: the standalone loss checks construct inputs
// whose residuals are bounded away from zero, and the full-objective check
// audits each random instance (see KinkAudit) and deterministically redraws
// until no kink lies within reach of the finite-difference step.

namespace sflow {

struct GradcheckTerm {
  std::string name;
  double max_rel_err = 0.0;
  long n_params = 0;
  bool pass = false;
};

struct GradcheckReport {
  std::vector<GradcheckTerm> terms;
  bool all_pass = false;
  int redraws = 0;  // degenerate instances skipped for the total objective
  std::string to_text() const;
};

// step: central-difference step (applied to each raw parameter);
// tol: maximum allowed relative error, |ga - gfd| / max(|ga|, |gfd|, 1e-6).
// break_gradient deliberately corrupts one analytic entry (negative control).
GradcheckReport run_gradcheck(uint64_t seed, int size = 16, double step = 1e-5,
                              double tol = 1e-4, bool break_gradient = false);

}  // namespace sflow
