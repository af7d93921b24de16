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

#include "sflow/rng.hpp"

#include <cmath>

namespace sflow {

namespace {

// Quintic fade: zero first and second derivative at the lattice points.
inline double fade(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

}  // namespace

double value_noise(uint64_t seed, double x, double y) {
  const double fx = std::floor(x), fy = std::floor(y);
  const int64_t ix = int64_t(fx), iy = int64_t(fy);
  const double sx = fade(x - fx), sy = fade(y - fy);
  const double v00 = lattice_hash01(seed, ix, iy);
  const double v10 = lattice_hash01(seed, ix + 1, iy);
  const double v01 = lattice_hash01(seed, ix, iy + 1);
  const double v11 = lattice_hash01(seed, ix + 1, iy + 1);
  const double a = v00 + sx * (v10 - v00);
  const double b = v01 + sx * (v11 - v01);
  return a + sy * (b - a);
}

}  // namespace sflow
