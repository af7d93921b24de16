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

namespace sflow {

// All randomness in the project flows from a single 64-bit seed through this
// generator. SplitMix64 (Steele et al.) is used instead of std::mt19937_64 so
// that streams are cheap to fork per purpose and results are identical on
// every platform regardless of standard-library implementation details.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  int uniform_int(int lo, int hi_inclusive) {
    return lo + int(next_u64() % uint64_t(hi_inclusive - lo + 1));
  }

  // Deterministic derived stream; `salt` names the purpose.
  Rng fork(uint64_t salt) const {
    Rng r(state_ ^ (salt * 0x9e3779b97f4a7c15ull + 0x7f4a7c15ull));
    r.next_u64();
    return r;
  }

 private:
  uint64_t state_;
};

// Stateless integer-lattice hash in [0, 1), derived from the same mixer.
inline double lattice_hash01(uint64_t seed, int64_t x, int64_t y) {
  uint64_t h = seed;
  h ^= uint64_t(x) * 0x9e3779b97f4a7c15ull;
  h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ull;
  h ^= uint64_t(y) * 0xd1b54a32d192ed03ull;
  h = (h ^ (h >> 27)) * 0x94d049bb133111ebull;
  h ^= h >> 31;
  return double(h >> 11) * 0x1.0p-53;
}

// C2-smooth value noise in [0, 1]: lattice hashes blended with the quintic
// fade, so second derivatives stay bounded and resampling error controllable.
double value_noise(uint64_t seed, double x, double y);

}  // namespace sflow
