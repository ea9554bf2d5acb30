// Copyright 2026 The qder Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef QDER_RNG_H_
#define QDER_RNG_H_

#include <cstdint>
#include <random>

namespace qder {

// Seeded random stream. All draws go through the helpers below so that a
// (seed, stream) pair yields the same sequence on every platform; the
// standard distributions are implementation-defined and are avoided.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
      : engine_(Mix(seed, stream)) {}

  std::uint64_t Next() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of precision.
  double Uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n). n must be positive. Lemire's multiply-shift
  // with rejection, so the result is unbiased.
  std::uint64_t UniformIndex(std::uint64_t n) {
    std::uint64_t x = engine_();
    __uint128_t m = static_cast<__uint128_t>(x) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
      const std::uint64_t threshold = (0 - n) % n;
      while (low < threshold) {
        x = engine_();
        m = static_cast<__uint128_t>(x) * n;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  bool Bernoulli(double p) { return Uniform() < p; }

 private:
  static std::uint64_t SplitMix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }
  static std::uint64_t Mix(std::uint64_t seed, std::uint64_t stream) {
    return SplitMix(SplitMix(seed) ^ SplitMix(stream + 0x632be59bd9b4e019ULL));
  }

  std::mt19937_64 engine_;
};

}  // namespace qder

#endif  // QDER_RNG_H_
