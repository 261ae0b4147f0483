// Copyright 2026 The BFtS Lab Authors.
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

#pragma once

#include <cstdint>
#include <random>

namespace bfts {

// SplitMix64 finalizer, used to derive independent seeds for substreams.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Named substreams. Every sampling stage owns one so that changing the amount
// drawn by one stage never shifts the draws of another.
enum class Stream : std::uint64_t {
  kEdges = 1,
  kSensitive = 2,
  kFeatures = 3,
  kSplits = 4,
  kMask = 5,
  kInitClassifier = 10,
  kInitImputer = 11,
  kInitAdversary = 12,
  kDropoutClassifier = 20,
  kDropoutImputer = 21,
  kDropoutStage1 = 22,
  kHoldout = 30,
  kTest = 99,
};

// Seedable 64-bit generator (std::mt19937_64) whose seed is derived from a
// root seed, a stream tag and an optional index through SplitMix64.
class Rng {
 public:
  using result_type = std::mt19937_64::result_type;

  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  Rng(std::uint64_t seed, Stream stream, std::uint64_t index = 0)
      : engine_(derive(seed, stream, index)) {}

  static std::uint64_t derive(std::uint64_t seed, Stream stream,
                              std::uint64_t index) {
    std::uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ static_cast<std::uint64_t>(stream));
    return splitmix64(h ^ (index * 0xd1342543de82ef95ULL));
  }

  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

  double uniform() {
    return std::uniform_real_distribution<double>(0.0, 1.0)(engine_);
  }
  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace bfts
