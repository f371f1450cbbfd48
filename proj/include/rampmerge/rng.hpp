// Copyright 2026 The rampmerge Authors
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

#include <array>
#include <cstdint>
#include <cmath>
#include <limits>

namespace rampmerge {

// Counter-based Philox4x32-10 generator (Salmon et al., SC'11). A (key,
// stream) pair selects an independent sequence; the block counter walks it.
// Satisfies UniformRandomBitGenerator.
class Philox4x32 {
 public:
  using result_type = std::uint32_t;

  explicit Philox4x32(std::uint64_t key = 0, std::uint64_t stream = 0)
      : key_{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)},
        stream_(stream) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    if (pos_ == 4) {
      buffer_ = block(block_++);
      pos_ = 0;
    }
    return buffer_[pos_++];
  }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform() {
    std::uint64_t hi = (*this)() >> 5;
    std::uint64_t lo = (*this)() >> 6;
    return static_cast<double>((hi << 26) | lo) * 0x1.0p-53;
  }

  // Unbiased integer in [0, bound) (Lemire's multiply-shift with rejection).
  std::uint64_t below(std::uint64_t bound) {
    if (bound <= 1) return 0;
    if (bound <= max()) {
      std::uint64_t m = static_cast<std::uint64_t>((*this)()) * bound;
      auto low = static_cast<std::uint32_t>(m);
      if (low < bound) {
        auto threshold = static_cast<std::uint32_t>((0x100000000ULL - bound) % bound);
        while (low < threshold) {
          m = static_cast<std::uint64_t>((*this)()) * bound;
          low = static_cast<std::uint32_t>(m);
        }
      }
      return m >> 32;
    }
    // Large bounds: 64-bit rejection.
    std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                          std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t v;
    do {
      v = (static_cast<std::uint64_t>((*this)()) << 32) | (*this)();
    } while (v >= limit);
    return v % bound;
  }

  // Raw block function, exposed for known-answer tests.
  static std::array<std::uint32_t, 4> philox(std::array<std::uint32_t, 4> ctr,
                                             std::array<std::uint32_t, 2> key) {
    constexpr std::uint32_t kM0 = 0xD2511F53u, kM1 = 0xCD9E8D57u;
    constexpr std::uint32_t kW0 = 0x9E3779B9u, kW1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
      std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * ctr[0];
      std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * ctr[2];
      auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
      auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
      key[0] += kW0;
      key[1] += kW1;
    }
    return ctr;
  }

 private:
  std::array<std::uint32_t, 4> block(std::uint64_t index) const {
    return philox({static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                   static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)},
                  key_);
  }

  std::array<std::uint32_t, 2> key_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int pos_ = 4;
};

// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Seed of replication `index` under `master`: master XOR mix64(index).
constexpr std::uint64_t replication_seed(std::uint64_t master, std::uint64_t index) {
  return master ^ mix64(index);
}

// Stream ids keep the draws of one replication apart.
namespace stream {
inline constexpr std::uint64_t kAssignment = 1;
inline constexpr std::uint64_t kNoise = 2;
inline constexpr std::uint64_t kEvolution = 3;
inline constexpr std::uint64_t kLouvain = 4;
inline constexpr std::uint64_t kPropensity = 5;

// Distinct stream per (purpose, step).
constexpr std::uint64_t at(std::uint64_t purpose, std::uint64_t step) {
  return (purpose << 32) | step;
}
}  // namespace stream

// Standard normal via Marsaglia's polar method on a Philox stream.
class NormalSampler {
 public:
  explicit NormalSampler(Philox4x32 rng) : rng_(rng) {}

  double operator()() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * rng_.uniform() - 1.0;
      v = 2.0 * rng_.uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

 private:
  Philox4x32 rng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace rampmerge
