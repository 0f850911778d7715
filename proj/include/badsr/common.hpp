/* Copyright 2026 The badsr Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <new>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace badsr {

/// 64-byte-aligned allocator. Vectorized kernels pick instruction paths by
/// operand alignment, and those paths round differently; pinning every
/// numeric buffer to one alignment keeps results bitwise reproducible no
/// matter where the allocator places them.
template <typename T, std::size_t Alignment = 64>
class AlignedAllocator {
 public:
  using value_type = T;
  template <class U>
  struct rebind {
    using other = AlignedAllocator<U, Alignment>;
  };

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U, Alignment>&) {}

  T* allocate(std::size_t n) {
    std::size_t bytes = n * sizeof(T);
    bytes = (bytes + Alignment - 1) / Alignment * Alignment;
    void* p = std::aligned_alloc(Alignment, bytes);
    if (!p) throw std::bad_alloc();
    return static_cast<T*>(p);
  }
  void deallocate(T* p, std::size_t) noexcept { std::free(p); }

  bool operator==(const AlignedAllocator&) const { return true; }
  bool operator!=(const AlignedAllocator&) const { return false; }
};

using FloatVec = std::vector<float, AlignedAllocator<float>>;

/// Base class for all badsr errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Bad shapes, ranges, or configuration values. CLI exit code 2.
class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& msg) : Error(msg) {}
};

/// Non-finite losses or values during optimization. CLI exit code 3.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& msg) : Error(msg) {}
};

/// A required upstream artifact does not exist. CLI exit code 4.
class MissingArtifact : public Error {
 public:
  explicit MissingArtifact(const std::string& msg) : Error(msg) {}
};

/// File read/write failure.
class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error(msg) {}
};

/// The detector did not reach the accuracy gate; callers fall back to the
/// feature-similarity ASR surrogate.
class DetectorRejected : public Error {
 public:
  DetectorRejected(const std::string& msg, double accuracy)
      : Error(msg), accuracy(accuracy) {}
  double accuracy;
};

/// A loss functional that does not define a gradient.
class UnsupportedLoss : public Error {
 public:
  explicit UnsupportedLoss(const std::string& msg) : Error(msg) {}
};

inline float clamp01(float v) { return v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v); }

/// Deterministic random stream (splitmix64 state advance, explicit
/// distributions). Identical seeds give identical streams on every platform,
/// which the reproducibility contract relies on; std:: distributions are
/// implementation-defined and are not used anywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be positive.
  std::uint32_t uniform_int(std::uint32_t n) {
    // Rejection sampling keeps the draw unbiased.
    std::uint64_t threshold = (~std::uint64_t{0}) - (~std::uint64_t{0}) % n;
    std::uint64_t r;
    do {
      r = next_u64();
    } while (r >= threshold);
    return static_cast<std::uint32_t>(r % n);
  }

  /// Standard normal via Box-Muller. One fresh pair of uniforms per call so
  /// the stream position is a pure function of the call count.
  double normal() {
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

 private:
  std::uint64_t state_;
};

/// FNV-1a over a byte string.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

/// Sub-seed derivation: hash the component name and mix it with the master
/// seed through one splitmix64 round. Documented so external tooling can
/// reproduce any stage in isolation.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view component) {
  std::uint64_t z = master ^ fnv1a64(component);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace badsr
