#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

namespace qbvine {

// SplitMix64 step (Steele, Lea & Flood 2014). Used both as the stream
// generator and as the mixing function for deriving child seeds.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Derives a child seed from a base seed and a path of tags. All randomness
// in the library flows through seeds derived this way, so results are
// independent of thread scheduling: a task's stream depends only on the
// root seed and the task's identity, never on execution order.
inline std::uint64_t derive_seed(std::uint64_t base,
                                 std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = base;
  (void)splitmix64(s);
  for (std::uint64_t tag : path) {
    s ^= 0x632be59bd9b4e019ULL + tag;
    (void)splitmix64(s);
  }
  return s;
}

// Stream tags for derive_seed. Centralised so no two pipeline stages can
// collide on the same child stream by accident.
namespace seed_tag {
constexpr std::uint64_t kRhoSelect = 0x01;
constexpr std::uint64_t kPermutation = 0x02;
constexpr std::uint64_t kFoldAssign = 0x03;
constexpr std::uint64_t kCvSample = 0x04;
constexpr std::uint64_t kVineSample = 0x05;
constexpr std::uint64_t kSplit = 0x06;
constexpr std::uint64_t kGmm = 0x07;
constexpr std::uint64_t kLabelNoise = 0x08;
}  // namespace seed_tag

// Deterministic, platform-independent generator. The standard library's
// distributions are implementation-defined, so uniforms and normals are
// produced here from raw bits instead.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() { return splitmix64(state_); }

  // Uniform on the open interval (0,1); never returns an endpoint.
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Unbiased index in [0, n) via Lemire's multiply-shift rejection.
  std::uint64_t uniform_index(std::uint64_t n) {
    std::uint64_t x = next_u64();
    __uint128_t m = static_cast<__uint128_t>(x) * n;
    auto lo = static_cast<std::uint64_t>(m);
    if (lo < n) {
      std::uint64_t threshold = (0ULL - n) % n;
      while (lo < threshold) {
        x = next_u64();
        m = static_cast<__uint128_t>(x) * n;
        lo = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_index(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Identity-free random permutation of {0, ..., n-1}.
  std::vector<std::size_t> permutation(std::size_t n) {
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = i;
    shuffle(p);
    return p;
  }

private:
  std::uint64_t state_;
};

}  // namespace qbvine
