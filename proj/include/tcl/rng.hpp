#pragma once

// Deterministic stream derivation. Every random decision in a run draws from
// a stream derived from (master seed, purpose tag, indices), so runs are pure
// functions of the config and completions can be generated independently.

#include <cstdint>
#include <random>

namespace tcl {

// Purpose tags keep unrelated streams from colliding.
enum class Stream : std::uint64_t {
  param_init = 1,
  pretrain_corpus = 2,
  pretrain_order = 3,
  problem = 4,
  completion = 5,
  selection = 6,
  replay = 7,
  eval_set = 8,
  sweep_cell = 9,
  oracle = 10,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, Stream purpose,
                                 std::uint64_t a = 0, std::uint64_t b = 0) {
  std::uint64_t s = splitmix64(master ^ 0x6a09e667f3bcc908ULL);
  s = splitmix64(s ^ static_cast<std::uint64_t>(purpose));
  s = splitmix64(s ^ a);
  s = splitmix64(s ^ b);
  return s;
}

inline std::mt19937_64 make_rng(std::uint64_t master, Stream purpose,
                                std::uint64_t a = 0, std::uint64_t b = 0) {
  return std::mt19937_64(derive_seed(master, purpose, a, b));
}

}  // namespace tcl
