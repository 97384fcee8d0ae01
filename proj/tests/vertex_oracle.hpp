#pragma once

#include <algorithm>
#include <cstdint>
#include <tuple>
#include <vector>

#include "cng/core/rng.hpp"

namespace cng::testing {

// Independent transcription of the vertex-selection pseudocode. T is a list of
// positions, slices follow python semantics, and the mock classifier sees the
// slice contents and the width index.
struct OracleStep {
  long i, k;
  bool accepted;
};
struct OracleResult {
  std::vector<std::tuple<long, long, long>> emitted;  // first position, slice size, width index
  std::vector<OracleStep> steps;
};

template <class Classifier>
OracleResult pseudocode(long L, long K, Classifier y) {
  std::vector<long> T(L);
  for (long p = 0; p < L; ++p) T[p] = p;
  auto slice = [&](long a, long b) {
    std::vector<long> s;
    for (long p = std::max(a, 0L); p < std::min(b, L); ++p) s.push_back(T[p]);
    return s;
  };
  OracleResult r;
  std::vector<std::vector<long>> E;
  long i = 1, k = K;
  while (k >= 1) {
    if (i == L) return r;
    const long w = k;
    const std::vector<long> s = slice(i, i + k);
    const bool keep = y(s, w);
    r.steps.push_back({i, k, keep});
    if (keep) {
      E.push_back(s);
      r.emitted.emplace_back(s.front(), static_cast<long>(s.size()), w);
      if (L - (i + k) < k) {
        k = L - (i + k);
        i = L - k;
      } else if (E.empty() && K > 1) {
        k = k - 1;
        i = 0;
      } else {
        i = i + k;
      }
    } else {
      if (i + k >= L) {
        k = L - (i + 1);
      } else {
        i = i + 1;
      }
    }
  }
  return r;
}

inline std::uint64_t mix(std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t d) {
  return splitmix64(a ^ splitmix64(b ^ splitmix64(c ^ splitmix64(d))));
}

}  // namespace cng::testing
