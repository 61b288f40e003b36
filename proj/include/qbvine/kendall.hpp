#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace qbvine {

namespace detail {

// Counts inversions by merge sort, O(n log n).
inline std::uint64_t merge_count(std::vector<double>& v, std::vector<double>& buf,
                                 std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::uint64_t count = merge_count(v, buf, lo, mid) + merge_count(v, buf, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      buf[k++] = v[j++];
      count += mid - i;
    } else {
      buf[k++] = v[i++];
    }
  }
  while (i < mid) buf[k++] = v[i++];
  while (j < hi) buf[k++] = v[j++];
  std::copy(buf.begin() + static_cast<std::ptrdiff_t>(lo),
            buf.begin() + static_cast<std::ptrdiff_t>(hi),
            v.begin() + static_cast<std::ptrdiff_t>(lo));
  return count;
}

inline std::uint64_t tie_pairs(const std::vector<double>& sorted) {
  std::uint64_t total = 0;
  std::size_t run = 1;
  for (std::size_t i = 1; i <= sorted.size(); ++i) {
    if (i < sorted.size() && sorted[i] == sorted[i - 1]) {
      ++run;
    } else {
      total += static_cast<std::uint64_t>(run) * (run - 1) / 2;
      run = 1;
    }
  }
  return total;
}

}  // namespace detail

// Sample Kendall's tau-b via Knight's O(n log n) algorithm (Knight 1966).
// Ties contribute through the tau-b denominator; a fully tied margin yields 0.
inline double kendall_tau(const std::vector<double>& u, const std::vector<double>& v) {
  const std::size_t n = u.size();
  if (n != v.size()) throw std::invalid_argument("kendall_tau: length mismatch");
  if (n < 2) throw std::invalid_argument("kendall_tau: need at least 2 points");

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (u[a] != u[b]) return u[a] < u[b];
    return v[a] < v[b];
  });

  // pairs tied in u, and pairs tied in both (counted along the u-sort)
  std::uint64_t ties_u = 0, ties_uv = 0;
  {
    std::size_t run_u = 1, run_uv = 1;
    for (std::size_t i = 1; i <= n; ++i) {
      const bool same_u = i < n && u[idx[i]] == u[idx[i - 1]];
      const bool same_uv = same_u && v[idx[i]] == v[idx[i - 1]];
      if (same_u) ++run_u;
      else {
        ties_u += static_cast<std::uint64_t>(run_u) * (run_u - 1) / 2;
        run_u = 1;
      }
      if (same_uv) ++run_uv;
      else {
        ties_uv += static_cast<std::uint64_t>(run_uv) * (run_uv - 1) / 2;
        run_uv = 1;
      }
    }
  }

  std::vector<double> w(n), buf(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = v[idx[i]];
  const std::uint64_t swaps = detail::merge_count(w, buf, 0, n);  // w now sorted

  const std::uint64_t ties_v = detail::tie_pairs(w);
  const std::uint64_t n0 = static_cast<std::uint64_t>(n) * (n - 1) / 2;

  // concordant - discordant = n0 - ties_u - ties_v + ties_uv - 2*swaps
  const double num = static_cast<double>(n0) - static_cast<double>(ties_u) -
                     static_cast<double>(ties_v) + static_cast<double>(ties_uv) -
                     2.0 * static_cast<double>(swaps);
  const double den_u = static_cast<double>(n0) - static_cast<double>(ties_u);
  const double den_v = static_cast<double>(n0) - static_cast<double>(ties_v);
  if (den_u <= 0.0 || den_v <= 0.0) return 0.0;
  return num / std::sqrt(den_u * den_v);
}

}  // namespace qbvine
