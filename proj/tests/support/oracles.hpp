#pragma once

// Reference implementations written straight from the definitions, used to
// check the library. Slow on purpose: exhaustive search, two-pass moments.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <limits>
#include <vector>

namespace oracle {

inline double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Population standard deviation.
inline double pstd(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double ma = mean(a), mb = mean(b);
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

// KL(N(mu_a, s_a^2) || N(mu_b, s_b^2)).
inline double gauss_kl(double mu_a, double s_a, double mu_b, double s_b) {
  return std::log(s_b / s_a) + (s_a * s_a + (mu_a - mu_b) * (mu_a - mu_b)) / (2 * s_b * s_b) - 0.5;
}

inline double jsd(const std::vector<double>& a, const std::vector<double>& b) {
  double sa = 0, sb = 0;
  for (double x : a) sa += x;
  for (double x : b) sb += x;
  double out = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double p = a[i] / sa, q = b[i] / sb, m = 0.5 * (p + q);
    if (p > 0) out += 0.5 * p * std::log(p / m);
    if (q > 0) out += 0.5 * q * std::log(q / m);
  }
  return out;
}

// Every monotone warping path from (0,0) to (n-1,m-1) with unit moves.
inline void for_each_path(std::size_t n, std::size_t m,
                          const std::function<void(const std::vector<std::pair<std::size_t, std::size_t>>&)>& f) {
  std::vector<std::pair<std::size_t, std::size_t>> path{{0, 0}};
  std::function<void()> rec = [&]() {
    const auto [i, j] = path.back();
    if (i == n - 1 && j == m - 1) {
      f(path);
      return;
    }
    const std::pair<std::size_t, std::size_t> moves[] = {{i + 1, j}, {i, j + 1}, {i + 1, j + 1}};
    for (const auto& mv : moves) {
      if (mv.first >= n || mv.second >= m) continue;
      path.push_back(mv);
      rec();
      path.pop_back();
    }
  };
  rec();
}

// Minimum total |a_i - b_j| over all warping paths, by enumeration.
inline double dtw_bruteforce(const std::vector<double>& a, const std::vector<double>& b) {
  double best = std::numeric_limits<double>::infinity();
  for_each_path(a.size(), b.size(), [&](const auto& path) {
    double cost = 0;
    for (const auto& [i, j] : path) cost += std::fabs(a[i] - b[j]);
    best = std::min(best, cost);
  });
  return best;
}

// All warping paths of an n x m grid (n, m <= 8) as cell bitmasks, for
// evaluating many pairs of the same shape against the same path set.
inline std::vector<std::uint64_t> path_masks(std::size_t n, std::size_t m) {
  std::vector<std::uint64_t> out;
  for_each_path(n, m, [&](const auto& path) {
    std::uint64_t mask = 0;
    for (const auto& [i, j] : path) mask |= std::uint64_t{1} << (i * 8 + j);
    out.push_back(mask);
  });
  return out;
}

// Exhaustive minimum for series over {0, 0.5, 1}, given as codes {0, 1, 2}.
// Returns the cost in half-units.
inline int dtw_bruteforce_halves(const std::vector<int>& a, const std::vector<int>& b,
                                 const std::vector<std::uint64_t>& masks) {
  std::uint64_t half = 0, full = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) {
      const int d = std::abs(a[i] - b[j]);
      if (d == 1) half |= std::uint64_t{1} << (i * 8 + j);
      if (d == 2) full |= std::uint64_t{1} << (i * 8 + j);
    }
  int best = std::numeric_limits<int>::max();
  for (std::uint64_t p : masks) {
    const int cost = std::popcount(p & half) + 2 * std::popcount(p & full);
    if (cost < best) best = cost;
  }
  return best;
}

}  // namespace oracle
