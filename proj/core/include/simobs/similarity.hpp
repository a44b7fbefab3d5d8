#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "simobs/timeseries.hpp"

namespace simobs {

enum class Measure { kCc, kDtw, kKld, kJsd };

inline constexpr Measure kAllMeasures[] = {Measure::kCc, Measure::kDtw, Measure::kKld, Measure::kJsd};

const char* to_string(Measure m);
// Accepts "cc", "dtw", "kld", "jsd". Throws ParameterError.
Measure parse_measure(const std::string& name);

enum SimilarityFlag : std::uint32_t {
  kCcUndefined = 1u << 0,
  kKldUndefined = 1u << 1,
  kRefDegenerate = 1u << 2,
  kCandDegenerate = 1u << 3,
  kJsdUndefined = 1u << 4,
};

// "cc_undefined|ref_degenerate", empty for no flags.
std::string flags_to_string(std::uint32_t flags);
std::uint32_t parse_flags(const std::string& text);

struct SimilarityVector {
  double cc = 0.0;
  double dtw = 0.0;
  double kld = 0.0;
  double jsd = 0.0;
  std::uint32_t flags = 0;

  bool has(SimilarityFlag f) const noexcept { return (flags & f) != 0; }
  // Whether the measure carries a real value (not flagged undefined).
  bool defined(Measure m) const noexcept;
  double value(Measure m) const noexcept;
};

// Sample Pearson coefficient, clamped to [-1, 1]. Throws
// UndefinedMeasureError on zero variance, ParameterError on bad lengths.
double pearson_cc(std::span<const double> a, std::span<const double> b);

// Unconstrained DTW with |a_i - b_j| cost, not normalized by path length.
double dtw_distance(std::span<const double> a, std::span<const double> b);

struct KldResult {
  double value = 0.0;
  bool floored = false;  // a standard deviation hit the 1e-9 floor
};

inline constexpr double kSigmaFloor = 1e-9;

// KL(N_a || N_b) between Gaussians fit by population moments.
KldResult gaussian_kld(std::span<const double> a, std::span<const double> b);

// Jensen-Shannon divergence (natural log) of the two series scaled to unit
// sum. Throws UndefinedMeasureError on a zero-sum input.
double jsd(std::span<const double> a, std::span<const double> b);

// Aligns, normalizes and computes all four measures of candidate against
// reference. Per-measure failures become flags; only AlignmentError (and a
// step mismatch ParameterError) escape.
SimilarityVector similarity_vector(const ByteSeries& reference, const ByteSeries& candidate);

}  // namespace simobs
