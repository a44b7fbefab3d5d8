#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "simobs/similarity.hpp"

namespace simobs {

enum class Direction { kSpyIfAtLeast, kSpyIfAtMost };

// cc is a similarity (high = spy); dtw, kld and jsd are distances.
constexpr Direction direction_of(Measure m) {
  return m == Measure::kCc ? Direction::kSpyIfAtLeast : Direction::kSpyIfAtMost;
}

struct ThresholdConfig {
  Measure measure = Measure::kKld;
  double threshold = 0.021;
  Direction direction = Direction::kSpyIfAtMost;
  // Classify undefined measures on their imputed value instead of reporting
  // them indeterminate.
  bool impute_undefined = true;

  static ThresholdConfig for_measure(Measure m, double threshold);
};

// Published operating points: CC 0.21, DTW 12.51, KLD 0.021, JSD 0.005.
ThresholdConfig default_threshold(Measure m);
std::vector<ThresholdConfig> default_thresholds();

// Values used for undefined measures and the cap applied to kld.
inline constexpr double kImputedCc = 0.0;
inline constexpr double kKldCap = 10.0;

// Value of m as seen by classifiers: undefined cc -> 0, kld capped at 10
// (undefined -> 10), undefined jsd -> ln 2.
double imputed_value(const SimilarityVector& sv, Measure m);

struct LabeledSample {
  std::string device_id;
  SimilarityVector features;
  bool label = false;  // true = spying device
  std::vector<std::string> tags;  // "key=value" strings

  // Value of tag `key`, if present.
  std::optional<std::string> tag(const std::string& key) const;
};

struct ThresholdVerdict {
  bool spy = false;
  bool indeterminate = false;
};

ThresholdVerdict threshold_classify(const SimilarityVector& sv, const ThresholdConfig& cfg);

enum MetricsFlag : std::uint32_t {
  kPrecisionUndefined = 1u << 0,
  kRecallUndefined = 1u << 1,
  kF1Undefined = 1u << 2,
};

struct Metrics {
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::uint32_t flags = 0;

  std::uint64_t total() const noexcept { return tp + fp + tn + fn; }
  double error() const noexcept { return 1.0 - accuracy; }
};

Metrics metrics_from_counts(std::uint64_t tp, std::uint64_t fp, std::uint64_t tn, std::uint64_t fn);
// Throws ParameterError on a length mismatch or empty input.
Metrics evaluate(std::span<const bool> predictions, std::span<const bool> labels);
Metrics evaluate(const std::vector<bool>& predictions, const std::vector<bool>& labels);

struct SweepResult {
  ThresholdConfig config;
  double f1 = 0.0;
};

// Best-F1 threshold for one measure over midpoints between distinct values
// plus +/-infinity. Ties go to the threshold admitting fewer positives.
// Throws ClassImbalanceError unless both classes are present.
SweepResult sweep_threshold(std::span<const LabeledSample> samples, Measure m);

struct AgreementReport {
  std::size_t measures = 0;
  std::size_t negatives = 0;
  std::size_t false_positive_samples = 0;
  // Number of simultaneously fooled measures -> sample count.
  std::map<std::size_t, std::size_t> distribution;

  double fraction(std::size_t k) const;
  // Share of false-positive samples on which every measure was fooled.
  double fraction_all_wrong() const { return fraction(measures); }
};

// For each negative sample flagged spy by at least one config, counts how
// many configs flagged it.
AgreementReport measure_agreement(std::span<const LabeledSample> samples,
                                  std::span<const ThresholdConfig> configs);

}  // namespace simobs
