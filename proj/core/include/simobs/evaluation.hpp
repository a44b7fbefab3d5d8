#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "simobs/classify.hpp"
#include "simobs/mlp.hpp"
#include "simobs/pcap.hpp"

namespace simobs {

// A trained decision rule: one threshold or an MLP.
using Classifier = std::variant<ThresholdConfig, MlpModel>;

bool classify(const Classifier& classifier, const SimilarityVector& sv);
std::vector<bool> classify(const Classifier& classifier, std::span<const LabeledSample> samples);

struct PrefixMetrics {
  std::size_t steps = 0;
  Metrics metrics;
};

// Metrics of `classifier` when only the first t aligned steps are observed,
// for t = 2 .. longest aligned window. labels[i] belongs to devices[i].
// A device that cannot be aligned with the reference is classified
// not-spying.
std::vector<PrefixMetrics> convergence_analysis(const ByteSeries& reference, std::span<const DeviceStream> devices,
                                                const std::vector<bool>& labels, const Classifier& classifier);

// How to fit a classifier on a training partition.
struct SweepTrainer {
  Measure measure = Measure::kKld;
};
struct MlpTrainer {
  MlpOptions options;
};
struct GridTrainer {
  std::vector<GridPoint> grid;
  MlpOptions base;
  std::size_t folds = 10;
};
using Trainer = std::variant<SweepTrainer, MlpTrainer, GridTrainer>;

Classifier train_classifier(std::span<const LabeledSample> train, const Trainer& trainer, std::uint64_t seed);

struct PortabilityMatrix {
  // Partition values A and B (sorted); index 2 is "both".
  std::array<std::string, 3> names;
  // f1[train][test].
  std::array<std::array<double, 3>, 3> f1{};

  double mean_diagonal() const;
  double mean_off_diagonal() const;
};

// Trains on A, B or both and tests on A, B or both, where A and B are the two
// values of tag `partition_key`. Cells whose train and test partitions are
// disjoint use whole partitions; the rest train on a stratified 70% split and
// test on the held-out 30%, so no cell scores on training data. Throws
// PartitionError unless exactly two values occur and both partitions hold
// both classes.
PortabilityMatrix portability_matrix(std::span<const LabeledSample> samples, const std::string& partition_key,
                                     const Trainer& trainer, std::uint64_t seed);

}  // namespace simobs
