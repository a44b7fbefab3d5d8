#include "simobs/evaluation.hpp"

#include <algorithm>
#include <memory>
#include <optional>
#include <set>

#include "simobs/error.hpp"
#include "simobs/random.hpp"

namespace simobs {

bool classify(const Classifier& classifier, const SimilarityVector& sv) {
  if (const auto* cfg = std::get_if<ThresholdConfig>(&classifier)) return threshold_classify(sv, *cfg).spy;
  return mlp_verdict(mlp_predict(std::get<MlpModel>(classifier), sv));
}

std::vector<bool> classify(const Classifier& classifier, std::span<const LabeledSample> samples) {
  std::vector<bool> out;
  out.reserve(samples.size());
  if (const auto* cfg = std::get_if<ThresholdConfig>(&classifier)) {
    for (const auto& s : samples) out.push_back(threshold_classify(s.features, *cfg).spy);
    return out;
  }
  for (double p : mlp_predict(std::get<MlpModel>(classifier), samples)) out.push_back(mlp_verdict(p));
  return out;
}

std::vector<PrefixMetrics> convergence_analysis(const ByteSeries& reference, std::span<const DeviceStream> devices,
                                                const std::vector<bool>& labels, const Classifier& classifier) {
  if (labels.size() != devices.size())
    throw ParameterError("convergence analysis needs one label per device");
  if (devices.empty()) throw ParameterError("convergence analysis needs at least one device");

  std::vector<std::optional<std::pair<ByteSeries, ByteSeries>>> pairs;
  std::size_t longest = 0;
  for (const auto& d : devices) {
    try {
      pairs.emplace_back(align(reference, d.series));
      longest = std::max(longest, pairs.back()->first.size());
    } catch (const AlignmentError&) {
      pairs.emplace_back(std::nullopt);
    }
  }
  if (longest < 2) throw ParameterError("convergence analysis needs an aligned window of at least 2 steps");

  std::vector<PrefixMetrics> table;
  std::vector<LabeledSample> batch(devices.size());
  for (std::size_t t = 2; t <= longest; ++t) {
    for (std::size_t i = 0; i < devices.size(); ++i) {
      batch[i].label = labels[i];
      if (pairs[i]) {
        const auto& [r, d] = *pairs[i];
        batch[i].features = similarity_vector(r.prefix(t), d.prefix(t));
      }
    }
    std::vector<bool> pred = classify(classifier, batch);
    for (std::size_t i = 0; i < devices.size(); ++i)
      if (!pairs[i]) pred[i] = false;
    table.push_back({t, evaluate(pred, labels)});
  }
  return table;
}

Classifier train_classifier(std::span<const LabeledSample> train, const Trainer& trainer, std::uint64_t seed) {
  if (const auto* sweep = std::get_if<SweepTrainer>(&trainer)) return sweep_threshold(train, sweep->measure).config;
  if (const auto* mlp = std::get_if<MlpTrainer>(&trainer)) {
    MlpOptions opt = mlp->options;
    opt.seed = seed;
    return mlp_train(train, opt);
  }
  const auto& grid = std::get<GridTrainer>(trainer);
  MlpOptions base = grid.base;
  base.seed = seed;
  const auto result = grid_search(train, grid.grid, base, grid.folds, seed);
  return mlp_train(train, with_point(base, result.best));
}

double PortabilityMatrix::mean_diagonal() const { return (f1[0][0] + f1[1][1] + f1[2][2]) / 3.0; }

double PortabilityMatrix::mean_off_diagonal() const {
  double sum = 0.0;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      if (i != j) sum += f1[i][j];
  return sum / 6.0;
}

PortabilityMatrix portability_matrix(std::span<const LabeledSample> samples, const std::string& partition_key,
                                     const Trainer& trainer, std::uint64_t seed) {
  std::set<std::string> values;
  std::vector<std::string> part(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto v = samples[i].tag(partition_key);
    if (!v) throw PartitionError("sample '" + samples[i].device_id + "' has no '" + partition_key + "' tag");
    part[i] = *v;
    values.insert(*v);
  }
  if (values.size() != 2)
    throw PartitionError("partition tag '" + partition_key + "' must take exactly 2 values, found " +
                         std::to_string(values.size()));

  PortabilityMatrix out;
  out.names = {*values.begin(), *std::next(values.begin()), "both"};

  // Stratified 70/30 split inside each partition.
  Rng rng(sub_seed(seed, 0x9051));
  std::vector<bool> held_out(samples.size(), false);
  for (std::size_t p = 0; p < 2; ++p) {
    for (bool label : {true, false}) {
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < samples.size(); ++i)
        if (part[i] == out.names[p] && samples[i].label == label) idx.push_back(i);
      if (idx.size() < 2)
        throw PartitionError("partition '" + out.names[p] + "' needs at least 2 " +
                             (label ? "spying" : "non-spying") + " samples");
      for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
      const std::size_t n_test = std::max<std::size_t>(1, (idx.size() * 3 + 9) / 10);
      for (std::size_t k = 0; k < n_test; ++k) held_out[idx[k]] = true;
    }
  }

  const auto in_partition = [&](std::size_t i, std::size_t p) { return p == 2 || part[i] == out.names[p]; };
  for (std::size_t tr = 0; tr < 3; ++tr) {
    for (std::size_t te = 0; te < 3; ++te) {
      const bool disjoint = tr != 2 && te != 2 && tr != te;
      std::vector<LabeledSample> train, test;
      for (std::size_t i = 0; i < samples.size(); ++i) {
        if (in_partition(i, tr) && (disjoint || !held_out[i])) train.push_back(samples[i]);
        if (in_partition(i, te) && (disjoint || held_out[i])) test.push_back(samples[i]);
      }
      const Classifier c = train_classifier(train, trainer, sub_seed(seed, tr * 3 + te));
      std::vector<bool> labels;
      for (const auto& s : test) labels.push_back(s.label);
      out.f1[tr][te] = evaluate(classify(c, test), labels).f1;
    }
  }
  return out;
}

}  // namespace simobs
