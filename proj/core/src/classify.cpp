#include "simobs/classify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "simobs/error.hpp"

namespace simobs {

ThresholdConfig ThresholdConfig::for_measure(Measure m, double threshold) {
  ThresholdConfig cfg;
  cfg.measure = m;
  cfg.threshold = threshold;
  cfg.direction = direction_of(m);
  return cfg;
}

ThresholdConfig default_threshold(Measure m) {
  switch (m) {
    case Measure::kCc: return ThresholdConfig::for_measure(m, 0.21);
    case Measure::kDtw: return ThresholdConfig::for_measure(m, 12.51);
    case Measure::kKld: return ThresholdConfig::for_measure(m, 0.021);
    case Measure::kJsd: return ThresholdConfig::for_measure(m, 0.005);
  }
  return {};
}

std::vector<ThresholdConfig> default_thresholds() {
  std::vector<ThresholdConfig> out;
  for (Measure m : kAllMeasures) out.push_back(default_threshold(m));
  return out;
}

double imputed_value(const SimilarityVector& sv, Measure m) {
  switch (m) {
    case Measure::kCc: return sv.defined(m) ? sv.cc : kImputedCc;
    case Measure::kDtw: return sv.dtw;
    case Measure::kKld: return sv.defined(m) ? std::min(sv.kld, kKldCap) : kKldCap;
    case Measure::kJsd: return sv.defined(m) ? sv.jsd : std::log(2.0);
  }
  return 0.0;
}

std::optional<std::string> LabeledSample::tag(const std::string& key) const {
  for (const auto& t : tags) {
    if (t.size() > key.size() && t.compare(0, key.size(), key) == 0 && t[key.size()] == '=')
      return t.substr(key.size() + 1);
  }
  return std::nullopt;
}

ThresholdVerdict threshold_classify(const SimilarityVector& sv, const ThresholdConfig& cfg) {
  if (!sv.defined(cfg.measure) && !cfg.impute_undefined) return {false, true};
  const double v = imputed_value(sv, cfg.measure);
  const bool spy = cfg.direction == Direction::kSpyIfAtLeast ? v >= cfg.threshold : v <= cfg.threshold;
  return {spy, false};
}

Metrics metrics_from_counts(std::uint64_t tp, std::uint64_t fp, std::uint64_t tn, std::uint64_t fn) {
  Metrics m;
  m.tp = tp;
  m.fp = fp;
  m.tn = tn;
  m.fn = fn;
  const auto total = static_cast<double>(tp + fp + tn + fn);
  m.accuracy = total > 0 ? static_cast<double>(tp + tn) / total : 0.0;
  if (tp + fp > 0)
    m.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  else
    m.flags |= kPrecisionUndefined;
  if (tp + fn > 0)
    m.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  else
    m.flags |= kRecallUndefined;
  // 2PR/(P+R) written on counts; identical wherever both are defined.
  if (tp > 0)
    m.f1 = 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
  else
    m.flags |= kF1Undefined;
  return m;
}

Metrics evaluate(std::span<const bool> predictions, std::span<const bool> labels) {
  if (predictions.size() != labels.size())
    throw ParameterError("evaluate: " + std::to_string(predictions.size()) + " predictions for " +
                         std::to_string(labels.size()) + " labels");
  if (labels.empty()) throw ParameterError("evaluate: no samples");
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (predictions[i])
      (labels[i] ? tp : fp)++;
    else
      (labels[i] ? fn : tn)++;
  }
  return metrics_from_counts(tp, fp, tn, fn);
}

Metrics evaluate(const std::vector<bool>& predictions, const std::vector<bool>& labels) {
  // vector<bool> is not contiguous; copy into plain arrays.
  std::unique_ptr<bool[]> p(new bool[predictions.size()]), l(new bool[labels.size()]);
  std::copy(predictions.begin(), predictions.end(), p.get());
  std::copy(labels.begin(), labels.end(), l.get());
  return evaluate(std::span<const bool>(p.get(), predictions.size()), std::span<const bool>(l.get(), labels.size()));
}

SweepResult sweep_threshold(std::span<const LabeledSample> samples, Measure m) {
  std::vector<std::pair<double, bool>> pts;
  pts.reserve(samples.size());
  std::uint64_t positives = 0;
  for (const auto& s : samples) {
    pts.emplace_back(imputed_value(s.features, m), s.label);
    positives += s.label ? 1 : 0;
  }
  if (positives == 0 || positives == samples.size())
    throw ClassImbalanceError("threshold sweep needs both spying and non-spying samples");
  const std::uint64_t negatives = samples.size() - positives;

  const Direction dir = direction_of(m);
  // Order samples so that admitting a prefix means lowering (at-most) or
  // raising (at-least) the bar one distinct value at a time.
  if (dir == Direction::kSpyIfAtMost)
    std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  else
    std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.first > b.first; });

  const double inf = std::numeric_limits<double>::infinity();
  double best_threshold = dir == Direction::kSpyIfAtMost ? -inf : inf;
  double best_f1 = metrics_from_counts(0, 0, negatives, positives).f1;
  std::uint64_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < pts.size();) {
    std::size_t j = i;
    while (j < pts.size() && pts[j].first == pts[i].first) {
      (pts[j].second ? tp : fp)++;
      ++j;
    }
    double threshold = dir == Direction::kSpyIfAtMost ? inf : -inf;
    if (j < pts.size()) {
      threshold = 0.5 * (pts[i].first + pts[j].first);
      // Adjacent doubles can round the midpoint onto the next value.
      if (threshold == pts[j].first) threshold = pts[i].first;
    }
    const double f1 = metrics_from_counts(tp, fp, negatives - fp, positives - tp).f1;
    if (f1 > best_f1) {
      best_f1 = f1;
      best_threshold = threshold;
    }
    i = j;
  }
  return {ThresholdConfig::for_measure(m, best_threshold), best_f1};
}

double AgreementReport::fraction(std::size_t k) const {
  if (false_positive_samples == 0) return 0.0;
  const auto it = distribution.find(k);
  return it == distribution.end() ? 0.0
                                  : static_cast<double>(it->second) / static_cast<double>(false_positive_samples);
}

AgreementReport measure_agreement(std::span<const LabeledSample> samples, std::span<const ThresholdConfig> configs) {
  AgreementReport r;
  r.measures = configs.size();
  for (const auto& s : samples) {
    if (s.label) continue;
    ++r.negatives;
    std::size_t fooled = 0;
    for (const auto& cfg : configs) fooled += threshold_classify(s.features, cfg).spy ? 1 : 0;
    if (fooled == 0) continue;
    ++r.false_positive_samples;
    ++r.distribution[fooled];
  }
  return r;
}

}  // namespace simobs
