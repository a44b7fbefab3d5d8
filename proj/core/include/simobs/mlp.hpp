#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "simobs/classify.hpp"

namespace simobs {

enum class Activation { kLogistic, kTanh, kRelu };

const char* to_string(Activation a);
Activation parse_activation(const std::string& name);

// Which side supplies the reference recording. Picks the default measures.
enum class DetectorMode { kCameraRef, kPhoneRef };

const char* to_string(DetectorMode mode);
DetectorMode parse_detector_mode(const std::string& name);
// camera_ref -> {cc, kld, jsd}; phone_ref -> {dtw, kld, jsd}.
std::vector<Measure> default_feature_subset(DetectorMode mode);

// Model input: imputed values of `subset` followed by one undefined-indicator
// (0/1) per measure.
std::vector<double> feature_row(const SimilarityVector& sv, std::span<const Measure> subset);

struct MlpModel {
  std::vector<std::size_t> layer_sizes;  // input, hidden..., 1
  Activation activation = Activation::kLogistic;
  // weights[l] is layer_sizes[l] x layer_sizes[l+1], row-major.
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;
  std::vector<Measure> feature_subset;
  std::vector<double> feature_mean;
  std::vector<double> feature_std;
  double training_loss = 0.0;
  std::size_t iterations = 0;

  std::size_t total_weights() const;
  // Zero-initialized model for the given shape; useful as a baseline.
  static MlpModel zeros(std::vector<Measure> subset, std::vector<std::size_t> hidden, Activation act);
};

struct MlpOptions {
  std::vector<std::size_t> hidden_layers{13, 13, 13};
  Activation activation = Activation::kLogistic;
  double alpha = 1e-4;  // L2 penalty, scaled by 1/n like the data term
  std::uint64_t seed = 0;
  std::size_t max_iter = 200;
  double tol = 1e-6;  // stop once the loss improves by less than this
  std::vector<Measure> feature_subset{Measure::kCc, Measure::kKld, Measure::kJsd};
};

// Full-batch L-BFGS on the L2-regularized logistic loss. Standardization is
// fit on `train` only. Throws ClassImbalanceError with fewer than 10 samples
// of either class, TrainingDivergedError on a non-finite loss.
MlpModel mlp_train(std::span<const LabeledSample> train, const MlpOptions& options);

double mlp_predict(const MlpModel& model, const SimilarityVector& sv);
std::vector<double> mlp_predict(const MlpModel& model, std::span<const LabeledSample> samples);
inline bool mlp_verdict(double probability) { return probability >= 0.5; }

std::string model_to_json(const MlpModel& model);
// Throws ConfigError on malformed or inconsistent documents.
MlpModel model_from_json(const std::string& text);

struct GridPoint {
  std::vector<std::size_t> hidden_layers;
  Activation activation = Activation::kLogistic;
  double alpha = 1e-4;

  std::size_t total_weights(std::size_t inputs) const;
  std::string label() const;
  friend bool operator==(const GridPoint&, const GridPoint&) = default;
};

// 3 depths x 8 widths (10..17) x {logistic, tanh} x 16 alphas = 768 points.
std::vector<GridPoint> default_grid();
// Subset of default_grid: depth {1, 3} x width {10, 13, 17} x both
// activations x alpha {1e-5, 1e-4, 1e-3, 1e-2} = 48 points.
std::vector<GridPoint> compact_grid();

// Fold index per sample; positives and negatives are shuffled separately
// and dealt round-robin. Throws ParameterError when a class has fewer
// samples than folds.
std::vector<std::size_t> stratified_folds(std::span<const LabeledSample> samples, std::size_t folds,
                                          std::uint64_t seed);

struct CvResult {
  GridPoint point;
  double mean_f1 = 0.0;
};

// Mean per-fold F1 of `options` under stratified k-fold CV.
double cross_validate_f1(std::span<const LabeledSample> samples, const MlpOptions& options, std::size_t folds,
                         std::uint64_t seed);

struct GridSearchResult {
  GridPoint best;
  double cv_f1 = 0.0;
  std::vector<CvResult> results;  // grid order
};

// Picks the point with the highest mean CV F1; ties go to fewer weights,
// then to grid order. Points are evaluated on up to `threads` workers
// (0 = hardware concurrency); results do not depend on the thread count.
GridSearchResult grid_search(std::span<const LabeledSample> samples, std::span<const GridPoint> grid,
                             const MlpOptions& base, std::size_t folds, std::uint64_t seed,
                             std::size_t threads = 0);

MlpOptions with_point(MlpOptions base, const GridPoint& point);

}  // namespace simobs
