#include "simobs/mlp.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <deque>
#include <exception>
#include <json.hpp>
#include <thread>

#include "simobs/error.hpp"
#include "simobs/random.hpp"

namespace simobs {
namespace {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

constexpr std::size_t kMinPerClass = 10;
constexpr std::size_t kLbfgsMemory = 10;
constexpr double kArmijo = 1e-4;

void activate(Activation act, Matrix& z) {
  switch (act) {
    case Activation::kLogistic: z = (1.0 / (1.0 + (-z.array()).exp())).matrix(); break;
    case Activation::kTanh: z = z.array().tanh().matrix(); break;
    case Activation::kRelu: z = z.array().max(0.0).matrix(); break;
  }
}

// Derivative expressed through the activation output a.
void scale_by_derivative(Activation act, const Matrix& a, Matrix& delta) {
  switch (act) {
    case Activation::kLogistic: delta.array() *= a.array() * (1.0 - a.array()); break;
    case Activation::kTanh: delta.array() *= 1.0 - a.array().square(); break;
    case Activation::kRelu: delta.array() *= (a.array() > 0.0).cast<double>(); break;
  }
}

double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }
double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Parameters flattened as [W0, b0, W1, b1, ...] with W row-major.
class Network {
 public:
  Network(std::vector<std::size_t> sizes, Activation act) : sizes_(std::move(sizes)), act_(act) {
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      w_off_.push_back(off);
      off += sizes_[l] * sizes_[l + 1];
      b_off_.push_back(off);
      off += sizes_[l + 1];
    }
    n_params_ = off;
  }

  std::size_t layers() const { return sizes_.size() - 1; }
  std::size_t params() const { return n_params_; }

  Eigen::Map<const Matrix> w(const Vector& p, std::size_t l) const {
    return {p.data() + w_off_[l], static_cast<Eigen::Index>(sizes_[l]), static_cast<Eigen::Index>(sizes_[l + 1])};
  }
  Eigen::Map<Matrix> w(Vector& p, std::size_t l) const {
    return {p.data() + w_off_[l], static_cast<Eigen::Index>(sizes_[l]), static_cast<Eigen::Index>(sizes_[l + 1])};
  }
  Eigen::Map<const Eigen::RowVectorXd> b(const Vector& p, std::size_t l) const {
    return {p.data() + b_off_[l], static_cast<Eigen::Index>(sizes_[l + 1])};
  }
  Eigen::Map<Eigen::RowVectorXd> b(Vector& p, std::size_t l) const {
    return {p.data() + b_off_[l], static_cast<Eigen::Index>(sizes_[l + 1])};
  }

  // Output-layer logits; hidden activations land in `acts` when given.
  Vector logits(const Vector& p, const Matrix& x, std::vector<Matrix>* acts = nullptr) const {
    Matrix a = x;
    if (acts) acts->assign(1, a);
    for (std::size_t l = 0; l < layers(); ++l) {
      Matrix z = a * w(p, l);
      z.rowwise() += b(p, l);
      if (l + 1 < layers()) activate(act_, z);
      a = std::move(z);
      if (acts) acts->push_back(a);
    }
    return a.col(0);
  }

  // Mean logistic loss plus alpha/(2n) * ||W||^2; fills the gradient.
  double loss_and_gradient(const Vector& p, const Matrix& x, const Vector& y, double alpha, Vector& grad) const {
    const auto n = static_cast<double>(x.rows());
    std::vector<Matrix> acts;
    const Vector z = logits(p, x, &acts);
    double loss = 0.0;
    Matrix delta(x.rows(), 1);
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      loss += softplus(z[i]) - y[i] * z[i];
      delta(i, 0) = (sigmoid(z[i]) - y[i]) / n;
    }
    loss /= n;
    grad.setZero(static_cast<Eigen::Index>(n_params_));
    double penalty = 0.0;
    for (std::size_t l = layers(); l-- > 0;) {
      const auto wl = w(p, l);
      penalty += wl.squaredNorm();
      w(grad, l) = acts[l].transpose() * delta + (alpha / n) * wl;
      b(grad, l) = delta.colwise().sum();
      if (l == 0) break;
      Matrix prev = delta * wl.transpose();
      scale_by_derivative(act_, acts[l], prev);
      delta = std::move(prev);
    }
    return loss + 0.5 * alpha * penalty / n;
  }

 private:
  std::vector<std::size_t> sizes_;
  Activation act_;
  std::vector<std::size_t> w_off_, b_off_;
  std::size_t n_params_ = 0;
};

struct Standardizer {
  std::vector<double> mean, sd;
};

Matrix design_matrix(std::span<const LabeledSample> samples, std::span<const Measure> subset) {
  const std::size_t d = 2 * subset.size();
  Matrix x(static_cast<Eigen::Index>(samples.size()), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto row = feature_row(samples[i].features, subset);
    for (std::size_t k = 0; k < d; ++k) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = row[k];
  }
  return x;
}

Standardizer fit_standardizer(const Matrix& x) {
  Standardizer s;
  for (Eigen::Index k = 0; k < x.cols(); ++k) {
    const double mean = x.col(k).mean();
    const double var = (x.col(k).array() - mean).square().mean();
    s.mean.push_back(mean);
    s.sd.push_back(var > 0.0 ? std::sqrt(var) : 1.0);
  }
  return s;
}

void apply_standardizer(const std::vector<double>& mean, const std::vector<double>& sd, Matrix& x) {
  for (Eigen::Index k = 0; k < x.cols(); ++k) {
    const auto ku = static_cast<std::size_t>(k);
    x.col(k) = (x.col(k).array() - mean[ku]) / sd[ku];
  }
}

Vector to_params(const MlpModel& m, const Network& net) {
  Vector p(static_cast<Eigen::Index>(net.params()));
  for (std::size_t l = 0; l < net.layers(); ++l) {
    auto wl = net.w(p, l);
    for (Eigen::Index r = 0; r < wl.rows(); ++r)
      for (Eigen::Index c = 0; c < wl.cols(); ++c)
        wl(r, c) = m.weights[l][static_cast<std::size_t>(r * wl.cols() + c)];
    auto bl = net.b(p, l);
    for (Eigen::Index c = 0; c < bl.size(); ++c) bl[c] = m.biases[l][static_cast<std::size_t>(c)];
  }
  return p;
}

void store_params(const Vector& p, const Network& net, MlpModel& m) {
  m.weights.assign(net.layers(), {});
  m.biases.assign(net.layers(), {});
  for (std::size_t l = 0; l < net.layers(); ++l) {
    const auto wl = net.w(p, l);
    m.weights[l].assign(wl.data(), wl.data() + wl.size());
    const auto bl = net.b(p, l);
    m.biases[l].assign(bl.data(), bl.data() + bl.size());
  }
}

struct LbfgsResult {
  double loss = 0.0;
  std::size_t iterations = 0;
};

template <typename Objective>
LbfgsResult minimize_lbfgs(Objective&& f, Vector& x, std::size_t max_iter, double tol) {
  Vector g;
  double fx = f(x, g);
  if (!std::isfinite(fx)) throw TrainingDivergedError("initial loss is not finite");
  std::deque<Vector> s_hist, y_hist;
  std::deque<double> rho_hist;
  LbfgsResult res;
  Vector g_new, x_new;
  for (std::size_t it = 1; it <= max_iter; ++it) {
    res.iterations = it;
    // Two-loop recursion for the search direction.
    Vector q = -g;
    std::vector<double> alphas(s_hist.size());
    for (std::size_t k = s_hist.size(); k-- > 0;) {
      alphas[k] = rho_hist[k] * s_hist[k].dot(q);
      q -= alphas[k] * y_hist[k];
    }
    if (!s_hist.empty()) q *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    for (std::size_t k = 0; k < s_hist.size(); ++k) {
      const double beta = rho_hist[k] * y_hist[k].dot(q);
      q += (alphas[k] - beta) * s_hist[k];
    }
    double slope = g.dot(q);
    if (!(slope < 0.0)) {
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      q = -g;
      slope = -g.squaredNorm();
    }
    if (slope == 0.0) break;

    double t = s_hist.empty() ? std::min(1.0, 1.0 / std::max(g.lpNorm<Eigen::Infinity>(), 1e-12)) : 1.0;
    double f_new = 0.0;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      x_new = x + t * q;
      f_new = f(x_new, g_new);
      if (std::isfinite(f_new) && f_new <= fx + kArmijo * t * slope) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;
    Vector s = x_new - x;
    Vector y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12) {
      if (s_hist.size() == kLbfgsMemory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
    }
    const double improvement = fx - f_new;
    x.swap(x_new);
    g.swap(g_new);
    fx = f_new;
    if (!std::isfinite(fx)) throw TrainingDivergedError("loss is not finite");
    if (improvement < tol || g.lpNorm<Eigen::Infinity>() < 1e-10) break;
  }
  res.loss = fx;
  return res;
}

std::size_t weight_count(const std::vector<std::size_t>& sizes) {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) n += sizes[l] * sizes[l + 1] + sizes[l + 1];
  return n;
}

std::vector<std::size_t> layer_sizes_for(std::size_t inputs, const std::vector<std::size_t>& hidden) {
  std::vector<std::size_t> sizes{inputs};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(1);
  return sizes;
}

}  // namespace

const char* to_string(Activation a) {
  switch (a) {
    case Activation::kLogistic: return "logistic";
    case Activation::kTanh: return "tanh";
    case Activation::kRelu: return "relu";
  }
  return "?";
}

Activation parse_activation(const std::string& name) {
  for (Activation a : {Activation::kLogistic, Activation::kTanh, Activation::kRelu})
    if (name == to_string(a)) return a;
  throw ParameterError("unknown activation '" + name + "' (expected logistic, tanh or relu)");
}

const char* to_string(DetectorMode mode) { return mode == DetectorMode::kCameraRef ? "camera_ref" : "phone_ref"; }

DetectorMode parse_detector_mode(const std::string& name) {
  if (name == "camera_ref") return DetectorMode::kCameraRef;
  if (name == "phone_ref") return DetectorMode::kPhoneRef;
  throw ParameterError("unknown detector mode '" + name + "' (expected camera_ref or phone_ref)");
}

std::vector<Measure> default_feature_subset(DetectorMode mode) {
  if (mode == DetectorMode::kCameraRef) return {Measure::kCc, Measure::kKld, Measure::kJsd};
  return {Measure::kDtw, Measure::kKld, Measure::kJsd};
}

std::vector<double> feature_row(const SimilarityVector& sv, std::span<const Measure> subset) {
  std::vector<double> row;
  row.reserve(2 * subset.size());
  for (Measure m : subset) row.push_back(imputed_value(sv, m));
  for (Measure m : subset) row.push_back(sv.defined(m) ? 0.0 : 1.0);
  return row;
}

std::size_t MlpModel::total_weights() const { return weight_count(layer_sizes); }

MlpModel MlpModel::zeros(std::vector<Measure> subset, std::vector<std::size_t> hidden, Activation act) {
  MlpModel m;
  m.layer_sizes = layer_sizes_for(2 * subset.size(), hidden);
  m.activation = act;
  m.feature_subset = std::move(subset);
  m.feature_mean.assign(m.layer_sizes[0], 0.0);
  m.feature_std.assign(m.layer_sizes[0], 1.0);
  for (std::size_t l = 0; l + 1 < m.layer_sizes.size(); ++l) {
    m.weights.emplace_back(m.layer_sizes[l] * m.layer_sizes[l + 1], 0.0);
    m.biases.emplace_back(m.layer_sizes[l + 1], 0.0);
  }
  return m;
}

MlpModel mlp_train(std::span<const LabeledSample> train, const MlpOptions& options) {
  std::size_t pos = 0;
  for (const auto& s : train) pos += s.label ? 1 : 0;
  if (pos < kMinPerClass || train.size() - pos < kMinPerClass)
    throw ClassImbalanceError("MLP training needs at least 10 samples per class (got " + std::to_string(pos) +
                              " spying, " + std::to_string(train.size() - pos) + " non-spying)");
  if (options.feature_subset.empty()) throw ParameterError("MLP needs at least one feature");
  if (options.hidden_layers.empty() ||
      std::any_of(options.hidden_layers.begin(), options.hidden_layers.end(), [](auto w) { return w == 0; }))
    throw ParameterError("MLP hidden layers must be non-empty with positive widths");

  Matrix x = design_matrix(train, options.feature_subset);
  const Standardizer st = fit_standardizer(x);
  apply_standardizer(st.mean, st.sd, x);
  Vector y(x.rows());
  for (std::size_t i = 0; i < train.size(); ++i) y[static_cast<Eigen::Index>(i)] = train[i].label ? 1.0 : 0.0;

  MlpModel model;
  model.layer_sizes = layer_sizes_for(static_cast<std::size_t>(x.cols()), options.hidden_layers);
  model.activation = options.activation;
  model.feature_subset = options.feature_subset;
  model.feature_mean = st.mean;
  model.feature_std = st.sd;

  const Network net(model.layer_sizes, options.activation);
  Vector p(static_cast<Eigen::Index>(net.params()));
  // Glorot-uniform initialization; the logistic unit uses the narrower bound.
  Rng rng(options.seed);
  const double factor = options.activation == Activation::kLogistic ? 2.0 : 6.0;
  for (std::size_t l = 0; l < net.layers(); ++l) {
    const double bound = std::sqrt(factor / static_cast<double>(model.layer_sizes[l] + model.layer_sizes[l + 1]));
    auto wl = net.w(p, l);
    for (Eigen::Index k = 0; k < wl.size(); ++k) wl.data()[k] = rng.uniform(-bound, bound);
    auto bl = net.b(p, l);
    for (Eigen::Index k = 0; k < bl.size(); ++k) bl[k] = rng.uniform(-bound, bound);
  }

  const auto objective = [&](const Vector& params, Vector& grad) {
    return net.loss_and_gradient(params, x, y, options.alpha, grad);
  };
  const LbfgsResult r = minimize_lbfgs(objective, p, std::max<std::size_t>(options.max_iter, 1), options.tol);
  if (!std::isfinite(r.loss)) throw TrainingDivergedError("training loss is not finite");
  store_params(p, net, model);
  model.training_loss = r.loss;
  model.iterations = r.iterations;
  return model;
}

std::vector<double> mlp_predict(const MlpModel& model, std::span<const LabeledSample> samples) {
  Matrix x = design_matrix(samples, model.feature_subset);
  apply_standardizer(model.feature_mean, model.feature_std, x);
  const Network net(model.layer_sizes, model.activation);
  const Vector z = net.logits(to_params(model, net), x);
  std::vector<double> out(samples.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid(z[static_cast<Eigen::Index>(i)]);
  return out;
}

double mlp_predict(const MlpModel& model, const SimilarityVector& sv) {
  const LabeledSample one{"", sv, false, {}};
  return mlp_predict(model, std::span<const LabeledSample>(&one, 1)).front();
}

std::string model_to_json(const MlpModel& model) {
  nlohmann::json j;
  j["format"] = "simobs-mlp";
  j["version"] = 1;
  j["layer_sizes"] = model.layer_sizes;
  j["activation"] = to_string(model.activation);
  j["weights"] = model.weights;
  j["biases"] = model.biases;
  std::vector<std::string> subset;
  for (Measure m : model.feature_subset) subset.emplace_back(to_string(m));
  j["feature_subset"] = subset;
  j["standardization"] = {{"mean", model.feature_mean}, {"std", model.feature_std}};
  j["training_loss"] = model.training_loss;
  j["iterations"] = model.iterations;
  return j.dump(2);
}

MlpModel model_from_json(const std::string& text) {
  MlpModel m;
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("format") != "simobs-mlp") throw ConfigError("not a simobs-mlp model");
    if (j.at("version").get<int>() != 1) throw ConfigError("unsupported model version");
    m.layer_sizes = j.at("layer_sizes").get<std::vector<std::size_t>>();
    m.activation = parse_activation(j.at("activation").get<std::string>());
    m.weights = j.at("weights").get<std::vector<std::vector<double>>>();
    m.biases = j.at("biases").get<std::vector<std::vector<double>>>();
    for (const auto& name : j.at("feature_subset").get<std::vector<std::string>>())
      m.feature_subset.push_back(parse_measure(name));
    m.feature_mean = j.at("standardization").at("mean").get<std::vector<double>>();
    m.feature_std = j.at("standardization").at("std").get<std::vector<double>>();
    m.training_loss = j.value("training_loss", 0.0);
    m.iterations = j.value("iterations", std::size_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed model JSON: ") + e.what());
  } catch (const ParameterError& e) {
    throw ConfigError(std::string("malformed model JSON: ") + e.what());
  }
  const std::size_t layers = m.layer_sizes.size();
  bool ok = layers >= 2 && m.layer_sizes.back() == 1 && m.weights.size() == layers - 1 &&
            m.biases.size() == layers - 1 && m.layer_sizes.front() == 2 * m.feature_subset.size() &&
            m.feature_mean.size() == m.layer_sizes.front() && m.feature_std.size() == m.layer_sizes.front();
  for (std::size_t l = 0; ok && l + 1 < layers; ++l)
    ok = m.weights[l].size() == m.layer_sizes[l] * m.layer_sizes[l + 1] && m.biases[l].size() == m.layer_sizes[l + 1];
  if (!ok) throw ConfigError("model layer dimensions do not chain");
  return m;
}

std::size_t GridPoint::total_weights(std::size_t inputs) const {
  return weight_count(layer_sizes_for(inputs, hidden_layers));
}

std::string GridPoint::label() const {
  std::string out;
  for (std::size_t i = 0; i < hidden_layers.size(); ++i) {
    if (i) out.push_back('x');
    out += std::to_string(hidden_layers[i]);
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", alpha);
  return out + "/" + to_string(activation) + "/alpha=" + buf;
}

std::vector<GridPoint> default_grid() {
  std::vector<GridPoint> grid;
  for (std::size_t depth = 1; depth <= 3; ++depth)
    for (std::size_t width = 10; width <= 17; ++width)
      for (Activation act : {Activation::kLogistic, Activation::kTanh})
        for (int k = 0; k < 16; ++k)
          grid.push_back({std::vector<std::size_t>(depth, width), act, std::pow(10.0, -5.0 + k / 3.0)});
  return grid;
}

std::vector<GridPoint> compact_grid() {
  std::vector<GridPoint> grid;
  for (std::size_t depth : {1, 3})
    for (std::size_t width : {10, 13, 17})
      for (Activation act : {Activation::kLogistic, Activation::kTanh})
        for (int k : {0, 3, 6, 9})
          grid.push_back({std::vector<std::size_t>(depth, width), act, std::pow(10.0, -5.0 + k / 3.0)});
  return grid;
}

std::vector<std::size_t> stratified_folds(std::span<const LabeledSample> samples, std::size_t folds,
                                          std::uint64_t seed) {
  if (folds < 2) throw ParameterError("cross validation needs at least 2 folds");
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < samples.size(); ++i) (samples[i].label ? pos : neg).push_back(i);
  if (pos.size() < folds || neg.size() < folds)
    throw ParameterError("stratified " + std::to_string(folds) + "-fold split needs at least " +
                         std::to_string(folds) + " samples per class");
  Rng rng(seed);
  std::vector<std::size_t> fold(samples.size(), 0);
  std::size_t next = 0;
  for (auto* group : {&pos, &neg}) {
    for (std::size_t i = group->size(); i > 1; --i) std::swap((*group)[i - 1], (*group)[rng.below(i)]);
    for (std::size_t idx : *group) fold[idx] = next++ % folds;
  }
  return fold;
}

double cross_validate_f1(std::span<const LabeledSample> samples, const MlpOptions& options, std::size_t folds,
                         std::uint64_t seed) {
  const auto fold = stratified_folds(samples, folds, seed);
  double sum = 0.0;
  for (std::size_t k = 0; k < folds; ++k) {
    std::vector<LabeledSample> train, test;
    for (std::size_t i = 0; i < samples.size(); ++i) (fold[i] == k ? test : train).push_back(samples[i]);
    MlpOptions opt = options;
    opt.seed = sub_seed(options.seed, k);
    const MlpModel model = mlp_train(train, opt);
    const auto prob = mlp_predict(model, test);
    std::vector<bool> pred, lab;
    for (std::size_t i = 0; i < test.size(); ++i) {
      pred.push_back(mlp_verdict(prob[i]));
      lab.push_back(test[i].label);
    }
    sum += evaluate(pred, lab).f1;
  }
  return sum / static_cast<double>(folds);
}

MlpOptions with_point(MlpOptions base, const GridPoint& point) {
  base.hidden_layers = point.hidden_layers;
  base.activation = point.activation;
  base.alpha = point.alpha;
  return base;
}

GridSearchResult grid_search(std::span<const LabeledSample> samples, std::span<const GridPoint> grid,
                             const MlpOptions& base, std::size_t folds, std::uint64_t seed, std::size_t threads) {
  if (grid.empty()) throw ParameterError("grid search needs at least one grid point");
  (void)stratified_folds(samples, folds, seed);

  std::vector<CvResult> results(grid.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  const auto worker = [&] {
    for (std::size_t i = next++; i < grid.size() && !failed; i = next++) {
      try {
        results[i] = {grid[i], cross_validate_f1(samples, with_point(base, grid[i]), folds, seed)};
      } catch (...) {
        if (!failed.exchange(true)) failure = std::current_exception();
      }
    }
  };
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, grid.size());
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  const std::size_t inputs = 2 * base.feature_subset.size();
  std::size_t best = 0;
  for (std::size_t i = 1; i < results.size(); ++i) {
    const auto& r = results[i];
    const auto& b = results[best];
    if (r.mean_f1 > b.mean_f1 ||
        (r.mean_f1 == b.mean_f1 && r.point.total_weights(inputs) < b.point.total_weights(inputs)))
      best = i;
  }
  return {results[best].point, results[best].mean_f1, std::move(results)};
}

}  // namespace simobs
