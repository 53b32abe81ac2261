#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hqst/errors.hpp"
#include "hqst/fock.hpp"
#include "hqst/histogram.hpp"
#include "hqst/synth.hpp"

namespace hqst {

/// Adam hyper-parameters and minibatching for training the affine estimator.
struct TrainConfig {
  double learning_rate = 0.01;
  std::size_t epochs = 10;
  std::size_t batch_size = 1024;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate > 0.0)) throw DomainError("learning rate must be > 0");
    if (epochs < 1) throw DomainError("need at least one epoch");
    if (batch_size < 1) throw DomainError("batch size must be >= 1");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
      throw DomainError("Adam betas must lie in [0, 1)");
    }
    if (!(adam_epsilon > 0.0)) throw DomainError("Adam epsilon must be > 0");
  }
};

struct TrainingMeta {
  std::size_t epochs = 0;
  double learning_rate = 0.0;
  std::size_t batch_size = 0;
  double final_train_mse = 0.0;
  double final_test_mse = 0.0;
  std::uint64_t seed = 0;
};

/// Affine map from a density histogram to raw photon-number weights:
/// raw = weights * p + bias, with weights stored row-major (outputs x bins).
struct LinearModel {
  HistogramConfig histogram_config;
  std::size_t outputs = kPhotonCutoff + 1;
  std::vector<double> weights;
  std::vector<double> bias;
  TrainingMeta training_meta;

  static LinearModel zeros(const HistogramConfig& config,
                           std::size_t outputs = kPhotonCutoff + 1) {
    config.validate();
    LinearModel m;
    m.histogram_config = config;
    m.outputs = outputs;
    m.weights.assign(outputs * config.num_bins, 0.0);
    m.bias.assign(outputs, 0.0);
    return m;
  }

  std::size_t inputs() const { return histogram_config.num_bins; }

  void validate() const {
    histogram_config.validate();
    if (outputs == 0 || weights.size() != outputs * inputs() || bias.size() != outputs) {
      throw ConfigError("model shape does not match its histogram configuration");
    }
    for (double v : weights) {
      if (!std::isfinite(v)) throw ConfigError("model has non-finite weights");
    }
    for (double v : bias) {
      if (!std::isfinite(v)) throw ConfigError("model has non-finite bias");
    }
  }
};

struct EpochLoss {
  double train_mse = 0.0;
  double test_mse = 0.0;
};

struct TrainResult {
  LinearModel model;
  std::vector<EpochLoss> history;
};

/// raw = weights * densities + bias.
inline std::vector<double> predict_raw(const LinearModel& model,
                                       std::span<const double> densities) {
  if (densities.size() != model.inputs()) {
    throw ConfigError("density vector has " + std::to_string(densities.size()) +
                      " bins, model expects " + std::to_string(model.inputs()));
  }
  std::vector<double> out(model.bias);
  for (std::size_t j = 0; j < model.outputs; ++j) {
    const double* row = model.weights.data() + j * model.inputs();
    double acc = 0.0;
    for (std::size_t i = 0; i < densities.size(); ++i) acc += row[i] * densities[i];
    out[j] += acc;
  }
  return out;
}

inline std::vector<double> predict_raw(const LinearModel& model, const DensityHistogram& hist) {
  if (!(hist.config == model.histogram_config)) {
    throw ConfigError("histogram binning " + hist.config.describe() +
                      " does not match the model's " + model.histogram_config.describe());
  }
  return predict_raw(model, std::span<const double>(hist.densities));
}

struct NormalizedPrediction {
  PhotonWeights weights;
  /// No positive component survived clamping; weights fell back to vacuum.
  bool degenerate = false;
};

/// Clamp negatives to zero and rescale onto the simplex.
inline NormalizedPrediction normalize_prediction(std::span<const double> raw) {
  if (raw.empty()) throw DomainError("empty prediction");
  std::vector<double> w(raw.size());
  double sum = 0.0;
  for (std::size_t n = 0; n < raw.size(); ++n) {
    w[n] = raw[n] > 0.0 ? raw[n] : 0.0;  // also maps NaN to 0
    sum += w[n];
  }
  if (!(sum > 0.0) || !std::isfinite(sum)) {
    return {PhotonWeights::vacuum(raw.size()), true};
  }
  for (double& v : w) v = std::min(v / sum, 1.0);
  return {PhotonWeights(std::move(w)), false};
}

namespace detail {

inline double squared_error(std::span<const double> raw, const PhotonWeights& target) {
  double s = 0.0;
  for (std::size_t n = 0; n < raw.size(); ++n) {
    const double e = raw[n] - target[n];
    s += e * e;
  }
  return s;
}

inline void check_dataset(const LinearModel& model, const Dataset& ds, const char* name) {
  if (!(ds.histogram_config == model.histogram_config)) {
    throw ConfigError(std::string(name) + " set binning " + ds.histogram_config.describe() +
                      " does not match " + model.histogram_config.describe());
  }
  for (const auto& inst : ds.instances) {
    if (inst.density.size() != model.inputs() || inst.target.size() != model.outputs) {
      throw ConfigError(std::string(name) + " set has instances of the wrong shape");
    }
  }
}

// FNV-1a over the instance's bytes; orders instances by content, not position.
inline std::uint64_t content_hash(const DatasetInstance& inst) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](std::span<const double> xs) {
    for (double x : xs) {
      std::uint64_t bits;
      std::memcpy(&bits, &x, sizeof bits);
      for (int b = 0; b < 8; ++b) {
        h ^= (bits >> (8 * b)) & 0xffU;
        h *= 0x100000001b3ULL;
      }
    }
  };
  feed(inst.target.values());
  feed(inst.density);
  return h;
}

inline std::vector<std::size_t> canonical_order(const Dataset& ds) {
  std::vector<std::uint64_t> hashes(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) hashes[i] = content_hash(ds.instances[i]);
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (hashes[a] != hashes[b]) return hashes[a] < hashes[b];
    const auto& ia = ds.instances[a];
    const auto& ib = ds.instances[b];
    if (ia.target.vector() != ib.target.vector()) return ia.target.vector() < ib.target.vector();
    return ia.density < ib.density;
  });
  return order;
}

}  // namespace detail

/// Mean squared error of the raw outputs over all instances and components.
inline double dataset_mse(const LinearModel& model, const Dataset& ds) {
  detail::check_dataset(model, ds, "evaluation");
  if (ds.empty()) throw DomainError("cannot evaluate on an empty dataset");
  double s = 0.0;
  for (const auto& inst : ds.instances) {
    s += detail::squared_error(predict_raw(model, std::span<const double>(inst.density)),
                               inst.target);
  }
  return s / static_cast<double>(ds.size() * model.outputs);
}

/// Minimize the raw-output MSE with minibatch Adam, starting from zeros.
///
/// Each epoch visits the instances in a Fisher-Yates permutation seeded by
/// (seed, epoch) applied to a content-sorted base order, so the result is a
/// function of the dataset contents and the config alone.
inline TrainResult train(const Dataset& train_set, const Dataset& test_set,
                         const TrainConfig& config) {
  config.validate();
  if (train_set.empty() || test_set.empty()) {
    throw DomainError("training and test sets must be non-empty");
  }
  if (!(train_set.histogram_config == test_set.histogram_config)) {
    throw ConfigError("training binning " + train_set.histogram_config.describe() +
                      " differs from test binning " + test_set.histogram_config.describe());
  }

  TrainResult result{LinearModel::zeros(train_set.histogram_config,
                                        train_set.instances.front().target.size()),
                     {}};
  LinearModel& model = result.model;
  detail::check_dataset(model, train_set, "training");
  detail::check_dataset(model, test_set, "test");

  const std::size_t inputs = model.inputs();
  const std::size_t outputs = model.outputs;
  const std::size_t n_params = outputs * (inputs + 1);
  // Parameter layout: weights row-major, then bias.
  std::vector<double> grad(n_params), m1(n_params, 0.0), m2(n_params, 0.0);
  auto param = [&](std::size_t k) -> double& {
    return k < outputs * inputs ? model.weights[k] : model.bias[k - outputs * inputs];
  };

  const auto base = detail::canonical_order(train_set);
  std::vector<std::size_t> order(base.size());
  std::uint64_t step = 0;
  double beta1_pow = 1.0;
  double beta2_pow = 1.0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    order = base;
    Rng rng(derive_seed(config.seed, epoch));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(order[i - 1], order[pick(rng)]);
    }

    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      const double scale = 2.0 / static_cast<double>((stop - start) * outputs);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t b = start; b < stop; ++b) {
        const auto& inst = train_set.instances[order[b]];
        const auto raw = predict_raw(model, std::span<const double>(inst.density));
        for (std::size_t j = 0; j < outputs; ++j) {
          const double e = scale * (raw[j] - inst.target[j]);
          double* g = grad.data() + j * inputs;
          for (std::size_t i = 0; i < inputs; ++i) g[i] += e * inst.density[i];
          grad[outputs * inputs + j] += e;
        }
      }

      ++step;
      beta1_pow *= config.adam_beta1;
      beta2_pow *= config.adam_beta2;
      const double lr_t = config.learning_rate * std::sqrt(1.0 - beta2_pow) / (1.0 - beta1_pow);
      const double eps_t = config.adam_epsilon * std::sqrt(1.0 - beta2_pow);
      for (std::size_t k = 0; k < n_params; ++k) {
        m1[k] = config.adam_beta1 * m1[k] + (1.0 - config.adam_beta1) * grad[k];
        m2[k] = config.adam_beta2 * m2[k] + (1.0 - config.adam_beta2) * grad[k] * grad[k];
        param(k) -= lr_t * m1[k] / (std::sqrt(m2[k]) + eps_t);
      }
    }

    EpochLoss loss{dataset_mse(model, train_set), dataset_mse(model, test_set)};
    if (!std::isfinite(loss.train_mse) || !std::isfinite(loss.test_mse)) {
      throw DivergenceError("training diverged in epoch " + std::to_string(epoch + 1));
    }
    result.history.push_back(loss);
  }

  model.training_meta = {config.epochs,
                         config.learning_rate,
                         config.batch_size,
                         result.history.back().train_mse,
                         result.history.back().test_mse,
                         config.seed};
  return result;
}

struct Inference {
  PhotonWeights weights;
  bool degenerate = false;
  double w00 = 0.0;
  std::optional<double> g2;
  std::uint64_t total_count = 0;
  std::uint64_t dropped_count = 0;
  double histogram_seconds = 0.0;
  double predict_seconds = 0.0;
};

/// Histogram -> affine map -> simplex -> W(0,0) and g2(0), timing each stage.
inline Inference infer(const LinearModel& model, std::span<const double> batch) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  const auto hist = build_histogram(batch, model.histogram_config);
  const auto t1 = clock::now();
  const auto raw = predict_raw(model, hist);
  auto normalized = normalize_prediction(raw);
  Inference out{std::move(normalized.weights), normalized.degenerate, 0.0, std::nullopt};
  out.w00 = wigner_origin(out.weights);
  out.g2 = g2_from_weights(out.weights);
  const auto t2 = clock::now();
  out.total_count = hist.total_count;
  out.dropped_count = hist.dropped_count;
  out.histogram_seconds = std::chrono::duration<double>(t1 - t0).count();
  out.predict_seconds = std::chrono::duration<double>(t2 - t1).count();
  return out;
}

struct Evaluation {
  double mean_fidelity = 0.0;
  double mse = 0.0;
  std::vector<double> per_instance_fidelity;
};

inline Evaluation evaluate(const LinearModel& model, const Dataset& test_set) {
  detail::check_dataset(model, test_set, "evaluation");
  if (test_set.empty()) throw DomainError("cannot evaluate on an empty dataset");
  Evaluation ev;
  ev.per_instance_fidelity.reserve(test_set.size());
  double fid_sum = 0.0;
  for (const auto& inst : test_set.instances) {
    const auto raw = predict_raw(model, std::span<const double>(inst.density));
    const double f = fidelity(normalize_prediction(raw).weights, inst.target);
    ev.per_instance_fidelity.push_back(f);
    fid_sum += f;
  }
  ev.mean_fidelity = fid_sum / static_cast<double>(test_set.size());
  ev.mse = dataset_mse(model, test_set);
  return ev;
}

}  // namespace hqst
