#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "hqst/fock.hpp"
#include "hqst/linear_estimator.hpp"
#include "hqst/synth.hpp"

using namespace hqst;

namespace {

struct Trained {
  Dataset train_set;
  Dataset test_set;
  TrainResult result;
};

// A smaller training run than the full-size one, shared by the tests that only
// need a reasonably trained model.
const Trained& trained() {
  static const Trained t = [] {
    Trained out;
    out.train_set = make_dataset(3000, 8000, {}, 101);
    out.test_set = make_dataset(1000, 8000, {}, 102);
    TrainConfig cfg;
    cfg.batch_size = 64;
    out.result = train(out.train_set, out.test_set, cfg);
    return out;
  }();
  return t;
}

Dataset repeated_instance(std::size_t copies) {
  Dataset ds = make_dataset(1, 8000, {}, 5);
  ds.instances.assign(copies, ds.instances[0]);
  return ds;
}

}  // namespace

TEST(TrainConfig, Validation) {
  EXPECT_NO_THROW(TrainConfig{}.validate());
  TrainConfig c;
  c.learning_rate = 0.0;
  EXPECT_THROW(c.validate(), DomainError);
  c = {};
  c.epochs = 0;
  EXPECT_THROW(c.validate(), DomainError);
  c = {};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), DomainError);
  c = {};
  c.adam_beta2 = 1.0;
  EXPECT_THROW(c.validate(), DomainError);
}

TEST(PredictRaw, ZeroDensityGivesBias) {
  auto model = LinearModel::zeros({});
  model.bias = {0.1, -0.2, 0.3};
  model.weights[7] = 2.0;
  const std::vector<double> zero(50, 0.0);
  EXPECT_EQ(predict_raw(model, zero), model.bias);
}

TEST(PredictRaw, AffineSuperposition) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 1.0);
  auto model = LinearModel::zeros({});
  for (double& v : model.weights) v = g(rng);
  for (double& v : model.bias) v = g(rng);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> p1(50), p2(50), sum(50);
    for (std::size_t i = 0; i < 50; ++i) {
      p1[i] = std::abs(g(rng));
      p2[i] = std::abs(g(rng));
      sum[i] = p1[i] + p2[i];
    }
    const auto a = predict_raw(model, sum);
    const auto b = predict_raw(model, p2);
    const auto c = predict_raw(model, p1);
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(a[j] - b[j], c[j] - model.bias[j], 1e-12);
  }
}

TEST(PredictRaw, ConfigMismatchIsRejected) {
  const auto model = LinearModel::zeros({});
  const std::vector<double> batch{0.0, 0.1};
  EXPECT_THROW(predict_raw(model, build_histogram(batch, {-3.0, 3.0, 50})), ConfigError);
  EXPECT_THROW(predict_raw(model, std::vector<double>(49, 0.0)), ConfigError);
}

TEST(NormalizePrediction, Examples) {
  // The rounded heralded triple sums to 0.996, so only its renormalization is unchanged.
  const std::vector<double> on{0.363 / 0.996, 0.606 / 0.996, 0.027 / 0.996};
  const auto a = normalize_prediction(on);
  EXPECT_FALSE(a.degenerate);
  for (std::size_t n = 0; n < 3; ++n) EXPECT_NEAR(a.weights[n], on[n], 1e-15);
  const std::vector<double> printed{0.363, 0.606, 0.027};
  const auto p = normalize_prediction(printed);
  for (std::size_t n = 0; n < 3; ++n) EXPECT_NEAR(p.weights[n], on[n], 1e-15);

  const std::vector<double> neg{0.5, 0.6, -0.1};
  const auto b = normalize_prediction(neg);
  EXPECT_NEAR(b.weights[0], 5.0 / 11.0, 1e-15);
  EXPECT_NEAR(b.weights[1], 6.0 / 11.0, 1e-15);
  EXPECT_EQ(b.weights[2], 0.0);

  const std::vector<double> bad{-1, -1, -1};
  const auto c = normalize_prediction(bad);
  EXPECT_TRUE(c.degenerate);
  EXPECT_EQ(c.weights, (PhotonWeights{1, 0, 0}));
}

TEST(NormalizePrediction, AlwaysOnSimplex) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g(0.3, 1.0);
  for (int trial = 0; trial < 10000; ++trial) {
    const std::vector<double> raw{g(rng), g(rng), g(rng)};
    EXPECT_NO_THROW(normalize_prediction(raw));
  }
  const std::vector<double> tiny{1e-300, 1e-300, 0.0};
  EXPECT_NO_THROW(normalize_prediction(tiny));
}

TEST(Train, MemorizesRepeatedInstance) {
  const auto ds = repeated_instance(100);
  Dataset single = ds;
  single.instances.resize(1);
  TrainConfig cfg;
  cfg.batch_size = 1;
  const auto r = train(ds, single, cfg);
  EXPECT_LE(r.history.back().test_mse, 1e-9);
  EXPECT_EQ(r.history.size(), 10u);
}

TEST(Train, Deterministic) {
  const auto a = make_dataset(300, 2000, {}, 8);
  const auto b = make_dataset(100, 2000, {}, 9);
  TrainConfig cfg;
  cfg.batch_size = 32;
  cfg.seed = 5;
  const auto r1 = train(a, b, cfg);
  const auto r2 = train(a, b, cfg);
  EXPECT_EQ(r1.model.weights, r2.model.weights);
  EXPECT_EQ(r1.model.bias, r2.model.bias);
  cfg.seed = 6;
  const auto r3 = train(a, b, cfg);
  EXPECT_NE(r1.model.weights, r3.model.weights);
}

TEST(Train, IndependentOfDatasetOrder) {
  const auto a = make_dataset(300, 2000, {}, 8);
  const auto b = make_dataset(100, 2000, {}, 9);
  auto permuted = a;
  std::mt19937_64 rng(123);
  std::shuffle(permuted.instances.begin(), permuted.instances.end(), rng);
  TrainConfig cfg;
  cfg.batch_size = 32;
  const auto r1 = train(a, b, cfg);
  const auto r2 = train(permuted, b, cfg);
  EXPECT_EQ(r1.model.weights, r2.model.weights);
  EXPECT_EQ(r1.model.bias, r2.model.bias);
}

TEST(Train, RejectsMismatchedOrEmptyData) {
  const auto a = make_dataset(10, 500, {}, 1);
  const auto b = make_dataset(10, 500, {-3.0, 3.0, 50}, 2);
  EXPECT_THROW(train(a, b, {}), ConfigError);
  EXPECT_THROW(train(b, a, {}), ConfigError);
  Dataset empty;
  EXPECT_THROW(train(empty, a, {}), DomainError);
  EXPECT_THROW(train(a, empty, {}), DomainError);
}

TEST(Train, DivergenceIsReported) {
  const auto a = make_dataset(50, 500, {}, 1);
  TrainConfig cfg;
  cfg.learning_rate = 1e300;
  cfg.batch_size = 8;
  EXPECT_THROW(train(a, a, cfg), DivergenceError);
}

TEST(Train, MetaRecordsTheRun) {
  const auto& t = trained();
  const auto& meta = t.result.model.training_meta;
  EXPECT_EQ(meta.epochs, 10u);
  EXPECT_EQ(meta.learning_rate, 0.01);
  EXPECT_EQ(meta.batch_size, 64u);
  EXPECT_EQ(meta.final_train_mse, t.result.history.back().train_mse);
  EXPECT_EQ(meta.final_test_mse, t.result.history.back().test_mse);
  EXPECT_NO_THROW(t.result.model.validate());
}

TEST(Train, LossNonIncreasingOnStandardSet) {
  const auto a = make_dataset(10'000, 8000, {}, 41);
  const auto b = make_dataset(10'000, 8000, {}, 42);
  const auto r = train(a, b, TrainConfig{});
  ASSERT_EQ(r.history.size(), 10u);
  // The untrained (all-zero) model is the reference for the first epoch.
  double prev = evaluate(LinearModel::zeros({}), a).mse;
  int non_increasing = 0;
  for (const auto& e : r.history) {
    non_increasing += e.train_mse <= prev;
    prev = e.train_mse;
  }
  EXPECT_GE(non_increasing, 9);
}

TEST(Trained, TrainingInstancesWithinMseBound) {
  const auto& t = trained();
  const double bound = 3.0 * std::sqrt(t.result.model.training_meta.final_train_mse);
  int outside = 0;
  for (const auto& inst : t.train_set.instances) {
    const auto raw = predict_raw(t.result.model, std::span<const double>(inst.density));
    for (std::size_t n = 0; n < 3; ++n) outside += std::abs(raw[n] - inst.target[n]) > bound;
  }
  // Three standard deviations: a handful of the 9,000 components may exceed it.
  EXPECT_LT(outside, 9000 * 0.01);
}

TEST(Trained, InfersHeraldedState) {
  const PhotonWeights truth({0.363 / 0.996, 0.606 / 0.996, 0.027 / 0.996});
  Rng rng(derive_seed(606, 0));
  const auto batch = sample_quadratures(truth, 8000, rng);
  const auto inf = infer(trained().result.model, batch);
  for (std::size_t n = 0; n < 3; ++n) EXPECT_NEAR(inf.weights[n], truth[n], 0.03);
  EXPECT_LT(inf.w00, 0.0);
  EXPECT_EQ(inf.w00, wigner_origin(inf.weights));
  EXPECT_EQ(inf.total_count, 8000u);
  EXPECT_GE(inf.histogram_seconds, 0.0);
}

TEST(Trained, InfersVacuum) {
  Rng rng(derive_seed(1, 0));
  const auto batch = sample_quadratures({1, 0, 0}, 8000, rng);
  const auto inf = infer(trained().result.model, batch);
  EXPECT_NEAR(inf.w00, std::numbers::inv_pi, 0.02);
  EXPECT_EQ(inf.w00, wigner_origin(inf.weights));
}

TEST(Evaluate, ZeroModelGivesVacuumBaseline) {
  const auto ds = make_dataset(200, 1000, {}, 3);
  const auto ev = evaluate(LinearModel::zeros({}), ds);
  double expected = 0.0;
  for (const auto& inst : ds.instances) expected += fidelity({1, 0, 0}, inst.target);
  expected /= static_cast<double>(ds.size());
  EXPECT_NEAR(ev.mean_fidelity, expected, 1e-15);
  EXPECT_EQ(ev.per_instance_fidelity.size(), 200u);
}

TEST(Evaluate, MseMatchesTrainingBookkeeping) {
  const auto& t = trained();
  const auto ev = evaluate(t.result.model, t.train_set);
  EXPECT_NEAR(ev.mse, t.result.model.training_meta.final_train_mse, 1e-12);
  const auto ev_test = evaluate(t.result.model, t.test_set);
  EXPECT_NEAR(ev_test.mse, t.result.model.training_meta.final_test_mse, 1e-12);
  EXPECT_GT(ev_test.mean_fidelity, 0.99);
}

TEST(Evaluate, RejectsMismatchedConfig) {
  const auto ds = make_dataset(5, 100, {-3.0, 3.0, 50}, 3);
  EXPECT_THROW(evaluate(LinearModel::zeros({}), ds), ConfigError);
}
