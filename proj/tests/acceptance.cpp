// End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
// exits non-zero if any selected criterion fails.
//
//   acceptance          run every criterion
//   acceptance 3 7      run only criteria 3 and 7

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "hqst/hqst.hpp"
#include "oracles.hpp"

using namespace hqst;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 6) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

// The full-size training run shared by the estimator criteria.
struct Standard {
  Dataset train_set;
  Dataset test_set;
  TrainResult result;
  double synth_seconds = 0.0;
  double train_seconds = 0.0;
};

const Standard& standard() {
  static const Standard s = [] {
    Standard out;
    const auto t0 = Clock::now();
    out.train_set = make_dataset(10'000, 8000, {}, 1001);
    out.test_set = make_dataset(10'000, 8000, {}, 2002);
    out.synth_seconds = seconds_since(t0);
    const auto t1 = Clock::now();
    out.result = train(out.train_set, out.test_set, TrainConfig{});
    out.train_seconds = seconds_since(t1);
    return out;
  }();
  return s;
}

const LinearModel& model() { return standard().result.model; }

QuadratureBatch draw(const PhotonWeights& w, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  return sample_quadratures(w, n, rng);
}

Outcome fidelity_target() {
  const auto t0 = Clock::now();
  const auto& s = standard();
  const auto ev = evaluate(s.result.model, s.test_set);
  const double total = s.synth_seconds + s.train_seconds + seconds_since(t0);
  const bool pass = ev.mean_fidelity >= 0.999 && total <= 600.0;
  return {pass, "mean fidelity " + fmt(ev.mean_fidelity, 7) + " (need >= 0.999) on " +
                    std::to_string(s.test_set.size()) + " held-out instances; " +
                    fmt(total, 4) + " s including synthesis (budget 600 s)"};
}

Outcome training_loss() {
  const auto& h = standard().result.history;
  const double train_mse = h.back().train_mse;
  const double test_mse = h.back().test_mse;
  const bool pass = train_mse <= 1e-6 && test_mse <= 1e-6;
  std::string detail = "after " + std::to_string(h.size()) + " epochs train MSE " +
                       fmt(train_mse, 4) + ", test MSE " + fmt(test_mse, 4) + " (need <= 1e-6)";
  if (train_mse <= 1e-7 && test_mse <= 1e-7) detail += "; 1e-7 reached";
  return {pass, detail};
}

Outcome cross_estimator() {
  std::mt19937_64 rng(303);
  double sum = 0.0;
  double worst = 0.0;
  const int batches = 50;
  for (int b = 0; b < batches; ++b) {
    const PhotonWeights truth(oracle::random_simplex(rng));
    const auto batch = draw(truth, 8000, derive_seed(303, static_cast<std::uint64_t>(b)));
    const auto nn = infer(model(), batch);
    const auto em = mle_em(batch);
    for (std::size_t n = 0; n < 3; ++n) {
      const double d = std::abs(nn.weights[n] - em.weights[n]);
      sum += d;
      worst = std::max(worst, d);
    }
  }
  const double mean = sum / (3.0 * batches);
  return {mean <= 0.02 && worst <= 0.05, "mean |w_EM - w_linear| " + fmt(mean, 4) +
                                             " (need <= 0.02), max " + fmt(worst, 4) +
                                             " (need <= 0.05) over 50 batches"};
}

Outcome negativity_threshold() {
  const bool exact = wigner_origin({0.5, 0.5, 0.0}) == 0.0 &&
                     wigner_origin({0.5 + 1e-12, 0.5 - 1e-12, 0.0}) > 0.0 &&
                     wigner_origin({0.5 - 1e-12, 0.5 + 1e-12, 0.0}) < 0.0;
  const std::vector<double> sweep{0.40, 0.45, 0.50, 0.55, 0.60};
  int good = 0;
  for (int run = 0; run < 10; ++run) {
    std::vector<double> w00;
    for (std::size_t i = 0; i < sweep.size(); ++i) {
      const PhotonWeights truth({1.0 - sweep[i], sweep[i], 0.0});
      const auto batch =
          draw(truth, 8000, derive_seed(404 + static_cast<std::uint64_t>(run), i));
      w00.push_back(infer(model(), batch).w00);
    }
    // The estimated sign change must fall strictly between 0.45 and 0.55.
    good += w00[0] > 0.0 && w00[1] > 0.0 && w00[3] < 0.0 && w00[4] < 0.0;
  }
  return {exact && good >= 9,
          std::string("exact flip at w1 = 0.5: ") + (exact ? "yes" : "NO") +
              "; sweep places the sign change in (0.45, 0.55) in " + std::to_string(good) +
              "/10 runs (need >= 9)"};
}

Outcome third_component() {
  std::mt19937_64 rng(505);
  MleConfig cfg;
  cfg.n_max = 3;
  double worst = 0.0;
  const int batches = 5;
  for (int b = 0; b < batches; ++b) {
    const PhotonWeights truth(oracle::random_simplex(rng));
    const auto r = mle_em(draw(truth, 100'000, derive_seed(505, static_cast<std::uint64_t>(b))),
                          cfg);
    worst = std::max(worst, r.weights[3]);
  }
  return {worst < 1e-4, "largest EM w3 " + fmt(worst, 4) + " over " + std::to_string(batches) +
                            " batches of 1e5 samples with w3 = 0 (need < 1e-4)"};
}

Outcome em_properties() {
  std::mt19937_64 rng(606);
  int monotone = 0;
  for (int b = 0; b < 100; ++b) {
    const PhotonWeights truth(oracle::random_simplex(rng));
    const auto batch = draw(truth, 2000, derive_seed(606, static_cast<std::uint64_t>(b)));
    const auto r = mle_em(batch);
    bool ok = true;
    for (std::size_t i = 1; i < r.loglik_history.size(); ++i) {
      ok = ok && r.loglik_history[i] >= r.loglik_history[i - 1];
    }
    monotone += ok;
  }
  double worst = 0.0;
  for (int b = 0; b < 20; ++b) {
    const PhotonWeights truth(oracle::random_simplex(rng));
    const auto batch = draw(truth, 2000, derive_seed(607, static_cast<std::uint64_t>(b)));
    const auto em = mle_em(batch);
    const auto bf = brute_force_mle(batch, 0.001);
    for (std::size_t n = 0; n < 3; ++n) worst = std::max(worst, std::abs(em.weights[n] - bf[n]));
  }
  return {monotone == 100 && worst <= 0.005,
          "monotone log-likelihood on " + std::to_string(monotone) +
              "/100 batches; max |EM - grid(0.001)| " + fmt(worst, 4) +
              " over 20 batches (need <= 0.005)"};
}

Outcome sampler_exactness() {
  std::string detail;
  bool pass = true;
  for (int n = 0; n <= 2; ++n) {
    std::vector<double> w(3, 0.0);
    w[static_cast<std::size_t>(n)] = 1.0;
    const auto samples = draw(PhotonWeights(w), 100'000, derive_seed(707, static_cast<std::uint64_t>(n)));
    const oracle::TabulatedCdf cdf([n](double x) { return oracle::fock_pdf(n, x); }, -10, 10,
                                   4000);
    const double d = oracle::ks_statistic(samples, cdf);
    const double crit = oracle::ks_critical(0.01, samples.size());
    pass = pass && d < crit;
    detail += "KS n=" + std::to_string(n) + " D=" + fmt(d, 3) + "/" + fmt(crit, 3) + "; ";
  }
  double norm_err = 0.0;
  for (auto rise : {std::optional<double>{}, std::optional<double>{0.4}}) {
    const ModeFunction mode{2.0, 1.0, rise};
    const double dt = 1.0 / (50.0 * 2.0);
    const double span = 10.0 / mode.slowest_rate();
    const auto f = mode.on_grid(1.0 - span / 2, dt, static_cast<std::size_t>(span / dt) + 1);
    double s = 0.0;
    for (double v : f) s += v * v * dt;
    norm_err = std::max(norm_err, std::abs(s - 1.0));
  }
  Rng rng(708);
  const ModeFunction mode{1.0, 0.0, {}};
  double trip = 0.0;
  for (double x : {-2.0, -0.3, 0.0, 1.3, 2.7}) {
    trip = std::max(trip, std::abs(extract_quadrature(simulate_trace(x, mode, 0.02, 10.0, 0.0, rng),
                                                      mode) -
                                   x));
  }
  pass = pass && norm_err <= 1e-6 && trip <= 1e-4;
  detail += "mode normalization error " + fmt(norm_err, 3) + " (need <= 1e-6); trace roundtrip error " +
            fmt(trip, 3) + " (need <= 1e-4)";
  return {pass, detail};
}

Outcome loss_roundtrip() {
  std::mt19937_64 rng(808);
  double worst = 0.0;
  int clamped = 0;
  for (int i = 0; i < 1000; ++i) {
    const PhotonWeights w(oracle::random_simplex(rng));
    const auto measured = apply_loss(w, 0.92);
    const auto back = invert_loss(measured, 0.92);
    clamped += back.clamped;
    const auto again = apply_loss(back.weights, 0.92);
    for (std::size_t n = 0; n < 3; ++n) {
      worst = std::max({worst, std::abs(back.weights[n] - w[n]), std::abs(again[n] - measured[n])});
    }
  }
  return {worst <= 1e-9 && clamped == 0,
          "max roundtrip error " + fmt(worst, 3) + " over 1000 simplex points at eta 0.92 (need <= 1e-9); " +
              std::to_string(clamped) + " clamped"};
}

Outcome latency() {
  const auto batch = draw(PhotonWeights({0.363 / 0.996, 0.606 / 0.996, 0.027 / 0.996}), 8000, 909);
  (void)infer(model(), batch);
  std::vector<double> ms;
  for (int i = 0; i < 50; ++i) {
    const auto t0 = Clock::now();
    (void)infer(model(), batch);
    ms.push_back(seconds_since(t0) * 1e3);
  }
  const double worst = *std::max_element(ms.begin(), ms.end());

  const auto dir = fs::temp_directory_path() / "hqst_acceptance";
  fs::create_directories(dir);
  save_model(dir / "model.json", model());
  write_quadratures(dir / "batch.txt", batch);
  const auto report = dir / "report.json";
  const std::string cmd = std::string("\"") + HQST_CLI_PATH + "\" infer --model \"" +
                          (dir / "model.json").string() + "\" --quadratures \"" +
                          (dir / "batch.txt").string() + "\" --out \"" + report.string() + "\"";
  const int status = std::system(cmd.c_str());
  double total = std::numeric_limits<double>::infinity();
  if (WIFEXITED(status) && WEXITSTATUS(status) == 0) {
    total = read_json(report).at("timings_ms").at("total").get<double>();
  }
  fs::remove_all(dir);
  return {worst <= 10.0 && total <= 100.0,
          "in-process histogram + inference worst of 50 runs " + fmt(worst, 3) +
              " ms (need <= 10); infer command stage total " + fmt(total, 3) + " ms (need <= 100)"};
}

Outcome eta_fit() {
  double worst = 0.0;
  std::string detail;
  std::uint64_t i = 0;
  for (double eta : {0.3, 0.631, 0.9}) {
    const auto batch = draw({1.0 - eta, eta, 0.0}, 8000, derive_seed(1010, i++));
    const double got = fit_eta(build_histogram(batch, {})).eta;
    worst = std::max(worst, std::abs(got - eta));
    detail += "eta " + fmt(eta, 3) + " -> " + fmt(got, 4) + "; ";
  }
  return {worst <= 0.03, detail + "max error " + fmt(worst, 3) + " (need <= 0.03)"};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "fidelity target", fidelity_target},
      {2, "training loss", training_loss},
      {3, "cross-estimator agreement", cross_estimator},
      {4, "negativity threshold", negativity_threshold},
      {5, "w3 negligibility", third_component},
      {6, "EM properties", em_properties},
      {7, "sampler exactness", sampler_exactness},
      {8, "loss-map roundtrip", loss_roundtrip},
      {9, "latency", latency},
      {10, "eta-fit roundtrip", eta_fit},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& c : all) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  C" << c.id << " " << c.name << ": " << o.detail
              << " [" << fmt(seconds_since(t0), 3) << " s]" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
