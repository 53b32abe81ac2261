#pragma once

// Maximum-likelihood photon-number weights from raw quadratures.
//
// The phase-averaged likelihood is a finite mixture with known component
// densities fock_pdf(n, x), so the weights are estimated with the EM fixed
// point w_n <- mean_k [w_n f_n(x_k) / p(x_k)].

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "hqst/errors.hpp"
#include "hqst/fock.hpp"

namespace hqst {

struct MleConfig {
  std::size_t max_iterations = 2000;
  /// Stop once the per-sample log-likelihood gain drops below this.
  double tolerance = 1e-10;
  int n_max = kPhotonCutoff;

  void validate() const {
    if (max_iterations < 1) throw DomainError("max_iterations must be >= 1");
    if (!(tolerance > 0.0)) throw DomainError("tolerance must be > 0");
    if (n_max != 2 && n_max != 3) throw DomainError("n_max must be 2 or 3");
  }
};

struct MleResult {
  PhotonWeights weights;
  /// Log-likelihood of every iterate, starting with the initial weights.
  std::vector<double> loglik_history;
  std::size_t iterations = 0;
  bool converged = false;

  double final_loglik() const { return loglik_history.back(); }
};

/// Minimum batch size accepted by mle_em.
inline constexpr std::size_t kMinMleSamples = 10;

/// sum_k log quad_pdf(w, x_k); -infinity if any sample sits on a zero of the density.
inline double loglik(const PhotonWeights& w, std::span<const double> batch) {
  if (batch.empty()) throw DomainError("log-likelihood of an empty batch");
  double s = 0.0;
  for (double x : batch) {
    const double p = quad_pdf(w, x);
    if (!(p > 0.0)) return -std::numeric_limits<double>::infinity();
    s += std::log(p);
  }
  return s;
}

namespace detail {

// Component densities f_n(x_k), stored sample-major.
inline std::vector<double> component_table(std::span<const double> batch, std::size_t comps) {
  std::vector<double> table(batch.size() * comps);
  for (std::size_t k = 0; k < batch.size(); ++k) {
    fock_pdfs(batch[k], std::span(table).subspan(k * comps, comps));
  }
  return table;
}

}  // namespace detail

/// EM from an explicit starting point; components that start at zero stay at zero.
inline MleResult mle_em(std::span<const double> batch, const MleConfig& config,
                        const PhotonWeights& start) {
  config.validate();
  if (batch.size() < kMinMleSamples) {
    throw DomainError("EM needs at least " + std::to_string(kMinMleSamples) + " samples");
  }
  const std::size_t comps = static_cast<std::size_t>(config.n_max) + 1;
  if (start.size() != comps) throw DomainError("starting weights have the wrong truncation");

  const auto table = detail::component_table(batch, comps);
  const auto samples = static_cast<double>(batch.size());
  std::vector<double> w(start.vector());
  std::vector<double> resp(comps);

  MleResult result;
  result.loglik_history.reserve(std::min<std::size_t>(config.max_iterations + 1, 4096));
  for (;;) {
    std::fill(resp.begin(), resp.end(), 0.0);
    double ll = 0.0;
    for (std::size_t k = 0; k < batch.size(); ++k) {
      const double* f = table.data() + k * comps;
      double p = 0.0;
      for (std::size_t n = 0; n < comps; ++n) p += w[n] * f[n];
      if (!(p > 0.0)) {
        throw EstimationError("starting weights give zero likelihood to a sample");
      }
      ll += std::log(p);
      for (std::size_t n = 0; n < comps; ++n) resp[n] += w[n] * f[n] / p;
    }
    result.loglik_history.push_back(ll);

    const std::size_t it = result.loglik_history.size() - 1;
    if (it >= 1) {
      const double gain = (ll - result.loglik_history[it - 1]) / samples;
      if (gain < config.tolerance) {
        result.converged = true;
        break;
      }
    }
    if (it >= config.max_iterations) break;
    for (std::size_t n = 0; n < comps; ++n) w[n] = resp[n] / samples;
    ++result.iterations;
  }
  for (double& v : w) v = std::clamp(v, 0.0, 1.0);
  result.weights = PhotonWeights(std::move(w));
  return result;
}

/// EM from the uniform distribution over 0..n_max photons.
inline MleResult mle_em(std::span<const double> batch, const MleConfig& config = {}) {
  config.validate();
  const std::size_t comps = static_cast<std::size_t>(config.n_max) + 1;
  return mle_em(batch, config,
                PhotonWeights(std::vector<double>(comps, 1.0 / static_cast<double>(comps))));
}

namespace detail {

// sum_k log(v_k) where v_k = a f0 + b f1 + c f2, multiplying blocks of eight
// densities before taking one logarithm. The densities never exceed 1, so a
// block product can only underflow; such blocks are summed term by term.
inline double grid_loglik(std::span<const double> table, std::size_t samples, double a, double b,
                          double c) {
  constexpr std::size_t kBlock = 8;
  double s = 0.0;
  std::size_t k = 0;
  for (; k + kBlock <= samples; k += kBlock) {
    double prod = 1.0;
    for (std::size_t j = 0; j < kBlock; ++j) {
      const double* f = table.data() + (k + j) * 3;
      prod *= a * f[0] + b * f[1] + c * f[2];
    }
    if (prod > 1e-280) {
      s += std::log(prod);
      continue;
    }
    for (std::size_t j = 0; j < kBlock; ++j) {
      const double* f = table.data() + (k + j) * 3;
      s += std::log(a * f[0] + b * f[1] + c * f[2]);
    }
  }
  for (; k < samples; ++k) {
    const double* f = table.data() + k * 3;
    s += std::log(a * f[0] + b * f[1] + c * f[2]);
  }
  return s;
}

}  // namespace detail

/// Exhaustive maximization of the log-likelihood over the simplex grid
/// {(a s, b s, 1 - (a + b) s)}; ties go to the lexicographically smallest (w0, w1).
inline PhotonWeights brute_force_mle(std::span<const double> batch, double grid_step) {
  if (!(grid_step > 0.0 && grid_step <= 0.1)) {
    throw DomainError("grid step must lie in (0, 0.1]");
  }
  if (batch.empty()) throw DomainError("brute-force MLE of an empty batch");
  const auto table = detail::component_table(batch, 3);
  const auto steps = static_cast<long>(std::floor(1.0 / grid_step + 1e-9));

  double best = -std::numeric_limits<double>::infinity();
  std::optional<std::vector<double>> best_w;
  for (long ia = 0; ia <= steps; ++ia) {
    for (long ib = 0; ia + ib <= steps; ++ib) {
      const double a = static_cast<double>(ia) * grid_step;
      const double b = static_cast<double>(ib) * grid_step;
      const double c = std::max(0.0, 1.0 - a - b);
      const double ll = detail::grid_loglik(table, batch.size(), a, b, c);
      if (!best_w || ll > best) {
        best = ll;
        best_w = std::vector<double>{a, b, c};
      }
    }
  }
  // a + b + c can miss 1 by a rounding error when 1/grid_step is not an integer.
  auto& w = *best_w;
  const double sum = w[0] + w[1] + w[2];
  for (double& v : w) v /= sum;
  return PhotonWeights(std::move(w));
}

}  // namespace hqst
