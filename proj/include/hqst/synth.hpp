#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <thread>
#include <utility>
#include <vector>

#include "hqst/errors.hpp"
#include "hqst/fock.hpp"
#include "hqst/histogram.hpp"

namespace hqst {

using Rng = std::mt19937_64;

/// A measurement record of quadrature values.
using QuadratureBatch = std::vector<double>;

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Child seed for stream `index` of `master`. Depends only on the pair, so
/// work can be split across threads without changing any stream.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return mix64(mix64(master) ^ mix64(index + 0x632be59bd9b4e019ULL));
}

/// Uniform point on the 2-simplex: the gaps between two sorted uniforms.
template <class URBG>
PhotonWeights sample_weights(URBG& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double a = unit(rng);
  double b = unit(rng);
  if (a > b) std::swap(a, b);
  return PhotonWeights{a, b - a, 1.0 - b};
}

namespace detail {

// Standard deviation of the Gaussian proposal for each Fock state, roughly
// minimizing the rejection rate.
inline constexpr std::array<double, kMaxHermiteOrder + 1> kEnvelopeWidth = {
    std::numbers::sqrt2 / 2.0, 1.22, 1.71, 2.12, 2.48};

// fock_pdf(n, x) divided by the N(0, s^2) proposal density:
// sqrt(2) s H_n(x)^2 e^{-x^2 (1 - 1/(2 s^2))} / (2^n n!).
inline double envelope_ratio(int n, double x) {
  const double s = kEnvelopeWidth[static_cast<std::size_t>(n)];
  double c = std::numbers::sqrt2 * s;
  for (int k = 1; k <= n; ++k) c /= 2.0 * k;
  const double h = hermite(n, x);
  return c * h * h * std::exp(-x * x * (1.0 - 0.5 / (s * s)));
}

// Upper bound on envelope_ratio(n, .). The ratio is smooth and even, so a fine
// scan plus a small margin bounds it.
inline double envelope_bound(int n) {
  static const auto bounds = [] {
    std::array<double, kMaxHermiteOrder + 1> out{};
    for (int k = 0; k <= kMaxHermiteOrder; ++k) {
      double sup = 0.0;
      for (int i = 0; i <= 150000; ++i) sup = std::max(sup, envelope_ratio(k, i * 1e-4));
      out[k] = sup * 1.001;
    }
    return out;
  }();
  return bounds.at(static_cast<std::size_t>(n));
}

template <class URBG>
double draw_fock(int n, URBG& rng, std::normal_distribution<double>& normal,
                 std::uniform_real_distribution<double>& unit) {
  const double s = kEnvelopeWidth[static_cast<std::size_t>(n)];
  if (n == 0) return s * normal(rng);
  const double bound = envelope_bound(n);
  for (;;) {
    const double x = s * normal(rng);
    if (unit(rng) * bound < envelope_ratio(n, x)) return x;
  }
}

}  // namespace detail

/// One exact draw from the quadrature density of |n>.
///
/// Vacuum is Gaussian with variance 1/2; higher states use rejection against a
/// wider Gaussian proposal.
template <class URBG>
double sample_fock(int n, URBG& rng) {
  if (n < 0 || n > kMaxHermiteOrder) {
    throw DomainError("no quadrature sampler for photon number " + std::to_string(n));
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  return detail::draw_fock(n, rng, normal, unit);
}

/// I.i.d. draws from quad_pdf(w, .): pick a photon number with probability
/// w_n, then draw from that Fock density.
template <class URBG>
QuadratureBatch sample_quadratures(const PhotonWeights& w, std::size_t count, URBG& rng) {
  if (count == 0) throw DomainError("sample count must be at least 1");
  std::array<double, kMaxHermiteOrder + 1> cumulative{};
  double acc = 0.0;
  for (std::size_t n = 0; n < w.size(); ++n) {
    acc += w[n];
    cumulative[n] = acc;
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  QuadratureBatch out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const double u = unit(rng) * acc;
    std::size_t n = 0;
    while (n + 1 < w.size() && (u >= cumulative[n] || w[n] == 0.0)) ++n;
    // Skip trailing zero-weight components picked by rounding at the top end.
    while (n > 0 && w[n] == 0.0) --n;
    out.push_back(detail::draw_fock(static_cast<int>(n), rng, normal, unit));
  }
  return out;
}

struct DatasetInstance {
  std::vector<double> density;
  PhotonWeights target;
};

/// Labelled training data: histogram densities with their true weights.
struct Dataset {
  std::vector<DatasetInstance> instances;
  HistogramConfig histogram_config;
  std::uint64_t seed = 0;
  std::size_t samples_per_instance = 0;

  std::size_t size() const { return instances.size(); }
  bool empty() const { return instances.empty(); }
};

/// True weights and raw quadratures of dataset instance `index`, drawn from the
/// stream derive_seed(master_seed, index).
inline std::pair<PhotonWeights, QuadratureBatch> synthesize_instance(std::uint64_t master_seed,
                                                                     std::size_t index,
                                                                     std::size_t samples) {
  Rng rng(derive_seed(master_seed, index));
  PhotonWeights w = sample_weights(rng);
  auto batch = sample_quadratures(w, samples, rng);
  return {std::move(w), std::move(batch)};
}

/// Instance k is generated from its own stream derive_seed(master_seed, k), so the
/// result does not depend on `threads` (0 picks the hardware concurrency).
inline Dataset make_dataset(std::size_t num_instances, std::size_t samples_per_instance,
                            const HistogramConfig& config, std::uint64_t master_seed,
                            unsigned threads = 0) {
  if (num_instances == 0) throw DomainError("dataset needs at least one instance");
  if (samples_per_instance == 0) throw DomainError("instances need at least one sample");
  config.validate();

  Dataset ds;
  ds.histogram_config = config;
  ds.seed = master_seed;
  ds.samples_per_instance = samples_per_instance;
  ds.instances.resize(num_instances);

  auto work = [&](std::size_t first, std::size_t stride) {
    for (std::size_t k = first; k < num_instances; k += stride) {
      auto [w, batch] = synthesize_instance(master_seed, k, samples_per_instance);
      ds.instances[k] = {build_histogram(batch, config).densities, std::move(w)};
    }
  };

  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, num_instances));
  if (threads <= 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
  }
  return ds;
}

/// Temporal mode function of a heralded photon, centred on the trigger time.
///
/// f(t) ~ exp(-pi gamma_rise (t_c - t)) before t_c and exp(-pi gamma (t - t_c))
/// after it; with gamma_rise unset both sides decay with gamma, giving
/// f(t) = sqrt(pi gamma) exp(-pi gamma |t - t_c|).
struct ModeFunction {
  double gamma = 1.0;
  double t_c = 0.0;
  std::optional<double> gamma_rise;

  void validate() const {
    if (!(gamma > 0.0) || !std::isfinite(gamma)) throw DomainError("mode decay rate must be > 0");
    if (gamma_rise && (!(*gamma_rise > 0.0) || !std::isfinite(*gamma_rise))) {
      throw DomainError("mode rise rate must be > 0");
    }
    if (!std::isfinite(t_c)) throw DomainError("mode centre must be finite");
  }

  double rise() const { return gamma_rise.value_or(gamma); }
  /// Slowest of the two rates; sets the support the trace must cover.
  double slowest_rate() const { return std::min(gamma, rise()); }

  /// Continuum-normalized amplitude.
  double operator()(double t) const {
    const double g_r = rise();
    const double amp = std::sqrt(2.0 * std::numbers::pi * gamma * g_r / (gamma + g_r));
    return t < t_c ? amp * std::exp(-std::numbers::pi * g_r * (t_c - t))
                   : amp * std::exp(-std::numbers::pi * gamma * (t - t_c));
  }

  /// f on the grid t_start + i*dt, rescaled so that sum f^2 dt = 1.
  std::vector<double> on_grid(double t_start, double dt, std::size_t count) const {
    validate();
    std::vector<double> f(count);
    double norm = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
      f[i] = (*this)(t_start + static_cast<double>(i) * dt);
      norm += f[i] * f[i];
    }
    norm = std::sqrt(norm * dt);
    if (!(norm > 0.0)) throw DomainError("mode function vanishes on the trace grid");
    for (double& v : f) v /= norm;
    return f;
  }
};

/// Uniformly sampled detector output.
struct TimeTrace {
  double t_start = 0.0;
  double dt = 1.0;
  std::vector<double> values;

  double time(std::size_t i) const { return t_start + static_cast<double>(i) * dt; }
  double t_end() const {
    return values.empty() ? t_start : time(values.size() - 1);
  }
};

/// Half-width, in units of 1/rate, of the window a mode function needs.
inline constexpr double kModeHalfSupport = 5.0;
/// Half-width, in units of 1/rate, over which extraction sums the trace.
inline constexpr double kModeWindow = 12.0;

/// Synthetic trace x(t_i) = x_value f(t_i) + noise_sigma xi_i / sqrt(dt) on a grid
/// symmetric about mode.t_c. The noise scaling makes the extracted quadrature
/// noise variance noise_sigma^2 independent of dt.
template <class URBG>
TimeTrace simulate_trace(double x_value, const ModeFunction& mode, double dt, double duration,
                         double noise_sigma, URBG& rng) {
  mode.validate();
  const double rate = std::max(mode.gamma, mode.rise());
  if (!(dt > 0.0) || dt > 1.0 / (50.0 * rate)) {
    throw DomainError("trace sampling too coarse: need 0 < dt <= 1/(50 gamma)");
  }
  if (!(duration >= 2.0 * kModeHalfSupport / mode.slowest_rate())) {
    throw DomainError("trace too short: need duration >= 10/gamma");
  }
  if (!(noise_sigma >= 0.0)) throw DomainError("noise sigma must be non-negative");

  const auto half = static_cast<std::size_t>(std::ceil(0.5 * duration / dt));
  const std::size_t count = 2 * half + 1;
  TimeTrace trace;
  trace.dt = dt;
  trace.t_start = mode.t_c - static_cast<double>(half) * dt;
  trace.values = mode.on_grid(trace.t_start, dt, count);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double noise_scale = noise_sigma / std::sqrt(dt);
  for (double& v : trace.values) {
    v *= x_value;
    if (noise_sigma > 0.0) v += noise_scale * normal(rng);
  }
  return trace;
}

/// Matched-filter quadrature sum_i f(t_i) x(t_i) dt with f normalized on the trace grid.
inline double extract_quadrature(const TimeTrace& trace, const ModeFunction& mode) {
  mode.validate();
  if (trace.values.empty() || !(trace.dt > 0.0)) throw DomainError("empty trace");
  if (mode.t_c < trace.t_start || mode.t_c > trace.t_end()) {
    throw DomainError("trigger time outside the trace");
  }
  const double slack = 0.5 * trace.dt;
  if (mode.t_c - kModeHalfSupport / mode.rise() < trace.t_start - slack ||
      mode.t_c + kModeHalfSupport / mode.gamma > trace.t_end() + slack) {
    throw DomainError("mode function support extends past the trace");
  }
  // Beyond kModeWindow/rate the squared mode is below e^{-75}, far under double
  // resolution, so long records only need the samples around the trigger.
  const double lo_t = mode.t_c - kModeWindow / mode.rise();
  const double hi_t = mode.t_c + kModeWindow / mode.gamma;
  const auto last = static_cast<double>(trace.values.size() - 1);
  const auto first = static_cast<std::size_t>(
      std::clamp(std::ceil((lo_t - trace.t_start) / trace.dt), 0.0, last));
  const auto stop = static_cast<std::size_t>(
      std::clamp(std::floor((hi_t - trace.t_start) / trace.dt), 0.0, last)) + 1;
  const auto f = mode.on_grid(trace.time(first), trace.dt, stop - first);
  double x = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) x += f[i] * trace.values[first + i];
  return x * trace.dt;
}

}  // namespace hqst
