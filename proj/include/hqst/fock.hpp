#pragma once

// Photon-number (Fock) basis physics for phase-averaged single-mode light.
//
// Quadrature convention: the vacuum quadrature density is exp(-x^2)/sqrt(pi),
// i.e. variance 1/2. Every density, fit and Wigner function in the library
// uses this convention.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hqst/errors.hpp"
#include "hqst/histogram.hpp"

namespace hqst {

/// Highest photon number kept in the default truncation (w0, w1, w2).
inline constexpr int kPhotonCutoff = 2;
/// Highest Hermite order supported by the special-function layer.
inline constexpr int kMaxHermiteOrder = 4;
/// Tolerance on the unit sum of a photon-number distribution.
inline constexpr double kSimplexTolerance = 1e-9;

/// Photon-number distribution w_n, n = 0..size()-1, on the probability simplex.
class PhotonWeights {
 public:
  PhotonWeights() : w_{1.0, 0.0, 0.0} {}
  PhotonWeights(std::initializer_list<double> w) : w_(w) { validate(); }
  explicit PhotonWeights(std::vector<double> w) : w_(std::move(w)) { validate(); }

  static PhotonWeights vacuum(std::size_t size = kPhotonCutoff + 1) {
    std::vector<double> w(size, 0.0);
    w.at(0) = 1.0;
    return PhotonWeights(std::move(w));
  }

  std::size_t size() const { return w_.size(); }
  int max_photons() const { return static_cast<int>(w_.size()) - 1; }
  double operator[](std::size_t n) const { return w_[n]; }
  std::span<const double> values() const { return w_; }
  const std::vector<double>& vector() const { return w_; }

  bool operator==(const PhotonWeights&) const = default;

 private:
  void validate() const {
    if (w_.empty() || static_cast<int>(w_.size()) > kMaxHermiteOrder + 1) {
      throw DomainError("photon weights need between 1 and " +
                        std::to_string(kMaxHermiteOrder + 1) + " components");
    }
    double sum = 0.0;
    for (double v : w_) {
      if (!(v >= 0.0 && v <= 1.0)) {
        throw DomainError("photon weight outside [0, 1]: " + std::to_string(v));
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > kSimplexTolerance) {
      throw DomainError("photon weights sum to " + std::to_string(sum) + ", expected 1");
    }
  }

  std::vector<double> w_;
};

/// Physicists' Hermite polynomial H_n(x) by the three-term recurrence.
inline double hermite(int n, double x) {
  if (n < 0 || n > kMaxHermiteOrder) {
    throw DomainError("hermite order " + std::to_string(n) + " outside 0.." +
                      std::to_string(kMaxHermiteOrder));
  }
  double prev = 1.0;
  if (n == 0) return prev;
  double cur = 2.0 * x;
  for (int k = 1; k < n; ++k) {
    const double next = 2.0 * x * cur - 2.0 * k * prev;
    prev = cur;
    cur = next;
  }
  return cur;
}

/// Laguerre polynomial L_n(x) by recurrence.
inline double laguerre(int n, double x) {
  if (n < 0) throw DomainError("laguerre order must be non-negative");
  double prev = 1.0;
  if (n == 0) return prev;
  double cur = 1.0 - x;
  for (int k = 1; k < n; ++k) {
    const double next = ((2.0 * k + 1.0 - x) * cur - k * prev) / (k + 1.0);
    prev = cur;
    cur = next;
  }
  return cur;
}

/// Quadrature density of the pure Fock state |n>: H_n^2(x) e^{-x^2} / (sqrt(pi) 2^n n!).
inline double fock_pdf(int n, double x) {
  const double h = hermite(n, x);
  double norm = std::numbers::inv_sqrtpi;
  for (int k = 1; k <= n; ++k) norm /= 2.0 * k;
  return norm * h * h * std::exp(-x * x);
}

/// All Fock densities 0..out.size()-1 at x, sharing one exponential.
inline void fock_pdfs(double x, std::span<double> out) {
  const double gauss = std::numbers::inv_sqrtpi * std::exp(-x * x);
  double prev = 1.0;
  double cur = 2.0 * x;
  double norm = 1.0;
  for (std::size_t n = 0; n < out.size(); ++n) {
    double h;
    if (n == 0) {
      h = prev;
    } else if (n == 1) {
      h = cur;
    } else {
      const double next = 2.0 * x * cur - 2.0 * static_cast<double>(n - 1) * prev;
      prev = cur;
      cur = next;
      h = cur;
    }
    if (n > 0) norm /= 2.0 * static_cast<double>(n);
    out[n] = norm * h * h * gauss;
  }
}

/// Phase-averaged quadrature density sum_n w_n |psi_n(x)|^2.
inline double quad_pdf(const PhotonWeights& w, double x) {
  std::array<double, kMaxHermiteOrder + 1> comp{};
  fock_pdfs(x, std::span(comp).first(w.size()));
  double p = 0.0;
  for (std::size_t n = 0; n < w.size(); ++n) p += w[n] * comp[n];
  return p;
}

/// Vacuum/single-photon mixture density (1/sqrt(pi)) [1 - eta (1 - 2x^2)] e^{-x^2}.
inline double fit_family_pdf(double eta, double x) {
  if (!(eta >= 0.0 && eta <= 1.0)) {
    throw DomainError("fit weight eta must lie in [0, 1]");
  }
  return std::numbers::inv_sqrtpi * (1.0 - eta * (1.0 - 2.0 * x * x)) * std::exp(-x * x);
}

struct EtaFit {
  double eta = 0.0;
  double residual = 0.0;
};

/// Least-squares fit of the vacuum/single-photon family to a density histogram.
///
/// The family is affine in eta, base(x) + eta * slope(x), so the unconstrained
/// optimum is closed-form; it is then clamped to [0, 1].
inline EtaFit fit_eta(const DensityHistogram& hist) {
  if (hist.densities.empty()) {
    throw EstimationError("cannot fit an empty histogram");
  }
  bool any = false;
  for (double p : hist.densities) any = any || p != 0.0;
  if (!any) {
    throw EstimationError("cannot fit eta: histogram has no in-range samples");
  }
  const auto centers = bin_centers(hist.config);
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < centers.size(); ++i) {
    const double x = centers[i];
    const double g = std::numbers::inv_sqrtpi * std::exp(-x * x);
    const double slope = -(1.0 - 2.0 * x * x) * g;
    num += slope * (hist.densities[i] - g);
    den += slope * slope;
  }
  EtaFit fit;
  fit.eta = std::clamp(num / den, 0.0, 1.0);
  for (std::size_t i = 0; i < centers.size(); ++i) {
    const double r = fit_family_pdf(fit.eta, centers[i]) - hist.densities[i];
    fit.residual += r * r;
  }
  return fit;
}

/// Wigner function at the phase-space origin, (1/pi) sum_n (-1)^n w_n.
inline double wigner_origin(const PhotonWeights& w) {
  double s = 0.0;
  for (std::size_t n = 0; n < w.size(); ++n) {
    s += (n % 2 == 0 ? 1.0 : -1.0) * w[n] * laguerre(static_cast<int>(n), 0.0);
  }
  return s * std::numbers::inv_pi;
}

/// W(x, p) = (1/pi) sum_n (-1)^n w_n L_n(2 r^2) e^{-r^2}, r^2 = x^2 + p^2.
inline double wigner_value(const PhotonWeights& w, double x, double p) {
  const double r2 = x * x + p * p;
  double s = 0.0;
  for (std::size_t n = 0; n < w.size(); ++n) {
    s += (n % 2 == 0 ? 1.0 : -1.0) * w[n] * laguerre(static_cast<int>(n), 2.0 * r2);
  }
  return s * std::numbers::inv_pi * std::exp(-r2);
}

/// Wigner function sampled on a rectangular grid; values are x-major.
struct WignerGrid {
  std::vector<double> x_axis;
  std::vector<double> p_axis;
  std::vector<double> values;

  double at(std::size_t ix, std::size_t ip) const { return values[ix * p_axis.size() + ip]; }
};

/// Uniform axis symmetric about 0 with spacing `step`, reaching the multiple of
/// `step` nearest to half_range. The centre point is exactly 0.
inline std::vector<double> symmetric_axis(double half_range, double step) {
  if (!(step > 0.0) || !(half_range >= 0.0) || !std::isfinite(half_range)) {
    throw DomainError("axis needs step > 0 and a finite non-negative range");
  }
  const auto m = static_cast<long>(std::llround(half_range / step));
  std::vector<double> axis;
  axis.reserve(static_cast<std::size_t>(2 * m + 1));
  for (long i = -m; i <= m; ++i) axis.push_back(static_cast<double>(i) * step);
  return axis;
}

namespace detail {

inline void check_axis(const std::vector<double>& axis, const char* name) {
  if (axis.empty()) throw DomainError(std::string(name) + " axis is empty");
  if (axis.size() < 2) return;
  const double step = axis[1] - axis[0];
  if (!(step > 0.0)) throw DomainError(std::string(name) + " axis must be increasing");
  for (std::size_t i = 1; i < axis.size(); ++i) {
    const double d = axis[i] - axis[i - 1];
    if (std::abs(d - step) > 1e-9 * std::max(1.0, std::abs(step))) {
      throw DomainError(std::string(name) + " axis is not uniform");
    }
  }
}

}  // namespace detail

inline WignerGrid wigner_grid(const PhotonWeights& w, std::vector<double> x_axis,
                              std::vector<double> p_axis) {
  detail::check_axis(x_axis, "x");
  detail::check_axis(p_axis, "p");
  WignerGrid grid{std::move(x_axis), std::move(p_axis), {}};
  grid.values.resize(grid.x_axis.size() * grid.p_axis.size());
  for (std::size_t i = 0; i < grid.x_axis.size(); ++i) {
    for (std::size_t j = 0; j < grid.p_axis.size(); ++j) {
      grid.values[i * grid.p_axis.size() + j] = wigner_value(w, grid.x_axis[i], grid.p_axis[j]);
    }
  }
  return grid;
}

/// g2(0) = <n(n-1)> / <n>^2; empty when the mean photon number is zero.
inline std::optional<double> g2_from_weights(const PhotonWeights& w) {
  double mean = 0.0;
  double pairs = 0.0;
  for (std::size_t n = 0; n < w.size(); ++n) {
    const auto k = static_cast<double>(n);
    mean += k * w[n];
    pairs += k * (k - 1.0) * w[n];
  }
  if (mean == 0.0) return std::nullopt;
  return pairs / (mean * mean);
}

/// Fidelity of two commuting (photon-number diagonal) states, (sum_n sqrt(w_n v_n))^2.
inline double fidelity(const PhotonWeights& w, const PhotonWeights& v) {
  if (w.size() != v.size()) {
    throw DomainError("fidelity needs distributions of equal truncation");
  }
  double s = 0.0;
  for (std::size_t n = 0; n < w.size(); ++n) s += std::sqrt(w[n] * v[n]);
  return std::min(1.0, s * s);
}

namespace detail {

inline double binomial(int n, int k) {
  double c = 1.0;
  for (int i = 1; i <= k; ++i) c = c * (n - k + i) / i;
  return c;
}

// Loss matrix entry T[m][n] = C(n, m) eta^m (1 - eta)^(n - m), zero for n < m.
inline double loss_entry(int m, int n, double eta) {
  if (n < m) return 0.0;
  return binomial(n, m) * std::pow(eta, m) * std::pow(1.0 - eta, n - m);
}

}  // namespace detail

/// Binomial photon loss with transmission eta_det.
inline PhotonWeights apply_loss(const PhotonWeights& w, double eta_det) {
  if (!(eta_det > 0.0 && eta_det <= 1.0)) {
    throw DomainError("detection efficiency must lie in (0, 1]");
  }
  const int size = static_cast<int>(w.size());
  std::vector<double> out(w.size(), 0.0);
  for (int m = 0; m < size; ++m) {
    for (int n = m; n < size; ++n) out[m] += detail::loss_entry(m, n, eta_det) * w[n];
  }
  return PhotonWeights(std::move(out));
}

struct LossCorrection {
  PhotonWeights weights;
  /// Set when the exact inverse had negative components that were clamped.
  bool clamped = false;
};

/// Undo binomial loss by back-substitution on the upper-triangular loss matrix.
inline LossCorrection invert_loss(const PhotonWeights& measured, double eta_det) {
  if (!(eta_det > 0.0 && eta_det <= 1.0)) {
    throw DomainError("detection efficiency must lie in (0, 1] to invert loss");
  }
  const int size = static_cast<int>(measured.size());
  std::vector<double> w(measured.size(), 0.0);
  for (int m = size - 1; m >= 0; --m) {
    double rhs = measured[m];
    for (int n = m + 1; n < size; ++n) rhs -= detail::loss_entry(m, n, eta_det) * w[n];
    w[m] = rhs / detail::loss_entry(m, m, eta_det);
  }
  LossCorrection result;
  double sum = 0.0;
  for (double& v : w) {
    if (v < 0.0) {
      v = 0.0;
      result.clamped = true;
    }
    sum += v;
  }
  if (result.clamped) {
    for (double& v : w) v /= sum;
  }
  // Back-substitution keeps the unit sum only up to rounding.
  for (double& v : w) v = std::min(v, 1.0);
  result.weights = PhotonWeights(std::move(w));
  return result;
}

}  // namespace hqst
