#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hqst/errors.hpp"

namespace hqst {

/// Fixed uniform binning of the quadrature axis.
struct HistogramConfig {
  double x_min = -3.2;
  double x_max = 3.2;
  std::size_t num_bins = 50;

  bool operator==(const HistogramConfig&) const = default;

  void validate() const {
    if (!std::isfinite(x_min) || !std::isfinite(x_max) || !(x_min < x_max)) {
      throw DomainError("histogram range must satisfy x_min < x_max");
    }
    if (num_bins < 2) {
      throw DomainError("histogram needs at least 2 bins");
    }
  }

  double bin_width() const { return (x_max - x_min) / static_cast<double>(num_bins); }

  /// Bin edges x_min + i*width; the last edge is x_max exactly.
  std::vector<double> edges() const {
    validate();
    const double width = bin_width();
    std::vector<double> out(num_bins + 1);
    for (std::size_t i = 0; i < num_bins; ++i) {
      out[i] = x_min + static_cast<double>(i) * width;
    }
    out[num_bins] = x_max;
    return out;
  }

  std::string describe() const {
    return "[" + std::to_string(x_min) + ", " + std::to_string(x_max) + "] in " +
           std::to_string(num_bins) + " bins";
  }
};

/// Bin midpoints, used as the representative quadrature of each bin.
inline std::vector<double> bin_centers(const HistogramConfig& config) {
  config.validate();
  const double width = config.bin_width();
  std::vector<double> out(config.num_bins);
  for (std::size_t i = 0; i < config.num_bins; ++i) {
    out[i] = config.x_min + (static_cast<double>(i) + 0.5) * width;
  }
  return out;
}

/// Relative-frequency density estimate p_i = (N_i / N) / width.
///
/// N counts every sample, including the ones outside the range, so the
/// integrated density equals the in-range fraction.
struct DensityHistogram {
  HistogramConfig config;
  std::vector<double> densities;
  std::vector<std::uint64_t> counts;
  std::uint64_t total_count = 0;
  std::uint64_t dropped_count = 0;

  double in_range_fraction() const {
    return total_count == 0
               ? 0.0
               : static_cast<double>(total_count - dropped_count) / static_cast<double>(total_count);
  }
};

namespace detail {

// Index of the half-open bin [e_i, e_{i+1}) holding x; the last bin is closed.
// The division only provides a starting guess; the edge table decides.
inline std::size_t locate_bin(double x, std::span<const double> edges, double x_min, double width) {
  const std::size_t bins = edges.size() - 1;
  if (x == edges[bins]) return bins - 1;
  auto guess = static_cast<std::ptrdiff_t>(std::floor((x - x_min) / width));
  guess = std::clamp<std::ptrdiff_t>(guess, 0, static_cast<std::ptrdiff_t>(bins) - 1);
  auto i = static_cast<std::size_t>(guess);
  while (i > 0 && x < edges[i]) --i;
  while (i + 1 < bins && x >= edges[i + 1]) ++i;
  return i;
}

}  // namespace detail

inline DensityHistogram build_histogram(std::span<const double> samples,
                                        const HistogramConfig& config) {
  config.validate();
  if (samples.empty()) {
    throw DomainError("cannot build a histogram from an empty batch");
  }
  const auto edges = config.edges();
  const double width = config.bin_width();

  DensityHistogram hist;
  hist.config = config;
  hist.counts.assign(config.num_bins, 0);
  hist.total_count = samples.size();
  for (double x : samples) {
    // NaN fails both comparisons and lands here too.
    if (!(x >= config.x_min && x <= config.x_max)) {
      ++hist.dropped_count;
      continue;
    }
    ++hist.counts[detail::locate_bin(x, edges, config.x_min, width)];
  }

  const double norm = static_cast<double>(hist.total_count) * width;
  hist.densities.resize(config.num_bins);
  for (std::size_t i = 0; i < config.num_bins; ++i) {
    hist.densities[i] = static_cast<double>(hist.counts[i]) / norm;
  }
  return hist;
}

}  // namespace hqst
