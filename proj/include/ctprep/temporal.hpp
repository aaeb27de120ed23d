/*
 * Copyright 2026 The ctprep Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Slice sampling along the scan axis. The density-based sampler fits a
// Gaussian KDE to per-slice lung areas and picks, for each target percentile,
// the unused slice whose area is closest to the corresponding quantile.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ctprep/error.hpp"
#include "ctprep/spatial.hpp"

namespace ctprep {

inline constexpr int kDefaultSliceCount = 8;
inline constexpr double kQuantileTolerance = 1e-9;
inline constexpr int kMaxBisectionSteps = 200;

/// Areas of the refined lung mask, one entry per slice.
inline std::vector<double> lung_area_profile(const LungMaskSet& m) {
  std::vector<double> areas;
  areas.reserve(m.masks.size());
  for (std::uint64_t a : mask_areas(m)) areas.push_back(static_cast<double>(a));
  return areas;
}

/// Sample standard deviation (n - 1 denominator) by Welford's recurrence;
/// zero for fewer than two values.
inline double sample_stddev(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  double mean = 0.0;
  double m2 = 0.0;
  std::size_t k = 0;
  for (double v : x) {
    ++k;
    const double delta = v - mean;
    mean += delta / static_cast<double>(k);
    m2 += delta * (v - mean);
  }
  return std::sqrt(m2 / static_cast<double>(x.size() - 1));
}

/// Scott's rule h = 1.06 * sigma * s^(-1/5). A zero spread falls back to
/// max(1, 1e-6 * mean) so the CDF stays invertible.
inline double scott_bandwidth(std::span<const double> areas) {
  const double sigma = sample_stddev(areas);
  if (sigma > 0.0) {
    return 1.06 * sigma * std::pow(static_cast<double>(areas.size()), -0.2);
  }
  const double mean =
      std::accumulate(areas.begin(), areas.end(), 0.0) / static_cast<double>(areas.size());
  return std::max(1.0, 1e-6 * mean);
}

/// Gaussian KDE over lung areas with a closed-form CDF.
class DensityProfile {
 public:
  explicit DensityProfile(std::vector<double> areas) : areas_(std::move(areas)) {
    if (areas_.empty()) {
      throw Error(ErrorCode::kEmptyInput, "density profile needs at least one area");
    }
    for (double a : areas_) {
      if (!std::isfinite(a) || a < 0.0) {
        throw Error(ErrorCode::kInvalidArgument, "areas must be finite and >= 0");
      }
    }
    bandwidth_ = scott_bandwidth(areas_);
    auto [lo, hi] = std::minmax_element(areas_.begin(), areas_.end());
    lower_ = *lo - 10.0 * bandwidth_;
    upper_ = *hi + 10.0 * bandwidth_;
  }

  const std::vector<double>& areas() const { return areas_; }
  std::size_t size() const { return areas_.size(); }
  double bandwidth() const { return bandwidth_; }

  /// Support bracket [min - 10h, max + 10h] used for inversion.
  double lower() const { return lower_; }
  double upper() const { return upper_; }

  double pdf(double x) const {
    constexpr double inv_sqrt_2pi = 0.39894228040143267794;
    double sum = 0.0;
    for (double a : areas_) {
      const double z = (x - a) / bandwidth_;
      sum += std::exp(-0.5 * z * z);
    }
    return inv_sqrt_2pi * sum / (static_cast<double>(areas_.size()) * bandwidth_);
  }

  /// Mean of the kernel CDFs; erfc keeps the far tails accurate.
  double cdf(double x) const {
    double sum = 0.0;
    for (double a : areas_) {
      sum += 0.5 * std::erfc(-(x - a) / (bandwidth_ * M_SQRT2));
    }
    return sum / static_cast<double>(areas_.size());
  }

 private:
  std::vector<double> areas_;
  double bandwidth_ = 1.0;
  double lower_ = 0.0;
  double upper_ = 0.0;
};

inline DensityProfile fit_kde(std::vector<double> areas) {
  return DensityProfile(std::move(areas));
}

/// Solves F(q) = p by bisection on the support bracket.
inline double invert_cdf(const DensityProfile& d, double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw Error(ErrorCode::kProbabilityOutOfRange,
                "percentile must lie in (0, 1), got " + std::to_string(p));
  }
  double lo = d.lower();
  double hi = d.upper();
  double mid = 0.5 * (lo + hi);
  for (int step = 0; step < kMaxBisectionSteps; ++step) {
    mid = 0.5 * (lo + hi);
    const double f = d.cdf(mid);
    if (std::abs(f - p) <= kQuantileTolerance) break;
    if (f < p) {
      lo = mid;
    } else {
      hi = mid;
    }
    // stop once the bracket no longer has a representable midpoint
    const double next = 0.5 * (lo + hi);
    if (next <= lo || next >= hi) break;
  }
  return mid;
}

enum class SamplingStrategy { kKds, kUniform, kRandom };

constexpr std::string_view to_string(SamplingStrategy s) {
  switch (s) {
    case SamplingStrategy::kKds: return "kds";
    case SamplingStrategy::kUniform: return "uniform";
    case SamplingStrategy::kRandom: return "random";
  }
  return "kds";
}

inline SamplingStrategy parse_strategy(std::string_view name) {
  if (name == "kds") return SamplingStrategy::kKds;
  if (name == "uniform") return SamplingStrategy::kUniform;
  if (name == "random") return SamplingStrategy::kRandom;
  throw Error(ErrorCode::kInvalidArgument, "unknown strategy '" + std::string(name) + "'");
}

struct SliceSelection {
  std::vector<std::size_t> indices;  // strictly increasing
  SamplingStrategy strategy = SamplingStrategy::kKds;
  std::vector<double> percentiles;   // kds only
  std::vector<double> quantiles;     // kds only, q_p per percentile
  std::optional<std::uint64_t> seed;  // random only
};

/// Midpoint percentiles (2i - 1) / (2n), i = 1..n. For n = 10 this is
/// {0.05, 0.15, ..., 0.95}.
inline std::vector<double> kds_percentiles(int count) {
  if (count < 1) throw Error(ErrorCode::kInvalidArgument, "slice count must be >= 1");
  std::vector<double> p(static_cast<std::size_t>(count));
  for (int i = 1; i <= count; ++i) {
    p[i - 1] = static_cast<double>(2 * i - 1) / static_cast<double>(2 * count);
  }
  return p;
}

/// Density-quantile selection at explicit percentiles. Each quantile claims
/// the nearest-area slice not yet taken (lower index on ties).
inline SliceSelection select_kds(const DensityProfile& d, std::vector<double> percentiles) {
  if (percentiles.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "need at least one percentile");
  }
  SliceSelection sel;
  sel.strategy = SamplingStrategy::kKds;
  sel.quantiles.reserve(percentiles.size());
  for (double p : percentiles) sel.quantiles.push_back(invert_cdf(d, p));
  sel.percentiles = std::move(percentiles);

  const std::vector<double>& areas = d.areas();
  const std::size_t s = areas.size();
  if (s <= sel.percentiles.size()) {
    sel.indices.resize(s);
    std::iota(sel.indices.begin(), sel.indices.end(), std::size_t{0});
    return sel;
  }
  std::vector<bool> used(s, false);
  for (double q : sel.quantiles) {
    std::size_t best = s;
    double best_gap = 0.0;
    for (std::size_t i = 0; i < s; ++i) {
      if (used[i]) continue;
      const double gap = std::abs(areas[i] - q);
      if (best == s || gap < best_gap) {
        best = i;
        best_gap = gap;
      }
    }
    used[best] = true;
    sel.indices.push_back(best);
  }
  std::sort(sel.indices.begin(), sel.indices.end());
  return sel;
}

inline SliceSelection select_kds(const DensityProfile& d, int count) {
  return select_kds(d, kds_percentiles(count));
}

/// Evenly spaced indices floor((i + 0.5) * s / n), i = 0..n-1. With s > n
/// consecutive indices differ by at least one and the last is <= s - 1.
inline SliceSelection select_uniform(std::size_t slice_count, int count) {
  if (count < 1) throw Error(ErrorCode::kInvalidArgument, "slice count must be >= 1");
  SliceSelection sel;
  sel.strategy = SamplingStrategy::kUniform;
  const auto n = static_cast<std::size_t>(count);
  if (slice_count <= n) {
    sel.indices.resize(slice_count);
    std::iota(sel.indices.begin(), sel.indices.end(), std::size_t{0});
    return sel;
  }
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t idx = ((2 * i + 1) * slice_count) / (2 * n);
    idx = std::min(idx, slice_count - 1);
    if (!sel.indices.empty() && idx <= sel.indices.back()) idx = sel.indices.back() + 1;
    sel.indices.push_back(idx);
  }
  return sel;
}

/// n distinct indices drawn without replacement from a seeded generator.
inline SliceSelection select_random(std::size_t slice_count, int count, std::uint64_t seed) {
  if (count < 1) throw Error(ErrorCode::kInvalidArgument, "slice count must be >= 1");
  SliceSelection sel;
  sel.strategy = SamplingStrategy::kRandom;
  sel.seed = seed;
  std::vector<std::size_t> all(slice_count);
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::sample(all.begin(), all.end(), std::back_inserter(sel.indices),
              std::min<std::size_t>(slice_count, static_cast<std::size_t>(count)), rng);
  std::sort(sel.indices.begin(), sel.indices.end());
  return sel;
}

}  // namespace ctprep
