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

// Synthetic lung phantoms with exactly known masks, areas and bounding box.
//
// Each slice carries two disjoint axis-aligned ellipses ("lungs") centred on
// the same two points for every slice. A per-slice scale factor is searched so
// that the rendered pixel count matches the requested lung fraction; the
// rendered count, not the request, is what the ground truth records.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "ctprep/error.hpp"
#include "ctprep/volume.hpp"

namespace ctprep {

/// Ellipses may not cover more than this fraction of a slice.
inline constexpr double kMaxLungFraction = 0.6;

struct PhantomSpec {
  int n_slices = 64;
  int width = 128;
  int height = 128;
  int bit_depth = 8;
  std::vector<double> lung_profile;
  double noise_sigma = 5.0;
  int background_level = 30;
  int lung_level = 220;
  std::uint64_t seed = 1;
  std::string scan_id = "phantom";
  int source_id = 0;
};

struct PhantomTruth {
  BoundingBox bbox;
  std::vector<std::uint64_t> area_per_slice;
};

struct Phantom {
  ScanVolume volume;
  PhantomTruth truth;
};

/// Smooth apex-to-base profile: peak * sin(pi (i + 0.5) / n).
inline std::vector<double> bell_profile(int n_slices, double peak_fraction) {
  std::vector<double> profile(static_cast<std::size_t>(std::max(n_slices, 0)));
  for (int i = 0; i < n_slices; ++i) {
    profile[i] = peak_fraction * std::sin(M_PI * (i + 0.5) / n_slices);
  }
  return profile;
}

inline void validate(const PhantomSpec& spec) {
  if (spec.width < 16 || spec.height < 16 || spec.n_slices < 1) {
    throw Error(ErrorCode::kDegenerateDimensions,
                "phantom needs width, height >= 16 and at least one slice");
  }
  if (spec.lung_profile.size() != static_cast<std::size_t>(spec.n_slices)) {
    throw Error(ErrorCode::kProfileLengthMismatch,
                "lung_profile has " + std::to_string(spec.lung_profile.size()) +
                    " entries for " + std::to_string(spec.n_slices) + " slices");
  }
  if (spec.bit_depth != 8 && spec.bit_depth != 16) {
    throw Error(ErrorCode::kInvalidArgument, "bit_depth must be 8 or 16");
  }
  for (double f : spec.lung_profile) {
    if (!(f >= 0.0 && f <= kMaxLungFraction)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "lung fractions must lie in [0, " +
                      std::to_string(kMaxLungFraction) + "]");
    }
  }
  if (!(spec.noise_sigma >= 0.0) || !std::isfinite(spec.noise_sigma)) {
    throw Error(ErrorCode::kInvalidArgument, "noise_sigma must be >= 0");
  }
  const auto hi = static_cast<int>(max_intensity(spec.bit_depth));
  if (spec.background_level < 0 || spec.background_level > hi ||
      spec.lung_level < 0 || spec.lung_level > hi) {
    throw Error(ErrorCode::kInvalidArgument, "intensity levels out of range");
  }
  if (spec.background_level == spec.lung_level) {
    throw Error(ErrorCode::kInvalidArgument,
                "lung_level must differ from background_level");
  }
}

namespace detail {

// Horizontal extent [first, last] of an ellipse on one row; empty if first > last.
struct Run {
  int first;
  int last;
};

struct Ellipse {
  double center_row;
  double center_col;
  double semi_rows;
  double semi_cols;

  Run run(int row, int width) const {
    if (semi_rows <= 0.0 || semi_cols <= 0.0) return {0, -1};
    const double dy = (row + 0.5 - center_row) / semi_rows;
    const double rem = 1.0 - dy * dy;
    if (rem < 0.0) return {0, -1};
    const double half = semi_cols * std::sqrt(rem);
    // pixel c is inside iff |c + 0.5 - center_col| <= half
    int first = static_cast<int>(std::ceil(center_col - half - 0.5));
    int last = static_cast<int>(std::floor(center_col + half - 0.5));
    first = std::max(first, 0);
    last = std::min(last, width - 1);
    return {first, last};
  }
};

struct LungPair {
  Ellipse left;
  Ellipse right;
};

inline LungPair lungs_at_scale(int width, int height, double scale) {
  const double rows = 0.46 * height * scale;
  const double cols = 0.23 * width * scale;
  return {{height / 2.0, width * 0.25, rows, cols},
          {height / 2.0, width * 0.75, rows, cols}};
}

inline std::uint64_t lung_pixel_count(const LungPair& lungs, int width, int height) {
  std::uint64_t total = 0;
  for (int r = 0; r < height; ++r) {
    for (const Ellipse* e : {&lungs.left, &lungs.right}) {
      Run run = e->run(r, width);
      if (run.last >= run.first) total += static_cast<std::uint64_t>(run.last - run.first + 1);
    }
  }
  return total;
}

// Scale whose rendered pixel count is closest to target (count is monotone in scale).
inline double fit_scale(int width, int height, double target) {
  if (target <= 0.0) return 0.0;
  double lo = 0.0;
  double hi = 1.0;
  for (int iter = 0; iter < 60; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (static_cast<double>(lung_pixel_count(lungs_at_scale(width, height, mid), width,
                                             height)) >= target) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  const auto below = static_cast<double>(
      lung_pixel_count(lungs_at_scale(width, height, lo), width, height));
  const auto above = static_cast<double>(
      lung_pixel_count(lungs_at_scale(width, height, hi), width, height));
  return (target - below) < (above - target) ? lo : hi;
}

}  // namespace detail

inline Phantom generate_phantom(const PhantomSpec& spec) {
  validate(spec);
  const int w = spec.width;
  const int h = spec.height;
  const auto npix = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  const auto hi = static_cast<double>(max_intensity(spec.bit_depth));

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> noise(0.0, spec.noise_sigma > 0 ? spec.noise_sigma : 1.0);

  Phantom out;
  out.truth.area_per_slice.reserve(spec.n_slices);
  std::vector<Slice> slices;
  slices.reserve(spec.n_slices);

  for (int z = 0; z < spec.n_slices; ++z) {
    Slice slice(npix, static_cast<std::uint16_t>(spec.background_level));
    const double target = spec.lung_profile[z] * static_cast<double>(npix);
    const auto lungs = detail::lungs_at_scale(w, h, detail::fit_scale(w, h, target));
    std::uint64_t area = 0;
    for (int r = 0; r < h; ++r) {
      for (const detail::Ellipse* e : {&lungs.left, &lungs.right}) {
        detail::Run run = e->run(r, w);
        if (run.last < run.first) continue;
        out.truth.bbox.include(r, run.first);
        out.truth.bbox.include(r, run.last);
        std::fill(slice.begin() + static_cast<std::ptrdiff_t>(r) * w + run.first,
                  slice.begin() + static_cast<std::ptrdiff_t>(r) * w + run.last + 1,
                  static_cast<std::uint16_t>(spec.lung_level));
        area += static_cast<std::uint64_t>(run.last - run.first + 1);
      }
    }
    out.truth.area_per_slice.push_back(area);

    if (spec.noise_sigma > 0.0) {
      for (auto& px : slice) {
        const double v = std::round(px + noise(rng));
        px = static_cast<std::uint16_t>(std::clamp(v, 0.0, hi));
      }
    }
    slices.push_back(std::move(slice));
  }
  out.volume = ScanVolume(w, h, spec.bit_depth, std::move(slices), spec.scan_id,
                          spec.source_id);
  return out;
}

/// One scan of a synthetic multi-source corpus.
struct CorpusEntry {
  std::string label;  // "covid" or "non_covid"
  PhantomSpec spec;
};

/// Scan counts per (source, class) of a four-institution chest CT training
/// split.
struct SourceCounts {
  int source_id;
  int covid;
  int non_covid;
};

inline const std::vector<SourceCounts>& four_source_scan_counts() {
  static const std::vector<SourceCounts> counts = {
      {0, 218, 209}, {1, 218, 210}, {2, 39, 210}, {3, 217, 210}};
  return counts;
}

/// Multi-source phantom corpus with the four-source class counts scaled by
/// `scale`. Sources differ in field of view, scan length, intensity levels and
/// noise so that spatial and temporal heterogeneity is present.
inline std::vector<CorpusEntry> four_source_corpus(double scale, std::uint64_t seed) {
  struct SourceStyle {
    int size;
    int n_slices;
    int background;
    int lung;
    double noise;
    double peak;
  };
  static const SourceStyle styles[] = {
      {128, 64, 30, 200, 6.0, 0.30},
      {112, 24, 20, 180, 4.0, 0.22},
      {160, 80, 40, 230, 8.0, 0.18},
      {128, 48, 25, 210, 5.0, 0.26},
  };
  auto scaled = [scale](int count) {
    if (count <= 0) return 0;
    return std::max(1, static_cast<int>(std::lround(count * scale)));
  };

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter(0.8, 1.2);
  std::vector<CorpusEntry> corpus;
  for (const auto& counts : four_source_scan_counts()) {
    const SourceStyle& style = styles[counts.source_id];
    for (const char* label : {"covid", "non_covid"}) {
      const int n = scaled(std::string(label) == "covid" ? counts.covid : counts.non_covid);
      for (int k = 0; k < n; ++k) {
        PhantomSpec spec;
        spec.width = style.size;
        spec.height = style.size;
        spec.n_slices = std::max(4, static_cast<int>(std::lround(style.n_slices * jitter(rng))));
        spec.lung_profile = bell_profile(spec.n_slices, style.peak * jitter(rng));
        spec.noise_sigma = style.noise;
        spec.background_level = style.background;
        spec.lung_level = style.lung;
        spec.seed = rng();
        spec.source_id = counts.source_id;
        char id[64];
        std::snprintf(id, sizeof(id), "s%d_%s_%03d", counts.source_id, label, k + 1);
        spec.scan_id = id;
        corpus.push_back({label, std::move(spec)});
      }
    }
  }
  return corpus;
}

}  // namespace ctprep
