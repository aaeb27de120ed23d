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

// Lung-centric spatial standardization: smoothing, scan-level adaptive
// threshold, binary mask refinement, union bounding box and crop.

#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "ctprep/error.hpp"
#include "ctprep/volume.hpp"

namespace ctprep {

struct LungMaskSet {
  int width = 0;
  int height = 0;
  std::vector<Mask> masks;
  std::uint32_t threshold_t = 0;
  int filter_radius = 1;

  std::size_t n_slices() const { return masks.size(); }
};

struct SpatialOptions {
  int radius = 1;
  bool invert = false;
  double min_component_fraction = 0.001;
};

// ---------------------------------------------------------------------------
// Mean filter

/// Normalized (2k+1)^2 box mean with edge replication. Output pixels are the
/// window sum divided by the window size, rounded half up.
inline ScanVolume filter_slices(const ScanVolume& v, int radius) {
  if (radius < 1) {
    throw Error(ErrorCode::kInvalidArgument, "filter radius must be >= 1");
  }
  if (2 * radius + 1 > std::min(v.width(), v.height())) {
    throw Error(ErrorCode::kRadiusTooLarge,
                "window of radius " + std::to_string(radius) + " exceeds " +
                    std::to_string(v.width()) + "x" + std::to_string(v.height()));
  }
  const int w = v.width();
  const int h = v.height();
  const std::uint64_t window = static_cast<std::uint64_t>(2 * radius + 1) *
                               static_cast<std::uint64_t>(2 * radius + 1);
  auto clampi = [](int x, int lo, int hi) { return x < lo ? lo : (x > hi ? hi : x); };

  std::vector<Slice> out;
  out.reserve(v.n_slices());
  std::vector<std::uint64_t> rowsum(static_cast<std::size_t>(w) * h);
  for (const Slice& in : v.slices()) {
    // horizontal pass
    for (int r = 0; r < h; ++r) {
      const std::uint16_t* src = in.data() + static_cast<std::size_t>(r) * w;
      std::uint64_t* dst = rowsum.data() + static_cast<std::size_t>(r) * w;
      std::uint64_t acc = 0;
      for (int dc = -radius; dc <= radius; ++dc) acc += src[clampi(dc, 0, w - 1)];
      dst[0] = acc;
      for (int c = 1; c < w; ++c) {
        acc += src[clampi(c + radius, 0, w - 1)];
        acc -= src[clampi(c - radius - 1, 0, w - 1)];
        dst[c] = acc;
      }
    }
    // vertical pass
    Slice res(static_cast<std::size_t>(w) * h);
    std::vector<std::uint64_t> acc(w, 0);
    for (int dr = -radius; dr <= radius; ++dr) {
      const std::uint64_t* row = rowsum.data() + static_cast<std::size_t>(clampi(dr, 0, h - 1)) * w;
      for (int c = 0; c < w; ++c) acc[c] += row[c];
    }
    for (int r = 0; r < h; ++r) {
      if (r > 0) {
        const std::uint64_t* add =
            rowsum.data() + static_cast<std::size_t>(clampi(r + radius, 0, h - 1)) * w;
        const std::uint64_t* sub =
            rowsum.data() + static_cast<std::size_t>(clampi(r - radius - 1, 0, h - 1)) * w;
        for (int c = 0; c < w; ++c) acc[c] = acc[c] + add[c] - sub[c];
      }
      std::uint16_t* dst = res.data() + static_cast<std::size_t>(r) * w;
      for (int c = 0; c < w; ++c) {
        dst[c] = static_cast<std::uint16_t>((acc[c] + window / 2) / window);
      }
    }
    out.push_back(std::move(res));
  }
  return v.with_slices(std::move(out));
}

/// Maps every intensity x to max_value - x, for scans whose lungs are darker
/// than the surrounding tissue.
inline ScanVolume invert_intensities(const ScanVolume& v) {
  const auto hi = static_cast<std::uint16_t>(v.max_value());
  std::vector<Slice> out = v.slices();
  for (auto& s : out) {
    for (auto& px : s) px = static_cast<std::uint16_t>(hi - px);
  }
  return v.with_slices(std::move(out));
}

// ---------------------------------------------------------------------------
// Otsu threshold

inline std::vector<std::uint64_t> pooled_histogram(const ScanVolume& v) {
  std::vector<std::uint64_t> hist(static_cast<std::size_t>(v.max_value()) + 1, 0);
  for (const Slice& s : v.slices()) {
    for (std::uint16_t px : s) ++hist[px];
  }
  return hist;
}

namespace detail {
__extension__ using Int128 = __int128;  // exact sum * count products
}  // namespace detail

/// Between-class variance (times N^2) of the split {x < t} / {x >= t}, given
/// the lower class count/sum and the totals.
inline double otsu_between_class_score(std::uint64_t n0, std::uint64_t sum0,
                                       std::uint64_t n_total, std::uint64_t sum_total) {
  const std::uint64_t n1 = n_total - n0;
  using detail::Int128;
  const Int128 diff = static_cast<Int128>(sum0) * static_cast<Int128>(n_total) -
                      static_cast<Int128>(sum_total) * static_cast<Int128>(n0);
  const auto d = static_cast<double>(diff);
  return d * d / (static_cast<double>(n0) * static_cast<double>(n1));
}

/// Otsu threshold on the histogram pooled over every slice. Mask convention is
/// x >= t. When several consecutive candidates share the maximal score (an
/// empty histogram gap), the middle of the first such run is returned.
inline std::uint32_t otsu_threshold(const std::vector<std::uint64_t>& hist) {
  std::uint64_t n_total = 0;
  std::uint64_t sum_total = 0;
  std::size_t distinct = 0;
  for (std::size_t x = 0; x < hist.size(); ++x) {
    n_total += hist[x];
    sum_total += hist[x] * x;
    if (hist[x] > 0) ++distinct;
  }
  if (distinct < 2) {
    throw Error(ErrorCode::kDegenerateHistogram,
                "threshold needs at least two distinct intensities");
  }

  double best = -1.0;
  std::uint32_t run_first = 0;
  std::uint32_t run_last = 0;
  bool in_best_run = false;
  std::uint64_t n0 = 0;
  std::uint64_t sum0 = 0;
  for (std::uint32_t t = 1; t < hist.size(); ++t) {
    n0 += hist[t - 1];
    sum0 += hist[t - 1] * (t - 1);
    if (n0 == 0 || n0 == n_total) {
      in_best_run = false;
      continue;
    }
    const double score = otsu_between_class_score(n0, sum0, n_total, sum_total);
    if (score > best) {
      best = score;
      run_first = run_last = t;
      in_best_run = true;
    } else if (score == best && in_best_run && run_last + 1 == t) {
      run_last = t;
    } else {
      in_best_run = false;
    }
  }
  return run_first + (run_last - run_first) / 2;
}

inline std::uint32_t adaptive_threshold(const ScanVolume& filtered) {
  return otsu_threshold(pooled_histogram(filtered));
}

// ---------------------------------------------------------------------------
// Masks

inline LungMaskSet binarize(const ScanVolume& filtered, std::uint32_t t) {
  if (t > filtered.max_value()) {
    throw Error(ErrorCode::kInvalidArgument,
                "threshold " + std::to_string(t) + " outside intensity range");
  }
  LungMaskSet m;
  m.width = filtered.width();
  m.height = filtered.height();
  m.threshold_t = t;
  m.masks.reserve(filtered.n_slices());
  for (const Slice& s : filtered.slices()) {
    Mask mask(s.size());
    std::transform(s.begin(), s.end(), mask.begin(),
                   [t](std::uint16_t px) { return static_cast<std::uint8_t>(px >= t); });
    m.masks.push_back(std::move(mask));
  }
  return m;
}

namespace detail {

// 3x3 min (erode) or max (dilate); neighbours outside the grid are ignored.
inline Mask morph3x3(const Mask& in, int w, int h, bool erode) {
  Mask tmp(in.size());
  Mask out(in.size());
  auto combine = [erode](std::uint8_t a, std::uint8_t b) {
    return erode ? std::min(a, b) : std::max(a, b);
  };
  for (int r = 0; r < h; ++r) {
    const std::uint8_t* src = in.data() + static_cast<std::size_t>(r) * w;
    std::uint8_t* dst = tmp.data() + static_cast<std::size_t>(r) * w;
    for (int c = 0; c < w; ++c) {
      std::uint8_t v = src[c];
      if (c > 0) v = combine(v, src[c - 1]);
      if (c + 1 < w) v = combine(v, src[c + 1]);
      dst[c] = v;
    }
  }
  for (int r = 0; r < h; ++r) {
    const std::uint8_t* mid = tmp.data() + static_cast<std::size_t>(r) * w;
    const std::uint8_t* up = r > 0 ? mid - w : nullptr;
    const std::uint8_t* down = r + 1 < h ? mid + w : nullptr;
    std::uint8_t* dst = out.data() + static_cast<std::size_t>(r) * w;
    for (int c = 0; c < w; ++c) {
      std::uint8_t v = mid[c];
      if (up) v = combine(v, up[c]);
      if (down) v = combine(v, down[c]);
      dst[c] = v;
    }
  }
  return out;
}

}  // namespace detail

/// One 3x3 binary opening (erosion then dilation).
inline Mask open3x3(const Mask& mask, int width, int height) {
  return detail::morph3x3(detail::morph3x3(mask, width, height, true), width, height,
                          false);
}

/// Labels 4-connected foreground components. Returns per-pixel labels (0 is
/// background, components numbered from 1 in raster order of first pixel) and
/// fills `sizes` so that sizes[label] is the component's pixel count.
inline std::vector<std::uint32_t> label_components(const Mask& mask, int width, int height,
                                                   std::vector<std::size_t>& sizes) {
  std::vector<std::uint32_t> labels(mask.size(), 0);
  sizes.assign(1, 0);
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < mask.size(); ++start) {
    if (!mask[start] || labels[start]) continue;
    const auto label = static_cast<std::uint32_t>(sizes.size());
    std::size_t count = 0;
    labels[start] = label;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      ++count;
      const int r = static_cast<int>(p / width);
      const int c = static_cast<int>(p % width);
      auto visit = [&](int rr, int cc) {
        if (rr < 0 || rr >= height || cc < 0 || cc >= width) return;
        const std::size_t q = static_cast<std::size_t>(rr) * width + cc;
        if (mask[q] && !labels[q]) {
          labels[q] = label;
          stack.push_back(q);
        }
      };
      visit(r - 1, c);
      visit(r + 1, c);
      visit(r, c - 1);
      visit(r, c + 1);
    }
    sizes.push_back(count);
  }
  return labels;
}

/// Per slice: 3x3 opening, then removal of 4-connected components with fewer
/// than min_component_fraction * width * height pixels.
inline LungMaskSet refine_masks(const LungMaskSet& m, double min_component_fraction) {
  if (!(min_component_fraction >= 0.0 && min_component_fraction < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "min_component_fraction must be in [0, 1)");
  }
  const double min_size = min_component_fraction * static_cast<double>(m.width) *
                          static_cast<double>(m.height);
  LungMaskSet out;
  out.width = m.width;
  out.height = m.height;
  out.threshold_t = m.threshold_t;
  out.filter_radius = m.filter_radius;
  out.masks.reserve(m.masks.size());
  std::vector<std::size_t> sizes;
  for (const Mask& mask : m.masks) {
    Mask opened = open3x3(mask, m.width, m.height);
    const auto labels = label_components(opened, m.width, m.height, sizes);
    for (std::size_t i = 0; i < opened.size(); ++i) {
      if (labels[i] && static_cast<double>(sizes[labels[i]]) < min_size) opened[i] = 0;
    }
    out.masks.push_back(std::move(opened));
  }
  return out;
}

inline std::vector<std::uint64_t> mask_areas(const LungMaskSet& m) {
  std::vector<std::uint64_t> areas;
  areas.reserve(m.masks.size());
  for (const Mask& mask : m.masks) {
    std::uint64_t n = 0;
    for (std::uint8_t b : mask) n += b;
    areas.push_back(n);
  }
  return areas;
}

inline BoundingBox union_bounding_box(const LungMaskSet& m) {
  BoundingBox box;
  for (const Mask& mask : m.masks) {
    for (int r = 0; r < m.height; ++r) {
      const std::uint8_t* row = mask.data() + static_cast<std::size_t>(r) * m.width;
      const auto* first = std::find(row, row + m.width, std::uint8_t{1});
      if (first == row + m.width) continue;
      int last = m.width - 1;
      while (!row[last]) --last;
      box.include(r, static_cast<int>(first - row));
      box.include(r, last);
    }
  }
  return box;
}

inline ScanVolume crop_volume(const ScanVolume& v, const BoundingBox& b) {
  if (b.empty) {
    throw Error(ErrorCode::kEmptyBoundingBox, "cannot crop " + v.scan_id() +
                                                  " to an empty bounding box");
  }
  if (b.row_min < 0 || b.col_min < 0 || b.row_max >= v.height() ||
      b.col_max >= v.width() || b.row_min > b.row_max || b.col_min > b.col_max) {
    throw Error(ErrorCode::kBoxOutOfRange, "bounding box outside volume bounds");
  }
  const int w = b.width();
  std::vector<Slice> out;
  out.reserve(v.n_slices());
  for (const Slice& s : v.slices()) {
    Slice c(static_cast<std::size_t>(w) * b.height());
    for (int r = b.row_min; r <= b.row_max; ++r) {
      const auto* src = s.data() + static_cast<std::size_t>(r) * v.width() + b.col_min;
      std::copy(src, src + w, c.data() + static_cast<std::size_t>(r - b.row_min) * w);
    }
    out.push_back(std::move(c));
  }
  return ScanVolume(w, b.height(), v.bit_depth(), std::move(out), v.scan_id(),
                    v.source_id());
}

// ---------------------------------------------------------------------------
// Full pass

/// Filter, threshold, binarize and refine. The threshold is computed on the
/// (optionally inverted) filtered volume.
inline LungMaskSet compute_lung_masks(const ScanVolume& v, const SpatialOptions& opts) {
  ScanVolume filtered = filter_slices(v, opts.radius);
  if (opts.invert) filtered = invert_intensities(filtered);
  const std::uint32_t t = adaptive_threshold(filtered);
  LungMaskSet raw = binarize(filtered, t);
  raw.filter_radius = opts.radius;
  return refine_masks(raw, opts.min_component_fraction);
}

struct SpatialResult {
  ScanVolume cropped;
  LungMaskSet masks;  // refined, in the uncropped frame
  BoundingBox bbox;
};

/// Runs the whole spatial pass. An empty union mask is a scan-level failure.
inline SpatialResult standardize_spatial(const ScanVolume& v, const SpatialOptions& opts) {
  SpatialResult res;
  res.masks = compute_lung_masks(v, opts);
  res.bbox = union_bounding_box(res.masks);
  if (res.bbox.empty) {
    throw Error(ErrorCode::kEmptyBoundingBox,
                "no lung pixels survive refinement in scan '" + v.scan_id() + "'");
  }
  res.cropped = crop_volume(v, res.bbox);
  return res;
}

}  // namespace ctprep
