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

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ctprep/error.hpp"

namespace ctprep {

/// Row-major intensity grid. 8-bit volumes use the low byte only.
using Slice = std::vector<std::uint16_t>;

/// Row-major binary grid, values in {0, 1}.
using Mask = std::vector<std::uint8_t>;

constexpr std::uint32_t max_intensity(int bit_depth) {
  return (std::uint32_t{1} << bit_depth) - 1;
}

/// Inclusive pixel box. A default-constructed box is the designated empty box.
struct BoundingBox {
  int row_min = 0;
  int row_max = -1;
  int col_min = 0;
  int col_max = -1;
  bool empty = true;

  static BoundingBox make(int row_min, int row_max, int col_min, int col_max) {
    return BoundingBox{row_min, row_max, col_min, col_max, false};
  }

  int height() const { return empty ? 0 : row_max - row_min + 1; }
  int width() const { return empty ? 0 : col_max - col_min + 1; }

  bool contains(int row, int col) const {
    return !empty && row >= row_min && row <= row_max && col >= col_min &&
           col <= col_max;
  }

  /// Grows the box to cover (row, col).
  void include(int row, int col) {
    if (empty) {
      *this = make(row, row, col, col);
      return;
    }
    row_min = std::min(row_min, row);
    row_max = std::max(row_max, row);
    col_min = std::min(col_min, col);
    col_max = std::max(col_max, col);
  }

  friend bool operator==(const BoundingBox& a, const BoundingBox& b) {
    if (a.empty || b.empty) return a.empty == b.empty;
    return a.row_min == b.row_min && a.row_max == b.row_max &&
           a.col_min == b.col_min && a.col_max == b.col_max;
  }
};

/// Largest per-side displacement between two non-empty boxes.
inline int max_side_shift(const BoundingBox& a, const BoundingBox& b) {
  return std::max({std::abs(a.row_min - b.row_min), std::abs(a.row_max - b.row_max),
                   std::abs(a.col_min - b.col_min), std::abs(a.col_max - b.col_max)});
}

/// Ordered stack of equally sized grayscale slices; index 0 is the first
/// acquired slice. Immutable once constructed.
class ScanVolume {
 public:
  ScanVolume() = default;

  ScanVolume(int width, int height, int bit_depth, std::vector<Slice> slices,
             std::string scan_id = {}, int source_id = 0)
      : width_(width),
        height_(height),
        bit_depth_(bit_depth),
        slices_(std::move(slices)),
        scan_id_(std::move(scan_id)),
        source_id_(source_id) {
    if (width_ < 1 || height_ < 1) {
      throw Error(ErrorCode::kDegenerateDimensions,
                  "volume dimensions must be positive");
    }
    if (bit_depth_ != 8 && bit_depth_ != 16) {
      throw Error(ErrorCode::kInvalidArgument, "bit depth must be 8 or 16");
    }
    if (slices_.empty()) {
      throw Error(ErrorCode::kEmptyInput, "volume needs at least one slice");
    }
    const std::size_t n = pixels_per_slice();
    const std::uint32_t hi = max_intensity(bit_depth_);
    for (std::size_t z = 0; z < slices_.size(); ++z) {
      if (slices_[z].size() != n) {
        throw Error(ErrorCode::kMixedDimensions,
                    "slice " + std::to_string(z) + " has " +
                        std::to_string(slices_[z].size()) + " pixels, expected " +
                        std::to_string(n));
      }
      if (bit_depth_ == 8) {
        auto it = std::find_if(slices_[z].begin(), slices_[z].end(),
                               [hi](std::uint16_t v) { return v > hi; });
        if (it != slices_[z].end()) {
          throw Error(ErrorCode::kInvalidArgument,
                      "intensity exceeds 8-bit range in slice " + std::to_string(z));
        }
      }
    }
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int bit_depth() const { return bit_depth_; }
  std::uint32_t max_value() const { return max_intensity(bit_depth_); }
  std::size_t n_slices() const { return slices_.size(); }
  std::size_t pixels_per_slice() const {
    return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
  }
  const std::string& scan_id() const { return scan_id_; }
  int source_id() const { return source_id_; }

  std::span<const std::uint16_t> slice(std::size_t z) const { return slices_.at(z); }
  const std::vector<Slice>& slices() const { return slices_; }

  std::uint16_t at(std::size_t z, int row, int col) const {
    return slices_[z][static_cast<std::size_t>(row) * width_ + col];
  }

  /// Same geometry and metadata, different pixel content.
  ScanVolume with_slices(std::vector<Slice> slices) const {
    return ScanVolume(width_, height_, bit_depth_, std::move(slices), scan_id_,
                      source_id_);
  }

  friend bool operator==(const ScanVolume&, const ScanVolume&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  int bit_depth_ = 8;
  std::vector<Slice> slices_;
  std::string scan_id_;
  int source_id_ = 0;
};

struct VolumeStats {
  std::uint32_t min = 0;
  std::uint32_t max = 0;
  double mean = 0.0;
  std::size_t n_slices = 0;
};

inline VolumeStats volume_stats(const ScanVolume& v) {
  VolumeStats s;
  s.n_slices = v.n_slices();
  if (v.n_slices() == 0) return s;
  std::uint32_t lo = std::numeric_limits<std::uint32_t>::max();
  std::uint32_t hi = 0;
  std::uint64_t total = 0;
  for (const auto& sl : v.slices()) {
    auto [mn, mx] = std::minmax_element(sl.begin(), sl.end());
    lo = std::min<std::uint32_t>(lo, *mn);
    hi = std::max<std::uint32_t>(hi, *mx);
    for (std::uint16_t px : sl) total += px;
  }
  s.min = lo;
  s.max = hi;
  s.mean = static_cast<double>(total) /
           static_cast<double>(v.pixels_per_slice() * v.n_slices());
  return s;
}

}  // namespace ctprep
