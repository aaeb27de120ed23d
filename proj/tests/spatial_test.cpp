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

#include <gtest/gtest.h>

#include <numeric>
#include <random>

#include "ctprep/phantom.hpp"
#include "ctprep/spatial.hpp"
#include "oracles.hpp"

namespace ctprep {
namespace {

ScanVolume single(int w, int h, Slice s) { return ScanVolume(w, h, 8, {std::move(s)}); }

LungMaskSet mask_set(int w, int h, std::vector<Mask> masks) {
  LungMaskSet m;
  m.width = w;
  m.height = h;
  m.masks = std::move(masks);
  return m;
}

Mask square(int w, int h, int r0, int c0, int side) {
  Mask m(static_cast<std::size_t>(w) * h, 0);
  for (int r = r0; r < r0 + side; ++r) {
    for (int c = c0; c < c0 + side; ++c) m[static_cast<std::size_t>(r) * w + c] = 1;
  }
  return m;
}

Phantom phantom(std::uint64_t seed, double noise = 5.0) {
  PhantomSpec s;
  s.width = 96;
  s.height = 80;
  s.n_slices = 16;
  s.lung_profile = bell_profile(16, 0.35);
  s.noise_sigma = noise;
  s.seed = seed;
  return generate_phantom(s);
}

// --- filter ------------------------------------------------------------------

TEST(FilterSlices, ConstantIsUnchanged) {
  const ScanVolume v = single(8, 8, Slice(64, 77));
  EXPECT_EQ(filter_slices(v, 1), v);
}

TEST(FilterSlices, CenterOfImpulse) {
  const ScanVolume v = single(3, 3, {0, 0, 0, 0, 9, 0, 0, 0, 0});
  EXPECT_EQ(filter_slices(v, 1).at(0, 1, 1), 1);
}

TEST(FilterSlices, MatchesNaiveWindow) {
  std::mt19937_64 rng(42);
  std::uniform_int_distribution<int> px(0, 255);
  for (int k : {1, 2, 3}) {
    Slice s(32 * 32);
    for (auto& p : s) p = static_cast<std::uint16_t>(px(rng));
    const ScanVolume v = single(32, 32, s);
    EXPECT_EQ(filter_slices(v, k).slices()[0], oracle::mean_filter(s, 32, 32, k)) << "k=" << k;
  }
}

TEST(FilterSlices, NonSquareSixteenBit) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> px(0, 65535);
  Slice s(17 * 29);
  for (auto& p : s) p = static_cast<std::uint16_t>(px(rng));
  const ScanVolume v(17, 29, 16, {s});
  EXPECT_EQ(filter_slices(v, 2).slices()[0], oracle::mean_filter(s, 17, 29, 2));
}

TEST(FilterSlices, RadiusTooLarge) {
  const ScanVolume v = single(4, 8, Slice(32, 1));
  try {
    filter_slices(v, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kRadiusTooLarge);
  }
  EXPECT_THROW(filter_slices(v, 0), Error);
}

// --- threshold ---------------------------------------------------------------

TEST(AdaptiveThreshold, TwoLevelHalfAndHalf) {
  Slice s(64);
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = i % 2 ? 200 : 10;
  const ScanVolume v = single(8, 8, s);
  const auto t = adaptive_threshold(v);
  EXPECT_EQ(t, oracle::otsu(oracle::histogram(v)));
  EXPECT_GT(t, 10u);
  EXPECT_LE(t, 200u);
  // any cut between the two levels is optimal; the middle of that run is (11 + 200) / 2
  EXPECT_EQ(t, 105u);
}

TEST(AdaptiveThreshold, ConstantVolumeIsDegenerate) {
  try {
    adaptive_threshold(single(4, 4, Slice(16, 9)));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateHistogram);
  }
}

TEST(AdaptiveThreshold, NoisyPhantomBetweenLevels) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const ScanVolume f = filter_slices(phantom(seed).volume, 1);
    const auto t = adaptive_threshold(f);
    EXPECT_EQ(t, oracle::otsu(oracle::histogram(f)));
    EXPECT_GT(t, 30u);
    EXPECT_LT(t, 220u);
  }
}

TEST(AdaptiveThreshold, RandomHistogramsMatchExhaustiveSearch) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::uint64_t> hist(256, 0);
    std::uniform_int_distribution<int> bin(0, 255), cnt(0, 1000), used(2, 40);
    const int n = used(rng);
    for (int i = 0; i < n; ++i) hist[bin(rng)] += cnt(rng) + 1;
    if (std::count_if(hist.begin(), hist.end(), [](auto c) { return c > 0; }) < 2) continue;
    EXPECT_EQ(otsu_threshold(hist), oracle::otsu(hist)) << "trial " << trial;
  }
}

// --- binarize ----------------------------------------------------------------

TEST(Binarize, AllBelowThreshold) {
  const LungMaskSet m = binarize(single(4, 4, Slice(16, 5)), 6);
  for (auto b : m.masks[0]) EXPECT_EQ(b, 0);
  EXPECT_EQ(m.threshold_t, 6u);
}

TEST(Binarize, ZeroThresholdSelectsEverything) {
  const LungMaskSet m = binarize(single(4, 4, Slice(16, 0)), 0);
  for (auto b : m.masks[0]) EXPECT_EQ(b, 1);
}

TEST(Binarize, ElementwiseAndMonotone) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> px(0, 255);
  Slice s(20 * 20);
  for (auto& p : s) p = static_cast<std::uint16_t>(px(rng));
  const ScanVolume v = single(20, 20, s);
  Mask previous;
  for (std::uint32_t t = 0; t <= 255; t += 15) {
    const Mask m = binarize(v, t).masks[0];
    for (std::size_t i = 0; i < s.size(); ++i) EXPECT_EQ(m[i], s[i] >= t ? 1 : 0);
    if (!previous.empty()) {
      for (std::size_t i = 0; i < m.size(); ++i) EXPECT_LE(m[i], previous[i]);
    }
    previous = m;
  }
  EXPECT_THROW(binarize(v, 256), Error);
}

// --- refine ------------------------------------------------------------------

TEST(RefineMasks, IsolatedPixelRemoved) {
  Mask m(64 * 64, 0);
  m[32 * 64 + 32] = 1;
  const LungMaskSet r = refine_masks(mask_set(64, 64, {m}), 0.001);
  for (auto b : r.masks[0]) EXPECT_EQ(b, 0);
}

TEST(RefineMasks, SquareSurvivesOpening) {
  const Mask m = square(64, 64, 10, 20, 20);
  const LungMaskSet r = refine_masks(mask_set(64, 64, {m}), 0.01);
  EXPECT_EQ(r.masks[0], oracle::refine(m, 64, 64, 0.01));
  EXPECT_EQ(r.masks[0], m);
}

TEST(RefineMasks, SmallComponentDropped) {
  // 25x20 block (500 px) plus a 3-pixel L-shape; threshold 0.001 * 4096 = 4.1 px
  Mask m = Mask(64 * 64, 0);
  for (int r = 5; r < 25; ++r) {
    for (int c = 5; c < 30; ++c) m[r * 64 + c] = 1;
  }
  m[50 * 64 + 50] = m[50 * 64 + 51] = m[51 * 64 + 50] = 1;
  const LungMaskSet r = refine_masks(mask_set(64, 64, {m}), 0.001);
  EXPECT_EQ(r.masks[0], oracle::refine(m, 64, 64, 0.001));
  EXPECT_EQ(mask_areas(r)[0], 500u);
}

TEST(RefineMasks, SizeFilterWithoutOpeningEffects) {
  // two solid blocks survive opening; fraction decides which remain
  Mask m = square(64, 64, 2, 2, 10);       // 100 px
  Mask small = square(64, 64, 40, 40, 4);  // 16 px
  for (std::size_t i = 0; i < m.size(); ++i) m[i] |= small[i];
  const LungMaskSet keep = refine_masks(mask_set(64, 64, {m}), 16.0 / 4096.0);
  EXPECT_EQ(mask_areas(keep)[0], 116u);
  const LungMaskSet drop = refine_masks(mask_set(64, 64, {m}), 17.0 / 4096.0);
  EXPECT_EQ(mask_areas(drop)[0], 100u);
  EXPECT_THROW(refine_masks(mask_set(64, 64, {m}), 1.0), Error);
}

TEST(RefineMasks, MatchesOracleOnRandomMasksAndIsContractive) {
  std::mt19937_64 rng(11);
  std::bernoulli_distribution on(0.55);
  for (int trial = 0; trial < 20; ++trial) {
    const int w = 24 + trial, h = 30;
    Mask m(static_cast<std::size_t>(w) * h);
    for (auto& b : m) b = on(rng);
    const Mask refined = refine_masks(mask_set(w, h, {m}), 0.01).masks[0];
    EXPECT_EQ(refined, oracle::refine(m, w, h, 0.01));
    const Mask opened = oracle::open3x3(m, w, h);
    for (std::size_t i = 0; i < m.size(); ++i) EXPECT_LE(refined[i], opened[i]);
  }
}

// --- bbox and crop -----------------------------------------------------------

TEST(UnionBoundingBox, EmptyAndSinglePixel) {
  EXPECT_TRUE(union_bounding_box(mask_set(16, 16, {Mask(256, 0), Mask(256, 0)})).empty);
  Mask m(256, 0);
  m[7 * 16 + 11] = 1;
  const BoundingBox b = union_bounding_box(mask_set(16, 16, {Mask(256, 0), m}));
  EXPECT_EQ(b, BoundingBox::make(7, 7, 11, 11));
}

TEST(UnionBoundingBox, MatchesBruteForceAndTouchesEveryEdge) {
  std::mt19937_64 rng(8);
  std::bernoulli_distribution on(0.02);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Mask> masks(4, Mask(40 * 30));
    for (auto& m : masks) {
      for (auto& b : m) b = on(rng);
    }
    const BoundingBox b = union_bounding_box(mask_set(40, 30, masks));
    EXPECT_EQ(b, oracle::bbox(masks, 40, 30));
    if (b.empty) continue;
    bool top = false, bottom = false, left = false, right = false;
    for (const auto& m : masks) {
      for (int r = 0; r < 30; ++r) {
        for (int c = 0; c < 40; ++c) {
          if (!m[r * 40 + c]) continue;
          top |= r == b.row_min;
          bottom |= r == b.row_max;
          left |= c == b.col_min;
          right |= c == b.col_max;
        }
      }
    }
    EXPECT_TRUE(top && bottom && left && right);
  }
}

TEST(CropVolume, FullBoxIsIdentity) {
  Slice s(5 * 4);
  std::iota(s.begin(), s.end(), 0);
  const ScanVolume v = single(5, 4, s);
  EXPECT_EQ(crop_volume(v, BoundingBox::make(0, 3, 0, 4)), v);
}

TEST(CropVolume, InnerBlock) {
  Slice s(16);
  std::iota(s.begin(), s.end(), 0);
  const ScanVolume c = crop_volume(single(4, 4, s), BoundingBox::make(1, 2, 1, 2));
  ASSERT_EQ(c.width(), 2);
  ASSERT_EQ(c.height(), 2);
  EXPECT_EQ(c.at(0, 0, 0), 5);
  EXPECT_EQ(c.at(0, 0, 1), 6);
  EXPECT_EQ(c.at(0, 1, 0), 9);
  EXPECT_EQ(c.at(0, 1, 1), 10);
}

TEST(CropVolume, Errors) {
  const ScanVolume v = single(4, 4, Slice(16, 0));
  try {
    crop_volume(v, BoundingBox{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyBoundingBox);
  }
  try {
    crop_volume(v, BoundingBox::make(0, 4, 0, 3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kBoxOutOfRange);
  }
}

// --- full pass ---------------------------------------------------------------

TEST(StandardizeSpatial, PhantomBoxWithinOnePixel) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Phantom p = phantom(seed);
    const SpatialResult res = standardize_spatial(p.volume, {});
    EXPECT_EQ(res.bbox, oracle::bbox(res.masks.masks, p.volume.width(), p.volume.height()));
    EXPECT_LE(max_side_shift(res.bbox, p.truth.bbox), 1) << "seed " << seed;
    EXPECT_EQ(res.cropped.width(), res.bbox.width());
    EXPECT_EQ(res.cropped.height(), res.bbox.height());
    EXPECT_EQ(res.cropped.n_slices(), p.volume.n_slices());
  }
}

TEST(StandardizeSpatial, MaskAreasTrackGroundTruth) {
  const Phantom p = phantom(21, 0.0);
  const LungMaskSet m = compute_lung_masks(p.volume, {});
  const auto areas = mask_areas(m);
  for (std::size_t z = 0; z < areas.size(); ++z) {
    const double truth = static_cast<double>(p.truth.area_per_slice[z]);
    // boundary pixels only: generous relative margin for the smallest slices
    EXPECT_NEAR(static_cast<double>(areas[z]), truth, 0.1 * truth + 40) << "slice " << z;
  }
}

TEST(StandardizeSpatial, CropKeepsEveryMaskPixel) {
  const Phantom p = phantom(4);
  const SpatialResult res = standardize_spatial(p.volume, {});
  for (const Mask& m : res.masks.masks) {
    for (int r = 0; r < res.masks.height; ++r) {
      for (int c = 0; c < res.masks.width; ++c) {
        if (m[static_cast<std::size_t>(r) * res.masks.width + c]) {
          EXPECT_TRUE(res.bbox.contains(r, c));
        }
      }
    }
  }
}

TEST(StandardizeSpatial, SecondPassMovesBoxByAtMostOnePixel) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const SpatialResult first = standardize_spatial(phantom(seed).volume, {});
    const SpatialResult second = standardize_spatial(first.cropped, {});
    const BoundingBox full = BoundingBox::make(0, first.cropped.height() - 1, 0,
                                               first.cropped.width() - 1);
    EXPECT_LE(max_side_shift(second.bbox, full), 1) << "seed " << seed;
  }
}

TEST(StandardizeSpatial, InvertHandlesDarkLungs) {
  PhantomSpec s;
  s.width = s.height = 80;
  s.n_slices = 6;
  s.lung_profile = bell_profile(6, 0.3);
  s.background_level = 200;
  s.lung_level = 40;
  s.noise_sigma = 3;
  const Phantom p = generate_phantom(s);
  SpatialOptions opts;
  opts.invert = true;
  const SpatialResult res = standardize_spatial(p.volume, opts);
  EXPECT_LE(max_side_shift(res.bbox, p.truth.bbox), 1);
}

TEST(StandardizeSpatial, EmptyMaskIsAnError) {
  // the filter spreads the pixel into a 3x3 patch; the size filter then drops it
  Slice s(32 * 32, 10);
  s[10 * 32 + 10] = 250;
  SpatialOptions opts;
  opts.min_component_fraction = 0.05;
  try {
    standardize_spatial(single(32, 32, s), opts);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyBoundingBox);
  }
}

}  // namespace
}  // namespace ctprep
