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

// Feature-space metrics over labelled, source-tagged embeddings: class
// separation (global and per source), cross-source centroid spread, and the
// macro-F1 / AUC-ROC classification metrics.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ctprep/error.hpp"

namespace ctprep {

enum class Label { kCovid, kNonCovid };

inline constexpr Label kLabels[] = {Label::kCovid, Label::kNonCovid};

constexpr std::string_view to_string(Label l) {
  return l == Label::kCovid ? "covid" : "non_covid";
}

inline std::optional<Label> parse_label(std::string_view token) {
  if (token == "covid") return Label::kCovid;
  if (token == "non_covid") return Label::kNonCovid;
  return std::nullopt;
}

/// Pairwise (cascade) summation; error grows as O(log n) rather than O(n).
inline double pairwise_sum(std::span<const double> x) {
  if (x.size() <= 16) {
    double s = 0.0;
    for (double v : x) s += v;
    return s;
  }
  const std::size_t half = x.size() / 2;
  return pairwise_sum(x.first(half)) + pairwise_sum(x.subspan(half));
}

inline double euclidean_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return std::sqrt(s);
}

struct EmbeddingSet {
  std::size_t dim = 0;
  std::vector<std::vector<double>> vectors;
  std::vector<Label> labels;
  std::vector<int> sources;
  std::vector<std::string> scan_ids;

  std::size_t size() const { return vectors.size(); }

  void add(std::vector<double> v, Label label, int source, std::string scan_id = {}) {
    if (v.empty()) throw Error(ErrorCode::kInvalidArgument, "embedding dimension must be >= 1");
    if (vectors.empty()) dim = v.size();
    if (v.size() != dim) {
      throw Error(ErrorCode::kLengthMismatch, "embedding has dimension " +
                                                  std::to_string(v.size()) + ", expected " +
                                                  std::to_string(dim));
    }
    vectors.push_back(std::move(v));
    labels.push_back(label);
    sources.push_back(source);
    scan_ids.push_back(std::move(scan_id));
  }

  /// Distinct source ids in ascending order.
  std::vector<int> source_ids() const {
    std::set<int> ids(sources.begin(), sources.end());
    return {ids.begin(), ids.end()};
  }
};

/// Identifies one (source, class) cell. An empty source means the class is
/// pooled over every source.
struct Cell {
  std::optional<int> source;
  Label label;

  std::string describe() const {
    std::string s = "(source=";
    s += source ? std::to_string(*source) : std::string("all");
    s += ", class=";
    s += to_string(label);
    s += ")";
    return s;
  }
};

namespace detail {

inline std::vector<std::size_t> cell_members(const EmbeddingSet& e, const Cell& cell) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < e.size(); ++i) {
    if (e.labels[i] == cell.label && (!cell.source || e.sources[i] == *cell.source)) {
      idx.push_back(i);
    }
  }
  return idx;
}

inline std::vector<std::size_t> require_cell(const EmbeddingSet& e, const Cell& cell,
                                             std::size_t min_size) {
  auto idx = cell_members(e, cell);
  if (idx.empty()) {
    throw Error(ErrorCode::kEmptyCell, "cell " + cell.describe() + " has no vectors");
  }
  if (idx.size() < min_size) {
    throw Error(ErrorCode::kCellTooSmall,
                "cell " + cell.describe() + " has " + std::to_string(idx.size()) +
                    " vector(s); at least " + std::to_string(min_size) + " required");
  }
  return idx;
}

inline std::vector<double> mean_of(const EmbeddingSet& e, const std::vector<std::size_t>& idx) {
  std::vector<double> mu(e.dim);
  std::vector<double> column(idx.size());
  for (std::size_t k = 0; k < e.dim; ++k) {
    for (std::size_t j = 0; j < idx.size(); ++j) column[j] = e.vectors[idx[j]][k];
    mu[k] = pairwise_sum(column) / static_cast<double>(idx.size());
  }
  return mu;
}

// Mean distance over all unordered pairs: each row's distances to later rows
// are summed pairwise, then the row totals are summed pairwise.
inline double mean_pair_distance(const EmbeddingSet& e, const std::vector<std::size_t>& idx) {
  const std::size_t n = idx.size();
  std::vector<double> row_totals;
  row_totals.reserve(n);
  std::vector<double> row;
  for (std::size_t a = 0; a + 1 < n; ++a) {
    row.clear();
    for (std::size_t b = a + 1; b < n; ++b) {
      row.push_back(euclidean_distance(e.vectors[idx[a]], e.vectors[idx[b]]));
    }
    row_totals.push_back(pairwise_sum(row));
  }
  const double pairs = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
  return pairwise_sum(row_totals) / pairs;
}

}  // namespace detail

inline std::vector<double> centroid(const EmbeddingSet& e, const Cell& cell) {
  return detail::mean_of(e, detail::require_cell(e, cell, 1));
}

inline std::vector<double> centroid(const EmbeddingSet& e, int source, Label label) {
  return centroid(e, Cell{source, label});
}

/// Mean Euclidean distance over all C(N, 2) pairs of the cell.
inline double intra_class_distance(const EmbeddingSet& e, const Cell& cell) {
  return detail::mean_pair_distance(e, detail::require_cell(e, cell, 2));
}

inline double intra_class_distance(const EmbeddingSet& e, int source, Label label) {
  return intra_class_distance(e, Cell{source, label});
}

/// Global class separation: ||mu_covid - mu_non|| / (0.5 (d_covid + d_non)),
/// with centroids and spreads pooled over all sources.
inline double fisher_score(const EmbeddingSet& e) {
  const Cell covid{std::nullopt, Label::kCovid};
  const Cell non{std::nullopt, Label::kNonCovid};
  const auto idx_c = detail::require_cell(e, covid, 2);
  const auto idx_n = detail::require_cell(e, non, 2);
  const double spread =
      0.5 * (detail::mean_pair_distance(e, idx_c) + detail::mean_pair_distance(e, idx_n));
  if (!(spread > 0.0)) {
    throw Error(ErrorCode::kDegenerateSpread, "both pooled classes have zero spread");
  }
  return euclidean_distance(detail::mean_of(e, idx_c), detail::mean_of(e, idx_n)) / spread;
}

/// Per-source class separation averaged over sources. The denominator is the
/// plain sum of the two spreads (not halved as in fisher_score).
inline double separability(const EmbeddingSet& e) {
  const auto ids = e.source_ids();
  if (ids.empty()) throw Error(ErrorCode::kEmptyInput, "embedding set is empty");
  std::vector<double> terms;
  terms.reserve(ids.size());
  for (int s : ids) {
    const auto idx_c = detail::require_cell(e, Cell{s, Label::kCovid}, 2);
    const auto idx_n = detail::require_cell(e, Cell{s, Label::kNonCovid}, 2);
    const double denom = detail::mean_pair_distance(e, idx_c) + detail::mean_pair_distance(e, idx_n);
    if (!(denom > 0.0)) {
      throw Error(ErrorCode::kDegenerateSpread,
                  "source " + std::to_string(s) + " has zero spread in both classes");
    }
    terms.push_back(
        euclidean_distance(detail::mean_of(e, idx_c), detail::mean_of(e, idx_n)) / denom);
  }
  return pairwise_sum(terms) / static_cast<double>(terms.size());
}

/// Mean distance between the class centroids of every pair of sources.
inline double inter_source_variance(const EmbeddingSet& e, Label label) {
  const auto ids = e.source_ids();
  if (ids.size() < 2) {
    throw Error(ErrorCode::kInsufficientSources,
                "inter-source variance needs at least two sources, found " +
                    std::to_string(ids.size()));
  }
  std::vector<std::vector<double>> mus;
  mus.reserve(ids.size());
  for (int s : ids) mus.push_back(centroid(e, Cell{s, label}));
  std::vector<double> dists;
  for (std::size_t i = 0; i < mus.size(); ++i) {
    for (std::size_t j = i + 1; j < mus.size(); ++j) {
      dists.push_back(euclidean_distance(mus[i], mus[j]));
    }
  }
  return pairwise_sum(dists) / static_cast<double>(dists.size());
}

// ---------------------------------------------------------------------------
// Classification metrics

/// Unweighted mean of the per-class F1 scores, in percent. A class with
/// precision + recall = 0 contributes 0.
inline double macro_f1(std::span<const Label> truth, std::span<const Label> pred) {
  if (truth.size() != pred.size()) {
    throw Error(ErrorCode::kLengthMismatch, "truth and prediction lengths differ");
  }
  if (truth.empty()) throw Error(ErrorCode::kEmptyInput, "no predictions");
  double total = 0.0;
  for (Label c : kLabels) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      const bool t = truth[i] == c;
      const bool p = pred[i] == c;
      tp += t && p;
      fp += !t && p;
      fn += t && !p;
    }
    const double precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    const double recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    if (precision + recall > 0.0) total += 2.0 * precision * recall / (precision + recall);
  }
  return 100.0 * total / 2.0;
}

/// Area under the ROC curve from the Mann-Whitney rank statistic, with tied
/// scores sharing their average rank. COVID is the positive class.
inline double auc_roc(std::span<const Label> truth, std::span<const double> scores) {
  if (truth.size() != scores.size()) {
    throw Error(ErrorCode::kLengthMismatch, "truth and score lengths differ");
  }
  if (std::any_of(scores.begin(), scores.end(), [](double s) { return !std::isfinite(s); })) {
    throw Error(ErrorCode::kInvalidArgument, "scores must be finite");
  }
  const std::size_t n = truth.size();
  const auto n_pos = static_cast<std::size_t>(
      std::count(truth.begin(), truth.end(), Label::kCovid));
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw Error(ErrorCode::kUndefinedAuc, "AUC needs both classes present");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // ranks are 1-based; a tie block [i, j) shares rank (i + j + 1) / 2
  double pos_rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j + 1);
    for (std::size_t k = i; k < j; ++k) {
      if (truth[order[k]] == Label::kCovid) pos_rank_sum += rank;
    }
    i = j;
  }
  const double np = static_cast<double>(n_pos);
  return (pos_rank_sum - 0.5 * np * (np + 1.0)) / (np * static_cast<double>(n_neg));
}

// ---------------------------------------------------------------------------
// Report

struct CellKey {
  int source;
  Label label;
  auto operator<=>(const CellKey&) const = default;
};

struct MetricsReport {
  double fisher_score = 0.0;
  double separability = 0.0;
  // empty when the set has a single source
  std::map<Label, double> inter_source_variance;
  std::map<Label, double> pooled_intra_class_distances;
  std::map<CellKey, std::vector<double>> centroids;
  std::map<CellKey, double> intra_class_distances;
  std::size_t n_vectors = 0;
  std::size_t dim = 0;
  std::vector<int> sources;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

/// Every metric in one pass. Each (source, class) cell must hold at least two
/// vectors; the first offending cell is named in the error.
inline MetricsReport analyze(const EmbeddingSet& e) {
  if (e.size() == 0) throw Error(ErrorCode::kEmptyInput, "embedding set is empty");
  MetricsReport r;
  r.n_vectors = e.size();
  r.dim = e.dim;
  r.sources = e.source_ids();
  for (int s : r.sources) {
    for (Label l : kLabels) {
      const auto idx = detail::require_cell(e, Cell{s, l}, 2);
      r.centroids[{s, l}] = detail::mean_of(e, idx);
      r.intra_class_distances[{s, l}] = detail::mean_pair_distance(e, idx);
    }
  }
  for (Label l : kLabels) {
    r.pooled_intra_class_distances[l] =
        detail::mean_pair_distance(e, detail::require_cell(e, Cell{std::nullopt, l}, 2));
  }
  r.fisher_score = fisher_score(e);
  r.separability = separability(e);
  if (r.sources.size() >= 2) {
    for (Label l : kLabels) r.inter_source_variance[l] = inter_source_variance(e, l);
  }
  return r;
}

}  // namespace ctprep
