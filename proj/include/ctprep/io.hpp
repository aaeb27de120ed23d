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

// On-disk formats.
//
//   volume directory   NNNN.png slices (zero-padded, 1-based, numeric order)
//                      plus volume.json {format_version, scan_id, source_id,
//                      width, height, bit_depth, n_slices}
//   embeddings CSV     header scan_id,source_id,label,f_0,...,f_{d-1}
//   JSON sidecars      canonical: sorted keys, floats rounded to 12
//                      significant digits, two-space indent, trailing newline

#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ctprep/embedding.hpp"
#include "ctprep/error.hpp"
#include "ctprep/phantom.hpp"
#include "ctprep/png_io.hpp"
#include "ctprep/temporal.hpp"
#include "ctprep/volume.hpp"

namespace ctprep {

namespace fs = std::filesystem;
using json = nlohmann::json;

inline constexpr int kFormatVersion = 1;
inline constexpr const char* kToolVersion = "1.0.0";
inline constexpr const char* kVolumeManifestName = "volume.json";

// ---------------------------------------------------------------------------
// Canonical JSON

/// Nearest double to the 12-significant-digit decimal rendering of x.
inline double round_significant(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.12g", x);
  double r = std::strtod(buf, nullptr);
  return r == 0.0 ? 0.0 : r;  // drops negative zero
}

/// Rounds every float in place; throws NonFiniteValue naming the JSON path.
inline void canonicalize(json& j, const std::string& where = "") {
  if (j.is_number_float()) {
    const double v = j.get<double>();
    if (!std::isfinite(v)) {
      throw Error(ErrorCode::kNonFiniteValue,
                  "non-finite value at '" + (where.empty() ? std::string("/") : where) + "'");
    }
    j = round_significant(v);
  } else if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it) canonicalize(it.value(), where + "/" + it.key());
  } else if (j.is_array()) {
    for (std::size_t i = 0; i < j.size(); ++i) canonicalize(j[i], where + "/" + std::to_string(i));
  }
}

inline std::string dump_canonical(json j) {
  canonicalize(j);
  return j.dump(2) + "\n";
}

inline void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot create " + path.string());
  out << text;
  out.close();
  if (!out) throw Error(ErrorCode::kIoFailure, "write failed for " + path.string());
}

/// Serializes first, so an invalid object never leaves a partial file.
inline void write_json(const fs::path& path, const json& j) {
  write_text_file(path, dump_canonical(j));
}

inline json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kUnreadableFile, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::kUnreadableFile, path.string() + ": " + ex.what());
  }
}

// ---------------------------------------------------------------------------
// Small JSON helpers

inline json to_json(const BoundingBox& b) {
  if (b.empty) return json{{"empty", true}};
  return json{{"empty", false},
              {"row_min", b.row_min},
              {"row_max", b.row_max},
              {"col_min", b.col_min},
              {"col_max", b.col_max}};
}

inline BoundingBox bbox_from_json(const json& j) {
  if (j.at("empty").get<bool>()) return BoundingBox{};
  return BoundingBox::make(j.at("row_min").get<int>(), j.at("row_max").get<int>(),
                           j.at("col_min").get<int>(), j.at("col_max").get<int>());
}

// ---------------------------------------------------------------------------
// Volumes

namespace detail {

inline std::optional<std::uint64_t> numeric_stem(const fs::path& p) {
  if (p.extension() != ".png") return std::nullopt;
  const std::string stem = p.stem().string();
  if (stem.empty() || !std::all_of(stem.begin(), stem.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    return std::nullopt;
  }
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(stem.data(), stem.data() + stem.size(), v);
  if (ec != std::errc()) return std::nullopt;
  return v;
}

inline std::string slice_file_name(std::size_t index, std::size_t total) {
  const std::size_t digits = std::max<std::size_t>(4, std::to_string(total).size());
  std::string s = std::to_string(index + 1);
  return std::string(digits - std::min(digits, s.size()), '0') + s + ".png";
}

}  // namespace detail

/// Slice files of a volume directory in numeric order.
inline std::vector<fs::path> list_slice_files(const fs::path& dir) {
  std::vector<std::pair<std::uint64_t, fs::path>> found;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) {
    throw Error(ErrorCode::kUnreadableFile, dir.string() + " is not a directory");
  }
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    if (auto n = detail::numeric_stem(entry.path())) found.emplace_back(*n, entry.path());
  }
  std::sort(found.begin(), found.end());
  for (std::size_t i = 1; i < found.size(); ++i) {
    if (found[i].first == found[i - 1].first) {
      throw Error(ErrorCode::kInvalidArgument,
                  "duplicate slice number " + std::to_string(found[i].first) + " in " + dir.string());
    }
  }
  std::vector<fs::path> paths;
  paths.reserve(found.size());
  for (auto& f : found) paths.push_back(std::move(f.second));
  return paths;
}

inline ScanVolume load_volume(const fs::path& dir) {
  const auto files = list_slice_files(dir);
  if (files.empty()) {
    throw Error(ErrorCode::kEmptyDirectory, "no numbered .png slices in " + dir.string());
  }
  std::vector<Slice> slices;
  slices.reserve(files.size());
  int width = 0, height = 0, depth = 0;
  for (const auto& f : files) {
    GrayImage img = read_png(f);
    if (slices.empty()) {
      width = img.width;
      height = img.height;
      depth = img.bit_depth;
    } else if (img.width != width || img.height != height) {
      throw Error(ErrorCode::kMixedDimensions,
                  f.filename().string() + " is " + std::to_string(img.width) + "x" +
                      std::to_string(img.height) + ", expected " + std::to_string(width) +
                      "x" + std::to_string(height));
    } else if (img.bit_depth != depth) {
      throw Error(ErrorCode::kMixedBitDepth, f.filename().string() + " is " +
                                                 std::to_string(img.bit_depth) +
                                                 "-bit, expected " + std::to_string(depth));
    }
    slices.push_back(std::move(img.pixels));
  }
  std::string scan_id = fs::absolute(dir).lexically_normal().filename().string();
  if (scan_id.empty()) scan_id = fs::absolute(dir).lexically_normal().parent_path().filename().string();
  int source_id = 0;
  const fs::path meta = dir / kVolumeManifestName;
  if (fs::exists(meta)) {
    const json j = read_json(meta);
    scan_id = j.value("scan_id", scan_id);
    source_id = j.value("source_id", 0);
  }
  return ScanVolume(width, height, depth, std::move(slices), scan_id, source_id);
}

/// Writes one PNG per slice plus volume.json. Stale numbered slices already in
/// the directory are removed first.
inline void save_volume(const ScanVolume& v, const fs::path& dir) {
  if (v.n_slices() == 0) {
    throw Error(ErrorCode::kEmptyInput, "refusing to save a volume without slices");
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIoFailure, "cannot create " + dir.string() + ": " + ec.message());
  for (const auto& old : list_slice_files(dir)) fs::remove(old);
  GrayImage img;
  img.width = v.width();
  img.height = v.height();
  img.bit_depth = v.bit_depth();
  for (std::size_t z = 0; z < v.n_slices(); ++z) {
    img.pixels = v.slices()[z];
    write_png(dir / detail::slice_file_name(z, v.n_slices()), img);
  }
  write_json(dir / kVolumeManifestName, json{{"format_version", kFormatVersion},
                                             {"scan_id", v.scan_id()},
                                             {"source_id", v.source_id()},
                                             {"width", v.width()},
                                             {"height", v.height()},
                                             {"bit_depth", v.bit_depth()},
                                             {"n_slices", v.n_slices()}});
}

// ---------------------------------------------------------------------------
// Embeddings CSV

namespace detail {

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

inline std::string at_line(const std::string& source, std::size_t line) {
  return source + ":" + std::to_string(line) + ": ";
}

}  // namespace detail

inline EmbeddingSet parse_embeddings(std::istream& in, const std::string& source_name = "<csv>") {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) {
    throw Error(ErrorCode::kBadHeader, source_name + ": missing header");
  }
  ++line_no;
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = detail::split_csv(line);
  if (header.size() < 4 || header[0] != "scan_id" || header[1] != "source_id" ||
      header[2] != "label") {
    throw Error(ErrorCode::kBadHeader,
                detail::at_line(source_name, 1) +
                    "expected 'scan_id,source_id,label,f_0,...', got '" + line + "'");
  }
  for (std::size_t k = 3; k < header.size(); ++k) {
    if (header[k] != "f_" + std::to_string(k - 3)) {
      throw Error(ErrorCode::kBadHeader, detail::at_line(source_name, 1) + "column " +
                                             std::to_string(k + 1) + " should be f_" +
                                             std::to_string(k - 3));
    }
  }
  const std::size_t n_fields = header.size();

  EmbeddingSet set;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = detail::split_csv(line);
    if (fields.size() != n_fields) {
      throw Error(ErrorCode::kRaggedRow, detail::at_line(source_name, line_no) + "expected " +
                                             std::to_string(n_fields) + " fields, found " +
                                             std::to_string(fields.size()));
    }
    int source = -1;
    {
      auto f = fields[1];
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), source);
      if (ec != std::errc() || ptr != f.data() + f.size() || source < 0) {
        throw Error(ErrorCode::kNonNumericField, detail::at_line(source_name, line_no) +
                                                     "source_id '" + std::string(f) +
                                                     "' is not a non-negative integer");
      }
    }
    const auto label = parse_label(fields[2]);
    if (!label) {
      throw Error(ErrorCode::kUnknownLabel, detail::at_line(source_name, line_no) + "label '" +
                                                std::string(fields[2]) +
                                                "' is not covid or non_covid");
    }
    std::vector<double> v(n_fields - 3);
    for (std::size_t k = 3; k < n_fields; ++k) {
      auto f = fields[k];
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v[k - 3]);
      if (ec != std::errc() || ptr != f.data() + f.size() || f.empty() || !std::isfinite(v[k - 3])) {
        throw Error(ErrorCode::kNonNumericField,
                    detail::at_line(source_name, line_no) + "field f_" + std::to_string(k - 3) +
                        " = '" + std::string(f) + "' is not a finite number");
      }
    }
    set.add(std::move(v), *label, source, std::string(fields[0]));
  }
  if (set.size() == 0) throw Error(ErrorCode::kEmptyInput, source_name + ": no data rows");
  return set;
}

inline EmbeddingSet load_embeddings(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kUnreadableFile, "cannot open " + path.string());
  return parse_embeddings(in, path.string());
}

/// Writes the CSV format read by load_embeddings (shortest round-trip floats).
inline void save_embeddings(const EmbeddingSet& e, const fs::path& path) {
  std::ostringstream out;
  out << "scan_id,source_id,label";
  for (std::size_t k = 0; k < e.dim; ++k) out << ",f_" << k;
  out << "\n";
  char buf[64];
  for (std::size_t i = 0; i < e.size(); ++i) {
    out << e.scan_ids[i] << "," << e.sources[i] << "," << to_string(e.labels[i]);
    for (double x : e.vectors[i]) {
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
      out << "," << std::string_view(buf, static_cast<std::size_t>(ptr - buf));
    }
    out << "\n";
  }
  write_text_file(path, out.str());
}

// ---------------------------------------------------------------------------
// Metrics report

inline json to_json(const MetricsReport& r) {
  json cells = json::array();
  for (const auto& [key, mu] : r.centroids) {
    cells.push_back({{"source_id", key.source},
                     {"label", std::string(to_string(key.label))},
                     {"centroid", mu},
                     {"intra_class_distance", r.intra_class_distances.at(key)}});
  }
  json isv = json::object();
  for (const auto& [l, v] : r.inter_source_variance) isv[std::string(to_string(l))] = v;
  json pooled = json::object();
  for (const auto& [l, v] : r.pooled_intra_class_distances) pooled[std::string(to_string(l))] = v;
  return json{{"format_version", kFormatVersion},
              {"fisher_score", r.fisher_score},
              {"separability", r.separability},
              {"inter_source_variance", isv},
              {"pooled_intra_class_distance", pooled},
              {"cells", cells},
              {"n_vectors", r.n_vectors},
              {"dim", r.dim},
              {"sources", r.sources}};
}

inline MetricsReport report_from_json(const json& j) {
  MetricsReport r;
  r.fisher_score = j.at("fisher_score").get<double>();
  r.separability = j.at("separability").get<double>();
  for (const auto& [k, v] : j.at("inter_source_variance").items()) {
    r.inter_source_variance[*parse_label(k)] = v.get<double>();
  }
  for (const auto& [k, v] : j.at("pooled_intra_class_distance").items()) {
    r.pooled_intra_class_distances[*parse_label(k)] = v.get<double>();
  }
  for (const auto& c : j.at("cells")) {
    const auto label = parse_label(c.at("label").get<std::string>());
    if (!label) throw Error(ErrorCode::kUnknownLabel, "bad label in report");
    CellKey key{c.at("source_id").get<int>(), *label};
    r.centroids[key] = c.at("centroid").get<std::vector<double>>();
    r.intra_class_distances[key] = c.at("intra_class_distance").get<double>();
  }
  r.n_vectors = j.at("n_vectors").get<std::size_t>();
  r.dim = j.at("dim").get<std::size_t>();
  r.sources = j.at("sources").get<std::vector<int>>();
  return r;
}

inline void write_report(const MetricsReport& r, const fs::path& path) {
  write_json(path, to_json(r));
}

inline MetricsReport read_report(const fs::path& path) {
  return report_from_json(read_json(path));
}

// ---------------------------------------------------------------------------
// Scan manifest

struct ScanManifest {
  std::string scan_id;
  int source_id = 0;
  std::string input_path;  // relative to the manifest's directory
  std::size_t n_slices_in = 0;
  std::optional<BoundingBox> bbox;
  std::optional<std::uint32_t> threshold_t;
  std::optional<std::string> strategy;
  std::vector<std::size_t> selected_indices;
  std::optional<double> bandwidth_h;
  std::vector<std::string> output_paths;
  std::optional<std::uint64_t> seed;
  std::string tool_version = kToolVersion;
  json config = json::object();

  friend bool operator==(const ScanManifest&, const ScanManifest&) = default;
};

inline json to_json(const ScanManifest& m) {
  for (std::size_t i = 1; i < m.selected_indices.size(); ++i) {
    if (m.selected_indices[i] <= m.selected_indices[i - 1]) {
      throw Error(ErrorCode::kInvalidArgument, "selected_indices must be strictly increasing");
    }
  }
  json j{{"format_version", kFormatVersion},
         {"scan_id", m.scan_id},
         {"source_id", m.source_id},
         {"input_path", m.input_path},
         {"n_slices_in", m.n_slices_in},
         {"bbox", m.bbox ? to_json(*m.bbox) : json(nullptr)},
         {"threshold_t", m.threshold_t ? json(*m.threshold_t) : json(nullptr)},
         {"strategy", m.strategy ? json(*m.strategy) : json(nullptr)},
         {"selected_indices", m.selected_indices},
         {"bandwidth_h", m.bandwidth_h ? json(*m.bandwidth_h) : json(nullptr)},
         {"output_paths", m.output_paths},
         {"seed", m.seed ? json(*m.seed) : json(nullptr)},
         {"tool_version", m.tool_version},
         {"config", m.config}};
  return j;
}

inline ScanManifest manifest_from_json(const json& j) {
  ScanManifest m;
  m.scan_id = j.at("scan_id").get<std::string>();
  m.source_id = j.at("source_id").get<int>();
  m.input_path = j.at("input_path").get<std::string>();
  m.n_slices_in = j.at("n_slices_in").get<std::size_t>();
  if (!j.at("bbox").is_null()) m.bbox = bbox_from_json(j.at("bbox"));
  if (!j.at("threshold_t").is_null()) m.threshold_t = j.at("threshold_t").get<std::uint32_t>();
  if (!j.at("strategy").is_null()) m.strategy = j.at("strategy").get<std::string>();
  m.selected_indices = j.at("selected_indices").get<std::vector<std::size_t>>();
  if (!j.at("bandwidth_h").is_null()) m.bandwidth_h = j.at("bandwidth_h").get<double>();
  m.output_paths = j.at("output_paths").get<std::vector<std::string>>();
  if (!j.at("seed").is_null()) m.seed = j.at("seed").get<std::uint64_t>();
  m.tool_version = j.at("tool_version").get<std::string>();
  m.config = j.at("config");
  return m;
}

inline void write_manifest(const ScanManifest& m, const fs::path& path) {
  write_json(path, to_json(m));
}

inline ScanManifest read_manifest(const fs::path& path) {
  return manifest_from_json(read_json(path));
}

// ---------------------------------------------------------------------------
// Selection manifest and spatial sidecar

inline json selection_to_json(const std::string& scan_id, const SliceSelection& sel,
                              const std::vector<double>& areas,
                              std::optional<double> bandwidth_h, int requested) {
  return json{{"format_version", kFormatVersion},
              {"scan_id", scan_id},
              {"strategy", std::string(to_string(sel.strategy))},
              {"n", requested},
              {"percentiles", sel.percentiles},
              {"quantiles", sel.quantiles},
              {"bandwidth_h", bandwidth_h ? json(*bandwidth_h) : json(nullptr)},
              {"areas", areas},
              {"selected_indices", sel.indices},
              {"seed", sel.seed ? json(*sel.seed) : json(nullptr)}};
}

struct SpatialSidecar {
  std::string scan_id;
  std::uint32_t threshold_t = 0;
  BoundingBox bbox;
  std::vector<std::uint64_t> mask_areas;  // per slice, uncropped frame
  int filter_radius = 1;
  bool invert = false;
  double min_component_fraction = 0.001;
};

inline json to_json(const SpatialSidecar& s) {
  return json{{"format_version", kFormatVersion},
              {"scan_id", s.scan_id},
              {"threshold_t", s.threshold_t},
              {"bbox", to_json(s.bbox)},
              {"mask_areas", s.mask_areas},
              {"filter_radius", s.filter_radius},
              {"invert", s.invert},
              {"min_component_fraction", s.min_component_fraction}};
}

inline SpatialSidecar sidecar_from_json(const json& j) {
  SpatialSidecar s;
  s.scan_id = j.at("scan_id").get<std::string>();
  s.threshold_t = j.at("threshold_t").get<std::uint32_t>();
  s.bbox = bbox_from_json(j.at("bbox"));
  s.mask_areas = j.at("mask_areas").get<std::vector<std::uint64_t>>();
  s.filter_radius = j.at("filter_radius").get<int>();
  s.invert = j.at("invert").get<bool>();
  s.min_component_fraction = j.at("min_component_fraction").get<double>();
  return s;
}

// ---------------------------------------------------------------------------
// Phantom spec and ground truth
//
// Phantom spec keys (all optional, defaults in brackets): n_slices [64],
// width [128], height [128], bit_depth [8], lung_profile [bell curve],
// peak_fraction [0.3, only used without lung_profile], noise_sigma [5],
// background_level [30], lung_level [220], seed [1], scan_id ["phantom"],
// source_id [0]. Unknown keys are rejected.

inline PhantomSpec phantom_spec_from_json(const json& j) {
  static const char* known[] = {"format_version", "n_slices",    "width",
                                "height",         "bit_depth",   "lung_profile",
                                "peak_fraction",  "noise_sigma", "background_level",
                                "lung_level",     "seed",        "scan_id",
                                "source_id"};
  if (!j.is_object()) throw Error(ErrorCode::kInvalidArgument, "phantom spec must be an object");
  for (const auto& [k, v] : j.items()) {
    if (std::find(std::begin(known), std::end(known), k) == std::end(known)) {
      throw Error(ErrorCode::kInvalidArgument, "unknown phantom spec key '" + k + "'");
    }
  }
  PhantomSpec s;
  try {
    s.n_slices = j.value("n_slices", s.n_slices);
    s.width = j.value("width", s.width);
    s.height = j.value("height", s.height);
    s.bit_depth = j.value("bit_depth", s.bit_depth);
    s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
    s.background_level = j.value("background_level", s.background_level);
    s.lung_level = j.value("lung_level", s.lung_level);
    s.seed = j.value("seed", s.seed);
    s.scan_id = j.value("scan_id", s.scan_id);
    s.source_id = j.value("source_id", s.source_id);
    if (j.contains("lung_profile")) {
      s.lung_profile = j.at("lung_profile").get<std::vector<double>>();
    } else {
      s.lung_profile = bell_profile(s.n_slices, j.value("peak_fraction", 0.3));
    }
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::kInvalidArgument, std::string("phantom spec: ") + ex.what());
  }
  validate(s);
  return s;
}

inline json to_json(const PhantomSpec& s) {
  return json{{"format_version", kFormatVersion},
              {"n_slices", s.n_slices},
              {"width", s.width},
              {"height", s.height},
              {"bit_depth", s.bit_depth},
              {"lung_profile", s.lung_profile},
              {"noise_sigma", s.noise_sigma},
              {"background_level", s.background_level},
              {"lung_level", s.lung_level},
              {"seed", s.seed},
              {"scan_id", s.scan_id},
              {"source_id", s.source_id}};
}

inline json to_json(const PhantomTruth& t) {
  return json{{"format_version", kFormatVersion},
              {"bbox", to_json(t.bbox)},
              {"area_per_slice", t.area_per_slice}};
}

inline PhantomTruth truth_from_json(const json& j) {
  PhantomTruth t;
  t.bbox = bbox_from_json(j.at("bbox"));
  t.area_per_slice = j.at("area_per_slice").get<std::vector<std::uint64_t>>();
  return t;
}

}  // namespace ctprep
