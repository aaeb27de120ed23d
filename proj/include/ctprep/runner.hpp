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

// Batch commands over a root of scan directories. Each scan is an
// independent work unit written to <output>/<scan dir name>/; the run
// manifest lists scans in name order so output trees do not depend on
// scheduling.

#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ctprep/embedding.hpp"
#include "ctprep/io.hpp"
#include "ctprep/phantom.hpp"
#include "ctprep/spatial.hpp"
#include "ctprep/temporal.hpp"

namespace ctprep {

inline constexpr const char* kRunManifestName = "run_manifest.json";
inline constexpr const char* kScanManifestName = "manifest.json";
inline constexpr const char* kSpatialSidecarName = "spatial.json";
inline constexpr const char* kSelectionManifestName = "selection.json";
inline constexpr const char* kGroundTruthName = "ground_truth.json";

struct RunConfig {
  std::string command;
  fs::path input;
  fs::path output;
  int radius = 1;
  bool invert = false;
  double min_component_fraction = 0.001;
  SamplingStrategy strategy = SamplingStrategy::kKds;
  int n_slices = kDefaultSliceCount;
  std::vector<double> percentiles;  // overrides n_slices for kds when set
  std::uint64_t seed = 0;
  int jobs = 1;
  // phantom only
  int count = 1;
  std::optional<double> corpus_scale;

  void validate() const {
    if (n_slices < 1) throw Error(ErrorCode::kInvalidArgument, "--n-slices must be >= 1");
    if (radius < 1) throw Error(ErrorCode::kInvalidArgument, "--radius must be >= 1");
    if (!(min_component_fraction >= 0.0 && min_component_fraction < 1.0)) {
      throw Error(ErrorCode::kInvalidArgument, "--min-component-fraction must be in [0, 1)");
    }
    if (jobs < 1) throw Error(ErrorCode::kInvalidArgument, "--jobs must be >= 1");
    if (count < 1) throw Error(ErrorCode::kInvalidArgument, "--count must be >= 1");
    for (double p : percentiles) {
      if (!(p > 0.0 && p < 1.0)) {
        throw Error(ErrorCode::kProbabilityOutOfRange, "--percentiles values must lie in (0, 1)");
      }
    }
    if (corpus_scale && !(*corpus_scale > 0.0)) {
      throw Error(ErrorCode::kInvalidArgument, "--corpus-scale must be > 0");
    }
  }

  SpatialOptions spatial() const { return {radius, invert, min_component_fraction}; }

  int sample_count() const {
    return percentiles.empty() ? n_slices : static_cast<int>(percentiles.size());
  }

  /// Settings that shape outputs. Paths and --jobs are left out: they do not
  /// change results and would make otherwise identical trees differ.
  json echo() const {
    return json{{"command", command},
                {"radius", radius},
                {"invert", invert},
                {"min_component_fraction", min_component_fraction},
                {"strategy", std::string(to_string(strategy))},
                {"n_slices", n_slices},
                {"percentiles", percentiles},
                {"seed", seed}};
  }
};

/// Fills settings from a JSON config file for every key not given on the
/// command line (flags > config file > defaults).
inline void apply_config_file(RunConfig& cfg, const json& j,
                              const std::set<std::string>& set_on_command_line) {
  if (!j.is_object()) throw Error(ErrorCode::kInvalidArgument, "config file must hold an object");
  auto want = [&](const char* key) { return j.contains(key) && !set_on_command_line.count(key); };
  try {
    for (const auto& [k, v] : j.items()) {
      static const std::set<std::string> known = {
          "input", "output", "radius", "invert", "min_component_fraction", "strategy",
          "n_slices", "percentiles", "seed", "jobs", "count", "corpus_scale"};
      if (!known.count(k)) throw Error(ErrorCode::kInvalidArgument, "unknown config key '" + k + "'");
    }
    if (want("input")) cfg.input = j.at("input").get<std::string>();
    if (want("output")) cfg.output = j.at("output").get<std::string>();
    if (want("radius")) cfg.radius = j.at("radius").get<int>();
    if (want("invert")) cfg.invert = j.at("invert").get<bool>();
    if (want("min_component_fraction")) {
      cfg.min_component_fraction = j.at("min_component_fraction").get<double>();
    }
    if (want("strategy")) cfg.strategy = parse_strategy(j.at("strategy").get<std::string>());
    if (want("n_slices")) cfg.n_slices = j.at("n_slices").get<int>();
    if (want("percentiles")) cfg.percentiles = j.at("percentiles").get<std::vector<double>>();
    if (want("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (want("jobs")) cfg.jobs = j.at("jobs").get<int>();
    if (want("count")) cfg.count = j.at("count").get<int>();
    if (want("corpus_scale")) cfg.corpus_scale = j.at("corpus_scale").get<double>();
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::kInvalidArgument, std::string("config file: ") + ex.what());
  }
}

struct ScanOutcome {
  std::string name;  // scan directory name
  std::string scan_id;
  int source_id = 0;
  bool ok = false;
  std::string error;
};

namespace detail {

inline bool looks_like_volume_dir(const fs::path& dir) {
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && numeric_stem(entry.path())) return true;
  }
  return false;
}

/// Scan directories under root in name order; root itself if it is a volume.
inline std::vector<fs::path> scan_directories(const fs::path& root) {
  if (!fs::is_directory(root)) {
    throw Error(ErrorCode::kUnreadableFile, "input root " + root.string() + " is not a directory");
  }
  if (looks_like_volume_dir(root)) return {root};
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) throw Error(ErrorCode::kEmptyDirectory, "no scan directories under " + root.string());
  return dirs;
}

inline std::string relative_to(const fs::path& target, const fs::path& base) {
  return fs::absolute(target).lexically_normal().lexically_relative(
                                  fs::absolute(base).lexically_normal())
      .generic_string();
}

inline std::vector<std::string> slice_names(std::size_t n) {
  std::vector<std::string> names;
  for (std::size_t z = 0; z < n; ++z) names.push_back(slice_file_name(z, n));
  return names;
}

/// Runs `work` for every item on `jobs` threads; results land at the item's index.
template <typename Work>
std::vector<ScanOutcome> run_parallel(const std::vector<fs::path>& items, int jobs, Work work) {
  std::vector<ScanOutcome> out(items.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < items.size(); i = next++) {
      ScanOutcome& o = out[i];
      o.name = items[i].filename().string();
      try {
        work(items[i], o);
        o.ok = true;
      } catch (const std::exception& ex) {
        o.ok = false;
        o.error = ex.what();
      }
    }
  };
  const int n_threads = std::max(1, std::min<int>(jobs, static_cast<int>(items.size())));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  return out;
}

inline int finish_run(const RunConfig& cfg, const std::vector<ScanOutcome>& outcomes,
                      std::ostream& log) {
  json scans = json::array();
  json by_source = json::object();
  int failed = 0;
  for (const auto& o : outcomes) {
    json entry{{"dir", o.name}, {"scan_id", o.scan_id}, {"source_id", o.source_id},
               {"status", o.ok ? "ok" : "failed"}};
    if (!o.ok) {
      entry["error"] = o.error;
      ++failed;
      log << "FAILED " << o.name << ": " << o.error << "\n";
    } else {
      by_source[std::to_string(o.source_id)].push_back(o.name);
    }
    scans.push_back(std::move(entry));
  }
  write_json(cfg.output / kRunManifestName,
             json{{"format_version", kFormatVersion},
                  {"tool_version", kToolVersion},
                  {"config", cfg.echo()},
                  {"scans", scans},
                  {"scans_by_source", by_source},
                  {"n_ok", static_cast<int>(outcomes.size()) - failed},
                  {"n_failed", failed}});
  log << cfg.command << ": " << outcomes.size() - failed << " ok, " << failed << " failed\n";
  return failed == 0 ? 0 : 1;
}

/// Clears a scan's output directory before and after a failed attempt so a
/// bad scan leaves nothing behind.
template <typename Body>
void with_clean_scan_dir(const fs::path& dir, Body body) {
  fs::remove_all(dir);
  try {
    body();
  } catch (...) {
    std::error_code ec;
    fs::remove_all(dir, ec);
    throw;
  }
}

inline SliceSelection select_slices(const RunConfig& cfg, const std::vector<double>& areas,
                                    std::optional<double>& bandwidth) {
  switch (cfg.strategy) {
    case SamplingStrategy::kKds: {
      const DensityProfile d = fit_kde(areas);
      bandwidth = d.bandwidth();
      return cfg.percentiles.empty() ? select_kds(d, cfg.n_slices) : select_kds(d, cfg.percentiles);
    }
    case SamplingStrategy::kUniform:
      return select_uniform(areas.size(), cfg.sample_count());
    case SamplingStrategy::kRandom:
      return select_random(areas.size(), cfg.sample_count(), cfg.seed);
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown strategy");
}

inline ScanVolume pick_slices(const ScanVolume& v, const std::vector<std::size_t>& indices) {
  std::vector<Slice> picked;
  picked.reserve(indices.size());
  for (std::size_t i : indices) picked.push_back(v.slices().at(i));
  return v.with_slices(std::move(picked));
}

inline std::vector<double> to_areas(const std::vector<std::uint64_t>& counts) {
  return {counts.begin(), counts.end()};
}

inline void write_sample_outputs(const RunConfig& cfg, const ScanVolume& source_volume,
                                 const std::vector<double>& areas, const fs::path& out_dir,
                                 ScanManifest& manifest) {
  std::optional<double> bandwidth;
  const SliceSelection sel = select_slices(cfg, areas, bandwidth);
  const ScanVolume picked = pick_slices(source_volume, sel.indices);
  save_volume(picked, out_dir);
  write_json(out_dir / kSelectionManifestName,
             selection_to_json(source_volume.scan_id(), sel, areas, bandwidth, cfg.sample_count()));
  manifest.strategy = std::string(to_string(sel.strategy));
  manifest.selected_indices = sel.indices;
  manifest.bandwidth_h = bandwidth;
  manifest.seed = sel.seed;
  for (auto& name : slice_names(picked.n_slices())) manifest.output_paths.push_back(name);
  manifest.output_paths.push_back(kSelectionManifestName);
}

inline SpatialSidecar make_sidecar(const RunConfig& cfg, const ScanVolume& v,
                                   const SpatialResult& res) {
  SpatialSidecar s;
  s.scan_id = v.scan_id();
  s.threshold_t = res.masks.threshold_t;
  s.bbox = res.bbox;
  s.mask_areas = mask_areas(res.masks);
  s.filter_radius = cfg.radius;
  s.invert = cfg.invert;
  s.min_component_fraction = cfg.min_component_fraction;
  return s;
}

inline ScanManifest base_manifest(const RunConfig& cfg, const ScanVolume& v,
                                  const fs::path& scan_dir, const fs::path& out_dir) {
  ScanManifest m;
  m.scan_id = v.scan_id();
  m.source_id = v.source_id();
  m.input_path = relative_to(scan_dir, out_dir);
  m.n_slices_in = v.n_slices();
  m.config = cfg.echo();
  return m;
}

}  // namespace detail

/// Spatial standardization of every scan under cfg.input.
inline int cmd_crop(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const auto scans = detail::scan_directories(cfg.input);
  fs::create_directories(cfg.output);
  auto outcomes = detail::run_parallel(scans, cfg.jobs, [&](const fs::path& dir, ScanOutcome& o) {
    const fs::path out_dir = cfg.output / dir.filename();
    detail::with_clean_scan_dir(out_dir, [&] {
      const ScanVolume v = load_volume(dir);
      o.scan_id = v.scan_id();
      o.source_id = v.source_id();
      const SpatialResult res = standardize_spatial(v, cfg.spatial());
      save_volume(res.cropped, out_dir);
      write_json(out_dir / kSpatialSidecarName, to_json(detail::make_sidecar(cfg, v, res)));
      ScanManifest m = detail::base_manifest(cfg, v, dir, out_dir);
      m.bbox = res.bbox;
      m.threshold_t = res.masks.threshold_t;
      m.output_paths = detail::slice_names(res.cropped.n_slices());
      m.output_paths.push_back(kSpatialSidecarName);
      write_manifest(m, out_dir / kScanManifestName);
    });
  });
  return detail::finish_run(cfg, outcomes, log);
}

/// Slice selection on scans produced by cmd_crop. Areas come from the spatial
/// sidecar when present, otherwise masks are recomputed.
inline int cmd_sample(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const auto scans = detail::scan_directories(cfg.input);
  fs::create_directories(cfg.output);
  auto outcomes = detail::run_parallel(scans, cfg.jobs, [&](const fs::path& dir, ScanOutcome& o) {
    const fs::path out_dir = cfg.output / dir.filename();
    detail::with_clean_scan_dir(out_dir, [&] {
      const ScanVolume v = load_volume(dir);
      o.scan_id = v.scan_id();
      o.source_id = v.source_id();
      std::vector<double> areas;
      ScanManifest m = detail::base_manifest(cfg, v, dir, out_dir);
      const fs::path sidecar_path = dir / kSpatialSidecarName;
      if (fs::exists(sidecar_path)) {
        const SpatialSidecar s = sidecar_from_json(read_json(sidecar_path));
        if (s.mask_areas.size() != v.n_slices()) {
          throw Error(ErrorCode::kLengthMismatch, "sidecar lists " +
                                                      std::to_string(s.mask_areas.size()) +
                                                      " areas for " +
                                                      std::to_string(v.n_slices()) + " slices");
        }
        areas = detail::to_areas(s.mask_areas);
        m.bbox = s.bbox;
        m.threshold_t = s.threshold_t;
      } else {
        const LungMaskSet masks = compute_lung_masks(v, cfg.spatial());
        areas = lung_area_profile(masks);
        m.threshold_t = masks.threshold_t;
      }
      detail::write_sample_outputs(cfg, v, areas, out_dir, m);
      write_manifest(m, out_dir / kScanManifestName);
    });
  });
  return detail::finish_run(cfg, outcomes, log);
}

/// Crop then sample in one pass: each output scan holds n cropped slices.
inline int cmd_pipeline(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const auto scans = detail::scan_directories(cfg.input);
  fs::create_directories(cfg.output);
  auto outcomes = detail::run_parallel(scans, cfg.jobs, [&](const fs::path& dir, ScanOutcome& o) {
    const fs::path out_dir = cfg.output / dir.filename();
    detail::with_clean_scan_dir(out_dir, [&] {
      const ScanVolume v = load_volume(dir);
      o.scan_id = v.scan_id();
      o.source_id = v.source_id();
      const SpatialResult res = standardize_spatial(v, cfg.spatial());
      ScanManifest m = detail::base_manifest(cfg, v, dir, out_dir);
      m.bbox = res.bbox;
      m.threshold_t = res.masks.threshold_t;
      detail::write_sample_outputs(cfg, res.cropped, lung_area_profile(res.masks), out_dir, m);
      write_json(out_dir / kSpatialSidecarName, to_json(detail::make_sidecar(cfg, v, res)));
      m.output_paths.push_back(kSpatialSidecarName);
      write_manifest(m, out_dir / kScanManifestName);
    });
  });
  return detail::finish_run(cfg, outcomes, log);
}

/// Metrics over an embeddings CSV. cfg.output names the report file; a path
/// without a .json extension is treated as a directory holding report.json.
inline int cmd_analyze(const RunConfig& cfg, std::ostream& out, std::ostream& log) {
  cfg.validate();
  fs::path report_path = cfg.output;
  if (report_path.extension() != ".json") report_path /= "report.json";
  MetricsReport r;
  try {
    r = analyze(load_embeddings(cfg.input));
    write_report(r, report_path);
  } catch (const std::exception& ex) {
    log << "analyze failed: " << ex.what() << "\n";
    return 1;
  }
  auto isv = [&](Label l) -> std::string {
    auto it = r.inter_source_variance.find(l);
    if (it == r.inter_source_variance.end()) return "n/a";
    std::ostringstream s;
    s << std::fixed << std::setprecision(3) << it->second;
    return s.str();
  };
  out << std::left << std::setw(14) << "Fisher Score" << std::setw(14) << "Separability"
      << std::setw(26) << "Inter-Source Var (COVID)" << "Inter-Source Var (non-COVID)\n";
  std::ostringstream f, s;
  f << std::fixed << std::setprecision(3) << r.fisher_score;
  s << std::fixed << std::setprecision(3) << r.separability;
  out << std::left << std::setw(14) << f.str() << std::setw(14) << s.str() << std::setw(26)
      << isv(Label::kCovid) << isv(Label::kNonCovid) << "\n";
  return 0;
}

/// Writes synthetic scans: one spec (optionally swept over --count seeds), or
/// the four-source corpus when cfg.corpus_scale is set.
inline int cmd_phantom(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  std::vector<CorpusEntry> entries;
  if (cfg.corpus_scale) {
    entries = four_source_corpus(*cfg.corpus_scale, cfg.seed);
  } else {
    PhantomSpec base;
    if (!cfg.input.empty()) {
      base = phantom_spec_from_json(read_json(cfg.input));
    } else {
      base.lung_profile = bell_profile(base.n_slices, 0.3);
    }
    if (cfg.seed != 0) base.seed = cfg.seed;
    for (int k = 0; k < cfg.count; ++k) {
      PhantomSpec s = base;
      s.seed = base.seed + static_cast<std::uint64_t>(k);
      if (cfg.count > 1) {
        char suffix[16];
        std::snprintf(suffix, sizeof(suffix), "_%03d", k + 1);
        s.scan_id += suffix;
      }
      entries.push_back({"", std::move(s)});
    }
  }
  fs::create_directories(cfg.output);
  std::vector<fs::path> names;
  for (const auto& e : entries) names.push_back(e.spec.scan_id);
  auto outcomes = detail::run_parallel(names, cfg.jobs, [&](const fs::path& name, ScanOutcome& o) {
    const auto it = std::find_if(entries.begin(), entries.end(),
                                 [&](const CorpusEntry& e) { return e.spec.scan_id == name.string(); });
    const fs::path out_dir = cfg.output / name;
    o.scan_id = it->spec.scan_id;
    o.source_id = it->spec.source_id;
    detail::with_clean_scan_dir(out_dir, [&] {
      const Phantom p = generate_phantom(it->spec);
      save_volume(p.volume, out_dir);
      json truth = to_json(p.truth);
      truth["scan_id"] = it->spec.scan_id;
      truth["source_id"] = it->spec.source_id;
      if (!it->label.empty()) truth["label"] = it->label;
      write_json(out_dir / kGroundTruthName, truth);
      write_json(out_dir / "phantom_spec.json", to_json(it->spec));
    });
  });
  return detail::finish_run(cfg, outcomes, log);
}

}  // namespace ctprep
