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

// ctprep command-line front end.
//
//   ctprep phantom  --output DIR [--input spec.json] [--count N] [--seed S]
//                   [--corpus-scale F]
//   ctprep crop     --input ROOT --output DIR [--radius K] [--invert]
//                   [--min-component-fraction F] [--jobs J]
//   ctprep sample   --input ROOT --output DIR [--strategy kds|uniform|random]
//                   [--n-slices N] [--percentiles p1,p2,...] [--seed S]
//   ctprep pipeline --input ROOT --output DIR  (crop + sample options)
//   ctprep analyze  --input embeddings.csv --output report.json
//
// Every subcommand accepts --config FILE.json; flags override its values.

#include <iostream>
#include <map>
#include <set>
#include <string>

#include <CLI11.hpp>

#include "ctprep/ctprep.hpp"

namespace {

struct Flags {
  std::string input;
  std::string output;
  int radius = 1;
  bool invert = false;
  double min_component_fraction = 0.001;
  std::string strategy = "kds";
  int n_slices = ctprep::kDefaultSliceCount;
  std::vector<double> percentiles;
  std::uint64_t seed = 0;
  int jobs = 1;
  int count = 1;
  double corpus_scale = 0.0;
  std::string config;
};

// option name -> config-file key
using OptionMap = std::map<std::string, CLI::Option*>;

void add_common(CLI::App* sub, Flags& f, OptionMap& opts, bool spatial, bool sampling) {
  opts["input"] = sub->add_option("--input,-i", f.input, "input root, file or spec");
  opts["output"] = sub->add_option("--output,-o", f.output, "output directory or report path")
                       ->required();
  opts["jobs"] = sub->add_option("--jobs,-j", f.jobs, "scans processed in parallel");
  sub->add_option("--config", f.config, "JSON config file (flags take precedence)");
  if (spatial) {
    opts["radius"] = sub->add_option("--radius", f.radius, "mean filter half-width k");
    opts["invert"] = sub->add_flag("--invert", f.invert, "lungs are darker than background");
    opts["min_component_fraction"] = sub->add_option(
        "--min-component-fraction", f.min_component_fraction,
        "drop mask components smaller than this fraction of the slice");
  }
  if (sampling) {
    opts["strategy"] = sub->add_option("--strategy", f.strategy, "kds, uniform or random")
                           ->check(CLI::IsMember({"kds", "uniform", "random"}));
    opts["n_slices"] = sub->add_option("--n-slices,-n", f.n_slices, "slices to keep");
    opts["percentiles"] = sub->add_option("--percentiles", f.percentiles,
                                          "explicit KDS percentiles, comma separated")
                              ->delimiter(',');
  }
  opts["seed"] = sub->add_option("--seed", f.seed, "random seed");
}

ctprep::RunConfig to_config(const std::string& command, const Flags& f, const OptionMap& opts) {
  ctprep::RunConfig cfg;
  cfg.command = command;
  cfg.input = f.input;
  cfg.output = f.output;
  cfg.radius = f.radius;
  cfg.invert = f.invert;
  cfg.min_component_fraction = f.min_component_fraction;
  cfg.strategy = ctprep::parse_strategy(f.strategy);
  cfg.n_slices = f.n_slices;
  cfg.percentiles = f.percentiles;
  cfg.seed = f.seed;
  cfg.jobs = f.jobs;
  cfg.count = f.count;
  if (f.corpus_scale > 0.0) cfg.corpus_scale = f.corpus_scale;
  if (!f.config.empty()) {
    std::set<std::string> given;
    for (const auto& [key, opt] : opts) {
      if (opt->count() > 0) given.insert(key);
    }
    ctprep::apply_config_file(cfg, ctprep::read_json(f.config), given);
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CT input-space standardization: lung cropping, density-based slice "
               "sampling and embedding metrics"};
  app.require_subcommand(1);
  app.set_version_flag("--version", ctprep::kToolVersion);

  Flags f;
  std::map<std::string, OptionMap> options;

  auto* crop = app.add_subcommand("crop", "crop every scan to its union lung bounding box");
  add_common(crop, f, options["crop"], true, false);

  auto* sample = app.add_subcommand("sample", "select slices from cropped scans");
  add_common(sample, f, options["sample"], true, true);

  auto* pipeline = app.add_subcommand("pipeline", "crop then sample in one pass");
  add_common(pipeline, f, options["pipeline"], true, true);

  auto* analyze = app.add_subcommand("analyze", "embedding-space metrics from a CSV");
  add_common(analyze, f, options["analyze"], false, false);

  auto* phantom = app.add_subcommand("phantom", "generate synthetic lung phantoms");
  add_common(phantom, f, options["phantom"], false, false);
  options["phantom"]["count"] =
      phantom->add_option("--count", f.count, "number of phantoms (consecutive seeds)");
  options["phantom"]["corpus_scale"] = phantom->add_option(
      "--corpus-scale", f.corpus_scale, "generate the four-source corpus at this scale");

  CLI11_PARSE(app, argc, argv);

  try {
    for (auto* sub : app.get_subcommands()) {
      const std::string name = sub->get_name();
      ctprep::RunConfig cfg = to_config(name, f, options[name]);
      if (name != "phantom" && cfg.input.empty()) {
        std::cerr << "--input is required for " << name << "\n";
        return 2;
      }
      if (name == "crop") return ctprep::cmd_crop(cfg, std::cerr);
      if (name == "sample") return ctprep::cmd_sample(cfg, std::cerr);
      if (name == "pipeline") return ctprep::cmd_pipeline(cfg, std::cerr);
      if (name == "analyze") return ctprep::cmd_analyze(cfg, std::cout, std::cerr);
      if (name == "phantom") return ctprep::cmd_phantom(cfg, std::cerr);
    }
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
  return 0;
}
