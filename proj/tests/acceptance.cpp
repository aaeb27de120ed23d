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

// Acceptance gate: one line per criterion, exit status 0 iff all pass.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>

#include "ctprep/ctprep.hpp"
#include "oracles.hpp"

namespace {

using namespace ctprep;

struct Verdict {
  bool pass = true;
  std::string detail;
};

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// Area profiles of mixed shape: bell-like lung curves, uniform clouds and
// heavily tied integer sets.
std::vector<double> random_profile(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> len(5, 500), kind(0, 2);
  const int s = len(rng);
  std::vector<double> a(static_cast<std::size_t>(s));
  switch (kind(rng)) {
    case 0: {
      std::uniform_real_distribution<double> peak(500, 20000);
      const double pk = peak(rng);
      std::normal_distribution<double> jitter(0, 0.02 * pk);
      for (int i = 0; i < s; ++i) {
        a[i] = std::max(0.0, pk * std::sin(M_PI * (i + 0.5) / s) + jitter(rng));
      }
      break;
    }
    case 1: {
      std::uniform_real_distribution<double> u(0, 1000);
      for (auto& x : a) x = u(rng);
      break;
    }
    default: {
      std::uniform_int_distribution<int> u(0, 12);
      for (auto& x : a) x = 50.0 * u(rng);
      break;
    }
  }
  return a;
}

// --- 1 -----------------------------------------------------------------------

Verdict kde_correctness() {
  std::mt19937_64 rng(101);
  std::vector<double> ps = kds_percentiles(8);
  for (double p : kds_percentiles(10)) ps.push_back(p);
  double worst_mass = 0, worst_resid = 0;
  bool monotone = true;
  for (int trial = 0; trial < 100; ++trial) {
    const DensityProfile d = fit_kde(random_profile(rng));
    // trapezoid on h/16 spacing over the +-10h bracket
    const double dx = d.bandwidth() / 16;
    const auto n = static_cast<std::size_t>(std::ceil((d.upper() - d.lower()) / dx));
    const double step = (d.upper() - d.lower()) / static_cast<double>(n);
    double mass = 0, prev_f = d.pdf(d.lower()), prev_cdf = d.cdf(d.lower());
    for (std::size_t i = 1; i <= n; ++i) {
      const double x = d.lower() + step * static_cast<double>(i);
      const double f = d.pdf(x);
      mass += 0.5 * (prev_f + f) * step;
      prev_f = f;
      const double c = d.cdf(x);
      monotone &= c >= prev_cdf;
      prev_cdf = c;
    }
    worst_mass = std::max(worst_mass, std::abs(mass - 1));
    for (double p : ps) worst_resid = std::max(worst_resid, std::abs(d.cdf(invert_cdf(d, p)) - p));
  }
  Verdict v;
  v.pass = worst_mass <= 1e-6 && monotone && worst_resid <= 1e-9;
  v.detail = "max|mass-1|=" + fmt("%.2e", worst_mass) + " monotone=" + (monotone ? "yes" : "no") +
             " max|F(q)-p|=" + fmt("%.2e", worst_resid);
  return v;
}

// --- 2 -----------------------------------------------------------------------

Verdict scott_rule() {
  std::mt19937_64 rng(202);
  std::normal_distribution<double> g(8000, 1500);
  std::vector<double> a(100);
  for (auto& x : a) x = std::max(0.0, g(rng));
  const double sigma = oracle::two_pass_stddev(a);
  const double want = 1.06 * sigma * std::pow(100.0, -0.2);
  const double got = fit_kde(a).bandwidth();
  const double err = oracle::rel_err(got, want);
  const double sigma_err = oracle::rel_err(sample_stddev(a), sigma);
  return {err <= 1e-12 && sigma_err <= 1e-12,
          "h=" + fmt("%.6f", got) + " rel.err=" + fmt("%.1e", err) + " sigma rel.err=" +
              fmt("%.1e", sigma_err)};
}

// --- 3 -----------------------------------------------------------------------

Verdict spatial_oracles() {
  std::mt19937_64 rng(303);
  std::uniform_int_distribution<int> side(96, 192), slices(8, 40), bg(10, 60), lung(170, 240);
  std::uniform_real_distribution<double> peak(0.2, 0.4), noise(0, 8);
  int otsu_ok = 0, bbox_ok = 0, retain_ok = 0, second_ok = 0, worst_shift = 0, worst_second = 0;
  for (int trial = 0; trial < 50; ++trial) {
    PhantomSpec s;
    s.width = side(rng);
    s.height = side(rng);
    s.n_slices = slices(rng);
    s.lung_profile = bell_profile(s.n_slices, peak(rng));
    s.noise_sigma = noise(rng);
    s.background_level = bg(rng);
    s.lung_level = lung(rng);
    s.seed = rng();
    const Phantom p = generate_phantom(s);

    const ScanVolume filtered = filter_slices(p.volume, 1);
    otsu_ok += adaptive_threshold(filtered) == oracle::otsu(oracle::histogram(filtered));

    const SpatialResult r = standardize_spatial(p.volume, {});
    const int shift = max_side_shift(r.bbox, p.truth.bbox);
    worst_shift = std::max(worst_shift, shift);
    bbox_ok += shift <= 1;

    std::uint64_t total = 0, inside = 0;
    for (const Mask& m : r.masks.masks) {
      for (int row = 0; row < s.height; ++row) {
        for (int col = 0; col < s.width; ++col) {
          if (!m[static_cast<std::size_t>(row) * s.width + col]) continue;
          ++total;
          inside += r.bbox.contains(row, col);
        }
      }
    }
    retain_ok += total > 0 && inside == total;

    const SpatialResult again = standardize_spatial(r.cropped, {});
    const int moved = max_side_shift(
        again.bbox, BoundingBox::make(0, r.cropped.height() - 1, 0, r.cropped.width() - 1));
    worst_second = std::max(worst_second, moved);
    second_ok += moved <= 1;
  }
  Verdict v;
  v.pass = otsu_ok == 50 && bbox_ok == 50 && retain_ok == 50 && second_ok == 50;
  v.detail = "otsu " + std::to_string(otsu_ok) + "/50, bbox " + std::to_string(bbox_ok) +
             "/50 (worst " + std::to_string(worst_shift) + " px), retained " +
             std::to_string(retain_ok) + "/50, second pass " + std::to_string(second_ok) +
             "/50 (worst " + std::to_string(worst_second) + " px)";
  return v;
}

// --- 4 -----------------------------------------------------------------------

EmbeddingSet map_vectors(const EmbeddingSet& e, const std::function<std::vector<double>(std::vector<double>)>& f) {
  EmbeddingSet out;
  for (std::size_t i = 0; i < e.size(); ++i) out.add(f(e.vectors[i]), e.labels[i], e.sources[i]);
  return out;
}

std::vector<double> rotate_and_shift(std::vector<double> v, const std::vector<double>& angles,
                                     const std::vector<double>& shift) {
  for (std::size_t a = 0; a + 1 < v.size(); ++a) {
    const double x = v[a], y = v[a + 1];
    v[a] = std::cos(angles[a]) * x - std::sin(angles[a]) * y;
    v[a + 1] = std::sin(angles[a]) * x + std::cos(angles[a]) * y;
  }
  for (std::size_t k = 0; k < v.size(); ++k) v[k] += shift[k];
  return v;
}

Verdict metric_oracles() {
  std::mt19937_64 rng(404);
  std::uniform_int_distribution<int> n_sources(2, 5), dim(1, 64);
  std::uniform_real_distribution<double> angle(0, 2 * M_PI), off(-100, 100), lam(0.1, 10);
  double worst_oracle = 0, worst_rigid = 0, worst_scale = 0;
  bool exact_scale = true;
  for (int trial = 0; trial < 100; ++trial) {
    const int S = n_sources(rng);
    const EmbeddingSet e = oracle::random_embeddings(rng, S, 200 / (2 * S), dim(rng));
    const MetricsReport r = analyze(e);

    auto track = [](double& worst, double got, double want) {
      worst = std::max(worst, oracle::rel_err(got, want));
    };
    track(worst_oracle, r.fisher_score, oracle::fisher(e));
    track(worst_oracle, r.separability, oracle::separability(e));
    for (Label l : kLabels) {
      track(worst_oracle, r.inter_source_variance.at(l), oracle::inter_source_variance(e, l));
      track(worst_oracle, r.pooled_intra_class_distances.at(l),
            oracle::mean_pair_distance(e, oracle::members(e, std::nullopt, l)));
      for (int s : r.sources) {
        track(worst_oracle, r.intra_class_distances.at({s, l}),
              oracle::mean_pair_distance(e, oracle::members(e, s, l)));
      }
    }

    std::vector<double> angles(e.dim), shift(e.dim);
    for (auto& a : angles) a = angle(rng);
    for (auto& s : shift) s = off(rng);
    const MetricsReport m =
        analyze(map_vectors(e, [&](std::vector<double> v) { return rotate_and_shift(v, angles, shift); }));
    track(worst_rigid, m.fisher_score, r.fisher_score);
    track(worst_rigid, m.separability, r.separability);
    for (Label l : kLabels) {
      track(worst_rigid, m.inter_source_variance.at(l), r.inter_source_variance.at(l));
    }

    // a power of two scales every intermediate exactly; a generic factor to rounding
    for (double lambda : {0.125, 8.0}) {
      const MetricsReport sc = analyze(map_vectors(e, [&](std::vector<double> v) {
        for (double& x : v) x *= lambda;
        return v;
      }));
      exact_scale &= sc.fisher_score == r.fisher_score && sc.separability == r.separability;
      for (Label l : kLabels) {
        exact_scale &= sc.inter_source_variance.at(l) == lambda * r.inter_source_variance.at(l);
      }
    }
    const double lambda = lam(rng);
    const MetricsReport sc = analyze(map_vectors(e, [&](std::vector<double> v) {
      for (double& x : v) x *= lambda;
      return v;
    }));
    track(worst_scale, sc.fisher_score, r.fisher_score);
    track(worst_scale, sc.separability, r.separability);
    for (Label l : kLabels) {
      track(worst_scale, sc.inter_source_variance.at(l), lambda * r.inter_source_variance.at(l));
    }
  }
  Verdict v;
  v.pass = worst_oracle <= 1e-12 && worst_rigid <= 1e-9 && exact_scale && worst_scale <= 1e-12;
  v.detail = "oracle rel.err " + fmt("%.1e", worst_oracle) + ", rigid " + fmt("%.1e", worst_rigid) +
             ", scale exact(2^k)=" + (exact_scale ? "yes" : "no") + " generic " +
             fmt("%.1e", worst_scale);
  return v;
}

// --- 5 -----------------------------------------------------------------------

Verdict variance_reduction() {
  constexpr int S = 4, per_cell = 200;
  constexpr std::size_t dim = 16;
  constexpr double delta = 20.0;
  std::mt19937_64 rng(505);
  std::normal_distribution<double> g(0, 1);

  // random unit directions per (source, class), scaled to delta
  std::map<std::pair<int, Label>, std::vector<double>> offset;
  std::vector<double> class_mean[2] = {std::vector<double>(dim, 0), std::vector<double>(dim, 0)};
  class_mean[1][0] = 6;
  for (int s = 0; s < S; ++s) {
    for (Label l : kLabels) {
      std::vector<double> o(dim);
      double norm = 0;
      for (double& x : o) {
        x = g(rng);
        norm += x * x;
      }
      for (double& x : o) x *= delta / std::sqrt(norm);
      offset[{s, l}] = o;
    }
  }
  EmbeddingSet raw, standardized;
  for (int s = 0; s < S; ++s) {
    for (Label l : kLabels) {
      const auto& mu = class_mean[l == Label::kCovid ? 0 : 1];
      const auto& o = offset[{s, l}];
      for (int i = 0; i < per_cell; ++i) {
        std::vector<double> a(dim), b(dim);
        for (std::size_t k = 0; k < dim; ++k) {
          const double noise = g(rng);
          a[k] = mu[k] + o[k] + noise;
          b[k] = mu[k] + 0.25 * o[k] + noise;
        }
        raw.add(std::move(a), l, s);
        standardized.add(std::move(b), l, s);
      }
    }
  }
  Verdict v;
  for (Label l : kLabels) {
    const double before = inter_source_variance(raw, l);
    const double after = inter_source_variance(standardized, l);
    const double ratio = after / before;
    v.pass &= ratio >= 0.24 && ratio <= 0.26;
    v.detail += std::string(to_string(l)) + " " + fmt("%.3f", before) + " -> " +
                fmt("%.3f", after) + " (ratio " + fmt("%.4f", ratio) + ") ";
  }
  v.detail.pop_back();
  return v;
}

// --- 6 -----------------------------------------------------------------------

Verdict classification_oracles() {
  int f1_cases = 0, f1_ok = 0;
  std::vector<Label> t(6), p(6);
  for (unsigned tm = 0; tm < 64; ++tm) {
    for (int i = 0; i < 6; ++i) t[i] = (tm >> i) & 1 ? Label::kCovid : Label::kNonCovid;
    for (unsigned pm = 0; pm < 64; ++pm) {
      for (int i = 0; i < 6; ++i) p[i] = (pm >> i) & 1 ? Label::kCovid : Label::kNonCovid;
      ++f1_cases;
      f1_ok += std::abs(macro_f1(t, p) - oracle::macro_f1(t, p)) <= 1e-12;
    }
  }
  std::mt19937_64 rng(606);
  std::uniform_int_distribution<int> len(2, 60), coarse(0, 9);
  std::uniform_real_distribution<double> fine(0, 1);
  std::bernoulli_distribution coin;
  int auc_ok = 0;
  double worst = 0;
  for (int trial = 0; trial < 1000;) {
    const int n = len(rng);
    std::vector<Label> truth(n);
    std::vector<double> scores(n);
    const bool tied = coin(rng);
    for (int i = 0; i < n; ++i) {
      truth[i] = coin(rng) ? Label::kCovid : Label::kNonCovid;
      scores[i] = tied ? coarse(rng) / 9.0 : fine(rng);
    }
    const auto pos = std::count(truth.begin(), truth.end(), Label::kCovid);
    if (pos == 0 || pos == n) continue;
    ++trial;
    const double err = std::abs(auc_roc(truth, scores) - oracle::auc_trapezoid(truth, scores));
    worst = std::max(worst, err);
    auc_ok += err <= 1e-12;
  }
  Verdict v;
  v.pass = f1_ok == f1_cases && auc_ok == 1000;
  v.detail = "macro-F1 " + std::to_string(f1_ok) + "/" + std::to_string(f1_cases) + ", AUC " +
             std::to_string(auc_ok) + "/1000 (max err " + fmt("%.1e", worst) + ")";
  return v;
}

// --- 7 -----------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::map<std::string, std::string> read_tree(const fs::path& root) {
  std::map<std::string, std::string> t;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) t[fs::relative(e.path(), root).generic_string()] = slurp(e.path());
  }
  return t;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(CTPREP_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Verdict performance_and_determinism() {
  const fs::path root = fs::path(CTPREP_TEST_TMP) / "acceptance";
  fs::remove_all(root);
  PhantomSpec s;
  s.width = s.height = 512;
  s.n_slices = 300;
  s.lung_profile = bell_profile(300, 0.3);
  s.seed = 707;
  s.scan_id = "big";
  save_volume(generate_phantom(s).volume, root / "in" / "big");

  const std::string in = (root / "in").string();
  Timer t;
  const int rc1 = run_cli("pipeline --jobs 1 --input " + in + " --output " + (root / "a").string());
  const double elapsed = t.seconds();
  const int rc2 = run_cli("pipeline --jobs 4 --input " + in + " --output " + (root / "b").string());
  const bool same_big = read_tree(root / "a") == read_tree(root / "b");

  // several scans so the parallel run actually interleaves
  for (std::uint64_t k = 0; k < 6; ++k) {
    PhantomSpec small;
    small.width = small.height = 128;
    small.n_slices = 40;
    small.lung_profile = bell_profile(40, 0.3);
    small.seed = 900 + k;
    small.scan_id = "small_" + std::to_string(k);
    small.source_id = static_cast<int>(k % 4);
    save_volume(generate_phantom(small).volume, root / "corpus" / small.scan_id);
  }
  const std::string corpus = (root / "corpus").string();
  const int rc3 = run_cli("pipeline --jobs 1 --input " + corpus + " --output " + (root / "c").string());
  const int rc4 = run_cli("pipeline --jobs 4 --input " + corpus + " --output " + (root / "d").string());
  const bool same_corpus = read_tree(root / "c") == read_tree(root / "d");

  Verdict v;
  v.pass = rc1 == 0 && rc2 == 0 && rc3 == 0 && rc4 == 0 && elapsed < 10.0 && same_big && same_corpus;
  v.detail = "512x512x300 pipeline " + fmt("%.2f", elapsed) + " s single-threaded, trees identical: " +
             (same_big ? "yes" : "no") + " (1 scan), " + (same_corpus ? "yes" : "no") +
             " (6 scans, jobs 1 vs 4)";
  if (rc1 || rc2 || rc3 || rc4) v.detail += ", a run exited nonzero";
  fs::remove_all(root);
  return v;
}

// --- 8 -----------------------------------------------------------------------

Verdict sampler_contracts() {
  bool uniform_ok = select_uniform(100, 8).indices ==
                    std::vector<std::size_t>{6, 18, 31, 43, 56, 68, 81, 93};
  for (std::size_t s = 1; s <= 600; ++s) {
    for (int n : {1, 2, 5, 8, 10, 16}) {
      const auto idx = select_uniform(s, n).indices;
      if (s <= static_cast<std::size_t>(n)) {
        uniform_ok &= idx.size() == s && idx.back() == s - 1;
        continue;
      }
      for (int i = 0; i < n; ++i) {
        uniform_ok &= idx[i] == static_cast<std::size_t>(std::floor((i + 0.5) * s / n));
      }
    }
  }

  // 3-sigma binomial band applied to every index
  constexpr std::size_t s = 1000;
  constexpr int n = 8, seeds = 10'000;
  std::vector<int> hits(s, 0);
  for (std::uint64_t seed = 0; seed < seeds; ++seed) {
    for (auto i : select_random(s, n, seed).indices) ++hits[i];
  }
  const double p = static_cast<double>(n) / s;
  const double mean = seeds * p, sigma = std::sqrt(seeds * p * (1 - p));
  int outside = 0;
  double chi2 = 0, max_z = 0;
  for (int h : hits) {
    const double z = std::abs(h - mean) / sigma;
    outside += z > 3;
    max_z = std::max(max_z, z);
    chi2 += (h - mean) * (h - mean) / (mean * (1 - p));
  }
  const bool random_ok = outside == 0;

  std::mt19937_64 rng(808);
  std::uniform_real_distribution<double> shift(1, 1e4), scale(0.05, 20);
  int kds_ok = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto a = random_profile(rng);
    const SliceSelection base = select_kds(fit_kde(a), kDefaultSliceCount);
    const double c = shift(rng), lambda = scale(rng);
    auto shifted = a, scaled = a;
    for (auto& x : shifted) x += c;
    for (auto& x : scaled) x *= lambda;
    const SliceSelection sh = select_kds(fit_kde(shifted), kDefaultSliceCount);
    const SliceSelection sc = select_kds(fit_kde(scaled), kDefaultSliceCount);
    const double h = fit_kde(a).bandwidth();
    bool ok = sh.indices == base.indices && sc.indices == base.indices;
    for (std::size_t i = 0; i < base.quantiles.size(); ++i) {
      // bisection stops within 1e-9 in probability, i.e. about 1e-8 h in area
      ok &= std::abs(sh.quantiles[i] - (base.quantiles[i] + c)) <= 1e-6 * h;
      ok &= std::abs(sc.quantiles[i] - lambda * base.quantiles[i]) <= 1e-6 * h * lambda;
    }
    kds_ok += ok;
  }

  Verdict v;
  v.pass = uniform_ok && random_ok && kds_ok == 100;
  v.detail = std::string("uniform closed form ") + (uniform_ok ? "ok" : "MISMATCH") +
             "; random: " + std::to_string(outside) + "/1000 indices outside the 3-sigma band (max |z| " +
             fmt("%.2f", max_z) + ", ~2.7 expected for an exactly uniform sampler; chi2 " +
             fmt("%.0f", chi2) + " on 999 dof)" + "; kds invariance " + std::to_string(kds_ok) + "/100";
  return v;
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    Verdict (*run)();
    double budget_s;  // <= 0: no runtime bound
  };
  const Criterion criteria[] = {
      {"AC1 KDE correctness", kde_correctness, 5.0},
      {"AC2 Scott bandwidth", scott_rule, 0},
      {"AC3 spatial oracle suite", spatial_oracles, 30.0},
      {"AC4 embedding metric oracles", metric_oracles, 0},
      {"AC5 variance-reduction detection", variance_reduction, 0},
      {"AC6 classification metric oracles", classification_oracles, 0},
      {"AC7 performance and determinism", performance_and_determinism, 0},
      {"AC8 sampler contracts", sampler_contracts, 0},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Timer t;
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& ex) {
      v = {false, std::string("threw: ") + ex.what()};
    }
    const double secs = t.seconds();
    if (c.budget_s > 0 && secs >= c.budget_s) {
      v.pass = false;
      v.detail += "; over the " + fmt("%.0f", c.budget_s) + " s budget";
    }
    failed += !v.pass;
    std::cout << (v.pass ? "[PASS] " : "[FAIL] ") << c.name << ": " << v.detail << " ("
              << fmt("%.2f", secs) << " s)" << std::endl;
  }
  std::cout << (8 - failed) << "/8 criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
