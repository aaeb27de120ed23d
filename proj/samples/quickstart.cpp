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

// Library walkthrough on an in-memory phantom: crop to the lung box, pick
// slices by lung-area density, then score a toy embedding set.
//
//   quickstart [n_slices]

#include <cstdlib>
#include <iostream>

#include "ctprep/ctprep.hpp"

int main(int argc, char** argv) {
  using namespace ctprep;
  const int n = argc > 1 ? std::atoi(argv[1]) : kDefaultSliceCount;

  PhantomSpec spec;
  spec.n_slices = 48;
  spec.lung_profile = bell_profile(spec.n_slices, 0.3);
  const Phantom phantom = generate_phantom(spec);

  const SpatialResult spatial = standardize_spatial(phantom.volume, {});
  const BoundingBox& b = spatial.bbox;
  std::cout << "threshold " << spatial.masks.threshold_t << ", box rows " << b.row_min << ".."
            << b.row_max << " cols " << b.col_min << ".." << b.col_max << " (truth rows "
            << phantom.truth.bbox.row_min << ".." << phantom.truth.bbox.row_max << " cols "
            << phantom.truth.bbox.col_min << ".." << phantom.truth.bbox.col_max << ")\n";

  const DensityProfile density = fit_kde(lung_area_profile(spatial.masks));
  const SliceSelection kds = select_kds(density, n);
  std::cout << "bandwidth " << density.bandwidth() << "\nkds slices:";
  for (std::size_t i : kds.indices) std::cout << ' ' << i;
  std::cout << "\nuniform slices:";
  for (std::size_t i : select_uniform(spatial.cropped.n_slices(), n).indices) std::cout << ' ' << i;
  std::cout << '\n';

  EmbeddingSet e;
  e.add({0, 0}, Label::kCovid, 0);
  e.add({0, 2}, Label::kCovid, 0);
  e.add({10, 0}, Label::kNonCovid, 0);
  e.add({10, 2}, Label::kNonCovid, 0);
  std::cout << "fisher " << fisher_score(e) << ", separability " << separability(e) << '\n';
}
