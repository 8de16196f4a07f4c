// Copyright 2026 The DFF Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <vector>

#include "dff/core.hpp"
#include "support/tempdir.hpp"

namespace testing_support {

inline dff::Dataset random_dataset(std::size_t n, std::size_t p, std::size_t d,
                                   std::uint64_t seed) {
  dff::Rng rng(seed);
  std::vector<dff::Sample> samples(n);
  for (auto& s : samples) {
    s.x.resize(p);
    s.c.resize(d);
    for (auto& v : s.x) v = rng.normal();
    for (auto& v : s.c) v = rng.uniform(0.5, 2.0);
  }
  return dff::Dataset(std::move(samples), p, d);
}

inline std::vector<double> random_vector(dff::Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

}  // namespace testing_support
