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

#include <cmath>

#include "dff/correction.hpp"
#include "dff/error.hpp"

namespace dff {

Mlp::Mlp(std::size_t inputs, std::vector<std::size_t> hidden, std::size_t outputs) {
  if (inputs == 0 || outputs == 0) throw UsageError("network needs nonzero input and output width");
  widths_.clear();
  widths_.push_back(inputs);
  for (std::size_t h : hidden) {
    if (h == 0) throw UsageError("hidden layer width must be positive");
    widths_.push_back(h);
  }
  widths_.push_back(outputs);
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    offsets_.push_back(offset);
    offset += widths_[l + 1] * widths_[l] + widths_[l + 1];
  }
  params_.assign(offset, 0.0);
}

void Mlp::init(std::uint64_t seed, bool zero_output) {
  Rng rng(seed);
  const std::size_t layers = widths_.size() - 1;
  std::fill(params_.begin(), params_.end(), 0.0);
  for (std::size_t l = 0; l < layers; ++l) {
    const bool last = l + 1 == layers;
    if (last && zero_output) continue;
    const double fan_in = static_cast<double>(widths_[l]);
    const double bound = std::sqrt((last ? 3.0 : 6.0) / fan_in);
    double* w = params_.data() + offsets_[l];
    for (std::size_t k = 0; k < widths_[l + 1] * widths_[l]; ++k) w[k] = rng.uniform(-bound, bound);
  }
}

std::vector<double> Mlp::forward(std::span<const double> x, Trace* trace) const {
  if (x.size() != inputs()) throw DataError("network input has the wrong width");
  const std::size_t layers = widths_.size() - 1;
  if (trace) {
    trace->activations.assign(1, std::vector<double>(x.begin(), x.end()));
    trace->pre.clear();
  }
  std::vector<double> a(x.begin(), x.end());
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = widths_[l];
    const std::size_t out = widths_[l + 1];
    const double* w = params_.data() + offsets_[l];
    const double* b = w + out * in;
    std::vector<double> z(out);
    for (std::size_t r = 0; r < out; ++r) {
      double s = b[r];
      const double* row = w + r * in;
      for (std::size_t c = 0; c < in; ++c) s += row[c] * a[c];
      z[r] = s;
    }
    if (l + 1 < layers) {
      a.resize(out);
      for (std::size_t r = 0; r < out; ++r) a[r] = z[r] > 0.0 ? z[r] : 0.0;
    } else {
      a = z;
    }
    if (trace) {
      trace->pre.push_back(std::move(z));
      trace->activations.push_back(a);
    }
  }
  return a;
}

void Mlp::backward(const Trace& trace, std::span<const double> v, std::span<double> grad) const {
  const std::size_t layers = widths_.size() - 1;
  if (v.size() != outputs()) throw DataError("output gradient has the wrong width");
  if (grad.size() != params_.size()) throw DataError("parameter gradient has the wrong size");
  if (trace.pre.size() != layers || trace.activations.size() != layers + 1) {
    throw UsageError("trace does not match this network");
  }
  std::vector<double> delta(v.begin(), v.end());
  for (std::size_t l = layers; l-- > 0;) {
    const std::size_t in = widths_[l];
    const std::size_t out = widths_[l + 1];
    const double* w = params_.data() + offsets_[l];
    double* gw = grad.data() + offsets_[l];
    double* gb = gw + out * in;
    const std::vector<double>& a = trace.activations[l];
    for (std::size_t r = 0; r < out; ++r) {
      const double dr = delta[r];
      if (dr == 0.0) continue;
      double* grow = gw + r * in;
      for (std::size_t c = 0; c < in; ++c) grow[c] += dr * a[c];
      gb[r] += dr;
    }
    if (l == 0) break;
    std::vector<double> prev(in, 0.0);
    const std::vector<double>& z = trace.pre[l - 1];
    for (std::size_t r = 0; r < out; ++r) {
      const double dr = delta[r];
      if (dr == 0.0) continue;
      const double* row = w + r * in;
      for (std::size_t c = 0; c < in; ++c) prev[c] += row[c] * dr;
    }
    for (std::size_t c = 0; c < in; ++c) {
      if (!(z[c] > 0.0)) prev[c] = 0.0;
    }
    delta = std::move(prev);
  }
}

}  // namespace dff
