// Copyright 2026 The pixsup Authors.
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

#ifndef PIXSUP_RESAMPLE_HPP
#define PIXSUP_RESAMPLE_HPP

#include <algorithm>
#include <cmath>
#include <vector>

#include "pixsup/tensor.hpp"

namespace pixsup {

namespace detail {

// One output coordinate of a 1-D bilinear resampler: two taps and the weight
// of the upper tap.
struct LinearTap {
  int lo;
  int hi;
  double frac;
};

// Half-pixel-centre mapping (align_corners = false), source coordinate
// clamped at zero.
inline std::vector<LinearTap> linear_taps(int in, int out) {
  std::vector<LinearTap> taps(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    int lo = static_cast<int>(std::floor(src));
    if (lo > in - 1) lo = in - 1;
    const int hi = std::min(lo + 1, in - 1);
    taps[static_cast<std::size_t>(o)] = {lo, hi, src - lo};
  }
  return taps;
}

}  // namespace detail

/// Bilinear resize of every channel of a (C, H, W) tensor.
template <class T>
Tensor<T> resize_bilinear(const Tensor<T>& in, int out_h, int out_w) {
  if (in.rank() != 3) throw ShapeError("resize_bilinear expects a rank-3 tensor");
  if (out_h <= 0 || out_w <= 0) throw ShapeError("resize target must be positive");
  const int c = in.dim(0), h = in.dim(1), w = in.dim(2);
  if (h == out_h && w == out_w) return in;
  const auto ty = detail::linear_taps(h, out_h);
  const auto tx = detail::linear_taps(w, out_w);
  Tensor<T> out({c, out_h, out_w});
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < out_h; ++y) {
      const auto& r = ty[static_cast<std::size_t>(y)];
      const T fy = static_cast<T>(r.frac);
      for (int x = 0; x < out_w; ++x) {
        const auto& q = tx[static_cast<std::size_t>(x)];
        const T fx = static_cast<T>(q.frac);
        const T top = in(ch, r.lo, q.lo) * (T(1) - fx) + in(ch, r.lo, q.hi) * fx;
        const T bot = in(ch, r.hi, q.lo) * (T(1) - fx) + in(ch, r.hi, q.hi) * fx;
        out(ch, y, x) = top * (T(1) - fy) + bot * fy;
      }
    }
  }
  return out;
}

/// Adjoint of resize_bilinear: scatters a gradient at the output size back
/// onto an (in_h, in_w) grid.
template <class T>
Tensor<T> resize_bilinear_backward(const Tensor<T>& grad_out, int in_h, int in_w) {
  const int c = grad_out.dim(0), out_h = grad_out.dim(1), out_w = grad_out.dim(2);
  if (in_h == out_h && in_w == out_w) return grad_out;
  const auto ty = detail::linear_taps(in_h, out_h);
  const auto tx = detail::linear_taps(in_w, out_w);
  Tensor<T> grad_in({c, in_h, in_w});
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < out_h; ++y) {
      const auto& r = ty[static_cast<std::size_t>(y)];
      const T fy = static_cast<T>(r.frac);
      for (int x = 0; x < out_w; ++x) {
        const auto& q = tx[static_cast<std::size_t>(x)];
        const T fx = static_cast<T>(q.frac);
        const T g = grad_out(ch, y, x);
        grad_in(ch, r.lo, q.lo) += g * (T(1) - fy) * (T(1) - fx);
        grad_in(ch, r.lo, q.hi) += g * (T(1) - fy) * fx;
        grad_in(ch, r.hi, q.lo) += g * fy * (T(1) - fx);
        grad_in(ch, r.hi, q.hi) += g * fy * fx;
      }
    }
  }
  return grad_in;
}

/// Nearest-neighbour resize of an integer label map (rank 2), using the
/// same half-pixel-centre convention as the bilinear path.
template <class L>
Tensor<L> resize_nearest(const Tensor<L>& in, int out_h, int out_w) {
  if (in.rank() != 2) throw ShapeError("resize_nearest expects a rank-2 map");
  const int h = in.dim(0), w = in.dim(1);
  Tensor<L> out({out_h, out_w});
  for (int y = 0; y < out_h; ++y) {
    const int sy = std::min(h - 1, static_cast<int>(std::floor((y + 0.5) * h / out_h)));
    for (int x = 0; x < out_w; ++x) {
      const int sx = std::min(w - 1, static_cast<int>(std::floor((x + 0.5) * w / out_w)));
      out(y, x) = in(sy, sx);
    }
  }
  return out;
}

}  // namespace pixsup

#endif  // PIXSUP_RESAMPLE_HPP
