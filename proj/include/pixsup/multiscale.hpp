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

#ifndef PIXSUP_MULTISCALE_HPP
#define PIXSUP_MULTISCALE_HPP

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "pixsup/resample.hpp"
#include "pixsup/tensor.hpp"

namespace pixsup {

/// An RGB image (3, H, W) in [0, 1], its multi-hot label and, for
/// evaluation, the pixel class map (H, W) with values in {0..N}.
struct ImageSample {
  Tensor<float> pixels;
  std::vector<int> label;
  Tensor<int> gt_mask;  // empty when absent

  int height() const { return pixels.dim(1); }
  int width() const { return pixels.dim(2); }
  bool has_mask() const { return !gt_mask.empty(); }
};

/// Small, medium and large copies of one image.
template <class T>
struct Pyramid {
  static constexpr std::array<double, 3> kRatios{0.5, 1.0, 2.0};
  static constexpr int kMedium = 1;
  std::array<Tensor<T>, 3> images;
};

template <class T>
Tensor<T> rescale_image(const Tensor<T>& image, double ratio) {
  const int h = static_cast<int>(std::lround(image.dim(1) * ratio));
  const int w = static_cast<int>(std::lround(image.dim(2) * ratio));
  return resize_bilinear(image, h, w);
}

/**
 * Builds the 0.5 / 1.0 / 2.0 pyramid by bilinear resampling of the base
 * image. Side lengths must be even and the small scale must still be at
 * least `min_side` pixels.
 */
template <class T>
Pyramid<T> build_pyramid(const Tensor<T>& image, int min_side = 1) {
  if (image.rank() != 3) throw ShapeError("build_pyramid expects a (C, H, W) image");
  const int h = image.dim(1), w = image.dim(2);
  if (h % 2 != 0 || w % 2 != 0) throw InputError("pyramid base image sides must be even");
  if (h / 2 < min_side || w / 2 < min_side)
    throw InputError("image side " + std::to_string(std::min(h, w)) + " too small for the small scale (minimum " +
                     std::to_string(2 * min_side) + ")");
  Pyramid<T> p;
  for (std::size_t i = 0; i < 3; ++i) p.images[i] = rescale_image(image, Pyramid<T>::kRatios[i]);
  return p;
}

/// Resamples every per-scale map to the spatial size of the medium one.
template <class T>
std::vector<Tensor<T>> align_to_medium(const std::vector<Tensor<T>>& per_scale, int medium_index = 1) {
  if (per_scale.size() != 3) throw ShapeError("align_to_medium expects three scales");
  const auto& ref = per_scale.at(static_cast<std::size_t>(medium_index));
  std::vector<Tensor<T>> out;
  out.reserve(per_scale.size());
  for (const auto& t : per_scale) {
    if (t.rank() != 3 || t.dim(0) != ref.dim(0)) throw ShapeError("align_to_medium: channel mismatch across scales");
    out.push_back(resize_bilinear(t, ref.dim(1), ref.dim(2)));
  }
  return out;
}

}  // namespace pixsup

#endif  // PIXSUP_MULTISCALE_HPP
