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

#ifndef PIXSUP_INFERENCE_HPP
#define PIXSUP_INFERENCE_HPP

#include <vector>

#include "pixsup/backbone.hpp"
#include "pixsup/cam.hpp"
#include "pixsup/mam.hpp"
#include "pixsup/multiscale.hpp"

namespace pixsup {

/// Raw CAMs of every scale resampled to the medium map size, then rectified
/// and max-normalized over the present classes.
template <class T>
ScaleStack<T> aligned_normalized_cams(const std::vector<BackboneOutput<T>>& outs, const ClassSet& present) {
  std::vector<Tensor<T>> raw;
  raw.reserve(outs.size());
  for (const auto& o : outs) raw.push_back(o.raw_cam);
  auto aligned = align_to_medium(raw);
  for (auto& a : aligned) a = normalize_cams(a, present);
  return aligned;
}

/// Runs the network on the 0.5 / 1.0 / 2.0 pyramid of `image`.
template <class T>
std::vector<BackboneOutput<T>> pyramid_forward(const Tensor<T>& image, const ParameterCollection<T>& params,
                                               const BackboneConfig& cfg) {
  const auto pyr = build_pyramid(image, cfg.total_stride());
  std::vector<BackboneOutput<T>> outs;
  outs.reserve(3);
  for (const auto& img : pyr.images) outs.push_back(backbone_forward(img, params, cfg));
  return outs;
}

/// msinf-CAM of one image at the medium map resolution.
template <class T>
Tensor<T> msinf_cam(const Tensor<T>& image, const ParameterCollection<T>& params, const BackboneConfig& cfg,
                    const ClassSet& present, MsinfRule rule = MsinfRule::kMean) {
  return msinf_aggregate(aligned_normalized_cams(pyramid_forward(image, params, cfg), present), present, rule);
}

/**
 * msinf-CAM over arbitrary ratios. Each ratio's raw CAM is resampled to
 * `out_h` x `out_w` before normalization and aggregation; pass the image
 * size to keep the detail of the larger scales.
 */
template <class T>
Tensor<T> msinf_cam_ratios(const Tensor<T>& image, const ParameterCollection<T>& params, const BackboneConfig& cfg,
                           const ClassSet& present, const std::vector<double>& ratios, int out_h, int out_w,
                           MsinfRule rule = MsinfRule::kMean) {
  if (ratios.empty()) throw InputError("msinf needs at least one ratio");
  std::vector<Tensor<T>> maps;
  for (double r : ratios) {
    const auto out = backbone_forward(rescale_image(image, r), params, cfg);
    maps.push_back(normalize_cams(resize_bilinear(out.raw_cam, out_h, out_w), present));
  }
  return msinf_aggregate(maps, present, rule);
}

/// CAM of a single rescaled copy of the image, resampled to `out_h` x
/// `out_w` and normalized.
template <class T>
Tensor<T> single_scale_cam(const Tensor<T>& image, const ParameterCollection<T>& params, const BackboneConfig& cfg,
                           const ClassSet& present, double ratio, int out_h, int out_w) {
  const auto out = backbone_forward(rescale_image(image, ratio), params, cfg);
  return normalize_cams(resize_bilinear(out.raw_cam, out_h, out_w), present);
}

/// Bilinear upsampling of a CAM stack to image resolution.
template <class T>
Tensor<T> cam_to_image(const Tensor<T>& cam, int height, int width) {
  return resize_bilinear(cam, height, width);
}

}  // namespace pixsup

#endif  // PIXSUP_INFERENCE_HPP
