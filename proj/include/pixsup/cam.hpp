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

#ifndef PIXSUP_CAM_HPP
#define PIXSUP_CAM_HPP

#include <algorithm>
#include <cmath>
#include <vector>

#include "pixsup/tensor.hpp"

namespace pixsup {

/// Denominator guard for max-normalization.
inline constexpr double kCamNormEps = 1e-5;
/// Probability clamp used by the binary cross-entropy.
inline constexpr double kBceEps = 1e-7;

using ClassSet = std::vector<bool>;

/// Multi-hot label (0/1 per foreground class) to a presence mask.
inline ClassSet present_classes(const std::vector<int>& label) {
  ClassSet out(label.size());
  for (std::size_t i = 0; i < label.size(); ++i) out[i] = label[i] != 0;
  return out;
}

template <class T>
T sigmoid(T z) {
  return z >= T(0) ? T(1) / (T(1) + std::exp(-z)) : std::exp(z) / (T(1) + std::exp(z));
}

/// Global average pooling over each channel followed by a sigmoid.
template <class T>
std::vector<T> gap_sigmoid(const Tensor<T>& raw_cam) {
  const int n = raw_cam.dim(0);
  std::vector<T> out(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    const auto ch = raw_cam.channel(k);
    T s = 0;
    for (T v : ch) s += v;
    out[static_cast<std::size_t>(k)] = sigmoid<T>(s / static_cast<T>(ch.size()));
  }
  return out;
}

/**
 * Rectifies and max-scales each present channel: A_k <- relu(A_k) /
 * (max relu(A_k) + eps). Channels of absent classes come out all-zero.
 */
template <class T>
Tensor<T> normalize_cams(const Tensor<T>& raw, const ClassSet& present, double eps = kCamNormEps) {
  if (raw.rank() != 3 || static_cast<std::size_t>(raw.dim(0)) != present.size())
    throw ShapeError("normalize_cams: channel count does not match the class set");
  Tensor<T> out(raw.shape());
  for (int k = 0; k < raw.dim(0); ++k) {
    if (!present[static_cast<std::size_t>(k)]) continue;
    const auto src = raw.channel(k);
    auto dst = out.channel(k);
    T m = 0;
    for (T v : src) m = std::max(m, v);
    const T denom = m + static_cast<T>(eps);
    for (std::size_t p = 0; p < src.size(); ++p) dst[p] = src[p] > T(0) ? src[p] / denom : T(0);
  }
  return out;
}

/// Gradient of normalize_cams with respect to its raw input.
template <class T>
Tensor<T> normalize_cams_backward(const Tensor<T>& raw, const ClassSet& present, const Tensor<T>& grad_out,
                                  double eps = kCamNormEps) {
  Tensor<T> grad(raw.shape());
  for (int k = 0; k < raw.dim(0); ++k) {
    if (!present[static_cast<std::size_t>(k)]) continue;
    const auto src = raw.channel(k);
    const auto g = grad_out.channel(k);
    auto dst = grad.channel(k);
    std::size_t arg = 0;
    T m = 0;
    for (std::size_t p = 0; p < src.size(); ++p) {
      if (src[p] > m) {
        m = src[p];
        arg = p;
      }
    }
    const T denom = m + static_cast<T>(eps);
    T dot = 0;  // sum_p g_p * relu(r_p)
    for (std::size_t p = 0; p < src.size(); ++p) {
      if (src[p] > T(0)) {
        dst[p] = g[p] / denom;
        dot += g[p] * src[p];
      }
    }
    if (m > T(0)) dst[arg] -= dot / (denom * denom);
  }
  return grad;
}

enum class MsinfRule { kMean, kMax };

/**
 * Aggregates aligned per-scale CAM stacks into one: elementwise mean (or
 * max) across scales, then per-present-class max renormalization.
 */
template <class T>
Tensor<T> msinf_aggregate(const std::vector<Tensor<T>>& aligned, const ClassSet& present,
                          MsinfRule rule = MsinfRule::kMean) {
  if (aligned.empty()) throw ShapeError("msinf_aggregate needs at least one scale");
  Tensor<T> acc = aligned.front();
  for (std::size_t s = 1; s < aligned.size(); ++s) {
    if (!aligned[s].same_shape(acc)) throw ShapeError("msinf_aggregate: scales are not aligned");
    for (std::size_t i = 0; i < acc.size(); ++i)
      acc[i] = rule == MsinfRule::kMean ? acc[i] + aligned[s][i] : std::max(acc[i], aligned[s][i]);
  }
  if (rule == MsinfRule::kMean) acc *= static_cast<T>(1.0 / static_cast<double>(aligned.size()));
  return normalize_cams(acc, present);
}

/// Mean binary cross-entropy over classes, probabilities clamped to [eps, 1-eps].
template <class T>
double classification_loss(const std::vector<T>& scores, const std::vector<int>& label) {
  if (scores.size() != label.size()) throw ShapeError("classification_loss: score/label length mismatch");
  double loss = 0;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    const double p = std::clamp(static_cast<double>(scores[k]), kBceEps, 1.0 - kBceEps);
    loss -= label[k] ? std::log(p) : std::log(1.0 - p);
  }
  return loss / static_cast<double>(scores.size());
}

/**
 * Gradient of classification_loss with respect to the raw CAMs that
 * produced the scores via gap_sigmoid. `scale` multiplies the result.
 */
template <class T>
Tensor<T> classification_loss_backward(const Tensor<T>& raw_cam, const std::vector<T>& scores,
                                       const std::vector<int>& label, double scale = 1.0) {
  Tensor<T> grad(raw_cam.shape());
  const int n = raw_cam.dim(0);
  const double plane = static_cast<double>(raw_cam.dim(1)) * raw_cam.dim(2);
  for (int k = 0; k < n; ++k) {
    const double s = scores[static_cast<std::size_t>(k)];
    // Inside the clamp, d(BCE)/d(logit) = s - t.
    const bool clamped = s < kBceEps || s > 1.0 - kBceEps;
    const double dz = clamped ? 0.0 : (s - label[static_cast<std::size_t>(k)]);
    const T g = static_cast<T>(scale * dz / n / plane);
    for (auto& v : grad.channel(k)) v = g;
  }
  return grad;
}

}  // namespace pixsup

#endif  // PIXSUP_CAM_HPP
