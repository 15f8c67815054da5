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

#ifndef PIXSUP_BACKBONE_HPP
#define PIXSUP_BACKBONE_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "pixsup/cam.hpp"
#include "pixsup/params.hpp"
#include "pixsup/tensor.hpp"

namespace pixsup {

/**
 * Architecture of the small strided CNN shared by both networks.
 *
 * Each block is a padded 3x3 convolution followed by ReLU. The last block's
 * output goes through a 1x1 projection to `feature_dim` channels (the
 * feature map X, no activation) and a bias-free 1x1 head to `num_classes`
 * channels (the raw CAMs).
 */
struct BackboneConfig {
  int in_channels = 3;
  std::vector<int> widths{16, 32, 48, 64};
  std::vector<int> strides{2, 2, 2, 1};
  int feature_dim = 256;
  int num_classes = 4;

  int total_stride() const {
    int s = 1;
    for (int v : strides) s *= v;
    return s;
  }

  void validate() const {
    if (widths.empty() || widths.size() != strides.size()) throw ConfigError("backbone widths/strides mismatch");
    if (in_channels <= 0 || feature_dim <= 0 || num_classes <= 0) throw ConfigError("backbone sizes must be positive");
    for (int s : strides)
      if (s != 1 && s != 2) throw ConfigError("backbone strides must be 1 or 2");
  }
};

// Inputs in [0, 1] are mapped to (x - 0.5) * 4 before the first block.
inline constexpr double kInputMean = 0.5;
inline constexpr double kInputScale = 4.0;

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace detail {

inline int conv_out(int in, int stride) { return (in + 2 - 3) / stride + 1; }

// 3x3, padding 1. cols has shape (C*9, Ho*Wo).
template <class T>
void im2col3(const Tensor<T>& in, int stride, Tensor<T>& cols) {
  const int c = in.dim(0), h = in.dim(1), w = in.dim(2);
  const int ho = conv_out(h, stride), wo = conv_out(w, stride);
  cols = Tensor<T>({c * 9, ho * wo});
  T* dst = cols.data();
  for (int ch = 0; ch < c; ++ch) {
    const T* src = in.data() + static_cast<std::size_t>(ch) * h * w;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        for (int y = 0; y < ho; ++y) {
          const int iy = y * stride + ky - 1;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + wo, T(0));
            dst += wo;
            continue;
          }
          const T* row = src + static_cast<std::size_t>(iy) * w;
          for (int x = 0; x < wo; ++x) {
            const int ix = x * stride + kx - 1;
            *dst++ = (ix < 0 || ix >= w) ? T(0) : row[ix];
          }
        }
      }
    }
  }
}

template <class T>
Tensor<T> col2im3(const Tensor<T>& cols, int c, int h, int w, int stride) {
  const int ho = conv_out(h, stride), wo = conv_out(w, stride);
  Tensor<T> out({c, h, w});
  const T* src = cols.data();
  for (int ch = 0; ch < c; ++ch) {
    T* dst = out.data() + static_cast<std::size_t>(ch) * h * w;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        for (int y = 0; y < ho; ++y) {
          const int iy = y * stride + ky - 1;
          if (iy < 0 || iy >= h) {
            src += wo;
            continue;
          }
          T* row = dst + static_cast<std::size_t>(iy) * w;
          for (int x = 0; x < wo; ++x, ++src) {
            const int ix = x * stride + kx - 1;
            if (ix >= 0 && ix < w) row[ix] += *src;
          }
        }
      }
    }
  }
  return out;
}

template <class T>
Eigen::Map<const RowMatrix<T>> as_matrix(const Tensor<T>& t, int rows, int cols) {
  return Eigen::Map<const RowMatrix<T>>(t.data(), rows, cols);
}
template <class T>
Eigen::Map<RowMatrix<T>> as_matrix(Tensor<T>& t, int rows, int cols) {
  return Eigen::Map<RowMatrix<T>>(t.data(), rows, cols);
}

inline std::string block_name(std::size_t i) { return "block" + std::to_string(i + 1); }

}  // namespace detail

/// Fresh parameters: He-normal weights, zero biases, deterministic in seed.
template <class T>
ParameterCollection<T> init_backbone(const BackboneConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  ParameterCollection<T> p;
  auto he = [&](std::vector<int> shape, int fan_in) {
    Tensor<T> w(std::move(shape));
    const double std = std::sqrt(2.0 / fan_in);
    for (auto& v : w.values()) v = static_cast<T>(normal(rng) * std);
    return w;
  };
  int in = cfg.in_channels;
  for (std::size_t i = 0; i < cfg.widths.size(); ++i) {
    const int out = cfg.widths[i];
    p.add(detail::block_name(i) + ".weight", he({out, in, 3, 3}, in * 9));
    p.add(detail::block_name(i) + ".bias", Tensor<T>({out}));
    in = out;
  }
  p.add("proj.weight", he({cfg.feature_dim, in, 1, 1}, in));
  p.add("proj.bias", Tensor<T>({cfg.feature_dim}));
  // Small head init keeps the initial scores near 0.5.
  Tensor<T> head({cfg.num_classes, cfg.feature_dim, 1, 1});
  const double head_std = std::sqrt(1.0 / cfg.feature_dim);
  for (auto& v : head.values()) v = static_cast<T>(normal(rng) * head_std);
  p.add("head.weight", std::move(head));
  return p;
}

/// Throws ConfigError unless `p` has exactly the layout `cfg` implies.
template <class T>
void check_backbone_params(const ParameterCollection<T>& p, const BackboneConfig& cfg) {
  const auto expected = init_backbone<float>(cfg, 0);
  if (p.size() != expected.size()) throw ConfigError("parameter count does not match the backbone architecture");
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto& a = p.entries()[i];
    const auto& b = expected.entries()[i];
    if (a.name != b.name || a.value.shape() != b.value.shape())
      throw ConfigError("parameter '" + a.name + "' " + a.value.shape_string() + " does not match architecture ('" +
                        b.name + "' " + b.value.shape_string() + ")");
  }
}

template <class T>
struct BackboneOutput {
  Tensor<T> features;      // (D, h, w)
  Tensor<T> raw_cam;       // (N, h, w), before rectification
  Tensor<T> cam;           // rectified, per-channel max-normalized
  std::vector<T> scores;   // sigmoid(GAP(raw_cam))
};

/// Activations kept by a forward pass so gradients can be propagated back.
template <class T>
struct BackboneTrace {
  std::vector<Tensor<T>> cols;     // im2col of each block's input
  std::vector<Tensor<T>> outputs;  // post-ReLU output of each block
  std::vector<std::array<int, 3>> input_shapes;
  Tensor<T> features;
};

/**
 * Runs one image (C, H, W) through the network. When `trace` is non-null
 * the activations needed by backbone_backward are recorded.
 */
template <class T>
BackboneOutput<T> backbone_forward(const Tensor<T>& image, const ParameterCollection<T>& p, const BackboneConfig& cfg,
                                   BackboneTrace<T>* trace = nullptr) {
  if (image.rank() != 3 || image.dim(0) != cfg.in_channels) throw ShapeError("image must be (C, H, W) with C = in_channels");
  const int stride = cfg.total_stride();
  if (image.dim(1) % stride != 0 || image.dim(2) % stride != 0)
    throw InputError("image size " + image.shape_string() + " is not divisible by the network stride " +
                     std::to_string(stride));
  if (trace != nullptr) {
    trace->cols.assign(cfg.widths.size(), {});
    trace->outputs.assign(cfg.widths.size(), {});
    trace->input_shapes.assign(cfg.widths.size(), {});
  }

  Tensor<T> cols;
  Tensor<T> x = image;
  for (auto& v : x.values()) v = static_cast<T>((v - kInputMean) * kInputScale);
  for (std::size_t i = 0; i < cfg.widths.size(); ++i) {
    const auto& w = p.at(detail::block_name(i) + ".weight");
    const auto& b = p.at(detail::block_name(i) + ".bias");
    const int cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
    if (w.dim(1) != cin) throw ConfigError("block input channel mismatch");
    const int cout = w.dim(0);
    const int ho = detail::conv_out(h, cfg.strides[i]), wo = detail::conv_out(wd, cfg.strides[i]);
    detail::im2col3(x, cfg.strides[i], cols);
    Tensor<T> y({cout, ho, wo});
    auto ym = detail::as_matrix(y, cout, ho * wo);
    ym.noalias() = detail::as_matrix(w, cout, cin * 9) * detail::as_matrix(cols, cin * 9, ho * wo);
    for (int o = 0; o < cout; ++o) ym.row(o).array() += b[static_cast<std::size_t>(o)];
    for (auto& v : y.values()) v = v > T(0) ? v : T(0);
    if (trace != nullptr) {
      trace->input_shapes[i] = {cin, h, wd};
      trace->cols[i] = std::move(cols);
      trace->outputs[i] = y;
    }
    x = std::move(y);
  }

  const int hw = x.dim(1) * x.dim(2);
  const auto& pw = p.at("proj.weight");
  const auto& pb = p.at("proj.bias");
  BackboneOutput<T> out;
  out.features = Tensor<T>({cfg.feature_dim, x.dim(1), x.dim(2)});
  auto fm = detail::as_matrix(out.features, cfg.feature_dim, hw);
  fm.noalias() = detail::as_matrix(pw, cfg.feature_dim, x.dim(0)) * detail::as_matrix(x, x.dim(0), hw);
  for (int o = 0; o < cfg.feature_dim; ++o) fm.row(o).array() += pb[static_cast<std::size_t>(o)];

  const auto& hw_w = p.at("head.weight");
  out.raw_cam = Tensor<T>({cfg.num_classes, x.dim(1), x.dim(2)});
  detail::as_matrix(out.raw_cam, cfg.num_classes, hw).noalias() =
      detail::as_matrix(hw_w, cfg.num_classes, cfg.feature_dim) * fm;

  if (trace != nullptr) trace->features = out.features;
  out.scores = gap_sigmoid(out.raw_cam);
  out.cam = normalize_cams(out.raw_cam, std::vector<bool>(static_cast<std::size_t>(cfg.num_classes), true));
  return out;
}

/**
 * Accumulates parameter gradients into `grads` given upstream gradients on
 * the feature map and on the raw CAMs of one traced forward pass. Either
 * upstream gradient may be empty (treated as zero).
 */
template <class T>
void backbone_backward(const BackboneTrace<T>& trace, const ParameterCollection<T>& p, const BackboneConfig& cfg,
                       const Tensor<T>& grad_features, const Tensor<T>& grad_raw_cam, ParameterCollection<T>& grads) {
  const auto& last = trace.outputs.back();
  const int cl = last.dim(0), hw = last.dim(1) * last.dim(2);
  const int d = cfg.feature_dim, n = cfg.num_classes;

  Tensor<T> gf({d, last.dim(1), last.dim(2)});
  auto gfm = detail::as_matrix(gf, d, hw);
  if (!grad_features.empty()) gfm = detail::as_matrix(grad_features, d, hw);
  if (!grad_raw_cam.empty()) {
    const auto feats = detail::as_matrix(trace.features, d, hw);
    auto gcam = detail::as_matrix(grad_raw_cam, n, hw);
    detail::as_matrix(grads.at("head.weight"), n, d).noalias() += gcam * feats.transpose();
    gfm.noalias() += detail::as_matrix(p.at("head.weight"), n, d).transpose() * gcam;
  }

  detail::as_matrix(grads.at("proj.weight"), d, cl).noalias() += gfm * detail::as_matrix(last, cl, hw).transpose();
  {
    auto& gb = grads.at("proj.bias");
    for (int o = 0; o < d; ++o) gb[static_cast<std::size_t>(o)] += gfm.row(o).sum();
  }
  Tensor<T> gx({cl, last.dim(1), last.dim(2)});
  detail::as_matrix(gx, cl, hw).noalias() = detail::as_matrix(p.at("proj.weight"), d, cl).transpose() * gfm;

  for (std::size_t ii = cfg.widths.size(); ii-- > 0;) {
    const auto& y = trace.outputs[ii];
    for (std::size_t j = 0; j < gx.size(); ++j)
      if (!(y[j] > T(0))) gx[j] = T(0);
    const auto [cin, h, wd] = trace.input_shapes[ii];
    const int cout = y.dim(0), ohw = y.dim(1) * y.dim(2);
    const auto gym = detail::as_matrix(std::as_const(gx), cout, ohw);
    const auto colm = detail::as_matrix(trace.cols[ii], cin * 9, ohw);
    detail::as_matrix(grads.at(detail::block_name(ii) + ".weight"), cout, cin * 9).noalias() += gym * colm.transpose();
    auto& gb = grads.at(detail::block_name(ii) + ".bias");
    for (int o = 0; o < cout; ++o) gb[static_cast<std::size_t>(o)] += gym.row(o).sum();
    if (ii == 0) break;  // no gradient needed for the image
    Tensor<T> gcols({cin * 9, ohw});
    detail::as_matrix(gcols, cin * 9, ohw).noalias() =
        detail::as_matrix(p.at(detail::block_name(ii) + ".weight"), cout, cin * 9).transpose() * gym;
    gx = detail::col2im3(gcols, cin, h, wd, cfg.strides[ii]);
  }
}

}  // namespace pixsup

#endif  // PIXSUP_BACKBONE_HPP
