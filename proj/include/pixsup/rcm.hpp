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

// Regional contrastive supervision: class region masks from teacher CAMs,
// masked-mean class prototypes, and the pixel-to-prototype contrastive loss.

#ifndef PIXSUP_RCM_HPP
#define PIXSUP_RCM_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pixsup/cam.hpp"
#include "pixsup/tensor.hpp"

namespace pixsup {

enum class RcmLossForm {
  kInfoNceLog,  // -log softmax
  kLiteral,     // -softmax, no logarithm
};

struct RcmConfig {
  double threshold = 0.20;
  double temperature = 0.5;
  RcmLossForm loss_form = RcmLossForm::kInfoNceLog;

  void validate() const {
    if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("rcm threshold must lie in (0, 1)");
    if (!(temperature > 0.0)) throw ConfigError("rcm temperature must be positive");
  }
};

/**
 * Exact partition of the pixels into background (0) and foreground classes
 * 1..N. Stored as an index map; channel(k) gives the binary mask M^k.
 */
struct ClassRegionMasks {
  Tensor<int> index;  // (H, W), values in {0..N}
  int num_classes = 0;
  double threshold = 0.0;

  int height() const { return index.dim(0); }
  int width() const { return index.dim(1); }

  Tensor<int> channel(int k) const {
    Tensor<int> m(index.shape());
    for (std::size_t p = 0; p < index.size(); ++p) m[p] = index[p] == k ? 1 : 0;
    return m;
  }

  /// (N+1, H, W) binary stack, background first.
  Tensor<int> stacked() const {
    Tensor<int> out({num_classes + 1, height(), width()});
    for (std::size_t p = 0; p < index.size(); ++p)
      out[static_cast<std::size_t>(index[p]) * index.size() + p] = 1;
    return out;
  }

  std::vector<int> counts() const {
    std::vector<int> c(static_cast<std::size_t>(num_classes + 1), 0);
    for (int v : index.values()) ++c[static_cast<std::size_t>(v)];
    return c;
  }
};

/**
 * A pixel goes to the present class with the largest CAM value, provided
 * that value exceeds `threshold`; every other pixel is background. Ties go
 * to the lower class index.
 */
template <class T>
ClassRegionMasks class_region_masks(const Tensor<T>& cams, const ClassSet& present, double threshold) {
  if (cams.rank() != 3 || static_cast<std::size_t>(cams.dim(0)) != present.size())
    throw ShapeError("class_region_masks: CAM channels do not match the class set");
  const int n = cams.dim(0), h = cams.dim(1), w = cams.dim(2);
  ClassRegionMasks m{Tensor<int>({h, w}), n, threshold};
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (std::size_t p = 0; p < plane; ++p) {
    int best = -1;
    T best_v = T(0);
    for (int k = 0; k < n; ++k) {
      if (!present[static_cast<std::size_t>(k)]) continue;
      const T v = cams[static_cast<std::size_t>(k) * plane + p];
      if (best < 0 || v > best_v) {
        best = k;
        best_v = v;
      }
    }
    m.index[p] = (best >= 0 && static_cast<double>(best_v) > threshold) ? best + 1 : 0;
  }
  return m;
}

/// Per-image masked-mean features: row k of `vectors` is the mean feature of
/// class k's region, valid only where counts[k] > 0.
template <class T>
struct ImagePrototypes {
  Tensor<T> vectors;  // (N+1, D)
  std::vector<int> counts;

  bool empty(int k) const { return counts[static_cast<std::size_t>(k)] == 0; }
};

template <class T>
ImagePrototypes<T> image_prototypes(const Tensor<T>& features, const ClassRegionMasks& masks) {
  if (features.rank() != 3 || features.dim(1) != masks.height() || features.dim(2) != masks.width())
    throw ShapeError("image_prototypes: features and masks are not aligned");
  const int d = features.dim(0), classes = masks.num_classes + 1;
  const std::size_t plane = masks.index.size();
  ImagePrototypes<T> out{Tensor<T>({classes, d}), masks.counts()};
  std::vector<double> acc(static_cast<std::size_t>(classes) * d, 0.0);
  for (int c = 0; c < d; ++c) {
    const auto f = features.channel(c);
    for (std::size_t p = 0; p < plane; ++p) acc[static_cast<std::size_t>(masks.index[p]) * d + c] += f[p];
  }
  for (int k = 0; k < classes; ++k) {
    const int n = out.counts[static_cast<std::size_t>(k)];
    if (n == 0) continue;
    for (int c = 0; c < d; ++c) out.vectors(k, c) = static_cast<T>(acc[static_cast<std::size_t>(k) * d + c] / n);
  }
  return out;
}

/**
 * Unit-length class prototypes, background in row 0. A class keeps its
 * last non-empty vector when a batch does not contain it.
 */
template <class T>
struct PrototypeBank {
  Tensor<T> vectors;  // (N+1, D)
  std::vector<bool> valid;
  std::vector<std::int64_t> last_update;

  PrototypeBank() = default;
  PrototypeBank(int num_classes, int dim)
      : vectors({num_classes + 1, dim}),
        valid(static_cast<std::size_t>(num_classes + 1), false),
        last_update(static_cast<std::size_t>(num_classes + 1), -1) {}

  int classes() const { return vectors.dim(0); }
  int dim() const { return vectors.dim(1); }
  bool all_valid() const { return std::all_of(valid.begin(), valid.end(), [](bool v) { return v; }); }
  std::span<const T> row(int k) const {
    return {vectors.data() + static_cast<std::size_t>(k) * dim(), static_cast<std::size_t>(dim())};
  }
};

/// Updates every class seen in the batch with the L2-normalized mean of its
/// non-empty per-image prototypes.
template <class T>
void update_prototype_bank(PrototypeBank<T>& bank, const std::vector<ImagePrototypes<T>>& batch, std::int64_t step) {
  const int classes = bank.classes(), d = bank.dim();
  for (int k = 0; k < classes; ++k) {
    std::vector<double> mean(static_cast<std::size_t>(d), 0.0);
    int n = 0;
    for (const auto& img : batch) {
      if (img.vectors.dim(0) != classes || img.vectors.dim(1) != d)
        throw ShapeError("update_prototype_bank: prototype shape mismatch");
      if (img.empty(k)) continue;
      ++n;
      for (int c = 0; c < d; ++c) mean[static_cast<std::size_t>(c)] += img.vectors(k, c);
    }
    if (n == 0) continue;
    double norm = 0;
    for (auto& v : mean) {
      v /= n;
      norm += v * v;
    }
    norm = std::sqrt(norm);
    if (!(norm > 0.0)) continue;
    for (int c = 0; c < d; ++c) bank.vectors(k, c) = static_cast<T>(mean[static_cast<std::size_t>(c)] / norm);
    bank.valid[static_cast<std::size_t>(k)] = true;
    bank.last_update[static_cast<std::size_t>(k)] = step;
  }
}

/// exp(x . p) for two L2-normalized vectors.
template <class T>
T similarity(std::span<const T> x, std::span<const T> p) {
  if (x.size() != p.size()) throw ShapeError("similarity: dimension mismatch");
  T dot = 0;
  for (std::size_t i = 0; i < x.size(); ++i) dot += x[i] * p[i];
  return std::exp(dot);
}

/**
 * Contrastive loss of one pixel given its logits z_w = (x . p_w) / T over
 * all prototypes and its target class. Writes dL/dz into `grad` when it is
 * non-empty.
 */
inline double contrastive_pixel_loss(std::span<const double> logits, int target, RcmLossForm form,
                                     std::span<double> grad = {}) {
  const double zmax = *std::max_element(logits.begin(), logits.end());
  double denom = 0;
  for (double z : logits) denom += std::exp(z - zmax);
  const auto prob = [&](std::size_t w) { return std::exp(logits[w] - zmax) / denom; };
  const double pk = prob(static_cast<std::size_t>(target));
  if (!grad.empty()) {
    for (std::size_t w = 0; w < logits.size(); ++w) {
      const double delta = static_cast<int>(w) == target ? 1.0 : 0.0;
      const double pw = prob(w);
      grad[w] = form == RcmLossForm::kInfoNceLog ? pw - delta : -pk * (delta - pw);
    }
  }
  if (form == RcmLossForm::kInfoNceLog) return -(logits[static_cast<std::size_t>(target)] - zmax - std::log(denom));
  return -pk;
}

/// Unnormalized RCM loss of one image, its contributing pixel count and the
/// gradient of the sum with respect to the raw (unnormalized) features.
template <class T>
struct RcmTerms {
  double sum = 0;
  int pixels = 0;
  bool skipped = false;
  Tensor<T> grad;  // (D, H, W); empty when skipped or not requested
};

inline constexpr double kFeatureNormEps = 1e-12;

template <class T>
RcmTerms<T> rcm_loss_terms(const Tensor<T>& features, const ClassRegionMasks& masks, const PrototypeBank<T>& bank,
                           const RcmConfig& cfg, bool want_grad = true) {
  cfg.validate();
  if (features.rank() != 3 || features.dim(1) != masks.height() || features.dim(2) != masks.width())
    throw ShapeError("rcm_loss: features and masks are not aligned");
  if (features.dim(0) != bank.dim() || bank.classes() != masks.num_classes + 1)
    throw ShapeError("rcm_loss: prototype bank does not match features/masks");
  RcmTerms<T> out;
  if (!bank.all_valid()) {
    out.skipped = true;
    return out;
  }
  const int d = features.dim(0), classes = bank.classes();
  const std::size_t plane = masks.index.size();
  const double inv_t = 1.0 / cfg.temperature;
  if (want_grad) out.grad = Tensor<T>(features.shape());

  std::vector<double> x(static_cast<std::size_t>(d)), logits(static_cast<std::size_t>(classes)),
      dz(static_cast<std::size_t>(classes)), dx(static_cast<std::size_t>(d));
  for (std::size_t p = 0; p < plane; ++p) {
    double norm = 0;
    for (int c = 0; c < d; ++c) {
      x[static_cast<std::size_t>(c)] = features[static_cast<std::size_t>(c) * plane + p];
      norm += x[static_cast<std::size_t>(c)] * x[static_cast<std::size_t>(c)];
    }
    norm = std::max(std::sqrt(norm), kFeatureNormEps);
    for (auto& v : x) v /= norm;
    for (int w = 0; w < classes; ++w) {
      const auto pw = bank.row(w);
      double dot = 0;
      for (int c = 0; c < d; ++c) dot += x[static_cast<std::size_t>(c)] * pw[static_cast<std::size_t>(c)];
      logits[static_cast<std::size_t>(w)] = dot * inv_t;
    }
    out.sum += contrastive_pixel_loss(logits, masks.index[p], cfg.loss_form, want_grad ? std::span<double>(dz) : std::span<double>{});
    ++out.pixels;
    if (!want_grad) continue;
    // dL/dx = sum_w dz_w p_w / T, then through x = f / |f|.
    std::fill(dx.begin(), dx.end(), 0.0);
    for (int w = 0; w < classes; ++w) {
      const auto pw = bank.row(w);
      const double s = dz[static_cast<std::size_t>(w)] * inv_t;
      for (int c = 0; c < d; ++c) dx[static_cast<std::size_t>(c)] += s * pw[static_cast<std::size_t>(c)];
    }
    double xdx = 0;
    for (int c = 0; c < d; ++c) xdx += x[static_cast<std::size_t>(c)] * dx[static_cast<std::size_t>(c)];
    for (int c = 0; c < d; ++c)
      out.grad[static_cast<std::size_t>(c) * plane + p] =
          static_cast<T>((dx[static_cast<std::size_t>(c)] - x[static_cast<std::size_t>(c)] * xdx) / norm);
  }
  return out;
}

/// RCM loss of one image normalized by its masked pixel count.
template <class T>
double rcm_loss(const Tensor<T>& features, const ClassRegionMasks& masks, const PrototypeBank<T>& bank,
                const RcmConfig& cfg) {
  const auto terms = rcm_loss_terms(features, masks, bank, cfg, false);
  return terms.pixels == 0 ? 0.0 : terms.sum / terms.pixels;
}

}  // namespace pixsup

#endif  // PIXSUP_RCM_HPP
