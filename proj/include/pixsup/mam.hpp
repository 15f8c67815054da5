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

// Multi-scale attentive supervision. Student CAMs at each scale are pulled
// (L1) towards a mix of the teacher's CAMs at all scales, weighted by the
// class-wise cosine distance between student and teacher maps.

#ifndef PIXSUP_MAM_HPP
#define PIXSUP_MAM_HPP

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "pixsup/cam.hpp"
#include "pixsup/tensor.hpp"

namespace pixsup {

enum class MamMode {
  kMam,  // attention-weighted targets, all student scales
  kMmm,  // uniform weights, all student scales
  kSmm,  // uniform weights, medium student scale only
};

inline MamMode parse_mam_mode(const std::string& s) {
  if (s == "mam" || s == "MAM") return MamMode::kMam;
  if (s == "mmm" || s == "MMM") return MamMode::kMmm;
  if (s == "smm" || s == "SMM") return MamMode::kSmm;
  throw ConfigError("unknown MAM mode '" + s + "' (expected mam, mmm or smm)");
}

inline const char* to_string(MamMode m) {
  switch (m) {
    case MamMode::kMam: return "mam";
    case MamMode::kMmm: return "mmm";
    case MamMode::kSmm: return "smm";
  }
  return "?";
}

struct MamConfig {
  MamMode mode = MamMode::kMam;
  /// When false, gradient also flows through the cosine distances.
  bool detach_attention = true;
};

inline constexpr int kScales = 3;
inline constexpr int kMediumScale = 1;
inline constexpr double kCosineNormEps = 1e-8;

/// Cosine distances xi(k, i, j) between student scale i and teacher scale j
/// for class k. Entries of absent classes are left at 1.
template <class T>
struct Dissimilarity {
  Tensor<T> xi;  // (N, 3, 3)
  ClassSet present;
  int degenerate = 0;
};

template <class T>
using ScaleStack = std::vector<Tensor<T>>;  // three aligned (N, H, W) maps

namespace detail {

template <class T>
void check_stacks(const ScaleStack<T>& a, const ScaleStack<T>& b, const ClassSet& present) {
  if (a.size() != kScales || b.size() != kScales) throw ShapeError("MAM expects three scales per network");
  for (int s = 0; s < kScales; ++s) {
    if (!a[s].same_shape(a[0]) || !b[s].same_shape(a[0])) throw ShapeError("MAM stacks are not aligned");
  }
  if (static_cast<std::size_t>(a[0].dim(0)) != present.size()) throw ShapeError("MAM class count mismatch");
}

template <class T>
double dot(std::span<const T> a, std::span<const T> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

}  // namespace detail

/// xi = 2 - cos(vec A_F[i,k], vec A_G[j,k]) for present classes. A vector
/// with norm below 1e-8 makes its entries neutral (1) and is counted.
template <class T>
Dissimilarity<T> cosine_distance(const ScaleStack<T>& student, const ScaleStack<T>& teacher, const ClassSet& present) {
  detail::check_stacks(student, teacher, present);
  const int n = student[0].dim(0);
  Dissimilarity<T> out{Tensor<T>({n, kScales, kScales}, T(1)), present, 0};
  for (int k = 0; k < n; ++k) {
    if (!present[static_cast<std::size_t>(k)]) continue;
    for (int i = 0; i < kScales; ++i) {
      const auto a = student[i].channel(k);
      const double na = std::sqrt(detail::dot<T>(a, a));
      for (int j = 0; j < kScales; ++j) {
        const auto b = teacher[j].channel(k);
        const double nb = std::sqrt(detail::dot<T>(b, b));
        if (na < kCosineNormEps || nb < kCosineNormEps) {
          ++out.degenerate;
          continue;
        }
        out.xi(k, i, j) = static_cast<T>(2.0 - detail::dot<T>(a, b) / (na * nb));
      }
    }
  }
  return out;
}

/// Forces every entry to 1 (no attention).
template <class T>
Dissimilarity<T> uniform_dissimilarity(int num_classes, const ClassSet& present) {
  return {Tensor<T>({num_classes, kScales, kScales}, T(1)), present, 0};
}

/// target[i] = (1/3) sum_j xi(k, i, j) * teacher[j] per present class k.
template <class T>
ScaleStack<T> target_cams(const Dissimilarity<T>& xi, const ScaleStack<T>& teacher) {
  if (teacher.size() != kScales) throw ShapeError("target_cams expects three teacher scales");
  const int n = teacher[0].dim(0);
  if (xi.xi.dim(0) != n) throw ShapeError("target_cams: class count mismatch");
  ScaleStack<T> out(kScales, Tensor<T>(teacher[0].shape()));
  for (int i = 0; i < kScales; ++i) {
    for (int k = 0; k < n; ++k) {
      if (!xi.present[static_cast<std::size_t>(k)]) continue;
      auto dst = out[i].channel(k);
      for (int j = 0; j < kScales; ++j) {
        const T w = xi.xi(k, i, j) / T(3);
        const auto src = teacher[j].channel(k);
        for (std::size_t p = 0; p < dst.size(); ++p) dst[p] += w * src[p];
      }
    }
  }
  return out;
}

template <class T>
struct MamResult {
  double loss = 0;
  int pairs = 0;
  Dissimilarity<T> xi;
  ScaleStack<T> targets;
  ScaleStack<T> grad;  // d loss / d student, one per scale; empty if not requested
};

/**
 * L1 distance between the targets and the student CAMs over present
 * classes, normalized by pixel count times the number of contributing
 * (class, scale) pairs. Only the student rows in `rows` contribute.
 */
template <class T>
double mam_loss(const ScaleStack<T>& targets, const ScaleStack<T>& student, const ClassSet& present,
                const std::vector<int>& rows = {0, 1, 2}, ScaleStack<T>* grad = nullptr) {
  detail::check_stacks(student, targets, present);
  const int n = student[0].dim(0);
  const std::size_t plane = static_cast<std::size_t>(student[0].dim(1)) * student[0].dim(2);
  int classes = 0;
  for (bool b : present) classes += b ? 1 : 0;
  if (grad != nullptr) grad->assign(kScales, Tensor<T>(student[0].shape()));
  if (classes == 0) return 0.0;
  const double norm = static_cast<double>(plane) * classes * static_cast<double>(rows.size());
  double total = 0;
  for (int i : rows) {
    for (int k = 0; k < n; ++k) {
      if (!present[static_cast<std::size_t>(k)]) continue;
      const auto a = student[i].channel(k);
      const auto t = targets[i].channel(k);
      for (std::size_t p = 0; p < plane; ++p) {
        const double diff = static_cast<double>(t[p]) - a[p];
        total += std::abs(diff);
        if (grad != nullptr) (*grad)[i].channel(k)[p] = static_cast<T>(diff > 0 ? -1.0 / norm : (diff < 0 ? 1.0 / norm : 0.0));
      }
    }
  }
  return total / norm;
}

/**
 * Full module evaluation for one image: distances, targets, loss and
 * (optionally) the gradient with respect to the student CAMs.
 */
template <class T>
MamResult<T> mam_forward(const ScaleStack<T>& student, const ScaleStack<T>& teacher, const ClassSet& present,
                         const MamConfig& cfg, bool want_grad = true) {
  detail::check_stacks(student, teacher, present);
  const int n = student[0].dim(0);
  MamResult<T> r;
  r.xi = cfg.mode == MamMode::kMam ? cosine_distance(student, teacher, present)
                                   : uniform_dissimilarity<T>(n, present);
  r.targets = target_cams(r.xi, teacher);
  const std::vector<int> rows = cfg.mode == MamMode::kSmm ? std::vector<int>{kMediumScale} : std::vector<int>{0, 1, 2};
  int classes = 0;
  for (bool b : present) classes += b ? 1 : 0;
  r.pairs = classes * static_cast<int>(rows.size());
  r.loss = mam_loss(r.targets, student, present, rows, want_grad ? &r.grad : nullptr);
  if (!want_grad || cfg.detach_attention || cfg.mode != MamMode::kMam || classes == 0) return r;

  // Gradient through xi(k, i, j) = 2 - cos(a_i, b_j).
  const std::size_t plane = static_cast<std::size_t>(student[0].dim(1)) * student[0].dim(2);
  const double norm = static_cast<double>(plane) * r.pairs;
  for (int i = 0; i < kScales; ++i) {
    for (int k = 0; k < n; ++k) {
      if (!present[static_cast<std::size_t>(k)]) continue;
      const auto a = student[i].channel(k);
      const auto t = r.targets[i].channel(k);
      const double na = std::sqrt(detail::dot<T>(a, a));
      if (na < kCosineNormEps) continue;
      auto g = r.grad[i].channel(k);
      for (int j = 0; j < kScales; ++j) {
        const auto b = teacher[j].channel(k);
        const double nb = std::sqrt(detail::dot<T>(b, b));
        if (nb < kCosineNormEps) continue;
        double dl_dxi = 0;
        for (std::size_t p = 0; p < plane; ++p) {
          const double diff = static_cast<double>(t[p]) - a[p];
          const double sgn = diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0);
          dl_dxi += sgn * b[p];
        }
        dl_dxi /= 3.0 * norm;
        const double cos = detail::dot<T>(a, b) / (na * nb);
        for (std::size_t p = 0; p < plane; ++p) {
          const double dcos = b[p] / (na * nb) - cos * a[p] / (na * na);
          g[p] += static_cast<T>(-dl_dxi * dcos);
        }
      }
    }
  }
  return r;
}

/// Loss of one of the three module variants on the same inputs.
template <class T>
double ablation_variant(MamMode mode, const ScaleStack<T>& student, const ScaleStack<T>& teacher,
                        const ClassSet& present) {
  return mam_forward(student, teacher, present, MamConfig{mode, true}, false).loss;
}

}  // namespace pixsup

#endif  // PIXSUP_MAM_HPP
