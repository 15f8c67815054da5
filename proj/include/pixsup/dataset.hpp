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

// Synthetic shapes: textured backgrounds with 1-3 objects of distinct
// classes (circle, square, triangle, ring). Every object carries a small,
// class-specific, high-contrast marker, which is the easiest cue for a
// classifier and therefore what a plain CAM tends to latch onto.

#ifndef PIXSUP_DATASET_HPP
#define PIXSUP_DATASET_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "pixsup/multiscale.hpp"
#include "pixsup/resample.hpp"
#include "pixsup/tensor.hpp"

namespace pixsup {

enum class ShapeKind { kCircle = 1, kSquare = 2, kTriangle = 3, kRing = 4 };

inline constexpr int kShapeClasses = 4;

inline const char* class_name(int id) {
  static constexpr std::array<const char*, 5> names{"background", "circle", "square", "triangle", "ring"};
  return (id >= 0 && id <= kShapeClasses) ? names[static_cast<std::size_t>(id)] : "?";
}

struct ShapeDatasetConfig {
  int image_size = 64;
  int num_classes = kShapeClasses;
  int min_shapes = 1;
  int max_shapes = 3;
  double min_radius = 9.0;
  double max_radius = 15.0;
  int marker_size = 4;
  double body_saturation = 0.35;
  double hue_jitter = 0.05;
  double texture_amplitude = 0.12;
  double pixel_noise = 0.04;
};

/// One placed object; used for rendering and for crop validation.
struct ShapeSpec {
  int class_id = 0;
  double cx = 0, cy = 0, radius = 0;
  std::array<float, 3> body{};
};

namespace detail {

inline std::array<float, 3> hsv_to_rgb(double h, double s, double v) {
  h = std::fmod(h, 1.0) * 6.0;
  const int i = static_cast<int>(std::floor(h));
  const double f = h - i, p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  double r = v, g = t, b = p;
  switch (i % 6) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
  }
  return {static_cast<float>(r), static_cast<float>(g), static_cast<float>(b)};
}

inline bool inside_shape(const ShapeSpec& s, double x, double y) {
  const double dx = x - s.cx, dy = y - s.cy;
  switch (static_cast<ShapeKind>(s.class_id)) {
    case ShapeKind::kCircle: return dx * dx + dy * dy <= s.radius * s.radius;
    case ShapeKind::kSquare: {
      const double half = s.radius * 0.85;
      return std::abs(dx) <= half && std::abs(dy) <= half;
    }
    case ShapeKind::kTriangle: {
      // Upward triangle inscribed in the circle of the given radius.
      const double r = s.radius;
      const double ax = 0, ay = -r, bx = -0.866 * r, by = 0.5 * r, cx = 0.866 * r, cy = 0.5 * r;
      const auto edge = [](double x0, double y0, double x1, double y1, double px, double py) {
        return (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0);
      };
      const double e0 = edge(ax, ay, bx, by, dx, dy), e1 = edge(bx, by, cx, cy, dx, dy), e2 = edge(cx, cy, ax, ay, dx, dy);
      return (e0 <= 0 && e1 <= 0 && e2 <= 0) || (e0 >= 0 && e1 >= 0 && e2 >= 0);
    }
    case ShapeKind::kRing: {
      const double d2 = dx * dx + dy * dy;
      const double inner = s.radius * 0.55;
      return d2 <= s.radius * s.radius && d2 >= inner * inner;
    }
  }
  return false;
}

// Body hues are spread around the colour wheel, one per class.
inline double class_hue(int class_id) { return 0.1 + 0.25 * (class_id - 1); }

// Class-specific marker colours: two saturated colours in a checker.
inline std::array<std::array<float, 3>, 2> marker_colors(int class_id) {
  switch (class_id) {
    case 1: return {{{1.f, 0.1f, 0.1f}, {1.f, 1.f, 0.2f}}};
    case 2: return {{{0.1f, 0.9f, 0.1f}, {0.05f, 0.05f, 0.05f}}};
    case 3: return {{{0.15f, 0.3f, 1.f}, {1.f, 1.f, 1.f}}};
    default: return {{{1.f, 0.2f, 1.f}, {0.1f, 1.f, 1.f}}};
  }
}

inline std::uint64_t sample_seed(std::uint64_t seed, std::uint64_t index, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                    static_cast<std::uint32_t>(stream)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
}

}  // namespace detail

/// A raw sample plus the object layout it was rendered from.
struct GeneratedSample {
  ImageSample sample;
  std::vector<ShapeSpec> shapes;
};

/// Renders sample `index` of the stream identified by `seed`. Pure in
/// (cfg, seed, index).
inline GeneratedSample generate_sample(const ShapeDatasetConfig& cfg, std::uint64_t seed, std::uint64_t index) {
  std::mt19937_64 rng(detail::sample_seed(seed, index, 0));
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const int size = cfg.image_size;
  const int n = cfg.num_classes;

  // Object layout: distinct classes, non-overlapping discs.
  std::uniform_int_distribution<int> count_dist(cfg.min_shapes, std::min(cfg.max_shapes, n));
  const int wanted = count_dist(rng);
  std::vector<int> classes(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) classes[static_cast<std::size_t>(i)] = i + 1;
  std::shuffle(classes.begin(), classes.end(), rng);
  std::vector<ShapeSpec> shapes;
  for (int s = 0; s < wanted; ++s) {
    for (int attempt = 0; attempt < 200; ++attempt) {
      ShapeSpec spec;
      spec.class_id = classes[static_cast<std::size_t>(s)];
      spec.radius = cfg.min_radius + (cfg.max_radius - cfg.min_radius) * uni(rng);
      const double lo = spec.radius + 1, hi = size - spec.radius - 2;
      spec.cx = lo + (hi - lo) * uni(rng);
      spec.cy = lo + (hi - lo) * uni(rng);
      bool clear = true;
      for (const auto& o : shapes) {
        const double dist = std::hypot(o.cx - spec.cx, o.cy - spec.cy);
        if (dist < o.radius + spec.radius + 2) clear = false;
      }
      if (!clear) continue;
      const double hue = detail::class_hue(spec.class_id) + cfg.hue_jitter * (2 * uni(rng) - 1);
      spec.body = detail::hsv_to_rgb(hue + 1.0, cfg.body_saturation, 0.45 + 0.35 * uni(rng));
      shapes.push_back(spec);
      break;
    }
  }
  if (shapes.empty()) throw InputError("could not place any shape; image_size too small for the radius range");

  GeneratedSample g;
  auto& img = g.sample.pixels;
  img = Tensor<float>({3, size, size});
  g.sample.gt_mask = Tensor<int>({size, size});

  // Background: low-saturation base colour, a few random plane waves and
  // per-pixel noise.
  const auto base = detail::hsv_to_rgb(uni(rng), 0.2 * uni(rng), 0.3 + 0.4 * uni(rng));
  struct Wave {
    double fx, fy, phase, amp;
    int ch;
  };
  std::vector<Wave> waves;
  for (int i = 0; i < 6; ++i) {
    const double freq = 0.15 + 0.5 * uni(rng), angle = 2 * std::numbers::pi * uni(rng);
    waves.push_back({freq * std::cos(angle), freq * std::sin(angle), 2 * std::numbers::pi * uni(rng),
                     cfg.texture_amplitude * (0.5 + uni(rng)), static_cast<int>(3 * uni(rng)) % 3});
  }
  std::normal_distribution<double> noise(0.0, cfg.pixel_noise);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      std::array<double, 3> px{base[0], base[1], base[2]};
      for (const auto& w : waves) {
        const double v = w.amp * std::sin(w.fx * x + w.fy * y + w.phase);
        px[0] += v * (w.ch == 0 ? 1.0 : 0.4);
        px[1] += v * (w.ch == 1 ? 1.0 : 0.4);
        px[2] += v * (w.ch == 2 ? 1.0 : 0.4);
      }
      for (int c = 0; c < 3; ++c) img(c, y, x) = static_cast<float>(px[static_cast<std::size_t>(c)]);
    }
  }

  for (const auto& s : shapes) {
    // Marker anchor: a random pixel whose marker square lies fully inside
    // the shape.
    int mx = -1, my = -1;
    const int m = cfg.marker_size;
    for (int attempt = 0; attempt < 400 && mx < 0; ++attempt) {
      const int x0 = static_cast<int>(s.cx - s.radius + 2 * s.radius * uni(rng));
      const int y0 = static_cast<int>(s.cy - s.radius + 2 * s.radius * uni(rng));
      bool ok = true;
      for (int dy = 0; dy < m && ok; ++dy)
        for (int dx = 0; dx < m && ok; ++dx) ok = detail::inside_shape(s, x0 + dx + 0.5, y0 + dy + 0.5);
      if (ok) {
        mx = x0;
        my = y0;
      }
    }
    const auto mc = detail::marker_colors(s.class_id);
    const double shade = 0.85 + 0.3 * uni(rng);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        if (!detail::inside_shape(s, x + 0.5, y + 0.5)) continue;
        g.sample.gt_mask(y, x) = s.class_id;
        const bool in_marker = mx >= 0 && x >= mx && x < mx + m && y >= my && y < my + m;
        for (int c = 0; c < 3; ++c) {
          double v;
          if (in_marker) {
            v = mc[static_cast<std::size_t>(((x - mx) / 2 + (y - my) / 2) % 2)][static_cast<std::size_t>(c)];
          } else {
            v = s.body[static_cast<std::size_t>(c)] * shade;
          }
          img(c, y, x) = static_cast<float>(v);
        }
      }
    }
  }
  for (auto& v : img.values()) v = std::clamp(static_cast<float>(v + noise(rng)), 0.f, 1.f);

  g.sample.label.assign(static_cast<std::size_t>(n), 0);
  for (int v : g.sample.gt_mask.values())
    if (v > 0) g.sample.label[static_cast<std::size_t>(v - 1)] = 1;
  g.shapes = std::move(shapes);
  return g;
}

struct ShapeDataset {
  std::vector<ImageSample> train;
  std::vector<ImageSample> val;
};

/**
 * Deterministic train/val split. Training and validation samples come from
 * disjoint index streams of the same seed.
 */
inline ShapeDataset generate_dataset(int n_train, int n_val, const ShapeDatasetConfig& cfg, std::uint64_t seed,
                                     int stride = 8) {
  if (n_train <= 0 || n_val <= 0) throw InputError("dataset sizes must be positive");
  if (cfg.image_size % stride != 0) throw InputError("image_size must be divisible by the network stride");
  ShapeDataset d;
  d.train.reserve(static_cast<std::size_t>(n_train));
  d.val.reserve(static_cast<std::size_t>(n_val));
  for (int i = 0; i < n_train; ++i) d.train.push_back(generate_sample(cfg, seed, static_cast<std::uint64_t>(i)).sample);
  for (int i = 0; i < n_val; ++i)
    d.val.push_back(generate_sample(cfg, seed, (std::uint64_t{1} << 40) + static_cast<std::uint64_t>(i)).sample);
  return d;
}

struct AugmentConfig {
  int crop = 48;
  double resize_min = 0.5;
  double resize_max = 1.3;
  bool resize = true;
  bool flip = true;
  double flip_probability = 0.5;
  bool jitter = true;
  double jitter_strength = 0.1;
  double min_retained_fraction = 0.25;
  int max_crop_attempts = 20;
};

inline void flip_horizontal(ImageSample& s) {
  const int h = s.height(), w = s.width();
  for (int c = 0; c < s.pixels.dim(0); ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w / 2; ++x) std::swap(s.pixels(c, y, x), s.pixels(c, y, w - 1 - x));
  if (s.has_mask())
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w / 2; ++x) std::swap(s.gt_mask(y, x), s.gt_mask(y, w - 1 - x));
}

/// Brightness, contrast and saturation factors, each in [1 - s, 1 + s].
inline void color_jitter(Tensor<float>& img, double brightness, double contrast, double saturation) {
  const int h = img.dim(1), w = img.dim(2);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  double mean = 0;
  for (auto v : img.values()) mean += v;
  mean /= static_cast<double>(img.size());
  for (std::size_t p = 0; p < plane; ++p) {
    std::array<double, 3> px{};
    for (int c = 0; c < 3; ++c) px[static_cast<std::size_t>(c)] = img[c * plane + p] * brightness;
    for (auto& v : px) v = (v - mean * brightness) * contrast + mean * brightness;
    const double gray = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
    for (int c = 0; c < 3; ++c)
      img[c * plane + p] = static_cast<float>(std::clamp(gray + (px[static_cast<std::size_t>(c)] - gray) * saturation, 0.0, 1.0));
  }
}

namespace detail {

inline std::vector<int> class_areas(const Tensor<int>& mask, int n) {
  std::vector<int> a(static_cast<std::size_t>(n + 1), 0);
  for (int v : mask.values()) ++a[static_cast<std::size_t>(v)];
  return a;
}

}  // namespace detail

/**
 * Training-time augmentation: random resize, a crop that keeps at least
 * `min_retained_fraction` of every present object, horizontal flip and
 * colour jitter. The mask follows with nearest-neighbour resampling. The
 * label is never changed.
 */
template <class Rng>
ImageSample augment(const ImageSample& in, const AugmentConfig& cfg, Rng& rng) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const int n = static_cast<int>(in.label.size());
  ImageSample out = in;

  if (cfg.resize) {
    const double min_side = std::min(in.height(), in.width());
    double factor = cfg.resize_min + (cfg.resize_max - cfg.resize_min) * uni(rng);
    if (factor * min_side < cfg.crop) factor = cfg.crop / min_side;  // clamp degenerate crops
    const int h = std::max(cfg.crop, static_cast<int>(std::lround(in.height() * factor)));
    const int w = std::max(cfg.crop, static_cast<int>(std::lround(in.width() * factor)));
    ImageSample resized;
    resized.label = in.label;
    resized.pixels = resize_bilinear(in.pixels, h, w);
    if (in.has_mask()) resized.gt_mask = resize_nearest(in.gt_mask, h, w);

    const auto full = in.has_mask() ? detail::class_areas(resized.gt_mask, n) : std::vector<int>{};
    bool placed = false;
    for (int attempt = 0; attempt < cfg.max_crop_attempts && !placed; ++attempt) {
      const int y0 = static_cast<int>(uni(rng) * (h - cfg.crop + 1));
      const int x0 = static_cast<int>(uni(rng) * (w - cfg.crop + 1));
      ImageSample c;
      c.label = in.label;
      c.pixels = Tensor<float>({3, cfg.crop, cfg.crop});
      for (int ch = 0; ch < 3; ++ch)
        for (int y = 0; y < cfg.crop; ++y)
          for (int x = 0; x < cfg.crop; ++x) c.pixels(ch, y, x) = resized.pixels(ch, y0 + y, x0 + x);
      if (in.has_mask()) {
        c.gt_mask = Tensor<int>({cfg.crop, cfg.crop});
        for (int y = 0; y < cfg.crop; ++y)
          for (int x = 0; x < cfg.crop; ++x) c.gt_mask(y, x) = resized.gt_mask(y0 + y, x0 + x);
        const auto kept = detail::class_areas(c.gt_mask, n);
        bool ok = true;
        for (int k = 1; k <= n; ++k)
          if (in.label[static_cast<std::size_t>(k - 1)] &&
              kept[static_cast<std::size_t>(k)] < cfg.min_retained_fraction * full[static_cast<std::size_t>(k)])
            ok = false;
        if (!ok) continue;
      }
      out = std::move(c);
      placed = true;
    }
    if (!placed) {
      // Fall back to the whole image squeezed to the crop size.
      out.pixels = resize_bilinear(in.pixels, cfg.crop, cfg.crop);
      if (in.has_mask()) out.gt_mask = resize_nearest(in.gt_mask, cfg.crop, cfg.crop);
    }
  }

  if (cfg.flip && uni(rng) < cfg.flip_probability) flip_horizontal(out);

  if (cfg.jitter) {
    const double s = cfg.jitter_strength;
    const double b = 1 - s + 2 * s * uni(rng), c = 1 - s + 2 * s * uni(rng), sat = 1 - s + 2 * s * uni(rng);
    color_jitter(out.pixels, b, c, sat);
  }
  return out;
}

}  // namespace pixsup

#endif  // PIXSUP_DATASET_HPP
