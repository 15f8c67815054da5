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

// Binary PPM (P6) / PGM (P5) images, the label CSV and the on-disk dataset
// directory layout:
//
//   <dir>/images/<name>.ppm   RGB, 8 bit
//   <dir>/masks/<name>.pgm    class index per pixel, 8 bit
//   <dir>/labels.csv          filename,c1,...,cN  (0/1 per class)

#ifndef PIXSUP_IMAGE_IO_HPP
#define PIXSUP_IMAGE_IO_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "pixsup/multiscale.hpp"
#include "pixsup/tensor.hpp"

namespace pixsup {

namespace fs = std::filesystem;

namespace detail {

inline std::string read_token(std::istream& in) {
  std::string tok;
  while (in >> tok) {
    if (tok[0] == '#') {
      std::string rest;
      std::getline(in, rest);
      continue;
    }
    return tok;
  }
  throw FormatError("unexpected end of image header");
}

inline std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary);
  if (!f) throw Error("cannot open '" + p.string() + "' for writing");
  return f;
}

}  // namespace detail

/// Writes a (3, H, W) image in [0, 1] as binary PPM.
inline void write_ppm(const fs::path& path, const Tensor<float>& rgb) {
  if (rgb.rank() != 3 || rgb.dim(0) != 3) throw ShapeError("write_ppm expects a (3, H, W) image");
  auto f = detail::open_out(path);
  const int h = rgb.dim(1), w = rgb.dim(2);
  f << "P6\n" << w << ' ' << h << "\n255\n";
  std::vector<unsigned char> buf(static_cast<std::size_t>(h) * w * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        buf[(static_cast<std::size_t>(y) * w + x) * 3 + c] =
            static_cast<unsigned char>(std::lround(std::clamp(rgb(c, y, x), 0.f, 1.f) * 255.f));
  f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

inline Tensor<float> read_ppm(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open image '" + path.string() + "'");
  if (detail::read_token(f) != "P6") throw FormatError("'" + path.string() + "' is not a binary PPM");
  const int w = std::stoi(detail::read_token(f)), h = std::stoi(detail::read_token(f));
  if (std::stoi(detail::read_token(f)) != 255) throw FormatError("only 8-bit PPM is supported");
  f.get();
  std::vector<unsigned char> buf(static_cast<std::size_t>(h) * w * 3);
  if (!f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
    throw FormatError("truncated PPM '" + path.string() + "'");
  Tensor<float> out({3, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) out(c, y, x) = buf[(static_cast<std::size_t>(y) * w + x) * 3 + c] / 255.f;
  return out;
}

/// Writes an (H, W) map of small non-negative integers as 8-bit PGM.
inline void write_pgm(const fs::path& path, const Tensor<int>& map) {
  if (map.rank() != 2) throw ShapeError("write_pgm expects an (H, W) map");
  auto f = detail::open_out(path);
  f << "P5\n" << map.dim(1) << ' ' << map.dim(0) << "\n255\n";
  std::vector<unsigned char> buf(map.size());
  std::transform(map.values().begin(), map.values().end(), buf.begin(),
                 [](int v) { return static_cast<unsigned char>(std::clamp(v, 0, 255)); });
  f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

inline Tensor<int> read_pgm(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open mask '" + path.string() + "'");
  if (detail::read_token(f) != "P5") throw FormatError("'" + path.string() + "' is not a binary PGM");
  const int w = std::stoi(detail::read_token(f)), h = std::stoi(detail::read_token(f));
  if (std::stoi(detail::read_token(f)) != 255) throw FormatError("only 8-bit PGM is supported");
  f.get();
  std::vector<unsigned char> buf(static_cast<std::size_t>(h) * w);
  if (!f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
    throw FormatError("truncated PGM '" + path.string() + "'");
  Tensor<int> out({h, w});
  std::transform(buf.begin(), buf.end(), out.data(), [](unsigned char v) { return static_cast<int>(v); });
  return out;
}

/**
 * Fixed heatmap colormap for values in [0, 1]: piecewise-linear through
 * black (0), blue (0.25), cyan (0.5), yellow (0.75), red (1).
 */
inline std::array<float, 3> heat_color(double v) {
  static constexpr std::array<std::array<float, 3>, 5> stops{
      {{0.f, 0.f, 0.f}, {0.f, 0.f, 1.f}, {0.f, 1.f, 1.f}, {1.f, 1.f, 0.f}, {1.f, 0.f, 0.f}}};
  v = std::clamp(v, 0.0, 1.0) * 4.0;
  const int i = std::min(3, static_cast<int>(v));
  const float t = static_cast<float>(v - i);
  std::array<float, 3> c{};
  for (int k = 0; k < 3; ++k)
    c[static_cast<std::size_t>(k)] = stops[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] * (1 - t) +
                                     stops[static_cast<std::size_t>(i + 1)][static_cast<std::size_t>(k)] * t;
  return c;
}

/// Renders a single CAM channel (H, W) blended over the image.
inline Tensor<float> render_heatmap(const Tensor<float>& image, std::span<const float> cam, double alpha = 0.5) {
  const int h = image.dim(1), w = image.dim(2);
  Tensor<float> out({3, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const auto c = heat_color(cam[static_cast<std::size_t>(y) * w + x]);
      for (int k = 0; k < 3; ++k)
        out(k, y, x) = static_cast<float>((1 - alpha) * image(k, y, x) + alpha * c[static_cast<std::size_t>(k)]);
    }
  return out;
}

struct PlotSeries {
  std::vector<double> y;
  std::array<float, 3> color;
};

/**
 * Minimal line chart on a white canvas: x spans [x.front(), x.back()],
 * y spans [0, 1]. Grid lines every 0.1 in y.
 */
inline Tensor<float> render_line_plot(const std::vector<double>& x, const std::vector<PlotSeries>& series,
                                      int width = 320, int height = 240) {
  Tensor<float> img({3, height, width});
  std::fill(img.data(), img.data() + img.size(), 1.f);
  const int left = 24, right = 8, top = 8, bottom = 24;
  const int pw = width - left - right, ph = height - top - bottom;
  auto put = [&](int px, int py, const std::array<float, 3>& c) {
    if (px < 0 || py < 0 || px >= width || py >= height) return;
    for (int k = 0; k < 3; ++k) img(k, py, px) = c[static_cast<std::size_t>(k)];
  };
  const std::array<float, 3> grid{0.85f, 0.85f, 0.85f}, axis{0.f, 0.f, 0.f};
  for (int g = 0; g <= 10; ++g) {
    const int py = top + ph - static_cast<int>(std::lround(g / 10.0 * ph));
    for (int px = left; px <= left + pw; ++px) put(px, py, g == 0 ? axis : grid);
  }
  for (int py = top; py <= top + ph; ++py) put(left, py, axis);
  if (x.empty()) return img;
  const double x0 = x.front(), x1 = x.back();
  const double span = x1 > x0 ? x1 - x0 : 1.0;
  auto to_px = [&](double xv, double yv) {
    return std::pair<double, double>{left + (xv - x0) / span * pw, top + ph - std::clamp(yv, 0.0, 1.0) * ph};
  };
  for (const auto& s : series) {
    for (std::size_t i = 0; i + 1 < std::min(x.size(), s.y.size()); ++i) {
      const auto [ax, ay] = to_px(x[i], s.y[i]);
      const auto [bx, by] = to_px(x[i + 1], s.y[i + 1]);
      const int steps = static_cast<int>(std::ceil(std::max(std::abs(bx - ax), std::abs(by - ay)))) + 1;
      for (int t = 0; t <= steps; ++t) {
        const double u = static_cast<double>(t) / steps;
        const int px = static_cast<int>(std::lround(ax + u * (bx - ax)));
        const int py = static_cast<int>(std::lround(ay + u * (by - ay)));
        put(px, py, s.color);
        put(px, py + 1, s.color);
      }
    }
  }
  return img;
}

inline std::string sample_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu", i);
  return buf;
}

/// Writes one split (images, masks, labels.csv) under `dir`.
inline void save_split(const fs::path& dir, const std::vector<ImageSample>& samples) {
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "masks");
  auto csv = detail::open_out(dir / "labels.csv");
  const std::size_t n = samples.empty() ? 0 : samples.front().label.size();
  csv << "filename";
  for (std::size_t k = 1; k <= n; ++k) csv << ",c" << k;
  csv << '\n';
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto name = sample_name(i);
    write_ppm(dir / "images" / (name + ".ppm"), samples[i].pixels);
    if (samples[i].has_mask()) write_pgm(dir / "masks" / (name + ".pgm"), samples[i].gt_mask);
    csv << name << ".ppm";
    for (int v : samples[i].label) csv << ',' << v;
    csv << '\n';
  }
}

inline std::vector<ImageSample> load_split(const fs::path& dir) {
  std::ifstream csv(dir / "labels.csv");
  if (!csv) throw FormatError("missing '" + (dir / "labels.csv").string() + "'");
  std::string line;
  std::getline(csv, line);
  std::vector<ImageSample> out;
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string file, field;
    std::getline(ss, file, ',');
    ImageSample s;
    while (std::getline(ss, field, ',')) s.label.push_back(std::stoi(field));
    s.pixels = read_ppm(dir / "images" / file);
    const auto mask = dir / "masks" / (fs::path(file).stem().string() + ".pgm");
    if (fs::exists(mask)) s.gt_mask = read_pgm(mask);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace pixsup

#endif  // PIXSUP_IMAGE_IO_HPP
