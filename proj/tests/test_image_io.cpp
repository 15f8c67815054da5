#include <gtest/gtest.h>

#include <filesystem>

#include "pixsup/dataset.hpp"
#include "pixsup/image_io.hpp"

namespace fs = std::filesystem;
using pixsup::Tensor;

TEST(ImageIo, PpmRoundTripWithin8Bit) {
  const auto dir = fs::temp_directory_path() / "pixsup_io_test";
  const auto s = pixsup::generate_sample(pixsup::ShapeDatasetConfig{}, 1, 0).sample;
  pixsup::write_ppm(dir / "img.ppm", s.pixels);
  const auto back = pixsup::read_ppm(dir / "img.ppm");
  ASSERT_EQ(back.shape(), s.pixels.shape());
  for (std::size_t i = 0; i < back.size(); ++i) EXPECT_NEAR(back[i], s.pixels[i], 0.5 / 255 + 1e-6);
  pixsup::write_pgm(dir / "mask.pgm", s.gt_mask);
  EXPECT_EQ(pixsup::read_pgm(dir / "mask.pgm"), s.gt_mask);
  EXPECT_THROW(pixsup::read_pgm(dir / "img.ppm"), pixsup::FormatError);
  EXPECT_THROW(pixsup::read_ppm(dir / "nothing.ppm"), pixsup::FormatError);
  EXPECT_THROW(pixsup::write_ppm(dir / "x.ppm", Tensor<float>({1, 2, 2})), pixsup::ShapeError);
  fs::remove_all(dir);
}

TEST(ImageIo, SplitRoundTrip) {
  const auto dir = fs::temp_directory_path() / "pixsup_split_test";
  const auto ds = pixsup::generate_dataset(3, 1, pixsup::ShapeDatasetConfig{}, 4);
  pixsup::save_split(dir / "train", ds.train);
  const auto back = pixsup::load_split(dir / "train");
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].label, ds.train[i].label);
    EXPECT_EQ(back[i].gt_mask, ds.train[i].gt_mask);
  }
  EXPECT_THROW(pixsup::load_split(dir / "nope"), pixsup::FormatError);
  fs::remove_all(dir);
}

TEST(ImageIo, HeatmapAndPlot) {
  EXPECT_EQ(pixsup::heat_color(0.0), (std::array<float, 3>{0.f, 0.f, 0.f}));
  EXPECT_EQ(pixsup::heat_color(1.0), (std::array<float, 3>{1.f, 0.f, 0.f}));
  const Tensor<float> img({3, 4, 4}, 0.5f);
  std::vector<float> cam(16, 0.f);
  const auto h = pixsup::render_heatmap(img, cam, 0.5);
  EXPECT_EQ(h.shape(), img.shape());
  EXPECT_FLOAT_EQ(h[0], 0.25f);
  const auto plot = pixsup::render_line_plot({0.1, 0.2, 0.3}, {{{0.2, 0.5, 0.9}, {1.f, 0.f, 0.f}}}, 80, 60);
  EXPECT_EQ(plot.shape(), (std::vector<int>{3, 60, 80}));
  bool red = false;
  for (int y = 0; y < 60; ++y)
    for (int x = 0; x < 80; ++x) red |= plot(0, y, x) == 1.f && plot(1, y, x) == 0.f;
  EXPECT_TRUE(red);
}
