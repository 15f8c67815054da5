#include <gtest/gtest.h>

#include "pixsup/backbone.hpp"
#include "pixsup/params.hpp"

using pixsup::ParameterCollection;
using pixsup::Tensor;

namespace {

ParameterCollection<double> scalar(double v) {
  ParameterCollection<double> p;
  p.add("w", Tensor<double>({1}, v));
  return p;
}

}  // namespace

TEST(Params, LookupAndLayout) {
  ParameterCollection<float> p;
  p.add("a", Tensor<float>({2, 2}, 1.f));
  p.add("b", Tensor<float>({3}));
  EXPECT_THROW(p.add("a", Tensor<float>({1})), pixsup::ConfigError);
  EXPECT_THROW(p.at("c"), pixsup::ConfigError);
  EXPECT_EQ(p.find("c"), nullptr);
  EXPECT_EQ(p.scalar_count(), 7u);
  auto z = p.zeros_like();
  EXPECT_TRUE(z.compatible(p));
  EXPECT_EQ(z.at("a")[0], 0.f);
  EXPECT_FALSE(p == z);
  z.at("a").fill(1.f);
  EXPECT_TRUE(p == z);
  EXPECT_NEAR(pixsup::parameter_distance(p, p.zeros_like()), 2.0, 1e-12);
}

TEST(Ema, Endpoints) {
  const pixsup::BackboneConfig cfg;
  const auto main = pixsup::init_backbone<double>(cfg, 1);
  const auto start = pixsup::init_backbone<double>(cfg, 2);

  auto support = start;
  pixsup::ema_update(support, main, 1.0);
  EXPECT_TRUE(support == start);
  pixsup::ema_update(support, main, 0.0);
  EXPECT_TRUE(support == main);
}

TEST(Ema, ExactForRepresentativeMomenta) {
  const pixsup::BackboneConfig cfg;
  const auto main = pixsup::init_backbone<double>(cfg, 3);
  const auto start = pixsup::init_backbone<double>(cfg, 4);
  for (double a : {0.0, 0.5, 0.997, 1.0}) {
    auto support = start;
    pixsup::ema_update(support, main, a);
    for (std::size_t i = 0; i < support.size(); ++i) {
      const auto& s = support.entries()[i].value;
      const auto& m = main.entries()[i].value;
      const auto& s0 = start.entries()[i].value;
      for (std::size_t j = 0; j < s.size(); ++j) EXPECT_NEAR(s[j], a * s0[j] + (1 - a) * m[j], 1e-12);
    }
  }
}

TEST(Ema, ScalarSubstitution) {
  auto s = scalar(1.0);
  pixsup::ema_update(s, scalar(0.0), 0.9);
  EXPECT_NEAR(s.at("w")[0], 0.9, 1e-15);
  pixsup::EmaPair<double> pair{scalar(0.0), scalar(1.0), 0.9};
  pixsup::ema_update(pair);
  EXPECT_NEAR(pair.support.at("w")[0], 0.9, 1e-15);
  EXPECT_EQ(pair.main.at("w")[0], 0.0);
}

TEST(Ema, GeometricContraction) {
  const pixsup::BackboneConfig cfg;
  const auto main = pixsup::init_backbone<double>(cfg, 5);
  auto support = pixsup::init_backbone<double>(cfg, 6);
  double d = pixsup::parameter_distance(support, main);
  for (int step = 0; step < 10; ++step) {
    pixsup::ema_update(support, main, 0.9);
    const double next = pixsup::parameter_distance(support, main);
    EXPECT_NEAR(next / d, 0.9, 1e-9);
    d = next;
  }
}

TEST(Ema, RejectsBadInputs) {
  auto s = scalar(1.0);
  ParameterCollection<double> other;
  other.add("v", Tensor<double>({1}));
  EXPECT_THROW(pixsup::ema_update(s, other, 0.5), pixsup::ConfigError);
  EXPECT_THROW(pixsup::ema_update(s, scalar(0.0), 1.5), pixsup::ConfigError);
}
