#include <gtest/gtest.h>

#include <random>

#include "pixsup/mam.hpp"
#include "test_util.hpp"

using pixsup::ClassSet;
using pixsup::MamConfig;
using pixsup::MamMode;
using pixsup::ScaleStack;
using pixsup::Tensor;
using pixsup::testing::random_tensor;

namespace {

ScaleStack<double> random_stack(int n, int h, int w, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
  return {random_tensor({n, h, w}, rng, lo, hi), random_tensor({n, h, w}, rng, lo, hi),
          random_tensor({n, h, w}, rng, lo, hi)};
}

double cos_oracle(std::span<const double> a, std::span<const double> b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

}  // namespace

TEST(CosineDistance, IdenticalAndDisjoint) {
  std::mt19937_64 rng(30);
  const auto x = random_tensor({2, 3, 3}, rng, 0.1, 1.0);
  const ScaleStack<double> same{x, x, x};
  const auto xi = pixsup::cosine_distance(same, same, ClassSet{true, true});
  for (double v : xi.xi.values()) EXPECT_NEAR(v, 1.0, 1e-12);

  Tensor<double> left({1, 1, 2}, std::vector<double>{1, 0}), right({1, 1, 2}, std::vector<double>{0, 1});
  const auto d = pixsup::cosine_distance<double>({left, left, left}, {right, right, right}, ClassSet{true});
  for (double v : d.xi.values()) EXPECT_DOUBLE_EQ(v, 2.0);
}

TEST(CosineDistance, MatchesDotNormOracle) {
  std::mt19937_64 rng(31);
  const ClassSet present{true, false, true};
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = random_stack(3, 4, 4, rng, -0.3, 1.0);
    const auto b = random_stack(3, 4, 4, rng, -0.3, 1.0);
    const auto xi = pixsup::cosine_distance(a, b, present);
    EXPECT_EQ(xi.degenerate, 0);
    for (int k = 0; k < 3; ++k)
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
          const double expect = present[k] ? 2.0 - cos_oracle(a[i].channel(k), b[j].channel(k)) : 1.0;
          EXPECT_NEAR(xi.xi(k, i, j), expect, 1e-9);
        }
  }
}

TEST(CosineDistance, RangeAndScaleInvariance) {
  std::mt19937_64 rng(32);
  const ClassSet present{true, true};
  for (int trial = 0; trial < 100; ++trial) {
    const auto a = random_stack(2, 3, 5, rng);
    auto b = random_stack(2, 3, 5, rng);
    const auto xi = pixsup::cosine_distance(a, b, present);
    for (double v : xi.xi.values()) {
      EXPECT_GE(v, 1.0 - 1e-9);
      EXPECT_LE(v, 2.0 + 1e-9);
    }
    for (auto& t : b) t *= 3.7;
    const auto xi2 = pixsup::cosine_distance(a, b, present);
    for (std::size_t i = 0; i < xi.xi.size(); ++i) EXPECT_NEAR(xi.xi[i], xi2.xi[i], 1e-12);
  }
}

TEST(CosineDistance, ZeroNormIsNeutral) {
  std::mt19937_64 rng(33);
  const auto a = random_stack(1, 2, 2, rng);
  const ScaleStack<double> zero(3, Tensor<double>({1, 2, 2}));
  const auto xi = pixsup::cosine_distance(a, zero, ClassSet{true});
  EXPECT_EQ(xi.degenerate, 9);
  for (double v : xi.xi.values()) EXPECT_EQ(v, 1.0);
  const auto targets = pixsup::target_cams(xi, zero);
  for (const auto& t : targets)
    for (double v : t.values()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(pixsup::cosine_distance(a, zero, ClassSet{true, true}), pixsup::ShapeError);
  EXPECT_THROW(pixsup::cosine_distance(ScaleStack<double>{a[0], a[1]}, zero, ClassSet{true}), pixsup::ShapeError);
}

TEST(TargetCams, UniformWeightsGiveScaleMean) {
  std::mt19937_64 rng(34);
  const ClassSet present{true, true};
  const auto g = random_stack(2, 3, 3, rng);
  const auto t = pixsup::target_cams(pixsup::uniform_dissimilarity<double>(2, present), g);
  for (int i = 0; i < 3; ++i)
    for (std::size_t p = 0; p < g[0].size(); ++p) EXPECT_NEAR(t[i][p], (g[0][p] + g[1][p] + g[2][p]) / 3, 1e-15);
}

TEST(TargetCams, WeightedSumOracleAndLinearity) {
  std::mt19937_64 rng(35);
  const ClassSet present{true, false, true};
  std::uniform_real_distribution<double> u(1.0, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    auto xi = pixsup::uniform_dissimilarity<double>(3, present);
    for (auto& v : xi.xi.values()) v = u(rng);
    const auto g = random_stack(3, 2, 3, rng);
    const auto h = random_stack(3, 2, 3, rng);
    const auto t = pixsup::target_cams(xi, g);
    for (int i = 0; i < 3; ++i)
      for (int k = 0; k < 3; ++k)
        for (std::size_t p = 0; p < 6; ++p) {
          double e = 0;
          if (present[k])
            for (int j = 0; j < 3; ++j) e += xi.xi(k, i, j) * g[j].channel(k)[p] / 3;
          EXPECT_NEAR(t[i].channel(k)[p], e, 1e-9);
        }
    ScaleStack<double> combo = g;
    for (int j = 0; j < 3; ++j)
      for (std::size_t p = 0; p < combo[j].size(); ++p) combo[j][p] = 2 * g[j][p] - 0.5 * h[j][p];
    const auto tc = pixsup::target_cams(xi, combo);
    const auto th = pixsup::target_cams(xi, h);
    for (int i = 0; i < 3; ++i)
      for (std::size_t p = 0; p < tc[i].size(); ++p) EXPECT_NEAR(tc[i][p], 2 * t[i][p] - 0.5 * th[i][p], 1e-12);
  }
}

TEST(MamLoss, ClosedForms) {
  std::mt19937_64 rng(36);
  const ClassSet present{true, true};
  const auto a = random_stack(2, 3, 3, rng);
  EXPECT_EQ(pixsup::mam_loss(a, a, present), 0.0);
  const ScaleStack<double> zero(3, Tensor<double>({2, 3, 3}));
  const ScaleStack<double> c(3, Tensor<double>({2, 3, 3}, 0.37));
  EXPECT_NEAR(pixsup::mam_loss(zero, c, present), 0.37, 1e-15);
  EXPECT_EQ(pixsup::mam_loss(zero, c, ClassSet{false, false}), 0.0);
}

TEST(MamLoss, MatchesAbsoluteSumOracle) {
  std::mt19937_64 rng(37);
  const ClassSet present{false, true, true};
  for (int trial = 0; trial < 30; ++trial) {
    const int h = 1 + trial % 3, w = 1 + (trial / 3) % 3;
    const auto t = random_stack(3, h, w, rng);
    const auto a = random_stack(3, h, w, rng);
    double sum = 0;
    for (int i = 0; i < 3; ++i)
      for (int k = 1; k < 3; ++k)
        for (int p = 0; p < h * w; ++p) sum += std::abs(t[i].channel(k)[p] - a[i].channel(k)[p]);
    EXPECT_NEAR(pixsup::mam_loss(t, a, present), sum / (h * w * 2 * 3), 1e-9);
  }
}

TEST(MamLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(38);
  const ClassSet present{true, false, true};
  for (int trial = 0; trial < 20; ++trial) {
    const auto t = random_stack(3, 3, 3, rng);
    auto a = random_stack(3, 3, 3, rng);
    // Keep every difference away from the L1 kink.
    for (int i = 0; i < 3; ++i)
      for (std::size_t p = 0; p < a[i].size(); ++p)
        if (std::abs(a[i][p] - t[i][p]) < 1e-3) a[i][p] += 0.01;
    ScaleStack<double> grad;
    pixsup::mam_loss(t, a, present, {0, 1, 2}, &grad);
    std::vector<double> an, nu;
    for (int i = 0; i < 3; ++i)
      for (std::size_t p = 0; p < a[i].size(); ++p) {
        an.push_back(grad[i][p]);
        nu.push_back(pixsup::testing::central_diff([&] { return pixsup::mam_loss(t, a, present); }, a[i][p]));
      }
    EXPECT_LT(pixsup::testing::grad_rel_err(an, nu), 1e-4);
  }
}

TEST(MamForward, UndetachedGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(39);
  const ClassSet present{true, true};
  for (int trial = 0; trial < 20; ++trial) {
    auto s = random_stack(2, 3, 3, rng);
    const auto g = random_stack(2, 3, 3, rng);
    const MamConfig cfg{MamMode::kMam, false};
    const auto r = pixsup::mam_forward(s, g, present, cfg);
    bool near_kink = false;
    for (int i = 0; i < 3; ++i)
      for (std::size_t p = 0; p < s[i].size(); ++p) near_kink |= std::abs(r.targets[i][p] - s[i][p]) < 1e-3;
    if (near_kink) continue;
    std::vector<double> an, nu;
    for (int i = 0; i < 3; ++i)
      for (std::size_t p = 0; p < s[i].size(); ++p) {
        an.push_back(r.grad[i][p]);
        nu.push_back(pixsup::testing::central_diff(
            [&] { return pixsup::mam_forward(s, g, present, cfg, false).loss; }, s[i][p]));
      }
    EXPECT_LT(pixsup::testing::grad_rel_err(an, nu), 1e-4);
  }
}

TEST(MamVariants, Relations) {
  std::mt19937_64 rng(40);
  const ClassSet present{true, false, true};
  const auto x = random_tensor({3, 4, 4}, rng);
  const ScaleStack<double> same{x, x, x};
  EXPECT_NEAR(pixsup::ablation_variant(MamMode::kMmm, same, same, present), 0.0, 1e-15);

  for (int trial = 0; trial < 20; ++trial) {
    const auto s = random_stack(3, 4, 4, rng);
    const auto g = random_stack(3, 4, 4, rng);
    // MAM with the distances forced to 1 is MMM.
    const auto forced = pixsup::target_cams(pixsup::uniform_dissimilarity<double>(3, present), g);
    EXPECT_EQ(pixsup::mam_loss(forced, s, present), pixsup::ablation_variant(MamMode::kMmm, s, g, present));

    // Per-pair normalization: SMM averages the single m row, MMM averages all
    // three rows, so SMM is three times the m-row share of MMM.
    const double mmm_m_row = pixsup::mam_loss(forced, s, present, {1}) / 3.0;
    EXPECT_NEAR(pixsup::ablation_variant(MamMode::kSmm, s, g, present), 3.0 * mmm_m_row, 1e-12);
    double m_sum = 0;
    for (int k : {0, 2})
      for (int p = 0; p < 16; ++p) m_sum += std::abs(forced[1].channel(k)[p] - s[1].channel(k)[p]);
    EXPECT_NEAR(pixsup::ablation_variant(MamMode::kSmm, s, g, present), m_sum / (16 * 2), 1e-12);
  }
  EXPECT_THROW(pixsup::parse_mam_mode("bogus"), pixsup::ConfigError);
  EXPECT_EQ(pixsup::parse_mam_mode("SMM"), MamMode::kSmm);
  EXPECT_STREQ(pixsup::to_string(MamMode::kMmm), "mmm");
}

TEST(MamVariants, LossShrinksAsScalesAgree) {
  std::mt19937_64 rng(41);
  const ClassSet present{true, true};
  const auto base = random_tensor({2, 4, 4}, rng);
  const auto other = random_stack(2, 4, 4, rng);
  double prev = std::numeric_limits<double>::infinity();
  for (double t = 0.0; t <= 1.0; t += 0.25) {
    ScaleStack<double> s(3, base);
    for (int i = 0; i < 3; ++i)
      for (std::size_t p = 0; p < base.size(); ++p) s[i][p] = t * base[p] + (1 - t) * other[i][p];
    const double l = pixsup::ablation_variant(MamMode::kMam, s, s, present);
    EXPECT_LE(l, prev + 1e-12);
    prev = l;
  }
  EXPECT_NEAR(prev, 0.0, 1e-12);
}
