#include <gtest/gtest.h>

#include <numeric>
#include <random>

#include "pixsup/rcm.hpp"
#include "test_util.hpp"

using pixsup::ClassSet;
using pixsup::PrototypeBank;
using pixsup::RcmConfig;
using pixsup::RcmLossForm;
using pixsup::Tensor;
using pixsup::testing::random_tensor;

namespace {

std::vector<double> unit(std::vector<double> v) {
  double n = 0;
  for (double x : v) n += x * x;
  for (auto& x : v) x /= std::sqrt(n);
  return v;
}

PrototypeBank<double> random_bank(int classes, int d, std::mt19937_64& rng) {
  PrototypeBank<double> bank(classes, d);
  std::normal_distribution<double> g;
  for (int k = 0; k <= classes; ++k) {
    std::vector<double> v(static_cast<std::size_t>(d));
    for (auto& x : v) x = g(rng);
    v = unit(v);
    for (int c = 0; c < d; ++c) bank.vectors(k, c) = v[static_cast<std::size_t>(c)];
    bank.valid[static_cast<std::size_t>(k)] = true;
  }
  return bank;
}

pixsup::ClassRegionMasks random_masks(int classes, int h, int w, std::mt19937_64& rng) {
  pixsup::ClassRegionMasks m{Tensor<int>({h, w}), classes, 0.2};
  std::uniform_int_distribution<int> u(0, classes);
  for (auto& v : m.index.values()) v = u(rng);
  return m;
}

// Enumerates every (class, pixel) pair of the region masks explicitly.
double brute_force_rcm(const Tensor<double>& x, const pixsup::ClassRegionMasks& m, const PrototypeBank<double>& bank,
                       double t, RcmLossForm form) {
  const int d = x.dim(0), h = x.dim(1), w = x.dim(2);
  const auto stack = m.stacked();
  double total = 0;
  int pixels = 0;
  for (int k = 0; k < bank.classes(); ++k) {
    for (int y = 0; y < h; ++y) {
      for (int xx = 0; xx < w; ++xx) {
        if (stack(k, y, xx) == 0) continue;
        std::vector<double> f(static_cast<std::size_t>(d));
        for (int c = 0; c < d; ++c) f[static_cast<std::size_t>(c)] = x(c, y, xx);
        f = unit(f);
        double denom = 0, sk = 0;
        for (int j = 0; j < bank.classes(); ++j) {
          double dot = 0;
          for (int c = 0; c < d; ++c) dot += f[static_cast<std::size_t>(c)] * bank.vectors(j, c);
          const double s = std::exp(dot / t);
          denom += s;
          if (j == k) sk = s;
        }
        total += form == RcmLossForm::kInfoNceLog ? -std::log(sk / denom) : -sk / denom;
        ++pixels;
      }
    }
  }
  return pixels == 0 ? 0.0 : total / pixels;
}

}  // namespace

TEST(ClassRegionMasks, TrivialCases) {
  Tensor<double> half({2, 3, 3}, 0.5);
  auto m = pixsup::class_region_masks(half, ClassSet{true, false}, 0.2);
  for (int v : m.index.values()) EXPECT_EQ(v, 1);
  EXPECT_EQ(m.counts(), (std::vector<int>{0, 9, 0}));

  Tensor<double> low({2, 3, 3}, 0.1);
  m = pixsup::class_region_masks(low, ClassSet{true, true}, 0.2);
  for (int v : m.index.values()) EXPECT_EQ(v, 0);

  m = pixsup::class_region_masks(half, ClassSet{false, false}, 0.2);
  for (int v : m.index.values()) EXPECT_EQ(v, 0);
  EXPECT_THROW(pixsup::class_region_masks(half, ClassSet{true}, 0.2), pixsup::ShapeError);
}

TEST(ClassRegionMasks, TwoClassExample) {
  Tensor<double> a({2, 2, 2}, std::vector<double>{0.9, 0.1, 0.3, 0.05, 0.2, 0.6, 0.25, 0.1});
  const auto m = pixsup::class_region_masks(a, ClassSet{true, true}, 0.2);
  EXPECT_EQ(m.index(0, 0), 1);
  EXPECT_EQ(m.index(1, 0), 1);
  EXPECT_EQ(m.index(0, 1), 2);
  EXPECT_EQ(m.index(1, 1), 0);
  const auto s = m.stacked();
  EXPECT_EQ(s(0, 1, 1), 1);
  EXPECT_EQ(s(1, 0, 0), 1);
  EXPECT_EQ(s(2, 0, 1), 1);
  EXPECT_EQ(m.channel(2).values()[1], 1);
}

TEST(ClassRegionMasks, PartitionAndAbsentClassesProperty) {
  std::mt19937_64 rng(12);
  std::bernoulli_distribution b(0.6);
  for (int trial = 0; trial < 100; ++trial) {
    const auto cams = random_tensor({4, 5, 6}, rng, 0.0, 1.0);
    ClassSet present(4);
    for (std::size_t k = 0; k < 4; ++k) present[k] = b(rng);
    const auto m = pixsup::class_region_masks(cams, present, 0.2);
    const auto s = m.stacked();
    for (int y = 0; y < 5; ++y) {
      for (int x = 0; x < 6; ++x) {
        int sum = 0;
        for (int k = 0; k < 5; ++k) sum += s(k, y, x);
        EXPECT_EQ(sum, 1);
      }
    }
    for (std::size_t k = 0; k < 4; ++k)
      if (!present[k]) {
        EXPECT_EQ(m.counts()[k + 1], 0);
      }
  }
}

TEST(ClassRegionMasks, BackgroundMonotoneInThreshold) {
  std::mt19937_64 rng(13);
  const auto cams = random_tensor({3, 8, 8}, rng, 0.0, 1.0);
  const ClassSet present{true, true, true};
  for (double lo = 0.05; lo < 0.95; lo += 0.1) {
    const auto a = pixsup::class_region_masks(cams, present, lo).channel(0);
    const auto b = pixsup::class_region_masks(cams, present, lo + 0.05).channel(0);
    for (std::size_t p = 0; p < a.size(); ++p) EXPECT_LE(a[p], b[p]);
  }
}

TEST(ClassRegionMasks, ScalingOnlyAffectsThresholdTest) {
  std::mt19937_64 rng(14);
  const ClassSet present{true, false, true};
  for (int trial = 0; trial < 20; ++trial) {
    const auto cams = random_tensor({3, 4, 4}, rng, 0.0, 1.0);
    auto scaled = cams;
    scaled *= 0.4;
    const auto m1 = pixsup::class_region_masks(cams, present, 1e-9);
    const auto m2 = pixsup::class_region_masks(scaled, present, 0.2);
    for (std::size_t p = 0; p < m1.index.size(); ++p)
      if (m2.index[p] != 0) {
        EXPECT_EQ(m2.index[p], m1.index[p]);
      }
  }
}

TEST(Prototypes, MaskedMean) {
  const int d = 3;
  Tensor<double> feats({d, 2, 2});
  for (int c = 0; c < d; ++c)
    for (int p = 0; p < 4; ++p) feats.channel(c)[p] = c + 1.0;
  pixsup::ClassRegionMasks all{Tensor<int>({2, 2}, 1), 2, 0.2};
  auto proto = pixsup::image_prototypes(feats, all);
  EXPECT_TRUE(proto.empty(0));
  EXPECT_TRUE(proto.empty(2));
  for (int c = 0; c < d; ++c) EXPECT_DOUBLE_EQ(proto.vectors(1, c), c + 1.0);

  std::mt19937_64 rng(15);
  const auto f = random_tensor({d, 2, 2}, rng);
  pixsup::ClassRegionMasks one{Tensor<int>({2, 2}, std::vector<int>{0, 0, 2, 0}), 2, 0.2};
  proto = pixsup::image_prototypes(f, one);
  for (int c = 0; c < d; ++c) EXPECT_DOUBLE_EQ(proto.vectors(2, c), f(c, 1, 0));

  for (int trial = 0; trial < 20; ++trial) {
    const auto x = random_tensor({5, 3, 3}, rng);
    const auto m = random_masks(3, 3, 3, rng);
    const auto pr = pixsup::image_prototypes(x, m);
    for (int k = 0; k <= 3; ++k) {
      int n = 0;
      std::vector<double> acc(5, 0.0);
      for (int y = 0; y < 3; ++y)
        for (int xx = 0; xx < 3; ++xx)
          if (m.index(y, xx) == k) {
            ++n;
            for (int c = 0; c < 5; ++c) acc[c] += x(c, y, xx);
          }
      EXPECT_EQ(pr.counts[k], n);
      if (n > 0) {
        for (int c = 0; c < 5; ++c) EXPECT_NEAR(pr.vectors(k, c), acc[c] / n, 1e-7);
      }
    }
  }
}

TEST(PrototypeBank, UpdateMeansNormalizesAndKeepsStaleRows) {
  PrototypeBank<double> bank(2, 2);
  EXPECT_FALSE(bank.all_valid());
  pixsup::ImagePrototypes<double> a{Tensor<double>({3, 2}, std::vector<double>{0, 0, 1, 0, 0, 0}), {0, 1, 0}};
  pixsup::ImagePrototypes<double> b{Tensor<double>({3, 2}, std::vector<double>{0, 0, 0, 3, 0, 0}), {0, 4, 0}};
  pixsup::update_prototype_bank(bank, {a, b}, 7);
  EXPECT_TRUE(bank.valid[1]);
  EXPECT_FALSE(bank.valid[0]);
  EXPECT_EQ(bank.last_update[1], 7);
  EXPECT_EQ(bank.last_update[2], -1);
  // (u + v)/2 = (0.5, 1.5), normalized.
  EXPECT_NEAR(bank.vectors(1, 0), 0.5 / std::sqrt(2.5), 1e-15);
  EXPECT_NEAR(bank.vectors(1, 1), 1.5 / std::sqrt(2.5), 1e-15);

  const auto before = bank.vectors;
  pixsup::ImagePrototypes<double> c{Tensor<double>({3, 2}, std::vector<double>{1, 1, 0, 0, 0, 0}), {5, 0, 0}};
  pixsup::update_prototype_bank(bank, {c}, 8);
  EXPECT_EQ(bank.vectors(1, 0), before(1, 0));
  EXPECT_EQ(bank.vectors(1, 1), before(1, 1));
  EXPECT_EQ(bank.last_update[1], 7);
  EXPECT_EQ(bank.last_update[0], 8);
}

TEST(PrototypeBank, MixedEmptinessMatchesOracle) {
  std::mt19937_64 rng(16);
  std::bernoulli_distribution empty(0.4);
  for (int trial = 0; trial < 20; ++trial) {
    PrototypeBank<double> bank(3, 6);
    std::vector<pixsup::ImagePrototypes<double>> batch;
    for (int i = 0; i < 4; ++i) {
      pixsup::ImagePrototypes<double> ip{random_tensor({4, 6}, rng), std::vector<int>(4)};
      for (int k = 0; k < 4; ++k) ip.counts[k] = empty(rng) ? 0 : 1 + k;
      batch.push_back(ip);
    }
    pixsup::update_prototype_bank(bank, batch, trial);
    for (int k = 0; k < 4; ++k) {
      std::vector<double> mean(6, 0.0);
      int n = 0;
      for (const auto& ip : batch)
        if (!ip.empty(k)) {
          ++n;
          for (int c = 0; c < 6; ++c) mean[c] += ip.vectors(k, c);
        }
      EXPECT_EQ(bank.valid[k], n > 0);
      if (n == 0) continue;
      mean = unit(mean);
      double norm = 0;
      for (int c = 0; c < 6; ++c) {
        EXPECT_NEAR(bank.vectors(k, c), mean[c], 1e-12);
        norm += bank.vectors(k, c) * bank.vectors(k, c);
      }
      EXPECT_NEAR(norm, 1.0, 1e-6);
    }
  }
}

TEST(Similarity, DotThenExp) {
  const std::vector<double> p{0.6, 0.8}, q{-0.8, 0.6};
  EXPECT_NEAR(pixsup::similarity<double>(p, p), std::exp(1.0), 1e-15);
  EXPECT_NEAR(pixsup::similarity<double>(p, q), 1.0, 1e-15);
  std::mt19937_64 rng(17);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> a(8), b(8);
    for (auto& v : a) v = g(rng);
    for (auto& v : b) v = g(rng);
    a = unit(a);
    b = unit(b);
    EXPECT_NEAR(pixsup::similarity<double>(a, b), std::exp(std::inner_product(a.begin(), a.end(), b.begin(), 0.0)),
                1e-12);
  }
  const std::vector<double> three{1, 0, 0};
  EXPECT_THROW(pixsup::similarity<double>(three, p), pixsup::ShapeError);
}

TEST(RcmLoss, EmptyClassMaskContributesNothing) {
  std::mt19937_64 rng(18);
  const auto bank = random_bank(2, 4, rng);
  const auto x = random_tensor({4, 2, 2}, rng);
  pixsup::ClassRegionMasks bg{Tensor<int>({2, 2}), 2, 0.2};
  const auto terms = pixsup::rcm_loss_terms(x, bg, bank, RcmConfig{});
  EXPECT_EQ(terms.pixels, 4);
  EXPECT_NEAR(pixsup::rcm_loss(x, bg, bank, RcmConfig{}), brute_force_rcm(x, bg, bank, 0.5, RcmLossForm::kInfoNceLog),
              1e-12);
}

TEST(RcmLoss, OrthonormalHandOracle) {
  // One foreground class plus background, x equal to the class prototype, T = 1.
  PrototypeBank<double> bank(1, 2);
  bank.vectors = Tensor<double>({2, 2}, std::vector<double>{1, 0, 0, 1});
  bank.valid = {true, true};
  Tensor<double> x({2, 1, 1}, std::vector<double>{0, 1});
  pixsup::ClassRegionMasks m{Tensor<int>({1, 1}, 1), 1, 0.2};
  RcmConfig cfg;
  cfg.temperature = 1.0;
  const double e = std::exp(1.0);
  EXPECT_NEAR(pixsup::rcm_loss(x, m, bank, cfg), -std::log(e / (e + 1)), 1e-12);
  EXPECT_NEAR(-std::log(e / (e + 1)), 0.3133, 1e-4);
  cfg.loss_form = RcmLossForm::kLiteral;
  EXPECT_NEAR(pixsup::rcm_loss(x, m, bank, cfg), -e / (e + 1), 1e-12);
}

TEST(RcmLoss, MatchesBruteForceOnSmallInputs) {
  std::mt19937_64 rng(19);
  for (auto form : {RcmLossForm::kInfoNceLog, RcmLossForm::kLiteral}) {
    RcmConfig cfg;
    cfg.loss_form = form;
    for (int trial = 0; trial < 30; ++trial) {
      const int h = 1 + trial % 3, w = 1 + (trial / 3) % 3;
      const auto bank = random_bank(2, 5, rng);
      const auto x = random_tensor({5, h, w}, rng);
      const auto m = random_masks(2, h, w, rng);
      EXPECT_NEAR(pixsup::rcm_loss(x, m, bank, cfg), brute_force_rcm(x, m, bank, cfg.temperature, form), 1e-9);
    }
  }
}

TEST(RcmLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(20);
  for (auto form : {RcmLossForm::kInfoNceLog, RcmLossForm::kLiteral}) {
    RcmConfig cfg;
    cfg.loss_form = form;
    for (int trial = 0; trial < 20; ++trial) {
      const auto bank = random_bank(3, 6, rng);
      auto x = random_tensor({6, 3, 3}, rng);
      const auto m = random_masks(3, 3, 3, rng);
      const auto terms = pixsup::rcm_loss_terms(x, m, bank, cfg);
      auto f = [&] { return pixsup::rcm_loss_terms(x, m, bank, cfg, false).sum; };
      std::vector<double> a, n;
      for (std::size_t i = 0; i < x.size(); ++i) {
        a.push_back(terms.grad[i]);
        n.push_back(pixsup::testing::central_diff(f, x[i]));
      }
      EXPECT_LT(pixsup::testing::grad_rel_err(a, n), 1e-4);
    }
  }
}

TEST(RcmLoss, InvalidPrototypeSkips) {
  std::mt19937_64 rng(21);
  auto bank = random_bank(2, 3, rng);
  bank.valid[2] = false;
  const auto x = random_tensor({3, 2, 2}, rng);
  const auto m = random_masks(2, 2, 2, rng);
  const auto terms = pixsup::rcm_loss_terms(x, m, bank, RcmConfig{});
  EXPECT_TRUE(terms.skipped);
  EXPECT_TRUE(terms.grad.empty());
  EXPECT_EQ(pixsup::rcm_loss(x, m, bank, RcmConfig{}), 0.0);
}

TEST(RcmLoss, SoftmaxShiftInvariance) {
  const std::vector<double> z{0.3, -1.2, 2.0, 0.7};
  std::vector<double> shifted = z;
  for (auto& v : shifted) v += 5.5;
  for (int k = 0; k < 4; ++k) {
    EXPECT_NEAR(pixsup::contrastive_pixel_loss(z, k, RcmLossForm::kInfoNceLog),
                pixsup::contrastive_pixel_loss(shifted, k, RcmLossForm::kInfoNceLog), 1e-12);
  }
}

TEST(RcmConfig, Validation) {
  RcmConfig c;
  EXPECT_NO_THROW(c.validate());
  c.threshold = 1.0;
  EXPECT_THROW(c.validate(), pixsup::ConfigError);
  c.threshold = 0.2;
  c.temperature = 0.0;
  EXPECT_THROW(c.validate(), pixsup::ConfigError);
}
