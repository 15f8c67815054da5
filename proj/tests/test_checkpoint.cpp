#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "pixsup/checkpoint.hpp"
#include "pixsup/eval.hpp"
#include "pixsup/trainer.hpp"

namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

class CheckpointTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("pixsup_ckpt_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()));
    fs::create_directories(dir_);
    cfg_.backbone.widths = {4, 6, 6, 8};
    cfg_.backbone.feature_dim = 8;
    cfg_.augment.crop = 32;
    cfg_.epochs = 1;
    cfg_.batch_size = 4;
    cfg_.mam_activation_epoch = 0;
    cfg_.ema_momentum = 0.9;
    data_.image_size = 32;
    data_.min_radius = 5;
    data_.max_radius = 8;
    data_.marker_size = 2;
  }
  void TearDown() override { fs::remove_all(dir_); }

  pixsup::Checkpoint trained() {
    const auto ds = pixsup::generate_dataset(8, 1, data_, 2);
    pixsup::Trainer<float> t(cfg_);
    t.fit(ds.train);
    return {cfg_, t.pair(), t.bank()};
  }

  fs::path dir_;
  pixsup::TrainConfig cfg_;
  pixsup::ShapeDatasetConfig data_;
};

}  // namespace

TEST_F(CheckpointTest, RoundTripIsBitExact) {
  const auto ck = trained();
  pixsup::save_checkpoint(dir_ / "a.ckpt", ck);
  const auto back = pixsup::load_checkpoint(dir_ / "a.ckpt");
  EXPECT_TRUE(back.pair.main == ck.pair.main);
  EXPECT_TRUE(back.pair.support == ck.pair.support);
  EXPECT_EQ(back.bank.vectors, ck.bank.vectors);
  EXPECT_EQ(back.bank.valid, ck.bank.valid);
  EXPECT_EQ(back.bank.last_update, ck.bank.last_update);
  EXPECT_EQ(pixsup::to_json(back.config), pixsup::to_json(ck.config));
  EXPECT_EQ(back.pair.momentum, 0.9);
  pixsup::save_checkpoint(dir_ / "b.ckpt", back);
  EXPECT_EQ(slurp(dir_ / "a.ckpt"), slurp(dir_ / "b.ckpt"));
}

TEST_F(CheckpointTest, ReloadedModelGivesIdenticalMetrics) {
  const auto ck = trained();
  pixsup::save_checkpoint(dir_ / "m.ckpt", ck);
  const auto back = pixsup::load_checkpoint(dir_ / "m.ckpt");
  const auto val = pixsup::generate_dataset(1, 6, data_, 8).val;
  pixsup::NetworkCams a{&ck.pair.main, ck.config.backbone};
  pixsup::NetworkCams b{&back.pair.main, back.config.backbone};
  const auto ma = pixsup::evaluate_cams(pixsup::collect_cams(val, a.msinf_provider()), 0.2);
  const auto mb = pixsup::evaluate_cams(pixsup::collect_cams(val, b.msinf_provider()), 0.2);
  EXPECT_EQ(ma.miou, mb.miou);
  EXPECT_EQ(ma.precision, mb.precision);
  EXPECT_EQ(ma.recall, mb.recall);
}

TEST_F(CheckpointTest, CorruptHeadersNameTheField) {
  const auto ck = trained();
  pixsup::save_checkpoint(dir_ / "good.ckpt", ck);
  const std::string good = slurp(dir_ / "good.ckpt");

  auto expect_field = [&](std::string bytes, const std::string& field) {
    const auto p = dir_ / "bad.ckpt";
    std::ofstream(p, std::ios::binary) << bytes;
    try {
      pixsup::load_checkpoint(p);
      ADD_FAILURE() << "expected a load error mentioning " << field;
    } catch (const pixsup::FormatError& e) {
      EXPECT_NE(std::string(e.what()).find(field), std::string::npos) << e.what();
    }
  };
  auto replace = [&](const std::string& from, const std::string& to) {
    std::string s = good;
    s.replace(s.find(from), from.size(), to);
    return s;
  };

  expect_field(replace("pixsup-checkpoint", "pixsup-chekpoint"), "magic");
  expect_field(replace("version 1", "version 2"), "version");
  expect_field(replace("version 1", "version x"), "version");
  expect_field(replace("config {", "config {{"), "config");
  expect_field(replace("tensors ", "tensorz "), "tensors");
  expect_field(replace(" f32 ", " f64 "), "dtype");
  expect_field(replace("\nend\n", "\nfin\n"), "end");
  expect_field(good.substr(0, good.size() - 10), "truncated");
  expect_field(good + "xx", "trailing");
  EXPECT_THROW(pixsup::load_checkpoint(dir_ / "missing.ckpt"), pixsup::FormatError);
}
