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

// JSON run configuration. Every section is optional; omitted keys keep
// their defaults, unknown keys are rejected.
//
// {
//   "seed": 0,                      run seed (dataset, init, shuffling)
//   "out_dir": "run",               where commands write their outputs
//   "dataset": {
//     "n_train": 384, "n_val": 96,  sample counts
//     "image_size": 64,             base image side
//     "num_classes": 4,             circle, square, triangle, ring
//     "min_shapes": 1, "max_shapes": 3,
//     "min_radius": 9, "max_radius": 15,
//     "marker_size": 4,             side of the class marker patch
//     "body_saturation": 0.35, "hue_jitter": 0.05, "texture_amplitude": 0.12, "pixel_noise": 0.04
//   },
//   "train": {
//     "mode": "full",               full|baseline|rcm-only|mam-only|smm|mmm
//     "base_lr": 0.01, "poly_power": 0.9, "epochs": 20, "batch_size": 16,
//     "lambda_cls": 1, "lambda_rcm": 1, "lambda_mam": 1,
//     "mam_activation_epoch": 6,    MAM weight is 0 before this epoch
//     "ema_momentum": 0.997,
//     "sgd_momentum": 0.9, "weight_decay": 0.0005,
//     "msinf_rule": "mean",         mean|max
//     "backbone": {"widths": [16,32,48,64], "strides": [2,2,2,1], "feature_dim": 256},
//     "augment": {"crop": 48, "resize_min": 0.5, "resize_max": 1.3, "flip": true,
//                 "jitter": true, "jitter_strength": 0.1},
//     "rcm": {"threshold": 0.2, "temperature": 0.5, "loss_form": "infonce_log"},
//     "mam": {"detach_attention": true}
//   },
//   "eval": {
//     "bg_threshold": 0.2,
//     "thresholds": [0.05, ..., 0.60],
//     "scales": [0.5, 1.0, 1.5, 2.0]
//   }
// }

#ifndef PIXSUP_CONFIG_HPP
#define PIXSUP_CONFIG_HPP

#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pixsup/dataset.hpp"
#include "pixsup/trainer.hpp"

namespace pixsup {

using Json = nlohmann::json;

struct EvalConfig {
  double bg_threshold = 0.20;
  std::vector<double> thresholds{0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45, 0.50, 0.55, 0.60};
  std::vector<double> scales{0.5, 1.0, 1.5, 2.0};
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string out_dir = "run";
  int n_train = 384;
  int n_val = 96;
  ShapeDatasetConfig dataset;
  TrainConfig train;
  EvalConfig eval;
};

namespace detail {

inline void reject_unknown(const Json& j, const std::string& section, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError("config section '" + section + "' must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw ConfigError("unknown config key '" + section + (section.empty() ? "" : ".") + it.key() + "'");
  }
}

template <class V>
void read(const Json& j, const char* key, V& out, const std::string& section) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config key '" + section + "." + key + "' has the wrong type");
  }
}

}  // namespace detail

inline Json to_json(const TrainConfig& c) {
  return Json{
      {"mode", to_string(c.mode)},
      {"base_lr", c.base_lr},
      {"poly_power", c.poly_power},
      {"epochs", c.epochs},
      {"batch_size", c.batch_size},
      {"lambda_cls", c.lambda_cls},
      {"lambda_rcm", c.lambda_rcm},
      {"lambda_mam", c.lambda_mam},
      {"mam_activation_epoch", c.mam_activation_epoch},
      {"ema_momentum", c.ema_momentum},
      {"sgd_momentum", c.sgd.momentum},
      {"weight_decay", c.sgd.weight_decay},
      {"msinf_rule", c.msinf_rule == MsinfRule::kMean ? "mean" : "max"},
      {"backbone",
       {{"in_channels", c.backbone.in_channels},
        {"widths", c.backbone.widths},
        {"strides", c.backbone.strides},
        {"feature_dim", c.backbone.feature_dim},
        {"num_classes", c.backbone.num_classes}}},
      {"augment",
       {{"crop", c.augment.crop},
        {"resize_min", c.augment.resize_min},
        {"resize_max", c.augment.resize_max},
        {"resize", c.augment.resize},
        {"flip", c.augment.flip},
        {"jitter", c.augment.jitter},
        {"jitter_strength", c.augment.jitter_strength}}},
      {"rcm",
       {{"threshold", c.rcm.threshold},
        {"temperature", c.rcm.temperature},
        {"loss_form", c.rcm.loss_form == RcmLossForm::kInfoNceLog ? "infonce_log" : "literal_eq5"}}},
      {"mam", {{"detach_attention", c.mam_detach_attention}}},
      {"seed", c.seed},
  };
}

inline TrainConfig train_config_from_json(const Json& j, TrainConfig c = {}) {
  const std::string sec = "train";
  detail::reject_unknown(j, sec,
                         {"mode", "base_lr", "poly_power", "epochs", "batch_size", "lambda_cls", "lambda_rcm",
                          "lambda_mam", "mam_activation_epoch", "ema_momentum", "sgd_momentum", "weight_decay",
                          "msinf_rule", "backbone", "augment", "rcm", "mam", "seed"});
  if (j.contains("mode")) c.mode = parse_train_mode(j.at("mode").get<std::string>());
  detail::read(j, "base_lr", c.base_lr, sec);
  detail::read(j, "poly_power", c.poly_power, sec);
  detail::read(j, "epochs", c.epochs, sec);
  detail::read(j, "batch_size", c.batch_size, sec);
  detail::read(j, "lambda_cls", c.lambda_cls, sec);
  detail::read(j, "lambda_rcm", c.lambda_rcm, sec);
  detail::read(j, "lambda_mam", c.lambda_mam, sec);
  detail::read(j, "mam_activation_epoch", c.mam_activation_epoch, sec);
  detail::read(j, "ema_momentum", c.ema_momentum, sec);
  detail::read(j, "sgd_momentum", c.sgd.momentum, sec);
  detail::read(j, "weight_decay", c.sgd.weight_decay, sec);
  detail::read(j, "seed", c.seed, sec);
  if (j.contains("msinf_rule")) {
    const auto r = j.at("msinf_rule").get<std::string>();
    if (r != "mean" && r != "max") throw ConfigError("train.msinf_rule must be 'mean' or 'max'");
    c.msinf_rule = r == "mean" ? MsinfRule::kMean : MsinfRule::kMax;
  }
  if (j.contains("backbone")) {
    const auto& b = j.at("backbone");
    detail::reject_unknown(b, "train.backbone", {"in_channels", "widths", "strides", "feature_dim", "num_classes"});
    detail::read(b, "in_channels", c.backbone.in_channels, "train.backbone");
    detail::read(b, "widths", c.backbone.widths, "train.backbone");
    detail::read(b, "strides", c.backbone.strides, "train.backbone");
    detail::read(b, "feature_dim", c.backbone.feature_dim, "train.backbone");
    detail::read(b, "num_classes", c.backbone.num_classes, "train.backbone");
  }
  if (j.contains("augment")) {
    const auto& a = j.at("augment");
    const std::string s = "train.augment";
    detail::reject_unknown(a, s, {"crop", "resize_min", "resize_max", "resize", "flip", "jitter", "jitter_strength"});
    detail::read(a, "crop", c.augment.crop, s);
    detail::read(a, "resize_min", c.augment.resize_min, s);
    detail::read(a, "resize_max", c.augment.resize_max, s);
    detail::read(a, "resize", c.augment.resize, s);
    detail::read(a, "flip", c.augment.flip, s);
    detail::read(a, "jitter", c.augment.jitter, s);
    detail::read(a, "jitter_strength", c.augment.jitter_strength, s);
  }
  if (j.contains("rcm")) {
    const auto& r = j.at("rcm");
    detail::reject_unknown(r, "train.rcm", {"threshold", "temperature", "loss_form"});
    detail::read(r, "threshold", c.rcm.threshold, "train.rcm");
    detail::read(r, "temperature", c.rcm.temperature, "train.rcm");
    if (r.contains("loss_form")) {
      const auto f = r.at("loss_form").get<std::string>();
      if (f == "infonce_log")
        c.rcm.loss_form = RcmLossForm::kInfoNceLog;
      else if (f == "literal_eq5")
        c.rcm.loss_form = RcmLossForm::kLiteral;
      else
        throw ConfigError("train.rcm.loss_form must be 'infonce_log' or 'literal_eq5'");
    }
  }
  if (j.contains("mam")) {
    const auto& m = j.at("mam");
    detail::reject_unknown(m, "train.mam", {"detach_attention"});
    detail::read(m, "detach_attention", c.mam_detach_attention, "train.mam");
  }
  return c;
}

inline Json to_json(const ShapeDatasetConfig& d) {
  return Json{{"image_size", d.image_size},       {"num_classes", d.num_classes},
              {"min_shapes", d.min_shapes},       {"max_shapes", d.max_shapes},
              {"min_radius", d.min_radius},       {"max_radius", d.max_radius},
              {"marker_size", d.marker_size},     {"body_saturation", d.body_saturation}, {"hue_jitter", d.hue_jitter},
              {"texture_amplitude", d.texture_amplitude}, {"pixel_noise", d.pixel_noise}};
}

inline Json to_json(const RunConfig& r) {
  auto ds = to_json(r.dataset);
  ds["n_train"] = r.n_train;
  ds["n_val"] = r.n_val;
  return Json{{"seed", r.seed},
              {"out_dir", r.out_dir},
              {"dataset", ds},
              {"train", to_json(r.train)},
              {"eval", {{"bg_threshold", r.eval.bg_threshold}, {"thresholds", r.eval.thresholds}, {"scales", r.eval.scales}}}};
}

/// Parses a run configuration. The top-level seed also seeds training
/// unless train.seed is given explicitly.
inline RunConfig run_config_from_json(const Json& j) {
  RunConfig r;
  detail::reject_unknown(j, "", {"seed", "out_dir", "dataset", "train", "eval"});
  detail::read(j, "seed", r.seed, "");
  detail::read(j, "out_dir", r.out_dir, "");
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    const std::string s = "dataset";
    detail::reject_unknown(d, s,
                           {"n_train", "n_val", "image_size", "num_classes", "min_shapes", "max_shapes", "min_radius",
                            "max_radius", "marker_size", "body_saturation", "hue_jitter", "texture_amplitude", "pixel_noise"});
    detail::read(d, "n_train", r.n_train, s);
    detail::read(d, "n_val", r.n_val, s);
    detail::read(d, "image_size", r.dataset.image_size, s);
    detail::read(d, "num_classes", r.dataset.num_classes, s);
    detail::read(d, "min_shapes", r.dataset.min_shapes, s);
    detail::read(d, "max_shapes", r.dataset.max_shapes, s);
    detail::read(d, "min_radius", r.dataset.min_radius, s);
    detail::read(d, "max_radius", r.dataset.max_radius, s);
    detail::read(d, "marker_size", r.dataset.marker_size, s);
    detail::read(d, "body_saturation", r.dataset.body_saturation, s);
    detail::read(d, "hue_jitter", r.dataset.hue_jitter, s);
    detail::read(d, "texture_amplitude", r.dataset.texture_amplitude, s);
    detail::read(d, "pixel_noise", r.dataset.pixel_noise, s);
  }
  r.train.seed = r.seed;
  if (j.contains("train")) r.train = train_config_from_json(j.at("train"), r.train);
  r.train.backbone.num_classes = r.dataset.num_classes;
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    detail::reject_unknown(e, "eval", {"bg_threshold", "thresholds", "scales"});
    detail::read(e, "bg_threshold", r.eval.bg_threshold, "eval");
    detail::read(e, "thresholds", r.eval.thresholds, "eval");
    detail::read(e, "scales", r.eval.scales, "eval");
  }
  if (r.dataset.num_classes < 1 || r.dataset.num_classes > kShapeClasses)
    throw ConfigError("dataset.num_classes must lie in [1, 4]");
  r.train.validate();
  return r;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file '" + path + "'");
  Json j;
  try {
    j = Json::parse(f);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace pixsup

#endif  // PIXSUP_CONFIG_HPP
