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

// Student/teacher training loop. The student (main) network is trained by
// gradient descent on classification + regional contrastive + multi-scale
// attentive losses; the teacher (support) network only follows it by EMA
// and supplies masks, prototypes and target CAMs.

#ifndef PIXSUP_TRAINER_HPP
#define PIXSUP_TRAINER_HPP

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <numeric>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "pixsup/backbone.hpp"
#include "pixsup/cam.hpp"
#include "pixsup/dataset.hpp"
#include "pixsup/inference.hpp"
#include "pixsup/mam.hpp"
#include "pixsup/multiscale.hpp"
#include "pixsup/optim.hpp"
#include "pixsup/params.hpp"
#include "pixsup/rcm.hpp"

namespace pixsup {

/// Which self-supervision terms are active.
enum class TrainMode { kFull, kBaseline, kRcmOnly, kMamOnly, kSmm, kMmm };

inline TrainMode parse_train_mode(const std::string& s) {
  if (s == "full") return TrainMode::kFull;
  if (s == "baseline") return TrainMode::kBaseline;
  if (s == "rcm-only") return TrainMode::kRcmOnly;
  if (s == "mam-only") return TrainMode::kMamOnly;
  if (s == "smm") return TrainMode::kSmm;
  if (s == "mmm") return TrainMode::kMmm;
  throw ConfigError("unknown training mode '" + s + "' (expected full, baseline, rcm-only, mam-only, smm or mmm)");
}

inline const char* to_string(TrainMode m) {
  switch (m) {
    case TrainMode::kFull: return "full";
    case TrainMode::kBaseline: return "baseline";
    case TrainMode::kRcmOnly: return "rcm-only";
    case TrainMode::kMamOnly: return "mam-only";
    case TrainMode::kSmm: return "smm";
    case TrainMode::kMmm: return "mmm";
  }
  return "?";
}

inline bool uses_rcm(TrainMode m) { return m == TrainMode::kFull || m == TrainMode::kRcmOnly; }
inline bool uses_mam(TrainMode m) {
  return m == TrainMode::kFull || m == TrainMode::kMamOnly || m == TrainMode::kSmm || m == TrainMode::kMmm;
}
inline MamMode mam_mode_for(TrainMode m) {
  if (m == TrainMode::kSmm) return MamMode::kSmm;
  if (m == TrainMode::kMmm) return MamMode::kMmm;
  return MamMode::kMam;
}

struct TrainConfig {
  TrainMode mode = TrainMode::kFull;
  BackboneConfig backbone;
  double base_lr = 0.01;
  double poly_power = 0.9;
  int epochs = 20;
  int batch_size = 16;
  AugmentConfig augment;
  double lambda_cls = 1.0;
  double lambda_rcm = 1.0;
  double lambda_mam = 1.0;
  int mam_activation_epoch = 6;
  double ema_momentum = 0.997;
  SgdConfig sgd;
  RcmConfig rcm;
  bool mam_detach_attention = true;
  MsinfRule msinf_rule = MsinfRule::kMean;
  std::uint64_t seed = 0;

  MamConfig mam() const { return {mam_mode_for(mode), mam_detach_attention}; }

  void validate() const {
    backbone.validate();
    rcm.validate();
    if (epochs <= 0) throw ConfigError("epochs must be positive");
    if (batch_size <= 0) throw ConfigError("batch_size must be positive");
    if (mam_activation_epoch < 0 || mam_activation_epoch > epochs)
      throw ConfigError("mam_activation_epoch must lie in [0, epochs]");
    if (!(ema_momentum >= 0 && ema_momentum <= 1)) throw ConfigError("ema_momentum must lie in [0, 1]");
    if (augment.resize_min <= 0 || augment.resize_max < augment.resize_min) throw ConfigError("bad resize range");
    if (augment.crop % backbone.total_stride() != 0 || (augment.crop / 2) % backbone.total_stride() != 0)
      throw ConfigError("crop size must be a multiple of twice the network stride");
  }
};

/// One row of the training log.
struct StepRecord {
  std::int64_t step = 0;
  int epoch = 0;
  double lr = 0;
  double lambda3 = 0;
  double l_cls = 0;
  double l_rcm = 0;
  double l_mam = 0;
  double total = 0;
  bool rcm_skipped = false;
  bool aborted = false;  // non-finite loss, no update applied
};

inline void write_log_header(std::ostream& os) {
  os << "step,epoch,lr,lambda3,l_cls,l_rcm,l_mam,total,rcm_skipped\n";
}

inline void write_log_row(std::ostream& os, const StepRecord& r) {
  char buf[320];
  std::snprintf(buf, sizeof buf, "%lld,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d\n", static_cast<long long>(r.step),
                r.epoch, r.lr, r.lambda3, r.l_cls, r.l_rcm, r.l_mam, r.total, r.rcm_skipped ? 1 : 0);
  os << buf;
}

/// Per-step diagnostics beyond the log row.
struct StepDiagnostics {
  std::vector<ClassRegionMasks> masks;  // teacher masks per image (RCM modes)
  std::vector<Dissimilarity<double>> xi;
  int degenerate_channels = 0;
};

template <class T>
class Trainer {
 public:
  explicit Trainer(TrainConfig cfg)
      : cfg_(std::move(cfg)),
        pair_{init_backbone<T>(cfg_.backbone, cfg_.seed), {}, cfg_.ema_momentum},
        bank_(cfg_.backbone.num_classes, cfg_.backbone.feature_dim),
        opt_(pair_.main, cfg_.sgd),
        grads_(pair_.main.zeros_like()),
        rng_(cfg_.seed ^ 0x9e3779b97f4a7c15ULL) {
    cfg_.validate();
    pair_.support = pair_.main;
  }

  Trainer(TrainConfig cfg, EmaPair<T> pair, PrototypeBank<T> bank)
      : cfg_(std::move(cfg)),
        pair_(std::move(pair)),
        bank_(std::move(bank)),
        opt_(pair_.main, cfg_.sgd),
        grads_(pair_.main.zeros_like()),
        rng_(cfg_.seed ^ 0x9e3779b97f4a7c15ULL) {
    cfg_.validate();
    check_backbone_params(pair_.main, cfg_.backbone);
    check_backbone_params(pair_.support, cfg_.backbone);
  }

  const TrainConfig& config() const { return cfg_; }
  const EmaPair<T>& pair() const { return pair_; }
  EmaPair<T>& pair() { return pair_; }
  const PrototypeBank<T>& bank() const { return bank_; }
  const ParameterCollection<T>& last_gradients() const { return grads_; }
  const StepDiagnostics& diagnostics() const { return diag_; }

  /// Sets the iteration count used by the poly schedule.
  void set_max_iter(std::int64_t n) { max_iter_ = n; }
  std::int64_t max_iter() const { return max_iter_; }

  LossWeights weights(int epoch) const {
    auto w = lambda_schedule(epoch, cfg_.mam_activation_epoch, cfg_.lambda_cls, cfg_.lambda_rcm, cfg_.lambda_mam);
    if (!uses_rcm(cfg_.mode)) w.rcm = 0;
    if (!uses_mam(cfg_.mode)) w.mam = 0;
    return w;
  }

  /**
   * One optimisation step on an already-augmented batch: teacher pass,
   * masks and prototype bank update, student losses, SGD on the student,
   * EMA of the teacher.
   */
  StepRecord train_step(const std::vector<ImageSample>& batch, std::int64_t step, int epoch) {
    if (batch.empty()) throw InputError("train_step: empty batch");
    const auto& bc = cfg_.backbone;
    const bool rcm_on = uses_rcm(cfg_.mode), mam_on = uses_mam(cfg_.mode);
    const LossWeights w = weights(epoch);
    StepRecord rec;
    rec.step = step;
    rec.epoch = epoch;
    rec.lr = poly_lr(std::min<std::int64_t>(step, max_iter_), max_iter_, cfg_.base_lr, cfg_.poly_power);
    rec.lambda3 = w.mam;
    diag_ = {};

    const std::size_t b = batch.size();
    std::vector<Tensor<T>> images(b);
    std::vector<ClassSet> present(b);
    for (std::size_t i = 0; i < b; ++i) {
      images[i] = batch[i].pixels.template cast<T>();
      present[i] = present_classes(batch[i].label);
      if (batch[i].label.size() != static_cast<std::size_t>(bc.num_classes))
        throw InputError("train_step: label length does not match num_classes");
    }

    // Teacher pass. Nothing here receives gradient.
    std::vector<ScaleStack<T>> teacher_cams(b);
    std::vector<ClassRegionMasks> masks(b);
    std::size_t rcm_pixels = 0;
    if (rcm_on || mam_on) {
      std::vector<ImagePrototypes<T>> protos;
      for (std::size_t i = 0; i < b; ++i) {
        const auto outs = pyramid_forward(images[i], pair_.support, bc);
        teacher_cams[i] = aligned_normalized_cams(outs, present[i]);
        if (!rcm_on) continue;
        const auto msinf = msinf_aggregate(teacher_cams[i], present[i], cfg_.msinf_rule);
        masks[i] = class_region_masks(msinf, present[i], cfg_.rcm.threshold);
        protos.push_back(image_prototypes(outs[kMediumScale].features, masks[i]));
        rcm_pixels += masks[i].index.size();
      }
      if (rcm_on) {
        update_prototype_bank(bank_, protos, step);
        diag_.masks = masks;
      }
    }
    rec.rcm_skipped = rcm_on && !bank_.all_valid();

    grads_.set_zero();
    double cls_sum = 0, rcm_sum = 0, mam_sum = 0;
    const double inv_b = 1.0 / static_cast<double>(b);
    for (std::size_t i = 0; i < b; ++i) {
      const auto pyr = build_pyramid(images[i], bc.total_stride());
      std::vector<BackboneOutput<T>> outs(kScales);
      std::vector<BackboneTrace<T>> traces(kScales);
      for (int s = 0; s < kScales; ++s) outs[s] = backbone_forward(pyr.images[s], pair_.main, bc, &traces[s]);

      std::vector<Tensor<T>> grad_raw(kScales);
      Tensor<T> grad_feat;

      const auto& m = outs[kMediumScale];
      cls_sum += classification_loss(m.scores, batch[i].label);
      if (w.cls != 0) grad_raw[kMediumScale] = classification_loss_backward(m.raw_cam, m.scores, batch[i].label, w.cls * inv_b);

      if (rcm_on && !rec.rcm_skipped) {
        const bool want = w.rcm != 0;
        auto terms = rcm_loss_terms(m.features, masks[i], bank_, cfg_.rcm, want);
        rcm_sum += terms.sum;
        if (want) {
          terms.grad *= static_cast<T>(w.rcm / static_cast<double>(rcm_pixels));
          grad_feat = std::move(terms.grad);
        }
      }

      if (mam_on) {
        const bool want = w.mam != 0;
        std::vector<Tensor<T>> raw_aligned;
        {
          std::vector<Tensor<T>> raw;
          for (const auto& o : outs) raw.push_back(o.raw_cam);
          raw_aligned = align_to_medium(raw);
        }
        ScaleStack<T> student;
        for (const auto& a : raw_aligned) student.push_back(normalize_cams(a, present[i]));
        auto r = mam_forward(student, teacher_cams[i], present[i], cfg_.mam(), want);
        mam_sum += r.loss;
        diag_.degenerate_channels += r.xi.degenerate;
        diag_.xi.push_back({r.xi.xi.template cast<double>(), r.xi.present, r.xi.degenerate});
        if (want) {
          for (int s = 0; s < kScales; ++s) {
            r.grad[s] *= static_cast<T>(w.mam * inv_b);
            auto g = normalize_cams_backward(raw_aligned[s], present[i], r.grad[s]);
            g = resize_bilinear_backward(g, outs[s].raw_cam.dim(1), outs[s].raw_cam.dim(2));
            if (grad_raw[s].empty())
              grad_raw[s] = std::move(g);
            else
              grad_raw[s] += g;
          }
        }
      }

      const Tensor<T> none;
      for (int s = 0; s < kScales; ++s) {
        const Tensor<T>& gf = s == kMediumScale ? grad_feat : none;
        if (gf.empty() && grad_raw[s].empty()) continue;
        backbone_backward(traces[s], pair_.main, bc, gf, grad_raw[s], grads_);
      }
    }

    rec.l_cls = cls_sum * inv_b;
    rec.l_rcm = (rcm_on && !rec.rcm_skipped && rcm_pixels > 0) ? rcm_sum / static_cast<double>(rcm_pixels) : 0.0;
    rec.l_mam = mam_sum * inv_b;
    rec.total = total_loss(rec.l_cls, rec.l_rcm, rec.l_mam, w);
    if (!std::isfinite(rec.l_cls) || !std::isfinite(rec.l_rcm) || !std::isfinite(rec.l_mam)) {
      rec.aborted = true;
      return rec;
    }
    opt_.step(pair_.main, grads_, rec.lr);
    ema_update(pair_);
    return rec;
  }

  /**
   * Full training run over `train`: per epoch a seeded shuffle, augmented
   * batches (incomplete trailing batches dropped), one train_step each.
   */
  std::vector<StepRecord> fit(const std::vector<ImageSample>& train,
                              const std::function<void(const StepRecord&)>& on_step = {}) {
    const int per_epoch = static_cast<int>(train.size()) / cfg_.batch_size;
    if (per_epoch == 0) throw InputError("training set smaller than one batch");
    set_max_iter(static_cast<std::int64_t>(per_epoch) * cfg_.epochs);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<StepRecord> log;
    std::int64_t step = 0;
    for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), rng_);
      for (int bi = 0; bi < per_epoch; ++bi) {
        std::vector<ImageSample> batch;
        batch.reserve(static_cast<std::size_t>(cfg_.batch_size));
        for (int j = 0; j < cfg_.batch_size; ++j)
          batch.push_back(augment(train[order[static_cast<std::size_t>(bi * cfg_.batch_size + j)]], cfg_.augment, rng_));
        auto rec = train_step(batch, step, epoch);
        if (on_step) on_step(rec);
        log.push_back(rec);
        ++step;
      }
    }
    return log;
  }

 private:
  TrainConfig cfg_;
  EmaPair<T> pair_;
  PrototypeBank<T> bank_;
  Sgd<T> opt_;
  ParameterCollection<T> grads_;
  std::mt19937_64 rng_;
  std::int64_t max_iter_ = 1;
  StepDiagnostics diag_;
};

}  // namespace pixsup

#endif  // PIXSUP_TRAINER_HPP
