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

#ifndef PIXSUP_EVAL_HPP
#define PIXSUP_EVAL_HPP

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "pixsup/backbone.hpp"
#include "pixsup/cam.hpp"
#include "pixsup/image_io.hpp"
#include "pixsup/rcm.hpp"
#include "pixsup/inference.hpp"
#include "pixsup/multiscale.hpp"
#include "pixsup/tensor.hpp"

namespace pixsup {

/// Pixel label = present class with the largest CAM value if that value
/// exceeds `bg_threshold`, otherwise background (0).
template <class T>
Tensor<int> pseudo_labels(const Tensor<T>& cam, const ClassSet& present, double bg_threshold) {
  return class_region_masks(cam, present, bg_threshold).index;
}

/// (N+1) x (N+1) pixel confusion counts, rows = ground truth.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int classes) : n_(classes), counts_(static_cast<std::size_t>(classes * classes), 0) {}

  void add(const Tensor<int>& pred, const Tensor<int>& gt) {
    if (!pred.same_shape(gt)) throw ShapeError("confusion: prediction and ground truth shapes differ");
    for (std::size_t p = 0; p < pred.size(); ++p) {
      const int g = gt[p], q = pred[p];
      if (g < 0 || g >= n_ || q < 0 || q >= n_) throw InputError("confusion: label out of range");
      ++counts_[static_cast<std::size_t>(g * n_ + q)];
    }
    total_ += pred.size();
  }

  std::uint64_t at(int gt, int pred) const { return counts_[static_cast<std::size_t>(gt * n_ + pred)]; }
  int classes() const { return n_; }
  std::uint64_t total() const { return total_; }

 private:
  int n_;
  std::vector<std::uint64_t> counts_;
  std::uint64_t total_ = 0;
};

struct SegMetrics {
  std::vector<std::optional<double>> iou;  // per class incl. background; nullopt when union is empty
  double miou = 0;
  double precision = 0;
  double recall = 0;
  bool zero_activation = false;
  double threshold = 0;
};

inline SegMetrics metrics_from_confusion(const ConfusionMatrix& cm) {
  SegMetrics m;
  const int n = cm.classes();
  m.iou.assign(static_cast<std::size_t>(n), std::nullopt);
  double sum = 0;
  int used = 0;
  for (int c = 0; c < n; ++c) {
    std::uint64_t tp = cm.at(c, c), row = 0, col = 0;
    for (int j = 0; j < n; ++j) {
      row += cm.at(c, j);
      col += cm.at(j, c);
    }
    const std::uint64_t uni = row + col - tp;
    if (uni == 0) continue;
    const double iou = static_cast<double>(tp) / static_cast<double>(uni);
    m.iou[static_cast<std::size_t>(c)] = iou;
    sum += iou;
    ++used;
  }
  m.miou = used ? sum / used : 0.0;
  return m;
}

/// IoU per class and their mean over classes with a non-empty union.
inline SegMetrics miou(const std::vector<Tensor<int>>& pred, const std::vector<Tensor<int>>& gt, int classes) {
  if (pred.empty() || pred.size() != gt.size()) throw InputError("miou: empty or mismatched map lists");
  ConfusionMatrix cm(classes);
  for (std::size_t i = 0; i < pred.size(); ++i) cm.add(pred[i], gt[i]);
  return metrics_from_confusion(cm);
}

/// Class-agnostic activation counts against the ground-truth foreground.
struct ActivationCounts {
  std::uint64_t tp = 0, fp = 0, fn = 0;

  void add(const Tensor<int>& active, const Tensor<int>& gt_fg) {
    if (!active.same_shape(gt_fg)) throw ShapeError("activation and ground truth shapes differ");
    for (std::size_t p = 0; p < active.size(); ++p) {
      const bool a = active[p] != 0, g = gt_fg[p] != 0;
      tp += a && g;
      fp += a && !g;
      fn += !a && g;
    }
  }
};

struct PrecisionRecall {
  double precision = 0;
  double recall = 0;
  bool zero_activation = false;
};

inline PrecisionRecall precision_recall(const ActivationCounts& c) {
  PrecisionRecall r;
  r.zero_activation = c.tp + c.fp == 0;
  r.precision = r.zero_activation ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  r.recall = c.tp + c.fn == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  return r;
}

/// Activation = any present-class CAM value above the threshold.
template <class T>
Tensor<int> foreground_activation(const Tensor<T>& cam, const ClassSet& present, double threshold) {
  Tensor<int> out({cam.dim(1), cam.dim(2)});
  for (int k = 0; k < cam.dim(0); ++k) {
    if (!present[static_cast<std::size_t>(k)]) continue;
    const auto ch = cam.channel(k);
    for (std::size_t p = 0; p < ch.size(); ++p)
      if (ch[p] > threshold) out[p] = 1;
  }
  return out;
}

inline PrecisionRecall precision_recall(const Tensor<int>& active, const Tensor<int>& gt_fg) {
  ActivationCounts c;
  c.add(active, gt_fg);
  return precision_recall(c);
}

/// Image-resolution CAMs of every evaluation sample, in dataset order.
struct CamSet {
  std::vector<Tensor<float>> cams;  // (N, H, W) per sample
  std::vector<ClassSet> present;
  std::vector<Tensor<int>> gt;
};

/// Produces an image-resolution CAM stack for a sample.
using CamProvider = std::function<Tensor<float>(const ImageSample&)>;

inline CamSet collect_cams(const std::vector<ImageSample>& samples, const CamProvider& provider) {
  if (samples.empty()) throw InputError("evaluation set is empty");
  CamSet s;
  for (const auto& smp : samples) {
    if (!smp.has_mask()) throw InputError("evaluation sample without a ground-truth mask");
    s.cams.push_back(provider(smp));
    s.present.push_back(present_classes(smp.label));
    s.gt.push_back(smp.gt_mask);
  }
  return s;
}

/// mIoU and precision/recall of the thresholded CAMs of a whole set.
inline SegMetrics evaluate_cams(const CamSet& set, double threshold) {
  const int classes = set.cams.front().dim(0) + 1;
  ConfusionMatrix cm(classes);
  ActivationCounts act;
  for (std::size_t i = 0; i < set.cams.size(); ++i) {
    cm.add(pseudo_labels(set.cams[i], set.present[i], threshold), set.gt[i]);
    Tensor<int> fg(set.gt[i].shape());
    for (std::size_t p = 0; p < fg.size(); ++p) fg[p] = set.gt[i][p] > 0;
    act.add(foreground_activation(set.cams[i], set.present[i], threshold), fg);
  }
  auto m = metrics_from_confusion(cm);
  const auto pr = precision_recall(act);
  m.precision = pr.precision;
  m.recall = pr.recall;
  m.zero_activation = pr.zero_activation;
  m.threshold = threshold;
  return m;
}

struct SweepRow {
  double threshold = 0;
  SegMetrics metrics;
  std::uint64_t background_pixels = 0;
};

inline std::vector<SweepRow> threshold_sweep(const CamSet& set, const std::vector<double>& thresholds) {
  if (thresholds.empty()) throw InputError("threshold sweep needs at least one threshold");
  std::vector<SweepRow> rows;
  for (double t : thresholds) {
    SweepRow r{t, evaluate_cams(set, t), 0};
    for (std::size_t i = 0; i < set.cams.size(); ++i) {
      const auto pl = pseudo_labels(set.cams[i], set.present[i], t);
      for (int v : pl.values()) r.background_pixels += v == 0;
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

/// Row with the highest mIoU (first one on ties).
inline const SweepRow& best_row(const std::vector<SweepRow>& rows) {
  if (rows.empty()) throw InputError("best_row: empty sweep");
  std::size_t best = 0;
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (rows[i].metrics.miou > rows[best].metrics.miou) best = i;
  return rows[best];
}

inline void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
  os << "threshold,miou,precision,recall,background_pixels\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.4f,%.10f,%.10f,%.10f,%llu\n", r.threshold, r.metrics.miou, r.metrics.precision,
                  r.metrics.recall, static_cast<unsigned long long>(r.background_pixels));
    os << buf;
  }
}

/// mIoU (red), precision (green) and recall (blue) against threshold, as PPM.
inline void write_sweep_plot(const std::filesystem::path& path, const std::vector<SweepRow>& rows) {
  std::vector<double> x;
  PlotSeries m{{}, {0.85f, 0.1f, 0.1f}}, p{{}, {0.1f, 0.6f, 0.1f}}, r{{}, {0.1f, 0.2f, 0.85f}};
  for (const auto& row : rows) {
    x.push_back(row.threshold);
    m.y.push_back(row.metrics.miou);
    p.y.push_back(row.metrics.precision);
    r.y.push_back(row.metrics.recall);
  }
  write_ppm(path, render_line_plot(x, {m, p, r}));
}

inline void write_metrics_csv(std::ostream& os, const SegMetrics& m) {
  os << "metric,value\n";
  char buf[96];
  std::snprintf(buf, sizeof buf, "threshold,%.4f\nmiou,%.10f\nprecision,%.10f\nrecall,%.10f\n", m.threshold, m.miou,
                m.precision, m.recall);
  os << buf;
  for (std::size_t c = 0; c < m.iou.size(); ++c) {
    if (m.iou[c])
      std::snprintf(buf, sizeof buf, "iou_%zu,%.10f\n", c, *m.iou[c]);
    else
      std::snprintf(buf, sizeof buf, "iou_%zu,\n", c);
    os << buf;
  }
}

/// Produces the image-resolution CAM of a sample at one input ratio.
using ScaleCamProvider = std::function<Tensor<float>(const ImageSample&, double)>;

struct ScaleVarianceReport {
  std::vector<double> scales;
  std::vector<double> miou;  // single-scale mIoU, same order as scales
  double mean = 0;
  double stddev = 0;  // population
  double msinf_miou = 0;
  double threshold = 0;
};

inline ScaleVarianceReport scale_variance_report(const std::vector<ImageSample>& samples,
                                                 const ScaleCamProvider& single, const CamProvider& msinf,
                                                 const std::vector<double>& scales, double threshold) {
  if (scales.empty()) throw InputError("scale report needs at least one scale");
  ScaleVarianceReport r;
  r.scales = scales;
  r.threshold = threshold;
  for (double s : scales) {
    const auto set = collect_cams(samples, [&](const ImageSample& smp) { return single(smp, s); });
    r.miou.push_back(evaluate_cams(set, threshold).miou);
  }
  for (double v : r.miou) r.mean += v;
  r.mean /= static_cast<double>(r.miou.size());
  for (double v : r.miou) r.stddev += (v - r.mean) * (v - r.mean);
  r.stddev = std::sqrt(r.stddev / static_cast<double>(r.miou.size()));
  r.msinf_miou = evaluate_cams(collect_cams(samples, msinf), threshold).miou;
  return r;
}

inline void write_scale_report_csv(std::ostream& os, const ScaleVarianceReport& r) {
  os << "row,miou\n";
  char buf[96];
  for (std::size_t i = 0; i < r.scales.size(); ++i) {
    std::snprintf(buf, sizeof buf, "scale_%.2f,%.10f\n", r.scales[i], r.miou[i]);
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "mean,%.10f\nstd,%.10f\nmsinf,%.10f\n", r.mean, r.stddev, r.msinf_miou);
  os << buf;
}

/// Providers backed by a trained network.
struct NetworkCams {
  const ParameterCollection<float>* params;
  BackboneConfig backbone;
  std::vector<double> ratios{0.5, 1.0, 2.0};
  MsinfRule rule = MsinfRule::kMean;

  Tensor<float> msinf(const ImageSample& s) const {
    const auto present = present_classes(s.label);
    return msinf_cam_ratios(s.pixels, *params, backbone, present, ratios, s.height(), s.width(), rule);
  }

  Tensor<float> single(const ImageSample& s, double ratio) const {
    const auto present = present_classes(s.label);
    return single_scale_cam(s.pixels, *params, backbone, present, ratio, s.height(), s.width());
  }

  CamProvider msinf_provider() const {
    return [this](const ImageSample& s) { return msinf(s); };
  }
  ScaleCamProvider single_provider() const {
    return [this](const ImageSample& s, double r) { return single(s, r); };
  }
};

}  // namespace pixsup

#endif  // PIXSUP_EVAL_HPP
