// pixsup command-line tool.
//
//   pixsup gen-data     --config run.json --out data/
//   pixsup train        --config run.json --mode full --out runs/full [--dataset data/] [--xi-csv xi.csv]
//   pixsup infer        --checkpoint runs/full/model.ckpt --dataset data/ --out cams/
//   pixsup eval         --checkpoint ... [--dataset data/ | --config run.json] --out metrics.csv
//   pixsup sweep        --checkpoint ... --thresholds 0.05,0.1,... --out sweep/
//   pixsup scale-report --checkpoint ... --scales 0.5,1,1.5,2 --out scales.csv
//
// Evaluation commands read the "val" split of --dataset, or regenerate it
// from --config when no dataset directory is given.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "pixsup/checkpoint.hpp"
#include "pixsup/config.hpp"
#include "pixsup/eval.hpp"
#include "pixsup/image_io.hpp"
#include "pixsup/trainer.hpp"

namespace fs = std::filesystem;
using namespace pixsup;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string mode;
  std::string dataset;
  std::string checkpoint;
  std::string xi_csv;
  std::vector<double> thresholds;
  std::vector<double> scales;
  std::optional<double> threshold;
  std::string split = "val";
};

RunConfig resolve_config(const Options& o) {
  RunConfig rc = o.config.empty() ? run_config_from_json(Json::object()) : load_run_config(o.config);
  if (o.seed) {
    rc.seed = *o.seed;
    rc.train.seed = *o.seed;
  }
  if (!o.mode.empty()) rc.train.mode = parse_train_mode(o.mode);
  return rc;
}

ShapeDataset dataset_for(const RunConfig& rc) {
  return generate_dataset(rc.n_train, rc.n_val, rc.dataset, rc.seed, rc.train.backbone.total_stride());
}

std::ofstream open_csv(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p);
  if (!f) throw Error("cannot write '" + p.string() + "'");
  return f;
}

std::vector<ImageSample> eval_samples(const Options& o) {
  if (!o.dataset.empty()) return load_split(fs::path(o.dataset) / o.split);
  if (o.config.empty()) throw InputError("need --dataset or --config to locate evaluation images");
  const auto ds = dataset_for(resolve_config(o));
  return o.split == "train" ? ds.train : ds.val;
}

Checkpoint need_checkpoint(const Options& o) {
  if (o.checkpoint.empty()) throw InputError("--checkpoint is required");
  return load_checkpoint(o.checkpoint);
}

void cmd_gen_data(const Options& o) {
  const auto rc = resolve_config(o);
  const auto ds = dataset_for(rc);
  const fs::path out = o.out.empty() ? fs::path(rc.out_dir) / "data" : fs::path(o.out);
  save_split(out / "train", ds.train);
  save_split(out / "val", ds.val);
  std::ofstream(out / "config.json") << to_json(rc).dump(2) << '\n';
  std::printf("wrote %zu train and %zu val samples to %s\n", ds.train.size(), ds.val.size(), out.c_str());
}

void cmd_train(const Options& o) {
  const auto rc = resolve_config(o);
  const fs::path out = o.out.empty() ? fs::path(rc.out_dir) : fs::path(o.out);
  const auto train = o.dataset.empty() ? dataset_for(rc).train : load_split(fs::path(o.dataset) / "train");
  fs::create_directories(out);
  std::ofstream(out / "config.json") << to_json(rc).dump(2) << '\n';

  Trainer<float> trainer(rc.train);
  auto log = open_csv(out / "loss.csv");
  write_log_header(log);
  std::optional<std::ofstream> xi;
  if (!o.xi_csv.empty()) {
    xi = open_csv(o.xi_csv);
    *xi << "step,image,class,i,j,value\n";
  }
  int skipped = 0, aborted = 0;
  trainer.fit(train, [&](const StepRecord& r) {
    write_log_row(log, r);
    skipped += r.rcm_skipped;
    aborted += r.aborted;
    if (xi) {
      const auto& d = trainer.diagnostics().xi;
      for (std::size_t im = 0; im < d.size(); ++im)
        for (int k = 0; k < d[im].xi.dim(0); ++k) {
          if (!d[im].present[static_cast<std::size_t>(k)]) continue;
          for (int i = 0; i < kScales; ++i)
            for (int j = 0; j < kScales; ++j)
              *xi << r.step << ',' << im << ',' << k + 1 << ',' << i << ',' << j << ',' << d[im].xi(k, i, j) << '\n';
        }
    }
    if (r.step % 20 == 0)
      std::printf("step %lld epoch %d lr %.5f cls %.4f rcm %.4f mam %.4f\n", static_cast<long long>(r.step), r.epoch,
                  r.lr, r.l_cls, r.l_rcm, r.l_mam);
  });
  save_checkpoint(out / "model.ckpt", {trainer.config(), trainer.pair(), trainer.bank()});
  std::printf("mode %s: %d steps with RCM skipped, %d aborted; checkpoint %s\n", to_string(rc.train.mode), skipped,
              aborted, (out / "model.ckpt").c_str());
}

void cmd_infer(const Options& o) {
  const auto ck = need_checkpoint(o);
  const auto samples = eval_samples(o);
  const fs::path out = o.out.empty() ? fs::path("infer") : fs::path(o.out);
  const NetworkCams net{&ck.pair.main, ck.config.backbone, {0.5, 1.0, 2.0}, ck.config.msinf_rule};
  const double t = o.threshold.value_or(ck.config.rcm.threshold);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto cam = net.msinf(samples[i]);
    const auto present = present_classes(samples[i].label);
    const auto name = sample_name(i);
    write_pgm(out / (name + "_label.pgm"), pseudo_labels(cam, present, t));
    for (int k = 0; k < cam.dim(0); ++k) {
      if (!present[static_cast<std::size_t>(k)]) continue;
      write_ppm(out / (name + "_cam" + std::to_string(k + 1) + ".ppm"), render_heatmap(samples[i].pixels, cam.channel(k)));
    }
  }
  std::printf("wrote CAMs and pseudo-labels of %zu images to %s\n", samples.size(), out.c_str());
}

void cmd_eval(const Options& o) {
  const auto ck = need_checkpoint(o);
  const NetworkCams net{&ck.pair.main, ck.config.backbone, {0.5, 1.0, 2.0}, ck.config.msinf_rule};
  const auto set = collect_cams(eval_samples(o), net.msinf_provider());
  const auto m = evaluate_cams(set, o.threshold.value_or(ck.config.rcm.threshold));
  if (o.out.empty()) {
    write_metrics_csv(std::cout, m);
  } else {
    auto f = open_csv(o.out);
    write_metrics_csv(f, m);
  }
  std::fprintf(stderr, "mIoU %.4f precision %.4f recall %.4f\n", m.miou, m.precision, m.recall);
}

void cmd_sweep(const Options& o) {
  const auto ck = need_checkpoint(o);
  const NetworkCams net{&ck.pair.main, ck.config.backbone, {0.5, 1.0, 2.0}, ck.config.msinf_rule};
  const auto set = collect_cams(eval_samples(o), net.msinf_provider());
  const auto thresholds = o.thresholds.empty() ? EvalConfig{}.thresholds : o.thresholds;
  const auto rows = threshold_sweep(set, thresholds);
  const fs::path out = o.out.empty() ? fs::path("sweep") : fs::path(o.out);
  auto f = open_csv(out / "sweep.csv");
  write_sweep_csv(f, rows);
  write_sweep_plot(out / "sweep.ppm", rows);
  const auto& best = best_row(rows);
  std::printf("best threshold %.2f: mIoU %.4f precision %.4f recall %.4f\n", best.threshold, best.metrics.miou,
              best.metrics.precision, best.metrics.recall);
}

void cmd_scale_report(const Options& o) {
  const auto ck = need_checkpoint(o);
  const NetworkCams net{&ck.pair.main, ck.config.backbone, {0.5, 1.0, 2.0}, ck.config.msinf_rule};
  const auto scales = o.scales.empty() ? EvalConfig{}.scales : o.scales;
  const auto r = scale_variance_report(eval_samples(o), net.single_provider(), net.msinf_provider(), scales,
                                       o.threshold.value_or(ck.config.rcm.threshold));
  if (o.out.empty()) {
    write_scale_report_csv(std::cout, r);
  } else {
    auto f = open_csv(o.out);
    write_scale_report_csv(f, r);
  }
  std::fprintf(stderr, "single-scale mIoU %.4f +- %.4f, msinf %.4f\n", r.mean, r.stddev, r.msinf_miou);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-network weakly supervised segmentation on synthetic shapes"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "override the configured seed");
    sub->add_option("--out", o.out, "output path");
  };
  auto eval_inputs = [&](CLI::App* sub) {
    sub->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
    sub->add_option("--dataset", o.dataset, "dataset root written by gen-data")->check(CLI::ExistingDirectory);
    sub->add_option("--split", o.split, "dataset split")->check(CLI::IsMember({"train", "val"}));
    sub->add_option("--threshold", o.threshold, "background threshold (default: training threshold)");
  };

  auto* gen = app.add_subcommand("gen-data", "write the synthetic dataset to disk");
  common(gen);
  auto* train = app.add_subcommand("train", "train a model and write checkpoint and loss log");
  common(train);
  train->add_option("--mode", o.mode, "full, baseline, rcm-only, mam-only, smm or mmm");
  train->add_option("--dataset", o.dataset, "train on a gen-data directory instead of regenerating")
      ->check(CLI::ExistingDirectory);
  train->add_option("--xi-csv", o.xi_csv, "dump per-batch cosine distances to this CSV");
  auto* infer = app.add_subcommand("infer", "write CAM heatmaps and pseudo-label maps");
  common(infer);
  eval_inputs(infer);
  auto* eval = app.add_subcommand("eval", "segmentation metrics of the msinf pseudo-labels");
  common(eval);
  eval_inputs(eval);
  auto* sweep = app.add_subcommand("sweep", "metrics over a list of background thresholds");
  common(sweep);
  eval_inputs(sweep);
  sweep->add_option("--thresholds", o.thresholds, "comma-separated thresholds")->delimiter(',');
  auto* scale = app.add_subcommand("scale-report", "single-scale mIoU spread across input scales");
  common(scale);
  eval_inputs(scale);
  scale->add_option("--scales", o.scales, "comma-separated input ratios")->delimiter(',');

  CLI11_PARSE(app, argc, argv);
  try {
    if (gen->parsed()) cmd_gen_data(o);
    if (train->parsed()) cmd_train(o);
    if (infer->parsed()) cmd_infer(o);
    if (eval->parsed()) cmd_eval(o);
    if (sweep->parsed()) cmd_sweep(o);
    if (scale->parsed()) cmd_scale_report(o);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "pixsup: %s\n", e.what());
    return 1;
  }
  return 0;
}
