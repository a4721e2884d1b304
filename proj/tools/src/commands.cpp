#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "kandu/checkpoint.hpp"
#include "kandu/cli.hpp"
#include "kandu/data.hpp"
#include "kandu/gradcheck_suite.hpp"
#include "kandu/image_io.hpp"
#include "kandu/train.hpp"

namespace fs = std::filesystem;

namespace kandu::cli {

namespace {

/// Shortest text that parses back to the same double.
std::string num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, p);
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    throw std::runtime_error("cannot create output directory " + dir.string() +
                             (ec ? ": " + ec.message() : ""));
  const fs::path probe = dir / ".kandu_write_test";
  {
    std::ofstream f(probe);
    if (!f) throw std::runtime_error("output directory " + dir.string() + " is not writable");
  }
  fs::remove(probe, ec);
}

std::vector<Sample> load_manifest_samples(const std::string& path, Split split, std::size_t size) {
  const auto manifest = read_manifest(path, split);
  std::vector<Sample> out;
  out.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) out.push_back(resize_to(load_sample(e.image, e.mask), size));
  return out;
}

/// Samples of one split from the synthetic set or the configured manifest.
/// An unset manifest yields no samples.
std::vector<Sample> load_split(const RunConfig& cfg, Split split) {
  if (cfg.synth) {
    auto parts = split_items(synth_generate(cfg.synth_count, cfg.synth_size, cfg.train.seed),
                             SplitFractions{}, cfg.train.seed);
    return std::move(parts[static_cast<std::size_t>(split)]);
  }
  const std::string& path = split == Split::train ? cfg.train_manifest
                            : split == Split::val ? cfg.val_manifest
                                                  : cfg.test_manifest;
  if (path.empty()) return {};
  return load_manifest_samples(path, split, cfg.image_size);
}

std::string csv_row(std::size_t epoch, const EpochLog& log, double iou, double dice) {
  return std::to_string(epoch) + "," + num(log.lr.main) + "," + num(log.lr.aux) + "," +
         num(log.mean_loss) + "," + num(iou) + "," + num(dice) + "\n";
}

KanduNet<float> restored_model(const RunConfig& cfg) {
  if (cfg.checkpoint.empty()) throw std::invalid_argument("no checkpoint given (--checkpoint)");
  auto model = build_model<float>(cfg.model);
  restore_checkpoint(load_checkpoint(cfg.checkpoint), model);
  return model;
}

template <typename Fn>
int guarded(std::ostream& err, const char* command, Fn&& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    err << "kandu " << command << ": " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, "train", [&] {
    cfg.validate();
    const fs::path dir = cfg.output_dir;
    ensure_dir(dir);
    const auto train = load_split(cfg, Split::train);
    if (train.empty())
      throw std::invalid_argument("no training data: set train_manifest or synth = true");
    const auto val = load_split(cfg, Split::val);

    Trainer<float> trainer(cfg.model, cfg.train);
    std::size_t start = 0;
    double best = -1.0;
    if (!cfg.resume.empty()) {
      const auto ckpt = load_checkpoint(cfg.resume);
      if (ckpt.train_seed != cfg.train.seed)
        throw std::invalid_argument("resume: checkpoint was trained with seed " +
                                    std::to_string(ckpt.train_seed) + ", config has " +
                                    std::to_string(cfg.train.seed));
      restore_checkpoint(ckpt, trainer.model, &trainer.optimizer);
      start = ckpt.epoch;
      best = ckpt.best_metric;
      out << "resumed from " << cfg.resume << " after epoch " << start << "\n";
    }

    {
      std::ofstream f(dir / "config.txt");
      f << format_config(cfg);
    }
    const fs::path csv_path = dir / "metrics.csv";
    const bool append = start > 0 && fs::exists(csv_path);
    std::ofstream csv(csv_path, append ? std::ios::app : std::ios::trunc);
    if (!csv) throw std::runtime_error("cannot write " + csv_path.string());
    if (!append) csv << kTrainCsvHeader << "\n";

    for (std::size_t e = start; e < cfg.train.epochs; ++e) {
      const EpochLog log = train_epoch(trainer, train, e);
      double iou = std::nan(""), dice = std::nan("");
      if (!val.empty()) {
        const auto report = evaluate(trainer.model, val, cfg.train.batch_size);
        iou = report.iou_summary.mean;
        dice = report.dice_summary.mean;
      }
      csv << csv_row(e + 1, log, iou, dice);
      csv.flush();

      Checkpoint ckpt = capture_checkpoint(trainer.model, &trainer.optimizer);
      ckpt.epoch = e + 1;
      ckpt.train_seed = cfg.train.seed;
      // Without validation data the latest epoch doubles as the best one.
      const bool improved = val.empty() || dice > best;
      if (!val.empty() && improved) best = dice;
      ckpt.best_metric = best;
      save_checkpoint(dir / "latest.ckpt", ckpt);
      if (improved) save_checkpoint(dir / "best.ckpt", ckpt);

      out << "epoch " << e + 1 << "/" << cfg.train.epochs << " loss " << num(log.mean_loss);
      if (!val.empty()) out << " val_iou " << num(iou) << " val_dice " << num(dice);
      out << "\n";
    }
    return 0;
  });
}

int cmd_eval(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, "eval", [&] {
    cfg.validate();
    auto model = restored_model(cfg);
    const auto samples = load_split(cfg, cfg.eval_split);
    if (samples.empty())
      throw std::invalid_argument("no " + split_name(cfg.eval_split) + " data to evaluate");
    const auto report = evaluate(model, samples, cfg.train.batch_size);
    out << report.format();

    const fs::path dir = cfg.output_dir;
    ensure_dir(dir);
    std::ofstream csv(dir / ("eval_" + split_name(cfg.eval_split) + ".csv"));
    csv << "image,iou,dice\n";
    for (std::size_t i = 0; i < report.iou.size(); ++i)
      csv << i << "," << num(report.iou[i]) << "," << num(report.dice[i]) << "\n";
    csv << "mean," << num(report.iou_summary.mean) << "," << num(report.dice_summary.mean) << "\n";
    csv << "std," << num(report.iou_summary.std) << "," << num(report.dice_summary.std) << "\n";
    return 0;
  });
}

int cmd_predict(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, "predict", [&] {
    cfg.validate();
    if (cfg.input.empty()) throw std::invalid_argument("no input image given (--input)");
    auto model = restored_model(cfg);
    const Sample s = resize_to(load_image(cfg.input), cfg.image_size);
    const auto prob = predict(model, std::vector<Sample>{s}, 1).front();

    Image8 mask;
    mask.width = s.width;
    mask.height = s.height;
    mask.channels = 1;
    mask.pixels.resize(prob.size());
    for (std::size_t i = 0; i < prob.size(); ++i) mask.pixels[i] = prob[i] >= 0.5f ? 255 : 0;

    fs::path dst = cfg.output;
    if (dst.empty()) {
      ensure_dir(cfg.output_dir);
      dst = fs::path(cfg.output_dir) / (fs::path(cfg.input).stem().string() + "_mask.png");
    }
    write_png(dst, mask);
    out << "wrote " << dst.string() << "\n";
    return 0;
  });
}

int cmd_gradcheck(std::ostream& out, std::ostream& err) {
  return guarded(err, "gradcheck", [&] {
    const auto rows = run_gradcheck_suite();
    out << format_gradcheck_table(rows);
    const bool ok = all_passed(rows);
    out << (ok ? "all operations within " : "FAILED: some operations exceed ") << kGradCheckTolerance
        << "\n";
    return ok ? 0 : 1;
  });
}

int cmd_synth(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, "synth", [&] {
    if (cfg.synth_count == 0 || cfg.synth_size == 0)
      throw std::invalid_argument("synth_count and synth_size must be positive");
    const fs::path dir = cfg.output_dir;
    ensure_dir(dir);
    const auto samples = synth_generate(cfg.synth_count, cfg.synth_size, cfg.train.seed);
    DatasetManifest manifest;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const Sample& s = samples[i];
      char stem[32];
      std::snprintf(stem, sizeof stem, "%04zu", i);
      Image8 img{s.width, s.height, 3, std::vector<std::uint8_t>(s.image.size())};
      for (std::size_t k = 0; k < s.image.size(); ++k)
        img.pixels[k] = std::uint8_t(std::lround(std::clamp(s.image[k], 0.0f, 1.0f) * 255.0f));
      Image8 msk{s.width, s.height, 1, std::vector<std::uint8_t>(s.mask.size())};
      for (std::size_t k = 0; k < s.mask.size(); ++k) msk.pixels[k] = s.mask[k] ? 255 : 0;
      const std::string image_name = std::string("image_") + stem + ".png";
      const std::string mask_name = std::string("mask_") + stem + ".png";
      write_png(dir / image_name, img);
      write_png(dir / mask_name, msk);
      manifest.entries.push_back({image_name, mask_name});
    }
    write_manifest(dir / "manifest.tsv", manifest);
    out << "wrote " << samples.size() << " samples to " << dir.string() << "\n";
    return 0;
  });
}

}  // namespace kandu::cli
