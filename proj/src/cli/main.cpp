#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "core/errors.h"
#include "datagen/datagen.h"
#include "metrics/metrics.h"
#include "trainer/trainer.h"

using namespace simit;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> png_names(const std::string& dir) {
  if (!fs::is_directory(dir)) throw DataError("'" + dir + "' is not a directory");
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.path().extension() == ".png") names.push_back(entry.path().filename().string());
  std::sort(names.begin(), names.end());
  if (names.empty()) throw DataError("no .png files under '" + dir + "'");
  return names;
}

std::pair<double, double> mean_std(const std::vector<double>& xs) {
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  double sd = xs.size() > 1 ? std::sqrt(var / static_cast<double>(xs.size() - 1)) : 0.0;
  return {mean, sd};
}

struct GenArgs {
  std::string out;
  int scenes = 256;
  int size = 256;
  int classes = 4;
  int min_shapes = 3;
  int max_shapes = 8;
  std::uint64_t seed = 0;
};

int run_gen(const GenArgs& a) {
  datagen::ToyConfig tc{a.size, a.classes, a.min_shapes, a.max_shapes};
  datagen::DatasetManifest m = datagen::make_toy_dataset(a.out, a.scenes, tc, a.seed);
  std::printf("wrote %s: %zu train / %zu val / %zu test paired scenes, %d classes, %dpx\n",
              (fs::path(a.out) / "manifest.json").string().c_str(),
              m.splits.at("train").paired.size(), m.splits.at("val").paired.size(),
              m.splits.at("test").paired.size(), m.num_classes, m.image_size);
  return 0;
}

struct TrainArgs {
  std::string data, out, preset = "paper", config_file, resume, ada;
  std::optional<std::string> variant;
  std::optional<int> epochs, batch_size, crop, num_locations, base_width, max_width, head_width,
      val_every;
  std::optional<double> lr_g, lr_f, lambda_g, lambda_f, gamma_i, gamma_l, tau, ada_target,
      ada_speed;
  std::optional<std::uint64_t> seed;
  bool overrides = false;
};

trainer::TrainConfig assemble_config(const TrainArgs& a) {
  trainer::TrainConfig cfg =
      a.config_file.empty()
          ? (a.preset == "toy" ? trainer::TrainConfig::toy() : trainer::TrainConfig::paper())
          : trainer::config_from_json(slurp(a.config_file));
  if (a.variant) cfg.variant = *a.variant;
  if (a.epochs) cfg.epochs = *a.epochs;
  if (a.batch_size) cfg.batch_size = *a.batch_size;
  if (a.crop) cfg.crop = *a.crop;
  if (a.num_locations) cfg.num_locations = *a.num_locations;
  if (a.base_width) cfg.base_width = *a.base_width;
  if (a.max_width) cfg.max_width = *a.max_width;
  if (a.head_width) cfg.head_width = *a.head_width;
  if (a.val_every) cfg.val_every = *a.val_every;
  if (a.lr_g) cfg.lr_G = *a.lr_g;
  if (a.lr_f) cfg.lr_F = *a.lr_f;
  if (a.lambda_g) cfg.lambda_G = *a.lambda_g;
  if (a.lambda_f) cfg.lambda_F = *a.lambda_f;
  if (a.gamma_i) cfg.gamma_I = *a.gamma_i;
  if (a.gamma_l) cfg.gamma_L = *a.gamma_l;
  if (a.tau) cfg.tau = *a.tau;
  if (a.ada_target) cfg.ada_target = *a.ada_target;
  if (a.ada_speed) cfg.ada_speed = *a.ada_speed;
  if (!a.ada.empty()) cfg.ada = a.ada == "on";
  if (a.seed) cfg.seed = *a.seed;
  cfg.validate();
  return cfg;
}

int run_train(const TrainArgs& a) {
  datagen::DatasetManifest manifest = datagen::load_manifest(a.data);
  std::unique_ptr<trainer::Trainer> t;
  if (!a.resume.empty()) {
    if (a.overrides || !a.config_file.empty())
      throw UsageError("--resume restores the recorded config; drop the config flags");
    t = trainer::Trainer::load(a.resume, &manifest);
    std::printf("resuming %s at epoch %d, step %lld\n", a.resume.c_str(), t->epoch(),
                static_cast<long long>(t->global_step()));
  } else {
    trainer::TrainConfig cfg = assemble_config(a);
    t = std::make_unique<trainer::Trainer>(manifest, cfg);
    fs::create_directories(a.out);
    std::ofstream(fs::path(a.out) / "config.json") << trainer::config_to_json(cfg) << "\n";
  }

  fs::create_directories(a.out);
  std::ofstream log(fs::path(a.out) / "log.jsonl", std::ios::app);
  if (!log) throw DataError("cannot open log under '" + a.out + "'");
  trainer::FitResult res = t->fit(a.out, &log);
  std::printf("trained %zu steps (variant %s)\n", res.steps.size(), t->config().variant.c_str());
  if (res.best_epoch >= 0)
    std::printf("best val ssim %.4f at epoch %d\n", res.best_ssim, res.best_epoch);
  std::printf("final checkpoint: %s\n", res.final_checkpoint.c_str());
  return 0;
}

struct TranslateArgs {
  std::string ckpt, data, split = "test", mode, out;
  std::uint64_t seed = 0;
};

int run_translate(const TranslateArgs& a) {
  auto t = trainer::Trainer::load(a.ckpt, nullptr);
  datagen::DatasetManifest m = datagen::load_manifest(a.data);
  if (m.num_classes != t->num_classes())
    throw DataError("checkpoint expects " + std::to_string(t->num_classes()) +
                    " classes, dataset has " + std::to_string(m.num_classes));
  if (!m.splits.count(a.split)) throw UsageError("dataset has no split '" + a.split + "'");
  const datagen::SplitLists& lists = m.splits.at(a.split);
  fs::create_directories(a.out);

  int n = 0;
  if (a.mode == "label2image") {
    for (size_t i = 0; i < lists.paired.size(); ++i) {
      const std::string& id = lists.paired[i];
      datagen::LabelMap lm = datagen::read_label_png(m.label_path(a.split, id), m.num_classes);
      Tensor onehot = datagen::one_hot_encode(lm);
      int c = onehot.dim(0), h = onehot.dim(1), w = onehot.dim(2);
      Tensor img = t->label2image(onehot.reshaped({1, c, h, w}),
                                  mix_seed(a.seed, static_cast<std::uint64_t>(i)));
      datagen::write_image_png((fs::path(a.out) / (id + ".png")).string(),
                               img.reshaped({3, h, w}));
      ++n;
    }
  } else {
    for (const std::string& id : lists.real) {
      Tensor img = datagen::read_image_png(m.real_path(a.split, id));
      int h = img.dim(1), w = img.dim(2);
      Tensor scores = t->image2label_scores(img.reshaped({1, 3, h, w}));
      datagen::write_label_png((fs::path(a.out) / (id + ".png")).string(),
                               metrics::argmax_labels(scores));
      ++n;
    }
  }
  if (n == 0) throw DataError("split '" + a.split + "' has no inputs for " + a.mode);
  std::printf("translated %d files into %s\n", n, a.out.c_str());
  return 0;
}

struct EvalArgs {
  std::string metric, ref, test;
  int classes = 0;
  std::uint64_t embed_seed = 0;
};

std::vector<Tensor> read_dir_images(const std::string& dir) {
  std::vector<Tensor> out;
  for (const std::string& name : png_names(dir))
    out.push_back(datagen::read_image_png((fs::path(dir) / name).string()));
  return out;
}

int run_evaluate(const EvalArgs& a) {
  if (a.metric == "kid" || a.metric == "fid") {
    metrics::RandomProjectionEmbedder emb(a.embed_seed);
    Tensor ref = metrics::embed_set(emb, read_dir_images(a.ref));
    Tensor test = metrics::embed_set(emb, read_dir_images(a.test));
    double v = a.metric == "kid" ? metrics::kid(ref, test) : metrics::fid(ref, test);
    std::printf("%s: %.8f\n", a.metric.c_str(), v);
    return 0;
  }

  std::vector<std::string> names = png_names(a.ref);
  std::vector<double> pix, cls, vals;
  for (const std::string& name : names) {
    std::string rp = (fs::path(a.ref) / name).string();
    std::string tp = (fs::path(a.test) / name).string();
    if (!fs::exists(tp)) throw DataError("no counterpart for '" + name + "' under '" + a.test + "'");
    if (a.metric == "ssim") {
      vals.push_back(metrics::ssim(datagen::read_image_png(rp), datagen::read_image_png(tp)));
    } else if (a.metric == "bone-iou") {
      Tensor ma = metrics::bone_mask(datagen::read_image_png(rp));
      Tensor mb = metrics::bone_mask(datagen::read_image_png(tp));
      vals.push_back(metrics::bone_iou(ma, mb));
    } else {  // seg
      if (a.classes < 2) throw UsageError("--classes is required for the seg metric");
      datagen::LabelMap gt = datagen::read_label_png(rp, a.classes);
      datagen::LabelMap pred = datagen::read_label_png(tp, a.classes);
      metrics::SegScores s = metrics::toy_segmentation_accuracy(pred, gt);
      pix.push_back(s.pix_acc);
      cls.push_back(s.class_acc);
    }
  }

  if (a.metric == "seg") {
    auto [pm, ps] = mean_std(pix);
    auto [cm, cs] = mean_std(cls);
    std::printf("pixel_acc: %.6f(%.6f)\n", pm, ps);
    std::printf("class_acc: %.6f(%.6f)\n", cm, cs);
  } else {
    auto [m, s] = mean_std(vals);
    std::printf("%s: %.6f(%.6f)\n", a.metric == "bone-iou" ? "bone_iou" : a.metric.c_str(), m, s);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SimIT: unpaired label-to-image translation on a simulated bridge"};
  app.require_subcommand(1);

  GenArgs ga;
  CLI::App* gen = app.add_subcommand("gen-data", "Generate the procedural toy dataset");
  gen->add_option("--out", ga.out, "dataset root (env SIMIT_OUT_ROOT)")
      ->envname("SIMIT_OUT_ROOT")
      ->required();
  gen->add_option("--scenes", ga.scenes, "number of scenes")->check(CLI::PositiveNumber);
  gen->add_option("--size", ga.size, "image side in pixels");
  gen->add_option("--classes", ga.classes, "number of label classes");
  gen->add_option("--min-shapes", ga.min_shapes);
  gen->add_option("--max-shapes", ga.max_shapes);
  gen->add_option("--seed", ga.seed);

  TrainArgs ta;
  CLI::App* train = app.add_subcommand("train", "Train a translator");
  train->add_option("--data", ta.data, "dataset root")->required();
  train->add_option("--out", ta.out, "run directory (env SIMIT_OUT_ROOT)")
      ->envname("SIMIT_OUT_ROOT")
      ->required();
  train->add_option("--preset", ta.preset)->check(CLI::IsMember({"paper", "toy"}));
  train->add_option("--config", ta.config_file, "json config file; flags override its values");
  train->add_option("--resume", ta.resume, "checkpoint to continue from");
  std::vector<CLI::Option*> overrides;
  overrides.push_back(train->add_option("--variant", ta.variant)
                          ->check(CLI::IsMember({"simit", "simit-c", "simit-cs"})));
  overrides.push_back(train->add_option("--epochs", ta.epochs));
  overrides.push_back(train->add_option("--batch-size", ta.batch_size));
  overrides.push_back(train->add_option("--crop", ta.crop));
  overrides.push_back(train->add_option("--locations", ta.num_locations));
  overrides.push_back(train->add_option("--base-width", ta.base_width));
  overrides.push_back(train->add_option("--max-width", ta.max_width));
  overrides.push_back(train->add_option("--head-width", ta.head_width));
  overrides.push_back(train->add_option("--val-every", ta.val_every));
  overrides.push_back(train->add_option("--lr-g", ta.lr_g));
  overrides.push_back(train->add_option("--lr-f", ta.lr_f));
  overrides.push_back(train->add_option("--lambda-g", ta.lambda_g));
  overrides.push_back(train->add_option("--lambda-f", ta.lambda_f));
  overrides.push_back(train->add_option("--gamma-i", ta.gamma_i));
  overrides.push_back(train->add_option("--gamma-l", ta.gamma_l));
  overrides.push_back(train->add_option("--tau", ta.tau));
  overrides.push_back(train->add_option("--ada", ta.ada)->check(CLI::IsMember({"on", "off"})));
  overrides.push_back(train->add_option("--ada-target", ta.ada_target));
  overrides.push_back(train->add_option("--ada-speed", ta.ada_speed));
  overrides.push_back(train->add_option("--seed", ta.seed));

  TranslateArgs xa;
  CLI::App* translate = app.add_subcommand("translate", "Run a trained translator on a split");
  translate->add_option("--ckpt", xa.ckpt)->required();
  translate->add_option("--data", xa.data, "dataset root")->required();
  translate->add_option("--split", xa.split);
  translate->add_option("--mode", xa.mode)
      ->check(CLI::IsMember({"label2image", "image2label"}))
      ->required();
  translate->add_option("--out", xa.out)->required();
  translate->add_option("--seed", xa.seed, "noise seed for label2image");

  EvalArgs ea;
  CLI::App* evaluate = app.add_subcommand("evaluate", "Compare two directories of .png files");
  evaluate->add_option("--metric", ea.metric)
      ->check(CLI::IsMember({"ssim", "kid", "fid", "bone-iou", "seg"}))
      ->required();
  evaluate->add_option("--ref", ea.ref, "reference directory")->required();
  evaluate->add_option("--test", ea.test, "directory under test")->required();
  evaluate->add_option("--classes", ea.classes, "label classes (seg only)");
  evaluate->add_option("--embed-seed", ea.embed_seed, "embedder seed (kid/fid)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    for (CLI::Option* o : overrides) ta.overrides = ta.overrides || o->count() > 0;
    if (gen->parsed()) return run_gen(ga);
    if (train->parsed()) return run_train(ta);
    if (translate->parsed()) return run_translate(xa);
    return run_evaluate(ea);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
