#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "core/errors.h"
#include "datagen/datagen.h"
#include "doctest.h"
#include "trainer/trainer.h"

using namespace simit;
using namespace simit::trainer;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("simit_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) return false;
  for (std::int64_t i = 0; i < a.numel(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

bool params_equal(const nets::ParamStore& a, const nets::ParamStore& b) {
  if (a.items().size() != b.items().size()) return false;
  for (size_t i = 0; i < a.items().size(); ++i) {
    if (a.items()[i].first != b.items()[i].first) return false;
    if (!bitwise_equal(a.items()[i].second.value(), b.items()[i].second.value())) return false;
  }
  return true;
}

std::vector<Tensor> snapshot(const nets::ParamStore& ps, const std::string& prefix) {
  std::vector<Tensor> out;
  for (const auto& [name, var] : ps.items())
    if (name.rfind(prefix, 0) == 0) out.push_back(var.value().clone());
  return out;
}

TrainConfig tiny_config(const std::string& variant) {
  TrainConfig c = TrainConfig::toy();
  c.variant = variant;
  c.base_width = 4;
  c.max_width = 16;
  c.head_width = 8;
  c.num_locations = 8;
  c.batch_size = 2;
  c.epochs = 2;
  c.ada = false;
  return c;
}

datagen::DatasetManifest tiny_dataset(const TempDir& dir, int num_scenes = 12) {
  datagen::ToyConfig tc;
  tc.size = 64;
  tc.num_classes = 3;
  return datagen::make_toy_dataset(dir.str(), num_scenes, tc, 515);
}

bool logs_equal(const StepLog& a, const StepLog& b) {
  return a.epoch == b.epoch && a.index == b.index && a.global_step == b.global_step &&
         a.d_i == b.d_i && a.r1_i == b.r1_i && a.g_gan == b.g_gan && a.g_cl == b.g_cl &&
         a.g_total == b.g_total && a.d_l == b.d_l && a.r1_l == b.r1_l && a.f_gan == b.f_gan &&
         a.f_cyc == b.f_cyc && a.f_total == b.f_total && a.ada_p == b.ada_p &&
         a.skipped == b.skipped;
}

}  // namespace

TEST_CASE("train config presets, validation and json round trip") {
  TrainConfig paper = TrainConfig::paper();
  CHECK(paper.crop == 256);
  CHECK(paper.num_locations == 256);
  CHECK(paper.epochs == 400);
  CHECK(paper.lambda_G == 5.0);
  CHECK(paper.tau == 0.07);
  CHECK(paper.beta1 == 0.0);
  CHECK(paper.beta2 == 0.99);
  paper.validate();

  TrainConfig toy = TrainConfig::toy();
  CHECK(toy.crop == 64);
  CHECK(toy.base_width == 16);
  CHECK(toy.max_width == 128);
  CHECK(toy.num_locations == 64);
  CHECK(toy.epochs == 30);
  toy.validate();

  toy.seed = 17;
  toy.variant = "simit-c";
  toy.lambda_F = 0.5;
  std::string text = config_to_json(toy);
  TrainConfig back = config_from_json(text);
  CHECK(config_to_json(back) == text);
  CHECK(back.seed == 17);
  CHECK(back.variant == "simit-c");
  CHECK(back.lambda_F == 0.5);

  TrainConfig sparse = config_from_json(R"({"epochs": 3, "crop": 128})");
  CHECK(sparse.epochs == 3);
  CHECK(sparse.crop == 128);
  CHECK(sparse.lr_G == 1e-3);

  CHECK_THROWS_AS(config_from_json("{nope"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"lr_g": 0.1})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"epochs": "many"})"), ConfigError);

  TrainConfig bad = TrainConfig::toy();
  bad.variant = "cyclegan";
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = TrainConfig::toy();
  bad.crop = 72;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = TrainConfig::toy();
  bad.lr_G = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = TrainConfig::toy();
  bad.tau = -0.07;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = TrainConfig::toy();
  bad.nce_layers = 3;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("adam matches the hand-computed update and refuses non-finite gradients") {
  ad::Var p = ad::param(Tensor::from_data({2}, {1.0, -2.0}));
  Adam opt({p}, 0.1, 0.0, 0.99);

  Tensor g = Tensor::from_data({2}, {0.5, -0.25});
  CHECK(opt.step({g}));
  CHECK(opt.t() == 1);
  // beta1 = 0: mhat = g. vhat = (0.01 g^2) / (1 - 0.99) = g^2.
  for (int i = 0; i < 2; ++i) {
    double expect = (i == 0 ? 1.0 : -2.0) - 0.1 * g[i] / (std::abs(g[i]) + 1e-8);
    CHECK(p.value()[i] == doctest::Approx(expect).epsilon(1e-12));
  }

  Tensor before = p.value().clone();
  Tensor nan_g = Tensor::from_data({2}, {0.1, std::nan("")});
  CHECK(!opt.step({nan_g}));
  CHECK(opt.t() == 1);
  CHECK(bitwise_equal(p.value(), before));

  CHECK_THROWS_AS(opt.step({}), ModelError);
  CHECK_THROWS_AS(opt.step({Tensor::zeros({3})}), ModelError);
}

TEST_CASE("two trainers with the same seed walk in lockstep and resume bit-exactly") {
  TempDir dir("trainer_det");
  auto manifest = tiny_dataset(dir);
  TrainConfig cfg = tiny_config("simit");
  cfg.seed = 31;

  Trainer a(manifest, cfg);
  Trainer b(manifest, cfg);
  CHECK(a.batches_per_epoch() == 5);
  CHECK(params_equal(a.params(), b.params()));

  for (int i = 0; i < 3; ++i) {
    StepLog la = a.step();
    StepLog lb = b.step();
    CHECK(logs_equal(la, lb));
    CHECK(!la.skipped);
    CHECK(std::isfinite(la.g_total));
    CHECK(std::isfinite(la.f_total));
    CHECK(la.g_total == doctest::Approx(la.g_gan + cfg.lambda_G * la.g_cl).epsilon(1e-12));
    CHECK(la.f_total == doctest::Approx(la.f_gan + cfg.lambda_F * la.f_cyc).epsilon(1e-12));
  }
  CHECK(params_equal(a.params(), b.params()));

  // Interrupt mid-epoch and reload; the resumed trainer must replay the
  // exact remaining stream.
  std::string ckpt = (dir.path / "mid.ckpt").string();
  a.save(ckpt);
  auto c = Trainer::load(ckpt, &manifest);
  CHECK(c->epoch() == 0);
  CHECK(c->index() == 3);
  CHECK(c->global_step() == 3);
  CHECK(params_equal(a.params(), c->params()));

  for (int i = 0; i < 4; ++i) {
    StepLog la = a.step();
    StepLog lc = c->step();
    CHECK(logs_equal(la, lc));
  }
  CHECK(params_equal(a.params(), c->params()));
  CHECK(a.epoch() == 1);
  CHECK(a.index() == 2);
}

TEST_CASE("simit-cs never touches simulated images and zero lambda_G freezes the heads") {
  TempDir dir("trainer_wiring");
  auto manifest = tiny_dataset(dir);

  TrainConfig cs = tiny_config("simit-cs");
  cs.seed = 7;
  Trainer t(manifest, cs);
  auto g_before = snapshot(t.params(), "g.");
  for (int i = 0; i < 2; ++i) {
    StepLog log = t.step();
    CHECK(!log.skipped);
    CHECK(log.g_cl > 0.0);
    CHECK(log.f_total == 0.0);  // no segmenter in this variant
  }
  CHECK(t.sim_image_reads() == 0);
  auto g_after = snapshot(t.params(), "g.");
  bool moved = false;
  for (size_t i = 0; i < g_before.size(); ++i)
    if (!bitwise_equal(g_before[i], g_after[i])) moved = true;
  CHECK(moved);

  TrainConfig off = tiny_config("simit-c");
  off.seed = 7;
  off.lambda_G = 0.0;
  Trainer u(manifest, off);
  auto h_before = snapshot(u.params(), "h.");
  CHECK(!h_before.empty());
  StepLog log = u.step();
  CHECK(!log.skipped);
  CHECK(log.g_cl == 0.0);
  CHECK(log.g_total == log.g_gan);
  CHECK(u.sim_image_reads() == 0);  // content term off, pairs never loaded
  auto h_after = snapshot(u.params(), "h.");
  for (size_t i = 0; i < h_before.size(); ++i) CHECK(bitwise_equal(h_before[i], h_after[i]));
}

TEST_CASE("one step on a fixed batch lowers the generator objective") {
  TempDir dir("trainer_overfit");
  auto manifest = tiny_dataset(dir);
  TrainConfig cfg = tiny_config("simit-c");
  cfg.seed = 3;
  cfg.lr_G = 3e-4;

  Trainer t(manifest, cfg);
  datagen::Loader loader(manifest, "train", cfg.batch_size, cfg.crop, 99);
  datagen::Batch b = loader.batch(0, 0);

  double before = t.eval_g_total(b, 42);
  t.step_on(b);
  double after = t.eval_g_total(b, 42);
  CHECK(std::isfinite(before));
  CHECK(std::isfinite(after));
  CHECK(after < before);
}

TEST_CASE("checkpoints restore translation exactly and guard against misuse") {
  TempDir dir("trainer_ckpt");
  auto manifest = tiny_dataset(dir);
  TrainConfig cfg = tiny_config("simit");
  cfg.seed = 11;

  Trainer t(manifest, cfg);
  t.step();
  std::string ckpt = (dir.path / "t.ckpt").string();
  t.save(ckpt);

  // Inference-only load: no dataset needed for translation.
  auto solo = Trainer::load(ckpt, nullptr);
  CHECK(solo->config().variant == "simit");
  CHECK(solo->num_classes() == 3);
  CHECK(params_equal(t.params(), solo->params()));
  CHECK_THROWS_AS(solo->step(), ConfigError);

  datagen::Loader loader(manifest, "train", 1, 64, 5);
  datagen::Batch b = loader.batch(0, 0);
  Tensor img_a = t.label2image(b.labels_onehot, 123);
  Tensor img_b = solo->label2image(b.labels_onehot, 123);
  CHECK(img_a.shape() == std::vector<int>{1, 3, 64, 64});
  CHECK(bitwise_equal(img_a, img_b));
  Tensor img_c = solo->label2image(b.labels_onehot, 124);
  CHECK(!bitwise_equal(img_a, img_c));  // noise seed matters

  Tensor scores = solo->image2label_scores(b.real_images);
  CHECK(scores.shape() == std::vector<int>{1, 3, 64, 64});

  CHECK_THROWS_AS(solo->label2image(Tensor::zeros({1, 4, 64, 64}), 1), DataError);
  CHECK_THROWS_AS(solo->image2label_scores(b.labels_onehot.reshaped({1, 6, 32, 64})), DataError);
  CHECK_THROWS_AS(Trainer::load((dir.path / "missing.ckpt").string(), nullptr), DataError);
  std::ofstream((dir.path / "junk.ckpt").string()) << "not a checkpoint\n";
  CHECK_THROWS_AS(Trainer::load((dir.path / "junk.ckpt").string(), nullptr), DataError);

  TrainConfig cs = tiny_config("simit-cs");
  Trainer no_f(manifest, cs);
  std::string ckpt_cs = (dir.path / "cs.ckpt").string();
  no_f.save(ckpt_cs);
  auto loaded_cs = Trainer::load(ckpt_cs, nullptr);
  CHECK_THROWS_AS(loaded_cs->image2label_scores(b.real_images), UsageError);
}

TEST_CASE("fit writes step logs, validation records and checkpoints") {
  TempDir dir("trainer_fit");
  auto manifest = tiny_dataset(dir);
  TrainConfig cfg = tiny_config("simit-c");
  cfg.seed = 23;
  cfg.epochs = 2;

  Trainer t(manifest, cfg);
  std::ostringstream log;
  std::string out = (dir.path / "run").string();
  FitResult res = t.fit(out, &log);

  CHECK(t.finished());
  CHECK(res.steps.size() == 10);  // 5 batches x 2 epochs
  CHECK(res.validations.size() == 2);
  CHECK(res.best_epoch >= 1);
  CHECK(res.best_ssim == doctest::Approx(std::max(res.validations[0].ssim_mean,
                                                  res.validations[1].ssim_mean)));
  CHECK(fs::exists(res.final_checkpoint));
  CHECK(fs::exists(res.best_checkpoint));
  CHECK(fs::exists(fs::path(out) / "last.ckpt"));
  CHECK(fs::exists(fs::path(out) / "val/epoch_0001"));

  int step_lines = 0, val_lines = 0;
  std::istringstream lines(log.str());
  std::string line;
  while (std::getline(lines, line)) {
    if (line.find("\"type\":\"step\"") != std::string::npos) ++step_lines;
    if (line.find("\"type\":\"val\"") != std::string::npos) ++val_lines;
  }
  CHECK(step_lines == 10);
  CHECK(val_lines == 2);

  // A finished run resumed through fit exits immediately.
  auto done = Trainer::load(res.final_checkpoint, &manifest);
  FitResult again = done->fit(out, nullptr);
  CHECK(again.steps.empty());
  CHECK(params_equal(t.params(), done->params()));
}
