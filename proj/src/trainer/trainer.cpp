#include "trainer/trainer.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "core/errors.h"
#include "json.hpp"
#include "metrics/metrics.h"

namespace simit::trainer {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ad::Var;

namespace {

constexpr std::uint64_t kInitStream = 0xA11;
constexpr std::uint64_t kLoaderStream = 0x10AD;
constexpr std::uint64_t kStepStream = 0x57E9;
constexpr std::uint64_t kEvalStream = 0xE7A1;
constexpr std::uint64_t kInferStream = 0x7A51;

constexpr char kCheckpointMagic[] = "SIMITCKPT 1";

double scalar_of(const Var& v) { return v.defined() ? v.value()[0] : 0.0; }

}  // namespace

TrainConfig TrainConfig::paper() { return TrainConfig{}; }

TrainConfig TrainConfig::toy() {
  TrainConfig c;
  c.epochs = 30;
  c.crop = 64;
  c.num_locations = 64;
  c.base_width = 16;
  c.max_width = 128;
  c.head_width = 64;
  return c;
}

void TrainConfig::validate() const {
  losses::parse_variant(variant);
  if (lr_G <= 0.0 || lr_F <= 0.0) throw ConfigError("config: learning rates must be positive");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
    throw ConfigError("config: betas must lie in [0,1)");
  if (epochs < 1) throw ConfigError("config: epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("config: batch_size must be at least 1");
  if (crop < 64 || crop % 16 != 0)
    throw ConfigError("config: crop must be >= 64 and divisible by 16");
  if (num_locations < 2) throw ConfigError("config: num_locations must be at least 2");
  if (nce_layers != 4) throw ConfigError("config: nce_layers must equal the 4 encoder taps");
  if (tau <= 0.0) throw ConfigError("config: tau must be positive");
  if (lambda_G < 0.0 || lambda_F < 0.0 || gamma_I < 0.0 || gamma_L < 0.0)
    throw ConfigError("config: loss weights must be non-negative");
  if (base_width < 4 || max_width < base_width)
    throw ConfigError("config: need base_width >= 4 and max_width >= base_width");
  if (head_width < 1) throw ConfigError("config: head_width must be at least 1");
  if (ada_target <= -1.0 || ada_target >= 1.0)
    throw ConfigError("config: ada_target must lie in (-1,1)");
  if (ada_speed <= 0.0) throw ConfigError("config: ada_speed must be positive");
  if (val_every < 1) throw ConfigError("config: val_every must be at least 1");
}

std::string config_to_json(const TrainConfig& c) {
  json j;
  j["variant"] = c.variant;
  j["lr_G"] = c.lr_G;
  j["lr_F"] = c.lr_F;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["crop"] = c.crop;
  j["num_locations"] = c.num_locations;
  j["nce_layers"] = c.nce_layers;
  j["tau"] = c.tau;
  j["lambda_G"] = c.lambda_G;
  j["lambda_F"] = c.lambda_F;
  j["gamma_I"] = c.gamma_I;
  j["gamma_L"] = c.gamma_L;
  j["base_width"] = c.base_width;
  j["max_width"] = c.max_width;
  j["head_width"] = c.head_width;
  j["ada"] = c.ada;
  j["ada_target"] = c.ada_target;
  j["ada_speed"] = c.ada_speed;
  j["val_every"] = c.val_every;
  j["seed"] = c.seed;
  return j.dump(2);
}

TrainConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: parse failure: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  TrainConfig c;
  try {
    for (const auto& [key, val] : j.items()) {
      if (key == "variant") c.variant = val.get<std::string>();
      else if (key == "lr_G") c.lr_G = val.get<double>();
      else if (key == "lr_F") c.lr_F = val.get<double>();
      else if (key == "beta1") c.beta1 = val.get<double>();
      else if (key == "beta2") c.beta2 = val.get<double>();
      else if (key == "epochs") c.epochs = val.get<int>();
      else if (key == "batch_size") c.batch_size = val.get<int>();
      else if (key == "crop") c.crop = val.get<int>();
      else if (key == "num_locations") c.num_locations = val.get<int>();
      else if (key == "nce_layers") c.nce_layers = val.get<int>();
      else if (key == "tau") c.tau = val.get<double>();
      else if (key == "lambda_G") c.lambda_G = val.get<double>();
      else if (key == "lambda_F") c.lambda_F = val.get<double>();
      else if (key == "gamma_I") c.gamma_I = val.get<double>();
      else if (key == "gamma_L") c.gamma_L = val.get<double>();
      else if (key == "base_width") c.base_width = val.get<int>();
      else if (key == "max_width") c.max_width = val.get<int>();
      else if (key == "head_width") c.head_width = val.get<int>();
      else if (key == "ada") c.ada = val.get<bool>();
      else if (key == "ada_target") c.ada_target = val.get<double>();
      else if (key == "ada_speed") c.ada_speed = val.get<double>();
      else if (key == "val_every") c.val_every = val.get<int>();
      else if (key == "seed") c.seed = val.get<std::uint64_t>();
      else throw ConfigError("config: unknown key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: bad value type: ") + e.what());
  }
  return c;
}

Adam::Adam(std::vector<Var> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    if (!p.defined()) throw ModelError("Adam: undefined parameter");
    m_.push_back(Tensor::zeros(p.shape()));
    v_.push_back(Tensor::zeros(p.shape()));
  }
}

bool Adam::step(const std::vector<Tensor>& grads) {
  if (grads.size() != params_.size()) throw ModelError("Adam: gradient count mismatch");
  for (size_t i = 0; i < grads.size(); ++i) {
    if (!grads[i].defined() || grads[i].shape() != params_[i].shape())
      throw ModelError("Adam: gradient shape mismatch");
    if (!grads[i].all_finite()) return false;
  }
  ++t_;
  double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Tensor p = params_[i].value();
    const Tensor& g = grads[i];
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    std::int64_t n = p.numel();
    for (std::int64_t k = 0; k < n; ++k) {
      m[k] = b1_ * m[k] + (1.0 - b1_) * g[k];
      v[k] = b2_ * v[k] + (1.0 - b2_) * g[k] * g[k];
      p[k] -= lr_ * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
    }
  }
  return true;
}

void Adam::write_state(std::ostream& out) const {
  out.write(reinterpret_cast<const char*>(&t_), sizeof(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    out.write(reinterpret_cast<const char*>(m_[i].data()),
              static_cast<std::streamsize>(m_[i].numel() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(v_[i].data()),
              static_cast<std::streamsize>(v_[i].numel() * sizeof(double)));
  }
}

void Adam::read_state(std::istream& in) {
  in.read(reinterpret_cast<char*>(&t_), sizeof(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    in.read(reinterpret_cast<char*>(m_[i].data()),
            static_cast<std::streamsize>(m_[i].numel() * sizeof(double)));
    in.read(reinterpret_cast<char*>(v_[i].data()),
            static_cast<std::streamsize>(v_[i].numel() * sizeof(double)));
  }
  if (!in) throw DataError("checkpoint: truncated optimizer state");
}

Trainer::Trainer(const TrainConfig& cfg, int num_classes)
    : cfg_(cfg), variant_(losses::parse_variant(cfg.variant)), num_classes_(num_classes) {
  cfg_.validate();
  if (num_classes_ < 2) throw ConfigError("trainer: need at least 2 classes");
  ada_.target_rt = cfg_.ada_target;
  ada_.adjustment_speed = cfg_.ada_speed;
  build();
}

Trainer::Trainer(const datagen::DatasetManifest& data, const TrainConfig& cfg)
    : Trainer(cfg, data.num_classes) {
  manifest_ = data;
  bool need_sim = cfg_.lambda_G > 0.0 && variant_ != losses::Variant::simit_cs;
  train_loader_.emplace(data, "train", cfg_.batch_size, cfg_.crop,
                        mix_seed(cfg_.seed, kLoaderStream), need_sim);
  if (train_loader_->batches_per_epoch() < 1)
    throw ConfigError("trainer: train split smaller than one batch");
}

void Trainer::build() {
  Rng init = Rng::substream(cfg_.seed, kInitStream);
  bool simit = variant_ == losses::Variant::simit;

  nets::GeneratorConfig gcfg;
  gcfg.in_channels = num_classes_;
  gcfg.out_channels = 3;
  gcfg.base_width = cfg_.base_width;
  gcfg.max_width = cfg_.max_width;
  gcfg.noise_injection = true;
  gcfg.demodulate = true;
  gcfg.sigmoid_output = true;
  gcfg.aux_stem = !simit;  // content features come from G itself then
  g_ = std::make_unique<nets::Generator>(params_, "g", gcfg, init);

  if (simit) {
    nets::GeneratorConfig fcfg;
    fcfg.in_channels = 3;
    fcfg.out_channels = num_classes_;
    fcfg.base_width = cfg_.base_width;
    fcfg.max_width = cfg_.max_width;
    fcfg.sigmoid_output = true;
    f_ = std::make_unique<nets::Generator>(params_, "f", fcfg, init);
  }

  d_i_ = std::make_unique<nets::Discriminator>(params_, "di", 3, cfg_.base_width, cfg_.max_width,
                                               init);
  if (simit)
    d_l_ = std::make_unique<nets::Discriminator>(params_, "dl", num_classes_, cfg_.base_width,
                                                 cfg_.max_width, init);

  const nets::Generator& enc = simit ? *f_ : *g_;
  std::vector<int> dims;
  for (int j = 1; j <= cfg_.nce_layers; ++j) dims.push_back(enc.width(j));
  h_g_ = std::make_unique<nets::ProjectionHeads>(params_, "h", dims, cfg_.head_width, init);

  auto g_and_h = prefixed("g.");
  auto heads = prefixed("h.");
  g_and_h.insert(g_and_h.end(), heads.begin(), heads.end());
  adam_g_ = std::make_unique<Adam>(std::move(g_and_h), cfg_.lr_G, cfg_.beta1, cfg_.beta2);
  adam_di_ = std::make_unique<Adam>(prefixed("di."), cfg_.lr_G, cfg_.beta1, cfg_.beta2);
  if (simit) {
    adam_f_ = std::make_unique<Adam>(prefixed("f."), cfg_.lr_F, cfg_.beta1, cfg_.beta2);
    adam_dl_ = std::make_unique<Adam>(prefixed("dl."), cfg_.lr_F, cfg_.beta1, cfg_.beta2);
  }
}

std::vector<Var> Trainer::prefixed(const std::string& prefix) const {
  std::vector<Var> out;
  for (const auto& [name, var] : params_.items())
    if (name.rfind(prefix, 0) == 0) out.push_back(var);
  return out;
}

losses::Models Trainer::models() const {
  return losses::Models{g_.get(), f_.get(), d_i_.get(), d_l_.get(), h_g_.get()};
}

int Trainer::batches_per_epoch() const {
  if (!train_loader_) throw ConfigError("trainer: no dataset attached");
  return train_loader_->batches_per_epoch();
}

std::int64_t Trainer::sim_image_reads() const {
  if (!train_loader_) throw ConfigError("trainer: no dataset attached");
  return train_loader_->sim_image_reads();
}

StepLog Trainer::step() {
  if (!train_loader_) throw ConfigError("trainer: no dataset attached");
  datagen::Batch b = train_loader_->batch(epoch_, index_);
  StepLog log = step_on(b);
  if (++index_ >= train_loader_->batches_per_epoch()) {
    index_ = 0;
    ++epoch_;
  }
  return log;
}

StepLog Trainer::step_on(const datagen::Batch& batch) {
  StepLog log;
  log.epoch = epoch_;
  log.index = index_;
  log.global_step = gstep_;

  std::uint64_t ss = mix_seed(mix_seed(cfg_.seed, kStepStream), static_cast<std::uint64_t>(gstep_));
  Rng noise_d = Rng::substream(ss, 1);
  Rng aug_d = Rng::substream(ss, 2);
  Rng noise_g = Rng::substream(ss, 3);
  Rng loc_g = Rng::substream(ss, 4);
  Rng aug_g = Rng::substream(ss, 5);
  Rng aug_dl = Rng::substream(ss, 6);
  Rng noise_f = Rng::substream(ss, 7);
  Rng loc_f = Rng::substream(ss, 8);
  Rng aug_f = Rng::substream(ss, 9);

  losses::NCEConfig nce{cfg_.tau, cfg_.num_locations, cfg_.nce_layers};
  losses::LossWeights w{cfg_.lambda_G, cfg_.lambda_F, cfg_.gamma_I, cfg_.gamma_L};
  Var labels = ad::constant(batch.labels_onehot);
  Var sim = batch.sim_images.defined() ? ad::constant(batch.sim_images) : Var();

  try {
    Var real = ad::param(batch.real_images);
    Var fake = g_->forward(labels, &noise_d);
    auto di_fn = [&](const Var& x) {
      return d_i_->dense_logits(augment::apply_ada(x, ada_.p, aug_d, false));
    };
    auto gt = losses::gan_losses(di_fn, real, fake, cfg_.gamma_I);
    log.d_i = scalar_of(gt.d_loss);
    log.r1_i = scalar_of(gt.r1);
    auto di_grads = ad::grad(gt.d_loss, prefixed("di."));
    std::vector<Tensor> dig;
    for (const auto& g : di_grads) dig.push_back(g.value());
    if (!gt.d_loss.value().all_finite() || !adam_di_->step(dig)) log.skipped = true;
    if (cfg_.ada) ada_ = augment::update_ada(ada_, gt.real_dense.value());

    losses::StepRngs grngs{&noise_g, &loc_g, &aug_g};
    auto gterms = losses::total_G(labels, sim, variant_, models(), nce, w, ada_.p, grngs);
    log.g_gan = scalar_of(gterms.gan);
    log.g_cl = scalar_of(gterms.cl);
    log.g_total = scalar_of(gterms.total);
    auto g_wrt = prefixed("g.");
    auto h_wrt = prefixed("h.");
    g_wrt.insert(g_wrt.end(), h_wrt.begin(), h_wrt.end());
    auto g_grads = ad::grad(gterms.total, g_wrt);
    std::vector<Tensor> gg;
    for (const auto& g : g_grads) gg.push_back(g.value());
    if (!gterms.total.value().all_finite() || !adam_g_->step(gg)) log.skipped = true;

    if (variant_ == losses::Variant::simit) {
      Var real_labels = ad::param(batch.labels_onehot);
      Var scores = f_->forward(ad::constant(batch.real_images), nullptr);
      Var fake_labels = ad::hard_onehot_st(scores);
      auto dl_fn = [&](const Var& x) {
        return d_l_->dense_logits(augment::apply_ada(x, ada_.p, aug_dl, true));
      };
      auto lt = losses::gan_losses(dl_fn, real_labels, fake_labels, cfg_.gamma_L);
      log.d_l = scalar_of(lt.d_loss);
      log.r1_l = scalar_of(lt.r1);
      auto dl_grads = ad::grad(lt.d_loss, prefixed("dl."));
      std::vector<Tensor> dlg;
      for (const auto& g : dl_grads) dlg.push_back(g.value());
      if (!lt.d_loss.value().all_finite() || !adam_dl_->step(dlg)) log.skipped = true;

      losses::StepRngs frngs{&noise_f, &loc_f, &aug_f};
      auto fterms = losses::total_F(ad::constant(batch.real_images), models(), nce, w, ada_.p,
                                    frngs);
      log.f_gan = scalar_of(fterms.gan);
      log.f_cyc = scalar_of(fterms.cyc);
      log.f_total = scalar_of(fterms.total);
      auto f_grads = ad::grad(fterms.total, prefixed("f."));
      std::vector<Tensor> fg;
      for (const auto& g : f_grads) fg.push_back(g.value());
      if (!fterms.total.value().all_finite() || !adam_f_->step(fg)) log.skipped = true;
    }
  } catch (const NumericError&) {
    log.skipped = true;
  }

  log.ada_p = ada_.p;
  ++gstep_;
  return log;
}

double Trainer::eval_g_total(const datagen::Batch& batch, std::uint64_t salt) {
  std::uint64_t ss = mix_seed(mix_seed(cfg_.seed, kEvalStream), salt);
  Rng noise_g = Rng::substream(ss, 3);
  Rng loc_g = Rng::substream(ss, 4);
  Rng aug_g = Rng::substream(ss, 5);
  losses::NCEConfig nce{cfg_.tau, cfg_.num_locations, cfg_.nce_layers};
  losses::LossWeights w{cfg_.lambda_G, cfg_.lambda_F, cfg_.gamma_I, cfg_.gamma_L};
  Var labels = ad::constant(batch.labels_onehot);
  Var sim = batch.sim_images.defined() ? ad::constant(batch.sim_images) : Var();
  losses::StepRngs rngs{&noise_g, &loc_g, &aug_g};
  auto t = losses::total_G(labels, sim, variant_, models(), nce, w, ada_.p, rngs);
  return t.total.value()[0];
}

namespace {

std::vector<double> split_ssims(const datagen::DatasetManifest& m, const std::string& split,
                                const nets::Generator& g, std::uint64_t seed,
                                std::vector<std::pair<std::string, Tensor>>* dump) {
  std::vector<double> out;
  const auto& ids = m.splits.at(split).paired;
  for (size_t i = 0; i < ids.size(); ++i) {
    datagen::LabelMap label = datagen::read_label_png(m.label_path(split, ids[i]), m.num_classes);
    Tensor onehot = datagen::one_hot_encode(label);
    int c = onehot.dim(0), h = onehot.dim(1), wd = onehot.dim(2);
    Rng nrng = Rng::substream(mix_seed(seed, kInferStream), static_cast<std::uint64_t>(i));
    Var translated = g.forward(ad::constant(onehot.reshaped({1, c, h, wd})), &nrng);
    Tensor img = translated.value().reshaped({3, h, wd});
    Tensor simimg = datagen::read_image_png(m.image_path(split, ids[i]));
    out.push_back(metrics::ssim(img, simimg));
    if (dump && dump->size() < 4) dump->emplace_back(ids[i], img);
  }
  return out;
}

}  // namespace

double Trainer::validate() {
  if (!manifest_) throw ConfigError("trainer: no dataset attached");
  if (!manifest_->splits.count("val") || manifest_->splits.at("val").paired.empty())
    throw DataError("validate: val split has no paired samples");
  auto ssims = split_ssims(*manifest_, "val", *g_, cfg_.seed, nullptr);
  double sum = 0.0;
  for (double s : ssims) sum += s;
  return sum / static_cast<double>(ssims.size());
}

FitResult Trainer::fit(const std::string& out_dir, std::ostream* log) {
  if (!train_loader_) throw ConfigError("trainer: no dataset attached");
  fs::create_directories(out_dir);
  FitResult res;
  bool has_val = manifest_->splits.count("val") && !manifest_->splits.at("val").paired.empty();

  while (epoch_ < cfg_.epochs) {
    StepLog sl = step();
    res.steps.push_back(sl);
    if (log) {
      json j{{"type", "step"},     {"epoch", sl.epoch},   {"index", sl.index},
             {"step", sl.global_step}, {"d_i", sl.d_i},   {"r1_i", sl.r1_i},
             {"g_gan", sl.g_gan},  {"g_cl", sl.g_cl},     {"g_total", sl.g_total},
             {"ada_p", sl.ada_p},  {"skipped", sl.skipped}};
      if (variant_ == losses::Variant::simit) {
        j["d_l"] = sl.d_l;
        j["r1_l"] = sl.r1_l;
        j["f_gan"] = sl.f_gan;
        j["f_cyc"] = sl.f_cyc;
        j["f_total"] = sl.f_total;
      }
      *log << j.dump() << "\n";
    }
    if (index_ != 0) continue;

    int done = epoch_;
    if (has_val && (done % cfg_.val_every == 0 || done == cfg_.epochs)) {
      std::vector<std::pair<std::string, Tensor>> dump;
      auto ssims = split_ssims(*manifest_, "val", *g_, cfg_.seed, &dump);
      double mean = 0.0;
      for (double s : ssims) mean += s;
      mean /= static_cast<double>(ssims.size());
      double var = 0.0;
      for (double s : ssims) var += (s - mean) * (s - mean);
      double sd = ssims.size() > 1 ? std::sqrt(var / static_cast<double>(ssims.size() - 1)) : 0.0;
      res.validations.push_back({done, mean, sd});
      if (log)
        *log << json{{"type", "val"}, {"epoch", done}, {"ssim_mean", mean}, {"ssim_std", sd}}
                    .dump()
             << "\n";
      char sub[32];
      std::snprintf(sub, sizeof(sub), "val/epoch_%04d", done);
      fs::create_directories(fs::path(out_dir) / sub);
      for (const auto& [id, img] : dump)
        datagen::write_image_png((fs::path(out_dir) / sub / (id + ".png")).string(), img);
      if (mean > best_ssim_) {
        best_ssim_ = mean;
        best_epoch_ = done;
        save((fs::path(out_dir) / "best.ckpt").string());
      }
    }
    save((fs::path(out_dir) / "last.ckpt").string());
  }

  std::string final_path = (fs::path(out_dir) / "final.ckpt").string();
  save(final_path);
  res.final_checkpoint = final_path;
  std::string best_path = (fs::path(out_dir) / "best.ckpt").string();
  res.best_checkpoint = fs::exists(best_path) ? best_path : final_path;
  res.best_ssim = best_ssim_;
  res.best_epoch = best_epoch_;
  return res;
}

void Trainer::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("checkpoint: cannot open '" + path + "' for writing");
  json names = json::array();
  for (const auto& [name, var] : params_.items()) names.push_back(name);
  json header{{"config", json::parse(config_to_json(cfg_))},
              {"num_classes", num_classes_},
              {"epoch", epoch_},
              {"index", index_},
              {"global_step", gstep_},
              {"ada", {{"p", ada_.p}, {"rt_estimate", ada_.rt_estimate}}},
              {"best_ssim", best_ssim_},
              {"best_epoch", best_epoch_},
              {"params", names}};
  out << kCheckpointMagic << "\n" << header.dump() << "\n";
  for (const auto& [name, var] : params_.items())
    out.write(reinterpret_cast<const char*>(var.value().data()),
              static_cast<std::streamsize>(var.value().numel() * sizeof(double)));
  adam_g_->write_state(out);
  adam_di_->write_state(out);
  if (adam_f_) adam_f_->write_state(out);
  if (adam_dl_) adam_dl_->write_state(out);
  if (!out) throw DataError("checkpoint: write failure on '" + path + "'");
}

std::unique_ptr<Trainer> Trainer::load(const std::string& path,
                                       const datagen::DatasetManifest* data) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint: cannot open '" + path + "'");
  std::string magic, header_line;
  if (!std::getline(in, magic) || magic != kCheckpointMagic)
    throw DataError("checkpoint: '" + path + "' is not a trainer checkpoint");
  if (!std::getline(in, header_line)) throw DataError("checkpoint: missing header");
  json header;
  try {
    header = json::parse(header_line);
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint: bad header: ") + e.what());
  }

  TrainConfig cfg = config_from_json(header.at("config").dump());
  int num_classes = header.at("num_classes").get<int>();
  std::unique_ptr<Trainer> t;
  if (data) {
    if (data->num_classes != num_classes)
      throw DataError("checkpoint: trained with " + std::to_string(num_classes) +
                      " classes, dataset has " + std::to_string(data->num_classes));
    t.reset(new Trainer(*data, cfg));
  } else {
    t.reset(new Trainer(cfg, num_classes));
  }

  auto names = header.at("params").get<std::vector<std::string>>();
  if (names.size() != t->params_.items().size())
    throw DataError("checkpoint: parameter list mismatch");
  for (size_t i = 0; i < names.size(); ++i) {
    const auto& [name, var] = t->params_.items()[i];
    if (name != names[i]) throw DataError("checkpoint: parameter order mismatch at " + names[i]);
    Tensor buf = var.value();
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.numel() * sizeof(double)));
  }
  if (!in) throw DataError("checkpoint: truncated parameter data");
  t->adam_g_->read_state(in);
  t->adam_di_->read_state(in);
  if (t->adam_f_) t->adam_f_->read_state(in);
  if (t->adam_dl_) t->adam_dl_->read_state(in);

  t->epoch_ = header.at("epoch").get<int>();
  t->index_ = header.at("index").get<int>();
  t->gstep_ = header.at("global_step").get<std::int64_t>();
  t->ada_.p = header.at("ada").at("p").get<double>();
  t->ada_.rt_estimate = header.at("ada").at("rt_estimate").get<double>();
  t->best_ssim_ = header.at("best_ssim").get<double>();
  t->best_epoch_ = header.at("best_epoch").get<int>();
  return t;
}

Tensor Trainer::label2image(const Tensor& onehot_nchw, std::uint64_t noise_seed) const {
  if (onehot_nchw.ndim() != 4 || onehot_nchw.dim(1) != num_classes_)
    throw DataError("label2image: expected [n," + std::to_string(num_classes_) +
                    ",h,w] one-hot input, got " + Tensor::shape_str(onehot_nchw.shape()));
  Rng nrng = Rng::substream(mix_seed(cfg_.seed, kInferStream), noise_seed);
  return g_->forward(ad::constant(onehot_nchw), &nrng).value();
}

Tensor Trainer::image2label_scores(const Tensor& images_nchw) const {
  if (!f_)
    throw UsageError("image2label requires a simit checkpoint; this run used variant " +
                     cfg_.variant);
  if (images_nchw.ndim() != 4 || images_nchw.dim(1) != 3)
    throw DataError("image2label: expected [n,3,h,w] input, got " +
                    Tensor::shape_str(images_nchw.shape()));
  return f_->forward(ad::constant(images_nchw), nullptr).value();
}

}  // namespace simit::trainer
