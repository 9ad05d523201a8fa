#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "augment/augment.h"
#include "core/autodiff.h"
#include "datagen/datagen.h"
#include "losses/losses.h"
#include "nets/nets.h"

namespace simit::trainer {

struct TrainConfig {
  std::string variant = "simit";
  double lr_G = 1e-3;
  double lr_F = 1e-4;
  double beta1 = 0.0;
  double beta2 = 0.99;
  int epochs = 400;
  int batch_size = 4;
  int crop = 256;
  int num_locations = 256;
  int nce_layers = 4;
  double tau = 0.07;
  double lambda_G = 5.0;
  double lambda_F = 1.0;
  double gamma_I = 0.01;
  double gamma_L = 1.0;
  int base_width = 64;
  int max_width = 512;
  int head_width = 256;
  bool ada = true;
  double ada_target = 0.6;
  double ada_speed = 0.01;
  int val_every = 1;
  std::uint64_t seed = 0;

  static TrainConfig paper();
  static TrainConfig toy();
  void validate() const;
};

TrainConfig config_from_json(const std::string& text);
std::string config_to_json(const TrainConfig& cfg);

/// Adam with bias correction. step() refuses non-finite gradients and leaves
/// the parameters untouched (the caller records a skipped step).
class Adam {
 public:
  Adam(std::vector<ad::Var> params, double lr, double beta1, double beta2, double eps = 1e-8);
  bool step(const std::vector<Tensor>& grads);
  std::int64_t t() const { return t_; }
  void write_state(std::ostream& out) const;
  void read_state(std::istream& in);

 private:
  std::vector<ad::Var> params_;
  std::vector<Tensor> m_, v_;
  double lr_, b1_, b2_, eps_;
  std::int64_t t_ = 0;
};

struct StepLog {
  int epoch = 0;
  int index = 0;
  std::int64_t global_step = 0;
  double d_i = 0, r1_i = 0, g_gan = 0, g_cl = 0, g_total = 0;
  double d_l = 0, r1_l = 0, f_gan = 0, f_cyc = 0, f_total = 0;
  double ada_p = 0;
  bool skipped = false;
};

struct ValRecord {
  int epoch = 0;
  double ssim_mean = 0;
  double ssim_std = 0;
};

struct FitResult {
  std::vector<StepLog> steps;
  std::vector<ValRecord> validations;
  std::string final_checkpoint;
  std::string best_checkpoint;
  double best_ssim = -1;
  int best_epoch = -1;
};

/// One training run: G and D_I always; F, D_L and the cycle only for the
/// simit variant. All per-step randomness is derived from (seed, global
/// step), so a resumed run replays the exact stream.
class Trainer {
 public:
  Trainer(const datagen::DatasetManifest& data, const TrainConfig& cfg);

  StepLog step();
  StepLog step_on(const datagen::Batch& batch);
  /// Re-evaluates the generator objective without updates, with randomness
  /// keyed by salt rather than the step counter.
  double eval_g_total(const datagen::Batch& batch, std::uint64_t salt);

  double validate();
  FitResult fit(const std::string& out_dir, std::ostream* log = nullptr);

  void save(const std::string& path) const;
  static std::unique_ptr<Trainer> load(const std::string& path,
                                       const datagen::DatasetManifest* data);

  Tensor label2image(const Tensor& onehot_nchw, std::uint64_t noise_seed) const;
  Tensor image2label_scores(const Tensor& images_nchw) const;  // simit only

  const TrainConfig& config() const { return cfg_; }
  const nets::ParamStore& params() const { return params_; }
  int num_classes() const { return num_classes_; }
  double ada_p() const { return ada_.p; }
  int epoch() const { return epoch_; }
  int index() const { return index_; }
  std::int64_t global_step() const { return gstep_; }
  int batches_per_epoch() const;
  std::int64_t sim_image_reads() const;
  bool finished() const { return epoch_ >= cfg_.epochs; }

 private:
  Trainer(const TrainConfig& cfg, int num_classes);
  void build();
  std::vector<ad::Var> prefixed(const std::string& prefix) const;
  losses::Models models() const;

  TrainConfig cfg_;
  losses::Variant variant_;
  int num_classes_ = 0;
  std::optional<datagen::DatasetManifest> manifest_;
  std::optional<datagen::Loader> train_loader_;

  nets::ParamStore params_;
  std::unique_ptr<nets::Generator> g_, f_;
  std::unique_ptr<nets::Discriminator> d_i_, d_l_;
  std::unique_ptr<nets::ProjectionHeads> h_g_;
  std::unique_ptr<Adam> adam_g_, adam_f_, adam_di_, adam_dl_;

  augment::AdaState ada_;
  int epoch_ = 0;
  int index_ = 0;
  std::int64_t gstep_ = 0;
  double best_ssim_ = -1;
  int best_epoch_ = -1;
};

}  // namespace simit::trainer
