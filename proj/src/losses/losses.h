#pragma once

#include <functional>
#include <string>
#include <vector>

#include "core/autodiff.h"
#include "core/rng.h"
#include "nets/nets.h"

namespace simit::losses {

enum class Variant { simit, simit_c, simit_cs };

Variant parse_variant(const std::string& name);
std::string variant_name(Variant v);

struct NCEConfig {
  double tau = 0.07;
  int num_locations = 256;
  int layers = 4;
};

struct LossWeights {
  double lambda_G = 5.0;
  double lambda_F = 1.0;
  double gamma_I = 0.01;
  double gamma_L = 1.0;
};

/// Maps gathered features [n,S,D] to projected ones [n,S,W]; identity when
/// absent.
using HeadFn = std::function<ad::Var(const ad::Var&)>;

/// Dense patch logits of a discriminator, including any input augmentation.
using LogitsFn = std::function<ad::Var(const ad::Var&)>;

/// InfoNCE cross-entropy on cosine similarities: query [D], positive [D],
/// negatives [M,D]. Positive logit first, -log softmax.
ad::Var ce_contrast(const ad::Var& query, const ad::Var& positive, const ad::Var& negatives,
                    double tau);

/// One encoder layer's patch NCE: queries from zhat at the sampled locations
/// against keys from z, same location positive, the other S-1 negatives.
/// Sums over locations, means over batch.
ad::Var patch_nce_layer(const ad::Var& z, const ad::Var& zhat, const std::vector<int>& locations,
                        const HeadFn& head, double tau);

/// Distinct flattened spatial indices per tap, capped at each tap's size.
std::vector<std::vector<int>> sample_locations(const nets::FeatureStack& stack, int num_locations,
                                               Rng& rng);

/// Sum of patch_nce_layer over all taps; heads == nullptr means identity.
ad::Var patch_nce_stack(const nets::FeatureStack& keys, const nets::FeatureStack& queries,
                        const std::vector<std::vector<int>>& locations,
                        nets::ProjectionHeads* heads, double tau);

/// Surrogate content loss: translated output against the paired simulated
/// image, both seen through the segmenter encoder.
ad::Var contrastive_content_loss(const ad::Var& sim_img, const ad::Var& translated,
                                 nets::Generator& f_encoder, nets::ProjectionHeads& heads,
                                 const NCEConfig& cfg, Rng& loc_rng);

/// Cycle reconstruction in feature space with identity heads.
ad::Var cycle_nce_loss(const ad::Var& real_img, const ad::Var& reconstructed,
                       nets::Generator& f_encoder, const NCEConfig& cfg, Rng& loc_rng);

struct GanTerms {
  ad::Var d_loss;
  ad::Var g_loss;
  ad::Var r1;          // (gamma/2) * E||grad_x D(real)||^2, already part of d_loss
  ad::Var real_dense;  // dense logits on the (augmented) real stream
};

/// Non-saturating GAN pair plus R1 on the real stream. real_batch must carry
/// requires_grad; fake_batch is cut from its producer for d_loss only.
GanTerms gan_losses(const LogitsFn& dense_d, const ad::Var& real_batch, const ad::Var& fake_batch,
                    double gamma);

struct Models {
  nets::Generator* G = nullptr;
  nets::Generator* F = nullptr;
  nets::Discriminator* D_I = nullptr;
  nets::Discriminator* D_L = nullptr;
  nets::ProjectionHeads* H_G = nullptr;
};

struct StepRngs {
  Rng* noise = nullptr;
  Rng* locations = nullptr;
  Rng* augment = nullptr;
};

struct GTerms {
  ad::Var total;
  ad::Var gan;
  ad::Var cl;
  ad::Var translated;
};

/// Generator-side objective: adversarial term on the (augmented) translation
/// plus the variant's contrastive content term.
GTerms total_G(const ad::Var& labels_onehot, const ad::Var& sim_images, Variant variant,
               const Models& m, const NCEConfig& nce, const LossWeights& w, double ada_p,
               const StepRngs& rngs);

struct FTerms {
  ad::Var total;
  ad::Var gan;
  ad::Var cyc;
  ad::Var scores;
  ad::Var reconstructed;
};

/// Segmenter-side objective: adversarial term on the predicted label map plus
/// the cycle NCE between the real image and its reconstruction.
FTerms total_F(const ad::Var& real_images, const Models& m, const NCEConfig& nce,
               const LossWeights& w, double ada_p, const StepRngs& rngs);

}  // namespace simit::losses
