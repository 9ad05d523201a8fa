#include "losses/losses.h"

#include <algorithm>
#include <numeric>

#include "augment/augment.h"
#include "core/errors.h"

namespace simit::losses {

using namespace simit::ad;

Variant parse_variant(const std::string& name) {
  if (name == "simit") return Variant::simit;
  if (name == "simit-c") return Variant::simit_c;
  if (name == "simit-cs") return Variant::simit_cs;
  throw ConfigError("unknown variant '" + name + "' (expected simit, simit-c or simit-cs)");
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::simit: return "simit";
    case Variant::simit_c: return "simit-c";
    default: return "simit-cs";
  }
}

namespace {

void check_nonzero_rows(const Tensor& t, std::int64_t rows, std::int64_t dim, const char* what) {
  for (std::int64_t r = 0; r < rows; ++r) {
    double n2 = 0.0;
    for (std::int64_t i = 0; i < dim; ++i) n2 += t[r * dim + i] * t[r * dim + i];
    if (n2 == 0.0) throw NumericError(std::string(what) + ": zero-norm vector, cosine undefined");
  }
}

}  // namespace

Var ce_contrast(const Var& query, const Var& positive, const Var& negatives, double tau) {
  if (tau <= 0.0) throw ConfigError("ce_contrast: tau must be positive");
  if (query.value().ndim() != 1 || positive.value().ndim() != 1 || negatives.value().ndim() != 2)
    throw ModelError("ce_contrast: expected query [D], positive [D], negatives [M,D]");
  int d = query.shape()[0];
  if (positive.shape()[0] != d || negatives.shape()[1] != d)
    throw ModelError("ce_contrast: dimension mismatch");
  int m = negatives.shape()[0];
  if (m < 1) throw ConfigError("ce_contrast: need at least one negative");
  check_nonzero_rows(query.value(), 1, d, "ce_contrast query");
  check_nonzero_rows(positive.value(), 1, d, "ce_contrast positive");
  check_nonzero_rows(negatives.value(), m, d, "ce_contrast negative");

  Var qn = l2_normalize_last(query, 0.0);
  Var pn = l2_normalize_last(positive, 0.0);
  Var nn = l2_normalize_last(negatives, 0.0);
  Var pos = mul_scalar(sum_to(mul(qn, pn), {1}), 1.0 / tau);
  Var negs = mul_scalar(reshape(matmul(nn, reshape(qn, {d, 1})), {m}), 1.0 / tau);
  Var logits = reshape(concat_dim0({pos, negs}), {1, 1, 1 + m});
  return sub(reshape(logsumexp_last(logits), {1}), pos);
}

Var patch_nce_layer(const Var& z, const Var& zhat, const std::vector<int>& locations,
                    const HeadFn& head, double tau) {
  if (tau <= 0.0) throw ConfigError("patch_nce_layer: tau must be positive");
  if (z.value().ndim() != 4 || zhat.value().ndim() != 4)
    throw ModelError("patch_nce_layer: expected [n,c,h,w] features");
  if (z.shape() != zhat.shape())
    throw DataError("patch_nce_layer: feature stacks disagree, " + Tensor::shape_str(z.shape()) +
                    " vs " + Tensor::shape_str(zhat.shape()));
  int s = static_cast<int>(locations.size());
  if (s < 2) throw ConfigError("patch_nce_layer: need at least 2 locations for negatives");

  int n = z.shape()[0];
  Var keys = gather_locs(z, locations);
  Var queries = gather_locs(zhat, locations);
  if (head) {
    keys = head(keys);
    queries = head(queries);
  }
  keys = l2_normalize_last(keys);
  queries = l2_normalize_last(queries);
  Var logits = mul_scalar(bmm(queries, transpose_last2(keys)), 1.0 / tau);
  Var per_loc = sub(logsumexp_last(logits), diag_last2(logits));
  return mul_scalar(sum_all(per_loc), 1.0 / n);
}

std::vector<std::vector<int>> sample_locations(const nets::FeatureStack& stack, int num_locations,
                                               Rng& rng) {
  if (num_locations < 2) throw ConfigError("sample_locations: need at least 2 per layer");
  std::vector<std::vector<int>> out;
  for (const auto& tap : stack.taps) {
    int hw = tap.shape()[2] * tap.shape()[3];
    int take = std::min(num_locations, hw);
    if (take < 2) throw ConfigError("sample_locations: tap too small for negatives");
    std::vector<int> idx(hw);
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = 0; i < take; ++i) std::swap(idx[i], idx[rng.uniform_int(i, hw - 1)]);
    idx.resize(take);
    out.push_back(std::move(idx));
  }
  return out;
}

Var patch_nce_stack(const nets::FeatureStack& keys, const nets::FeatureStack& queries,
                    const std::vector<std::vector<int>>& locations, nets::ProjectionHeads* heads,
                    double tau) {
  if (keys.taps.size() != queries.taps.size() || keys.taps.size() != locations.size())
    throw ModelError("patch_nce_stack: tap/location count mismatch");
  Var total;
  for (size_t j = 0; j < keys.taps.size(); ++j) {
    HeadFn head;
    if (heads) head = [heads, j](const Var& v) { return heads->apply(static_cast<int>(j), v); };
    Var term = patch_nce_layer(keys.taps[j], queries.taps[j], locations[j], head, tau);
    total = total.defined() ? add(total, term) : term;
  }
  return total;
}

Var contrastive_content_loss(const Var& sim_img, const Var& translated,
                             nets::Generator& f_encoder, nets::ProjectionHeads& heads,
                             const NCEConfig& cfg, Rng& loc_rng) {
  if (sim_img.shape() != translated.shape())
    throw DataError("contrastive_content_loss: unpaired inputs, " + Tensor::shape_str(sim_img.shape()) +
                    " vs " + Tensor::shape_str(translated.shape()));
  auto keys = f_encoder.encoder_features(sim_img, false);
  auto queries = f_encoder.encoder_features(translated, false);
  if (static_cast<int>(keys.taps.size()) != cfg.layers)
    throw ConfigError("contrastive_content_loss: encoder taps != configured layers");
  auto locs = sample_locations(keys, cfg.num_locations, loc_rng);
  return patch_nce_stack(keys, queries, locs, &heads, cfg.tau);
}

Var cycle_nce_loss(const Var& real_img, const Var& reconstructed, nets::Generator& f_encoder,
                   const NCEConfig& cfg, Rng& loc_rng) {
  if (real_img.shape() != reconstructed.shape())
    throw DataError("cycle_nce_loss: shape mismatch, " + Tensor::shape_str(real_img.shape()) + " vs " +
                    Tensor::shape_str(reconstructed.shape()));
  auto keys = f_encoder.encoder_features(real_img, false);
  auto queries = f_encoder.encoder_features(reconstructed, false);
  if (static_cast<int>(keys.taps.size()) != cfg.layers)
    throw ConfigError("cycle_nce_loss: encoder taps != configured layers");
  auto locs = sample_locations(keys, cfg.num_locations, loc_rng);
  return patch_nce_stack(keys, queries, locs, nullptr, cfg.tau);
}

GanTerms gan_losses(const LogitsFn& dense_d, const Var& real_batch, const Var& fake_batch,
                    double gamma) {
  if (!real_batch.requires_grad())
    throw ModelError("gan_losses: real batch must carry requires_grad for the R1 term");
  Var dense_real = dense_d(real_batch);
  Var dense_fake = dense_d(stop_grad(fake_batch));
  Var dense_fake_g = dense_d(fake_batch);
  if (!dense_real.value().all_finite() || !dense_fake.value().all_finite())
    throw NumericError("gan_losses: non-finite discriminator logits");

  GanTerms t;
  int n = real_batch.shape()[0];
  if (gamma > 0.0) {
    std::int64_t cells = dense_real.numel() / n;
    Var s = mul_scalar(sum_all(dense_real), 1.0 / static_cast<double>(cells));
    Var gx = grad(s, {real_batch})[0];
    t.r1 = mul_scalar(sum_all(mul(gx, gx)), 0.5 * gamma / n);
  } else {
    t.r1 = scalar_const(0.0);
  }
  t.d_loss = add(add(mean_all(softplus(dense_fake)), mean_all(softplus(neg(dense_real)))), t.r1);
  t.g_loss = mean_all(softplus(neg(dense_fake_g)));
  t.real_dense = dense_real;
  return t;
}

GTerms total_G(const Var& labels_onehot, const Var& sim_images, Variant variant, const Models& m,
               const NCEConfig& nce, const LossWeights& w, double ada_p, const StepRngs& rngs) {
  if (!m.G || !m.D_I) throw ConfigError("total_G: G and D_I are required");
  if (!rngs.augment || !rngs.locations) throw ConfigError("total_G: missing rng streams");
  bool needs_sim = w.lambda_G > 0.0 && variant != Variant::simit_cs;
  if (needs_sim && !sim_images.defined())
    throw ConfigError("total_G: variant " + variant_name(variant) +
                      " needs the paired simulated image when lambda_G > 0");

  GTerms t;
  t.translated = m.G->forward(labels_onehot, rngs.noise);
  Var aug = augment::apply_ada(t.translated, ada_p, *rngs.augment, false);
  Var dense = m.D_I->dense_logits(aug);
  if (!dense.value().all_finite()) throw NumericError("total_G: non-finite discriminator logits");
  t.gan = mean_all(softplus(neg(dense)));

  if (w.lambda_G > 0.0) {
    switch (variant) {
      case Variant::simit: {
        if (!m.F || !m.H_G) throw ConfigError("total_G: simit needs F and projection heads");
        t.cl = contrastive_content_loss(sim_images, t.translated, *m.F, *m.H_G, nce,
                                        *rngs.locations);
        break;
      }
      case Variant::simit_c: {
        if (!m.H_G) throw ConfigError("total_G: simit-c needs projection heads");
        auto keys = m.G->encoder_features(sim_images, true);
        auto queries = m.G->encoder_features(t.translated, true);
        auto locs = sample_locations(keys, nce.num_locations, *rngs.locations);
        t.cl = patch_nce_stack(keys, queries, locs, m.H_G, nce.tau);
        break;
      }
      case Variant::simit_cs: {
        if (!m.H_G) throw ConfigError("total_G: simit-cs needs projection heads");
        auto keys = m.G->encoder_features(labels_onehot, false);
        auto queries = m.G->encoder_features(t.translated, true);
        auto locs = sample_locations(keys, nce.num_locations, *rngs.locations);
        t.cl = patch_nce_stack(keys, queries, locs, m.H_G, nce.tau);
        break;
      }
    }
    t.total = add(t.gan, mul_scalar(t.cl, w.lambda_G));
  } else {
    t.cl = scalar_const(0.0);
    t.total = t.gan;
  }
  return t;
}

FTerms total_F(const Var& real_images, const Models& m, const NCEConfig& nce,
               const LossWeights& w, double ada_p, const StepRngs& rngs) {
  if (!m.G || !m.F || !m.D_L) throw ConfigError("total_F: G, F and D_L are required");
  if (!rngs.augment || !rngs.locations) throw ConfigError("total_F: missing rng streams");

  FTerms t;
  t.scores = m.F->forward(real_images, nullptr);
  Var label_map = hard_onehot_st(t.scores);
  Var aug = augment::apply_ada(label_map, ada_p, *rngs.augment, true);
  Var dense = m.D_L->dense_logits(aug);
  if (!dense.value().all_finite()) throw NumericError("total_F: non-finite discriminator logits");
  t.gan = mean_all(softplus(neg(dense)));

  t.reconstructed = m.G->forward(label_map, rngs.noise);
  if (w.lambda_F > 0.0) {
    t.cyc = cycle_nce_loss(real_images, t.reconstructed, *m.F, nce, *rngs.locations);
    t.total = add(t.gan, mul_scalar(t.cyc, w.lambda_F));
  } else {
    t.cyc = scalar_const(0.0);
    t.total = t.gan;
  }
  return t;
}

}  // namespace simit::losses
