#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "core/errors.h"
#include "doctest.h"
#include "gradcheck.h"
#include "losses/losses.h"
#include "nets/nets.h"

using namespace simit;
using namespace simit::ad;
using namespace simit::losses;
using testutil::max_rel_grad_err;
using testutil::random_signed;
using testutil::random_uniform;

namespace {

double cos_sim(const std::vector<double>& a, const std::vector<double>& b, double eps = 0.0) {
  double ab = 0, na = 0, nb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return ab / (std::sqrt(na + eps) * std::sqrt(nb + eps));
}

double ce_oracle(const std::vector<double>& q, const std::vector<double>& p,
                 const std::vector<std::vector<double>>& negs, double tau, double eps = 0.0) {
  std::vector<double> logits{cos_sim(q, p, eps) / tau};
  for (const auto& n : negs) logits.push_back(cos_sim(q, n, eps) / tau);
  double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0;
  for (double l : logits) z += std::exp(l - mx);
  return std::log(z) - (logits[0] - mx);
}

std::vector<double> row(const Tensor& t, std::int64_t r, int d) {
  std::vector<double> v(d);
  for (int i = 0; i < d; ++i) v[i] = t[r * d + i];
  return v;
}

}  // namespace

TEST_CASE("ce_contrast matches a brute-force softmax oracle") {
  Rng rng(60);
  for (int trial = 0; trial < 300; ++trial) {
    int d = rng.uniform_int(2, 12);
    int m = rng.uniform_int(1, 10);
    double tau = 0.05 + rng.uniform();
    Tensor q = random_signed(rng, {d}), p = random_signed(rng, {d});
    Tensor negs = random_signed(rng, {m, d});
    Var loss = ce_contrast(constant(q), constant(p), constant(negs), tau);
    std::vector<std::vector<double>> no(m);
    for (int i = 0; i < m; ++i) no[i] = row(negs, i, d);
    double want = ce_oracle(row(q, 0, d), row(p, 0, d), no, tau);
    CHECK(loss.value()[0] == doctest::Approx(want).epsilon(1e-6));
    CHECK(loss.value()[0] > 0.0);
  }
}

TEST_CASE("ce_contrast closed forms") {
  Rng rng(61);
  for (double tau : {0.07, 0.5, 1.0, 5.0}) {
    Tensor q = random_signed(rng, {7}), p = random_signed(rng, {7});
    Tensor negs(std::vector<int>{1, 7});
    for (int i = 0; i < 7; ++i) negs[i] = p[i];
    Var loss = ce_contrast(constant(q), constant(p), constant(negs), tau);
    CHECK(std::abs(loss.value()[0] - std::log(2.0)) < 1e-12);
  }

  Var axis = ce_contrast(constant(Tensor::from_data({2}, {1, 0})),
                         constant(Tensor::from_data({2}, {1, 0})),
                         constant(Tensor::from_data({1, 2}, {0, 1})), 1.0);
  CHECK(axis.value()[0] == doctest::Approx(0.31326168751822286).epsilon(1e-9));
}

TEST_CASE("ce_contrast is scale invariant and rejects zero vectors") {
  Rng rng(62);
  Tensor q = random_signed(rng, {5}), p = random_signed(rng, {5});
  Tensor negs = random_signed(rng, {4, 5});
  double base = ce_contrast(constant(q), constant(p), constant(negs), 0.07).value()[0];

  Tensor q2 = q.clone(), p2 = p.clone(), n2 = negs.clone();
  for (int i = 0; i < 5; ++i) q2[i] *= 3.7;
  for (int i = 0; i < 5; ++i) p2[i] *= 0.21;
  for (int r = 0; r < 4; ++r) {
    double s = 0.4 + 1.9 * rng.uniform();
    for (int i = 0; i < 5; ++i) n2[r * 5 + i] *= s;
  }
  double scaled = ce_contrast(constant(q2), constant(p2), constant(n2), 0.07).value()[0];
  CHECK(std::abs(base - scaled) < 1e-6);

  Tensor zq = Tensor::zeros({5});
  CHECK_THROWS_AS(ce_contrast(constant(zq), constant(p), constant(negs), 0.07), NumericError);
  Tensor zn = negs.clone();
  for (int i = 0; i < 5; ++i) zn[2 * 5 + i] = 0.0;
  CHECK_THROWS_AS(ce_contrast(constant(q), constant(p), constant(zn), 0.07), NumericError);
  CHECK_THROWS_AS(ce_contrast(constant(q), constant(p), constant(negs), 0.0), ConfigError);
}

TEST_CASE("ce_contrast gradients match finite differences") {
  Rng rng(63);
  for (int trial = 0; trial < 6; ++trial) {
    int d = rng.uniform_int(3, 8);
    int m = rng.uniform_int(2, 6);
    double tau = 0.07 + 0.5 * rng.uniform();
    auto f = [tau](const std::vector<Var>& vs) {
      return ce_contrast(vs[0], vs[1], vs[2], tau);
    };
    double err = max_rel_grad_err(
        f, {random_signed(rng, {d}), random_signed(rng, {d}), random_signed(rng, {m, d})});
    CHECK(err < 1e-4);
  }
}

TEST_CASE("patch_nce_layer agrees with per-location ce_contrast") {
  Rng rng(64);
  Tensor z = random_signed(rng, {1, 6, 5, 5});
  std::vector<int> locs{0, 7, 12, 18, 24};
  int s = static_cast<int>(locs.size());

  Var identical = patch_nce_layer(constant(z), constant(z), locs, HeadFn{}, 0.07);

  Var gathered = gather_locs(constant(z), locs);
  double want = 0.0;
  for (int a = 0; a < s; ++a) {
    std::vector<double> q = row(gathered.value(), a, 6);
    std::vector<std::vector<double>> negs;
    for (int b = 0; b < s; ++b)
      if (b != a) negs.push_back(row(gathered.value(), b, 6));
    want += ce_oracle(q, q, negs, 0.07, 1e-12);
  }
  CHECK(identical.value()[0] == doctest::Approx(want).epsilon(1e-6));

  // spatially shuffled queries score strictly worse
  Tensor shuffled(z.shape());
  std::vector<int> perm(25);
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = 24; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(0, i)]);
  for (int c = 0; c < 6; ++c)
    for (int i = 0; i < 25; ++i) shuffled[c * 25 + perm[i]] = z[c * 25 + i];
  Var shuf = patch_nce_layer(constant(z), constant(shuffled), locs, HeadFn{}, 0.07);
  CHECK(shuf.value()[0] > identical.value()[0]);

  // order of the location list is irrelevant
  std::vector<int> relocs{24, 0, 18, 7, 12};
  Var reordered = patch_nce_layer(constant(z), constant(z), relocs, HeadFn{}, 0.07);
  CHECK(reordered.value()[0] == doctest::Approx(identical.value()[0]).epsilon(1e-12));

  // S=2 leaves exactly one negative per location
  std::vector<int> two{3, 21};
  Var pair_loss = patch_nce_layer(constant(z), constant(z), two, HeadFn{}, 0.07);
  Var g2 = gather_locs(constant(z), two);
  std::vector<double> r0 = row(g2.value(), 0, 6), r1 = row(g2.value(), 1, 6);
  double w2 = ce_oracle(r0, r0, {{r1}}, 0.07, 1e-12) + ce_oracle(r1, r1, {{r0}}, 0.07, 1e-12);
  CHECK(pair_loss.value()[0] == doctest::Approx(w2).epsilon(1e-9));

  CHECK_THROWS_AS(patch_nce_layer(constant(z), constant(z), {3}, HeadFn{}, 0.07), ConfigError);
  CHECK_THROWS_AS(
      patch_nce_layer(constant(z), constant(random_signed(rng, {1, 6, 5, 4})), locs, HeadFn{}, 0.07),
      DataError);
}

TEST_CASE("patch_nce_layer gradients match finite differences") {
  Rng rng(65);
  nets::ParamStore ps;
  Rng init(66);
  nets::ProjectionHeads heads(ps, "h", {4}, 8, init);
  for (int trial = 0; trial < 3; ++trial) {
    std::vector<int> locs{1, 5, 9, 2};
    bool use_head = trial % 2 == 0;
    HeadFn head;
    if (use_head) head = [&heads](const Var& v) { return heads.apply(0, v); };
    auto f = [&locs, &head](const std::vector<Var>& vs) {
      return patch_nce_layer(vs[0], vs[1], locs, head, 0.2);
    };
    double err = max_rel_grad_err(
        f, {random_signed(rng, {2, 4, 3, 4}), random_signed(rng, {2, 4, 3, 4})});
    CHECK(err < 1e-4);
  }
}

TEST_CASE("content loss ranks identity, noise, shuffle in order") {
  nets::ParamStore ps;
  Rng init(67);
  nets::GeneratorConfig fcfg{.in_channels = 3, .base_width = 2, .max_width = 8,
                             .sigmoid_output = true};
  nets::Generator f(ps, "f", fcfg, init);
  std::vector<int> dims;
  for (int j = 1; j <= 4; ++j) dims.push_back(f.width(j));
  nets::ParamStore hps;
  nets::ProjectionHeads heads(hps, "hg", dims, 16, init);

  Rng xr(68);
  Tensor sim = random_uniform(xr, {1, 3, 32, 32}, 0.0, 1.0);
  NCEConfig cfg{.tau = 0.07, .num_locations = 16, .layers = 4};

  Tensor noisy = sim.clone();
  for (std::int64_t i = 0; i < noisy.numel(); ++i)
    noisy[i] = std::clamp(noisy[i] + 0.05 * (xr.uniform() - 0.5), 0.0, 1.0);
  Tensor shuffled(sim.shape());
  std::vector<int> perm(32 * 32);
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = 32 * 32 - 1; i > 0; --i) std::swap(perm[i], perm[xr.uniform_int(0, i)]);
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 32 * 32; ++i) shuffled[c * 32 * 32 + perm[i]] = sim[c * 32 * 32 + i];

  Rng l1(69), l2(69), l3(69);
  double ident =
      contrastive_content_loss(constant(sim), constant(sim), f, heads, cfg, l1).value()[0];
  double mild =
      contrastive_content_loss(constant(sim), constant(noisy), f, heads, cfg, l2).value()[0];
  double shuf =
      contrastive_content_loss(constant(sim), constant(shuffled), f, heads, cfg, l3).value()[0];
  CHECK(ident < mild);
  CHECK(mild < shuf);

  // freshly initialized heads have zero biases, so doubling the images'
  // features upstream cannot change any cosine
  Rng l4(69);
  auto keys = f.encoder_features(constant(sim), false);
  auto queries = f.encoder_features(constant(noisy), false);
  nets::FeatureStack k2, q2;
  for (auto& t : keys.taps) k2.taps.push_back(mul_scalar(t, 2.0));
  for (auto& t : queries.taps) q2.taps.push_back(mul_scalar(t, 2.0));
  Rng l5(69);
  auto locs = sample_locations(keys, cfg.num_locations, l4);
  double raw = patch_nce_stack(keys, queries, locs, &heads, cfg.tau).value()[0];
  double doubled = patch_nce_stack(k2, q2, locs, &heads, cfg.tau).value()[0];
  CHECK(std::abs(raw - doubled) < 1e-6);
  CHECK(std::abs(raw - mild) < 1e-9);

  CHECK_THROWS_AS(contrastive_content_loss(constant(Tensor::zeros({1, 3, 16, 16})), constant(sim),
                                           f, heads, cfg, l5),
                  DataError);
  NCEConfig wrong = cfg;
  wrong.layers = 3;
  CHECK_THROWS_AS(contrastive_content_loss(constant(sim), constant(sim), f, heads, wrong, l5),
                  ConfigError);
}

TEST_CASE("cycle loss hits its analytic floor on perfect reconstruction") {
  nets::ParamStore ps;
  Rng init(70);
  nets::GeneratorConfig fcfg{.in_channels = 3, .base_width = 2, .max_width = 8,
                             .sigmoid_output = true};
  nets::Generator f(ps, "f", fcfg, init);
  Rng xr(71);
  Tensor real = random_uniform(xr, {1, 3, 32, 32}, 0.0, 1.0);
  NCEConfig cfg{.tau = 0.07, .num_locations = 12, .layers = 4};

  Rng lr(72);
  double loss = cycle_nce_loss(constant(real), constant(real), f, cfg, lr).value()[0];

  auto stack = f.encoder_features(constant(real), false);
  Rng lr2(72);
  auto locs = sample_locations(stack, cfg.num_locations, lr2);
  double want = 0.0;
  for (size_t j = 0; j < stack.taps.size(); ++j) {
    Var g = gather_locs(stack.taps[j], locs[j]);
    int d = g.shape()[2];
    int s = static_cast<int>(locs[j].size());
    for (int a = 0; a < s; ++a) {
      std::vector<double> q = row(g.value(), a, d);
      std::vector<std::vector<double>> negs;
      for (int b = 0; b < s; ++b)
        if (b != a) negs.push_back(row(g.value(), b, d));
      want += ce_oracle(q, q, negs, cfg.tau, 1e-12);
    }
  }
  CHECK(loss == doctest::Approx(want).epsilon(1e-6));

  Tensor rolled(real.shape());
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 32 * 32; ++i)
      rolled[c * 32 * 32 + (i + 97) % (32 * 32)] = real[c * 32 * 32 + i];
  Rng lr3(72);
  double worse = cycle_nce_loss(constant(real), constant(rolled), f, cfg, lr3).value()[0];
  CHECK(worse > loss);
}

TEST_CASE("gan_losses closed forms and finite-difference R1") {
  // silent discriminator
  LogitsFn zero_d = [](const Var& x) {
    return mul(x, constant(Tensor::zeros(x.shape())));
  };
  Rng xr(73);
  Var real = param(random_uniform(xr, {2, 1, 4, 4}, 0.0, 1.0));
  Var fake = constant(random_uniform(xr, {2, 1, 4, 4}, 0.0, 1.0));
  GanTerms z = gan_losses(zero_d, real, fake, 0.01);
  CHECK(std::abs(z.d_loss.value()[0] - 2.0 * std::log(2.0)) < 1e-12);
  CHECK(std::abs(z.g_loss.value()[0] - std::log(2.0)) < 1e-12);
  CHECK(std::abs(z.r1.value()[0]) < 1e-15);

  // linear sum-of-pixels discriminator on a 2x2 input
  LogitsFn sum_d = [](const Var& x) {
    auto s = x.shape();
    return sum_to(x, {s[0], 1, 1, 1});
  };
  Var real22 = param(random_uniform(xr, {1, 1, 2, 2}, 0.0, 1.0));
  Var fake22 = constant(random_uniform(xr, {1, 1, 2, 2}, 0.0, 1.0));
  GanTerms lin = gan_losses(sum_d, real22, fake22, 0.01);
  CHECK(std::abs(lin.r1.value()[0] - 0.02) < 1e-12);
  double sr = 0, sf = 0;
  for (int i = 0; i < 4; ++i) {
    sr += real22.value()[i];
    sf += fake22.value()[i];
  }
  double want_d = std::log1p(std::exp(sf)) + std::log1p(std::exp(-sr)) + 0.02;
  CHECK(lin.d_loss.value()[0] == doctest::Approx(want_d).epsilon(1e-12));
  CHECK(lin.g_loss.value()[0] == doctest::Approx(std::log1p(std::exp(-sf))).epsilon(1e-12));

  // conv discriminator: R1 against finite differences of the true gradient
  nets::ParamStore ps;
  Rng init(74);
  auto w1v = ps.create("w1", testutil::random_signed(init, {3, 2, 3, 3}));
  auto b1v = ps.create("b1", testutil::random_signed(init, {3}));
  auto w2v = ps.create("w2", testutil::random_signed(init, {1, 3, 3, 3}));
  LogitsFn conv_d = [&](const Var& x) {
    Var h = leaky_relu(conv2d(x, w1v, b1v, 1, 1), 0.2);
    return conv2d(h, w2v, Var(), 1, 1);
  };
  Tensor xt = random_uniform(xr, {1, 2, 6, 6}, 0.0, 1.0);
  Var leaf = param(xt.clone());
  double gamma = 0.4;
  GanTerms ct = gan_losses(conv_d, leaf, constant(xt.clone()), gamma);

  double h = 1e-5;
  double n2 = 0.0;
  Tensor probe = xt.clone();
  Var pv = param(probe);
  std::int64_t cells = conv_d(pv).numel();
  for (std::int64_t i = 0; i < probe.numel(); ++i) {
    double keep = probe[i];
    double fp, fm;
    {
      NoGrad ng;
      probe[i] = keep + h;
      fp = sum_all(conv_d(pv)).value()[0] / cells;
      probe[i] = keep - h;
      fm = sum_all(conv_d(pv)).value()[0] / cells;
    }
    probe[i] = keep;
    double gi = (fp - fm) / (2 * h);
    n2 += gi * gi;
  }
  CHECK(ct.r1.value()[0] == doctest::Approx(0.5 * gamma * n2).epsilon(1e-4));

  // r1 is itself differentiable wrt the discriminator weights
  auto gw = grad(ct.r1, {w1v, w2v});
  bool any = false;
  for (auto& g : gw)
    for (std::int64_t i = 0; i < g.numel(); ++i) any = any || g.value()[i] != 0.0;
  CHECK(any);

  CHECK_THROWS_AS(gan_losses(sum_d, constant(xt), constant(xt), 0.01), ModelError);
  LogitsFn nan_d = [](const Var& x) { return mul_scalar(x, std::nan("")); };
  CHECK_THROWS_AS(gan_losses(nan_d, param(xt.clone()), constant(xt), 0.01), NumericError);
}

TEST_CASE("total_G wires variants and exposes its breakdown") {
  Rng init(75);
  nets::ParamStore gs, fs, ds, hs;
  nets::GeneratorConfig gcfg{.in_channels = 3, .out_channels = 3, .base_width = 2,
                             .max_width = 8, .num_resblocks = 1,
                             .noise_injection = true, .demodulate = true, .aux_stem = true};
  nets::Generator G(gs, "g", gcfg, init);
  nets::GeneratorConfig fcfg{.in_channels = 3, .out_channels = 3, .base_width = 2,
                             .max_width = 8, .num_resblocks = 1, .sigmoid_output = true};
  nets::Generator F(fs, "f", fcfg, init);
  nets::Discriminator D_I(ds, "di", 3, 4, 16, init);

  Rng xr(76);
  Tensor labels = Tensor::zeros({1, 3, 64, 64});
  for (int i = 0; i < 64; ++i)
    for (int j = 0; j < 64; ++j) labels.at({0, (i / 16) % 3, i, j}) = 1.0;
  Tensor sim = random_uniform(xr, {1, 3, 64, 64}, 0.0, 1.0);

  NCEConfig nce{.tau = 0.07, .num_locations = 8, .layers = 4};
  LossWeights w;

  auto heads_for = [&](nets::Generator& enc) {
    std::vector<int> dims;
    for (int j = 1; j <= 4; ++j) dims.push_back(enc.width(j));
    return dims;
  };

  {
    nets::ParamStore hps;
    nets::ProjectionHeads H(hps, "h", heads_for(F), 16, init);
    Models m{.G = &G, .F = &F, .D_I = &D_I, .H_G = &H};
    Rng nr(77), lr(78), ar(79);
    StepRngs r{.noise = &nr, .locations = &lr, .augment = &ar};
    GTerms t = total_G(constant(labels), constant(sim), Variant::simit, m, nce, w, 0.0, r);
    CHECK(t.translated.shape() == std::vector<int>{1, 3, 64, 64});
    CHECK(std::abs(t.total.value()[0] - (t.gan.value()[0] + 5.0 * t.cl.value()[0])) < 1e-9);
    CHECK(t.cl.value()[0] > 0.0);

    // lambda_G = 0 drops the CL term and leaves the heads out of the graph
    LossWeights w0 = w;
    w0.lambda_G = 0.0;
    Rng nr0(77), lr0(78), ar0(79);
    StepRngs r0{.noise = &nr0, .locations = &lr0, .augment = &ar0};
    GTerms t0 = total_G(constant(labels), Var(), Variant::simit, m, nce, w0, 0.0, r0);
    CHECK(t0.total.value()[0] == t0.gan.value()[0]);
    auto hg = grad(t0.total, hps.vars());
    for (auto& g : hg)
      for (std::int64_t i = 0; i < g.numel(); ++i) CHECK(g.value()[i] == 0.0);

    Rng nrx(77), lrx(78), arx(79);
    StepRngs rx{.noise = &nrx, .locations = &lrx, .augment = &arx};
    CHECK_THROWS_AS(total_G(constant(labels), Var(), Variant::simit, m, nce, w, 0.0, rx),
                    ConfigError);
  }

  {
    nets::ParamStore hps;
    nets::ProjectionHeads H(hps, "h", heads_for(G), 16, init);
    Models m{.G = &G, .D_I = &D_I, .H_G = &H};
    Rng nr(80), lr(81), ar(82);
    StepRngs r{.noise = &nr, .locations = &lr, .augment = &ar};
    GTerms tc = total_G(constant(labels), constant(sim), Variant::simit_c, m, nce, w, 0.0, r);
    CHECK(tc.cl.value()[0] > 0.0);

    // simit-cs never touches the simulated image
    Rng nr2(80), lr2(81), ar2(82);
    StepRngs r2{.noise = &nr2, .locations = &lr2, .augment = &ar2};
    GTerms ts = total_G(constant(labels), Var(), Variant::simit_cs, m, nce, w, 0.0, r2);
    CHECK(ts.cl.value()[0] > 0.0);
    CHECK(std::abs(ts.total.value()[0] - (ts.gan.value()[0] + 5.0 * ts.cl.value()[0])) < 1e-9);
  }
}

TEST_CASE("total_F wires the cycle and exposes its breakdown") {
  Rng init(83);
  nets::ParamStore gs, fs, ds;
  nets::GeneratorConfig gcfg{.in_channels = 3, .out_channels = 3, .base_width = 2,
                             .max_width = 8, .num_resblocks = 1,
                             .noise_injection = true, .demodulate = true};
  nets::Generator G(gs, "g", gcfg, init);
  nets::GeneratorConfig fcfg{.in_channels = 3, .out_channels = 3, .base_width = 2,
                             .max_width = 8, .num_resblocks = 1, .sigmoid_output = true};
  nets::Generator F(fs, "f", fcfg, init);
  nets::Discriminator D_L(ds, "dl", 3, 4, 16, init);

  Rng xr(84);
  Tensor real = random_uniform(xr, {1, 3, 64, 64}, 0.0, 1.0);
  NCEConfig nce{.tau = 0.07, .num_locations = 8, .layers = 4};
  LossWeights w;
  w.lambda_F = 0.5;

  Models m{.G = &G, .F = &F, .D_L = &D_L};
  Rng nr(85), lr(86), ar(87);
  StepRngs r{.noise = &nr, .locations = &lr, .augment = &ar};
  FTerms t = total_F(constant(real), m, nce, w, 0.25, r);
  CHECK(t.scores.shape() == std::vector<int>{1, 3, 64, 64});
  CHECK(t.reconstructed.shape() == std::vector<int>{1, 3, 64, 64});
  CHECK(std::abs(t.total.value()[0] - (t.gan.value()[0] + 0.5 * t.cyc.value()[0])) < 1e-9);

  auto gf = grad(t.total, fs.vars());
  bool any = false;
  for (auto& g : gf)
    for (std::int64_t i = 0; i < g.numel(); ++i) any = any || g.value()[i] != 0.0;
  CHECK(any);

  Models incomplete{.G = &G, .F = &F};
  CHECK_THROWS_AS(total_F(constant(real), incomplete, nce, w, 0.0, r), ConfigError);
}

TEST_CASE("variant names round-trip") {
  for (auto v : {Variant::simit, Variant::simit_c, Variant::simit_cs})
    CHECK(parse_variant(variant_name(v)) == v);
  CHECK_THROWS_AS(parse_variant("cyclegan"), ConfigError);
}
