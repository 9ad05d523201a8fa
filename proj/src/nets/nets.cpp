#include "nets/nets.h"

#include <algorithm>
#include <cmath>

#include "core/errors.h"

namespace simit::nets {

using namespace simit::ad;

Var ParamStore::create(const std::string& name, Tensor init) {
  for (const auto& [n, v] : items_)
    if (n == name) throw ModelError("ParamStore: duplicate name " + name);
  Var v = param(std::move(init));
  items_.emplace_back(name, v);
  return v;
}

std::vector<Var> ParamStore::vars() const {
  std::vector<Var> out;
  out.reserve(items_.size());
  for (const auto& [n, v] : items_) out.push_back(v);
  return out;
}

Var ParamStore::find(const std::string& name) const {
  for (const auto& [n, v] : items_)
    if (n == name) return v;
  return Var();
}

Tensor he_normal(Rng& rng, std::vector<int> shape, int fan_in) {
  Tensor t(std::move(shape));
  double std = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = std * rng.normal();
  return t;
}

Var demodulate(const Var& w, const Var& scales, double eps) {
  if (w.value().ndim() != 4) throw ModelError("demodulate: expected [co,ci,k,k]");
  if (!w.value().all_finite()) throw NumericError("demodulate: non-finite weights");
  int co = w.shape()[0], ci = w.shape()[1];
  Var sw = scales.defined() ? mul(w, reshape(scales, {1, ci, 1, 1})) : w;
  Var norm2 = sum_to(mul(sw, sw), {co, 1, 1, 1});
  return mul(sw, pow_const(add_scalar(norm2, eps), -0.5));
}

Var inject_noise(const Var& feature, const Var& weight, Rng& rng) {
  const auto& s = feature.shape();
  Tensor noise({s[0], 1, s[2], s[3]});
  for (std::int64_t i = 0; i < noise.numel(); ++i) noise[i] = rng.normal();
  return add(feature, mul(reshape(weight, {1, 1, 1, 1}), constant(std::move(noise))));
}

Var ConvLayer::operator()(const Var& x) const {
  return conv2d(x, demod ? demodulate(w, demod_eps) : w, b, stride, pad);
}

namespace {

ConvLayer make_conv(ParamStore& ps, const std::string& name, int ci, int co, int k, int stride,
                    int pad, Rng& rng, bool demod = false) {
  ConvLayer c;
  c.w = ps.create(name + ".w", he_normal(rng, {co, ci, k, k}, ci * k * k));
  c.b = ps.create(name + ".b", Tensor::zeros({co}));
  c.stride = stride;
  c.pad = pad;
  c.demod = demod;
  return c;
}

}  // namespace

Generator::Generator(ParamStore& ps, const std::string& prefix, GeneratorConfig cfg, Rng& init)
    : cfg_(cfg) {
  if (cfg.in_channels < 1 || cfg.out_channels < 1 || cfg.base_width < 1 ||
      cfg.max_width < cfg.base_width || cfg.num_scales < 1 || cfg.num_resblocks < 0)
    throw ConfigError("Generator: bad config");
  stem_ = make_conv(ps, prefix + ".stem", cfg.in_channels, width(0), 3, 1, 1, init);
  if (cfg.aux_stem) aux_stem_ = make_conv(ps, prefix + ".aux_stem", 3, width(0), 1, 1, 0, init);
  for (int j = 1; j <= cfg.num_scales; ++j)
    downs_.push_back(
        make_conv(ps, prefix + ".down" + std::to_string(j), width(j - 1), width(j), 3, 2, 1, init));
  int wd = width(cfg.num_scales);
  for (int i = 0; i < cfg.num_resblocks; ++i) {
    auto a = make_conv(ps, prefix + ".res" + std::to_string(i) + "a", wd, wd, 3, 1, 1, init);
    auto b = make_conv(ps, prefix + ".res" + std::to_string(i) + "b", wd, wd, 3, 1, 1, init);
    resblocks_.emplace_back(a, b);
  }
  for (int j = cfg.num_scales; j >= 1; --j) {
    ups_.push_back(make_conv(ps, prefix + ".up" + std::to_string(j), width(j), width(j - 1), 3, 1,
                             1, init, cfg.demodulate));
    if (cfg.noise_injection)
      noise_weights_.push_back(
          ps.create(prefix + ".noise" + std::to_string(j), Tensor::zeros({1})));
  }
  head_ = make_conv(ps, prefix + ".head", width(0), cfg.out_channels, 3, 1, 1, init);
}

int Generator::width(int scale) const {
  return std::min(cfg_.base_width << scale, cfg_.max_width);
}

void Generator::check_input(const Var& x, int channels) const {
  if (x.value().ndim() != 4 || x.shape()[1] != channels)
    throw ModelError("generator: expected [n," + std::to_string(channels) + ",h,w], got " +
                     Tensor::shape_str(x.shape()));
  int h = x.shape()[2], w = x.shape()[3], div = 1 << cfg_.num_scales;
  if (h % div || w % div || h < div || w < div)
    throw ModelError("generator: spatial dims must be positive multiples of " +
                     std::to_string(div));
}

Var Generator::forward(const Var& x, Rng* noise_rng) const {
  check_input(x, cfg_.in_channels);
  if (cfg_.noise_injection && noise_rng == nullptr)
    throw ModelError("generator: noise rng required");
  std::vector<Var> feats;  // feats[j] at 1/2^j resolution
  feats.push_back(relu(stem_(x)));
  for (const auto& down : downs_) feats.push_back(relu(down(feats.back())));

  Var t = feats.back();
  for (const auto& [a, b] : resblocks_) t = add(t, b(relu(a(t))));

  for (size_t i = 0; i < ups_.size(); ++i) {
    t = ups_[i](upsample_nearest2x(t));
    if (cfg_.noise_injection) t = inject_noise(t, noise_weights_[i], *noise_rng);
    t = add(relu(t), feats[ups_.size() - 1 - i]);
  }
  Var out = head_(t);
  return cfg_.sigmoid_output ? sigmoid(out) : out;
}

FeatureStack Generator::encoder_features(const Var& x, bool via_aux_stem) const {
  if (via_aux_stem && !cfg_.aux_stem)
    throw ModelError("generator: auxiliary stem not configured");
  check_input(x, via_aux_stem ? 3 : cfg_.in_channels);
  FeatureStack stack;
  Var t = relu(via_aux_stem ? aux_stem_(x) : stem_(x));
  for (const auto& down : downs_) {
    t = relu(down(t));
    stack.taps.push_back(t);
  }
  return stack;
}

Discriminator::Discriminator(ParamStore& ps, const std::string& prefix, int in_channels,
                             int base_width, int max_width, Rng& init) {
  auto cw = [&](int l) { return std::min(base_width << l, max_width); };
  convs_.push_back(make_conv(ps, prefix + ".c0", in_channels, cw(0), 6, 2, 2, init));
  convs_.push_back(make_conv(ps, prefix + ".c1", cw(0), cw(1), 4, 2, 1, init));
  convs_.push_back(make_conv(ps, prefix + ".c2", cw(1), cw(2), 4, 2, 1, init));
  convs_.push_back(make_conv(ps, prefix + ".c3", cw(2), cw(3), 4, 2, 1, init));
  convs_.push_back(make_conv(ps, prefix + ".c4", cw(3), cw(3), 2, 1, 0, init));
  logit_ = make_conv(ps, prefix + ".logit", cw(3), 1, 1, 1, 0, init);
}

Var Discriminator::dense_logits(const Var& x) const {
  if (x.value().ndim() != 4 || x.shape()[2] < 64 || x.shape()[3] < 64)
    throw ModelError("discriminator: input smaller than the 64x64 receptive field");
  Var t = x;
  for (const auto& c : convs_) t = leaky_relu(c(t), 0.2);
  return logit_(t);
}

Var Discriminator::forward(const Var& x) const { return mean_all(dense_logits(x)); }

std::pair<int, int> Discriminator::cell_window(int cy, int cx) {
  return {cy * 16 - 16, cx * 16 - 16};
}

ProjectionHeads::ProjectionHeads(ParamStore& ps, const std::string& prefix,
                                 std::vector<int> in_dims, int width, Rng& init) {
  for (size_t j = 0; j < in_dims.size(); ++j) {
    std::string base = prefix + ".h" + std::to_string(j);
    w1_.push_back(ps.create(base + ".w1", he_normal(init, {in_dims[j], width}, in_dims[j])));
    b1_.push_back(ps.create(base + ".b1", Tensor::zeros({width})));
    w2_.push_back(ps.create(base + ".w2", he_normal(init, {width, width}, width)));
    b2_.push_back(ps.create(base + ".b2", Tensor::zeros({width})));
  }
}

Var ProjectionHeads::apply(int layer, const Var& gathered) const {
  if (layer < 0 || layer >= layers()) throw ModelError("ProjectionHeads: bad layer index");
  if (gathered.value().ndim() != 3 || gathered.shape()[2] != w1_[layer].shape()[0])
    throw ModelError("ProjectionHeads: expected [n,S," +
                     std::to_string(w1_[layer].shape()[0]) + "]");
  int n = gathered.shape()[0], s = gathered.shape()[1];
  int width = static_cast<int>(w1_[layer].shape()[1]);
  Var t = reshape(gathered, {n * s, gathered.shape()[2]});
  t = relu(add(matmul(t, w1_[layer]), reshape(b1_[layer], {1, width})));
  t = add(matmul(t, w2_[layer]), reshape(b2_[layer], {1, width}));
  return reshape(t, {n, s, width});
}

}  // namespace simit::nets
