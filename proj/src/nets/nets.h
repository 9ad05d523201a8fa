#pragma once

#include <string>
#include <vector>

#include "core/autodiff.h"
#include "core/rng.h"

namespace simit::nets {

using ad::Var;

/// Ordered, named parameter leaves. Creation order is the optimizer /
/// checkpoint order, so construction must be deterministic.
class ParamStore {
 public:
  Var create(const std::string& name, Tensor init);
  const std::vector<std::pair<std::string, Var>>& items() const { return items_; }
  std::vector<Var> vars() const;
  Var find(const std::string& name) const;  // undefined Var when absent

 private:
  std::vector<std::pair<std::string, Var>> items_;
};

Tensor he_normal(Rng& rng, std::vector<int> shape, int fan_in);

/// Per-output-channel weight normalization. `scales` is a per-input-channel
/// multiplier (undefined Var = all ones).
Var demodulate(const Var& w, const Var& scales, double eps);
inline Var demodulate(const Var& w, double eps = 1e-8) { return demodulate(w, Var(), eps); }

/// feature + weight * N(0,1), the noise image shared across channels.
Var inject_noise(const Var& feature, const Var& weight, Rng& rng);

struct ConvLayer {
  Var w, b;
  int stride = 1;
  int pad = 1;
  bool demod = false;
  double demod_eps = 1e-8;

  Var operator()(const Var& x) const;
};

struct GeneratorConfig {
  int in_channels = 3;
  int out_channels = 3;
  int base_width = 64;
  int max_width = 512;
  int num_resblocks = 6;
  int num_scales = 4;
  bool noise_injection = false;
  bool demodulate = false;
  bool sigmoid_output = false;
  bool aux_stem = false;  // extra 3-channel input stem for feature extraction
};

struct FeatureStack {
  std::vector<Var> taps;  // one per stride-2 encoder conv, post-activation
};

class Generator {
 public:
  Generator(ParamStore& ps, const std::string& prefix, GeneratorConfig cfg, Rng& init);

  /// Full encoder-decoder pass; spatial dims preserved. noise_rng required
  /// when noise injection is enabled.
  Var forward(const Var& x, Rng* noise_rng) const;

  /// Taps from the stride-2 encoder convs only (no residual trunk, no
  /// decoder). With via_aux_stem the 3-channel stem replaces the main one.
  FeatureStack encoder_features(const Var& x, bool via_aux_stem) const;

  const GeneratorConfig& config() const { return cfg_; }
  int width(int scale) const;  // channels after `scale` downsamplings

 private:
  void check_input(const Var& x, int channels) const;

  GeneratorConfig cfg_;
  ConvLayer stem_, aux_stem_, head_;
  std::vector<ConvLayer> downs_;               // num_scales taps
  std::vector<std::pair<ConvLayer, ConvLayer>> resblocks_;
  std::vector<ConvLayer> ups_;                 // deepest scale first
  std::vector<Var> noise_weights_;             // one per decoder stage
};

/// Patch discriminator; every dense logit sees exactly a 64x64 window.
class Discriminator {
 public:
  Discriminator(ParamStore& ps, const std::string& prefix, int in_channels, int base_width,
                int max_width, Rng& init);

  Var dense_logits(const Var& x) const;  // [n,1,ho,wo]
  Var forward(const Var& x) const;       // mean over cells and batch, [1]

  /// Input window [y0,y0+64) x [x0,x0+64) feeding dense cell (cy, cx).
  static std::pair<int, int> cell_window(int cy, int cx);

 private:
  std::vector<ConvLayer> convs_;
  ConvLayer logit_;
};

/// One two-layer MLP per encoder tap, applied per sampled location.
class ProjectionHeads {
 public:
  ProjectionHeads(ParamStore& ps, const std::string& prefix, std::vector<int> in_dims,
                  int width, Rng& init);

  /// [n,S,D_j] -> [n,S,width]
  Var apply(int layer, const Var& gathered) const;
  int layers() const { return static_cast<int>(w1_.size()); }

 private:
  std::vector<Var> w1_, b1_, w2_, b2_;
};

}  // namespace simit::nets
