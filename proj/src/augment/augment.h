#pragma once

#include "core/autodiff.h"
#include "core/rng.h"

namespace simit::augment {

/// Self-tuning augmentation probability for the discriminators. `rt_estimate`
/// tracks E[sign(D(real))]; p is nudged toward keeping it at `target_rt`.
struct AdaState {
  double p = 0.0;
  double target_rt = 0.6;
  double adjustment_speed = 0.01;
  double rt_estimate = 0.0;
};

/// Per-sample pipeline: horizontal flip, 90-degree rotation (square inputs
/// only), integer translation up to 1/8 of each side, brightness and contrast
/// jitter, each applied independently with probability p. Color ops are
/// skipped when geometric_only (one-hot label maps). Stays in the graph so
/// the generator sees gradients through the augmented fake stream.
ad::Var apply_ada(const ad::Var& batch, double p, Rng& rng, bool geometric_only = false);

AdaState update_ada(const AdaState& state, const Tensor& d_real_logits);

}  // namespace simit::augment
