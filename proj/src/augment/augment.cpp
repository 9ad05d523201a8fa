#include "augment/augment.h"

#include <algorithm>
#include <cmath>

#include "core/errors.h"

namespace simit::augment {

using namespace simit::ad;

namespace {

constexpr double kRtEmaAlpha = 0.05;

Var augment_one(const Var& img, double p, Rng& rng, bool geometric_only) {
  Var y = img;
  int h = img.shape()[2], w = img.shape()[3];
  if (rng.coin(p)) y = flip_h(y);
  if (rng.coin(p) && h == w) y = rot90(y, rng.uniform_int(1, 3));
  if (rng.coin(p)) {
    int dy = rng.uniform_int(-(h / 8), h / 8);
    int dx = rng.uniform_int(-(w / 8), w / 8);
    y = translate2d(y, dy, dx);
  }
  if (!geometric_only) {
    if (rng.coin(p)) {
      double b = 0.4 * rng.uniform() - 0.2;
      y = clamp(add_scalar(y, b), 0.0, 1.0);
    }
    if (rng.coin(p)) {
      double c = std::exp(0.5 * (2.0 * rng.uniform() - 1.0));
      Var m = reshape(mean_all(y), {1, 1, 1, 1});
      m = broadcast_to(m, y.shape());
      y = clamp(add(mul_scalar(sub(y, m), c), m), 0.0, 1.0);
    }
  }
  return y;
}

}  // namespace

Var apply_ada(const Var& batch, double p, Rng& rng, bool geometric_only) {
  if (batch.value().ndim() != 4) throw ModelError("apply_ada: expected [n,c,h,w]");
  if (p < 0.0 || p > 1.0) throw ConfigError("apply_ada: p outside [0,1]");
  if (p == 0.0) return batch;
  int n = batch.shape()[0];
  std::vector<Var> rows;
  rows.reserve(n);
  for (int i = 0; i < n; ++i)
    rows.push_back(augment_one(slice_dim0(batch, i, 1), p, rng, geometric_only));
  return rows.size() == 1 ? rows[0] : concat_dim0(rows);
}

AdaState update_ada(const AdaState& state, const Tensor& d_real_logits) {
  if (!d_real_logits.all_finite()) throw NumericError("update_ada: non-finite logits");
  double s = 0.0;
  for (std::int64_t i = 0; i < d_real_logits.numel(); ++i)
    s += d_real_logits[i] > 0.0 ? 1.0 : (d_real_logits[i] < 0.0 ? -1.0 : 0.0);
  s /= static_cast<double>(d_real_logits.numel());
  AdaState next = state;
  next.rt_estimate = (1.0 - kRtEmaAlpha) * state.rt_estimate + kRtEmaAlpha * s;
  double dir = next.rt_estimate > state.target_rt ? 1.0 : (next.rt_estimate < state.target_rt ? -1.0 : 0.0);
  next.p = std::clamp(state.p + dir * state.adjustment_speed, 0.0, 1.0);
  return next;
}

}  // namespace simit::augment
