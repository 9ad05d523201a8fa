#include <cmath>

#include "augment/augment.h"
#include "core/errors.h"
#include "doctest.h"
#include "gradcheck.h"

using namespace simit;
using namespace simit::ad;
using namespace simit::augment;

TEST_CASE("apply_ada with p=0 is the bit-exact identity") {
  Rng xr(50), ar(51);
  Tensor x = testutil::random_uniform(xr, {3, 2, 8, 8}, 0.0, 1.0);
  Var out = apply_ada(constant(x), 0.0, ar);
  for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(out.value()[i] == x[i]);
}

TEST_CASE("forced flips are involutions") {
  // 4x6 input: rotation needs a square, translation range is 0, colors off.
  // With p=1 that leaves exactly one horizontal flip per pass.
  Rng xr(52);
  Tensor x = testutil::random_uniform(xr, {2, 3, 4, 6}, 0.0, 1.0);
  Rng a1(53), a2(53);
  Var once = apply_ada(constant(x), 1.0, a1, true);
  Var twice = apply_ada(once, 1.0, a2, true);
  bool changed = false;
  for (std::int64_t i = 0; i < x.numel(); ++i) changed = changed || once.value()[i] != x[i];
  CHECK(changed);
  for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(twice.value()[i] == x[i]);
}

TEST_CASE("each augmentation fires at the configured rate") {
  // flip rate: 4x6 probe where only the flip has a visible effect
  Rng ar(54);
  int flips = 0;
  const int trials = 10000;
  Tensor probe = Tensor::zeros({1, 1, 4, 6});
  probe.at({0, 0, 0, 0}) = 1.0;
  Var pv = constant(probe);
  for (int t = 0; t < trials; ++t) {
    Var out = apply_ada(pv, 0.5, ar, true);
    if (out.value().at({0, 0, 0, 5}) == 1.0) ++flips;
  }
  CHECK(std::abs(flips / double(trials) - 0.5) < 0.02);

  // brightness rate: on a 1x1 image every other op is a no-op
  Rng br(55);
  int bright = 0;
  Var single = constant(Tensor::full({1, 1, 1, 1}, 0.5));
  for (int t = 0; t < trials; ++t) {
    Var out = apply_ada(single, 0.5, br, false);
    if (out.value()[0] != 0.5) ++bright;
  }
  CHECK(std::abs(bright / double(trials) - 0.5) < 0.02);

  // translation rate: flip-symmetric 16x24 probe, non-square so no rotation
  Rng tr(56);
  int shifted = 0;
  Tensor sym = Tensor::zeros({1, 1, 16, 24});
  sym.at({0, 0, 4, 11}) = 1.0;
  sym.at({0, 0, 4, 12}) = 1.0;
  Var sv = constant(sym);
  for (int t = 0; t < trials; ++t) {
    Var out = apply_ada(sv, 0.5, tr, true);
    if (out.value().at({0, 0, 4, 11}) != 1.0 || out.value().at({0, 0, 4, 12}) != 1.0) ++shifted;
  }
  // the (0,0) draw is invisible: expected rate 0.5 * (1 - 1/(5*7))
  CHECK(std::abs(shifted / double(trials) - 0.5 * (1.0 - 1.0 / 35.0)) < 0.02);
}

TEST_CASE("augmentations keep range, shape and the graph connection") {
  Rng xr(57), ar(58);
  Tensor x = testutil::random_uniform(xr, {4, 3, 16, 16}, 0.0, 1.0);
  Var leaf = param(x.clone());
  Var out = apply_ada(leaf, 1.0, ar, false);
  CHECK(out.shape() == x.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) {
    CHECK(out.value()[i] >= 0.0);
    CHECK(out.value()[i] <= 1.0);
  }
  CHECK(out.requires_grad());
  auto g = grad(mean_all(out), {leaf});
  bool any = false;
  for (std::int64_t i = 0; i < g[0].numel(); ++i) any = any || g[0].value()[i] != 0.0;
  CHECK(any);

  CHECK_THROWS_AS(apply_ada(leaf, 1.5, ar, false), ConfigError);
  CHECK_THROWS_AS(apply_ada(constant(Tensor::zeros({2, 2})), 0.5, ar, false), ModelError);
}

TEST_CASE("per-sample transforms are independent") {
  Tensor x = Tensor::zeros({64, 1, 4, 6});
  for (int i = 0; i < 64; ++i) x.at({i, 0, 0, 0}) = 1.0;
  Rng ar(59);
  Var out = apply_ada(constant(x), 0.5, ar, true);
  int flipped = 0, kept = 0;
  for (int i = 0; i < 64; ++i) {
    if (out.value().at({i, 0, 0, 5}) == 1.0) ++flipped;
    if (out.value().at({i, 0, 0, 0}) == 1.0) ++kept;
  }
  CHECK(flipped > 10);
  CHECK(kept > 10);
  CHECK(flipped + kept == 64);
}

TEST_CASE("update_ada tracks the sign rate and nudges p") {
  AdaState s;
  s.p = 0.5;
  s.rt_estimate = 0.6;
  Tensor balanced = Tensor::from_data({10}, {1, 1, 1, 1, 1, 1, 1, 1, -1, -1});
  AdaState eq = update_ada(s, balanced);
  CHECK(eq.rt_estimate == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(eq.p == 0.5);

  AdaState up;
  up.p = 0.0;
  Tensor pos = Tensor::full({8}, 2.5);
  double prev = -1.0;
  for (int i = 0; i < 400; ++i) {
    AdaState next = update_ada(up, pos);
    CHECK(next.p >= up.p);
    CHECK(next.p <= 1.0);
    prev = up.p;
    up = next;
  }
  CHECK(up.p == 1.0);
  CHECK(prev <= up.p);

  AdaState down;
  down.p = 0.8;
  down.rt_estimate = 0.9;
  Tensor mixed = Tensor::from_data({2}, {3.0, -3.0});
  for (int i = 0; i < 500; ++i) down = update_ada(down, mixed);
  CHECK(std::abs(down.rt_estimate) < 1e-6);
  CHECK(down.p == 0.0);

  Tensor bad = Tensor::from_data({1}, {std::nan("")});
  CHECK_THROWS_AS(update_ada(s, bad), NumericError);
}
