#include "core/autodiff.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <unordered_map>
#include <unordered_set>

#include "core/errors.h"
#include "core/kernels.h"

namespace simit::ad {
namespace {

thread_local int no_grad_depth = 0;

using Backward = std::function<std::vector<Var>(const Var&, const std::vector<char>&)>;

bool grad_on() { return no_grad_depth == 0; }

Var make(Tensor value, std::vector<Var> parents, Backward backward) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  if (grad_on()) {
    bool rg = false;
    for (const auto& p : parents)
      if (p.node()->requires_grad) {
        rg = true;
        break;
      }
    if (rg) {
      n->requires_grad = true;
      n->parents.reserve(parents.size());
      for (const auto& p : parents) n->parents.push_back(p.node());
      n->backward = std::move(backward);
    }
  }
  return Var(std::move(n));
}

Tensor binary_forward(kernels::BinaryOp op, const Tensor& a, const Tensor& b) {
  if (a.same_shape(b)) {
    Tensor out(a.shape());
    switch (op) {
      case kernels::BinaryOp::add:
        kernels::map_binary(a.data(), b.data(), out.data(), out.numel(),
                            [](double x, double y) { return x + y; });
        break;
      case kernels::BinaryOp::sub:
        kernels::map_binary(a.data(), b.data(), out.data(), out.numel(),
                            [](double x, double y) { return x - y; });
        break;
      case kernels::BinaryOp::mul:
        kernels::map_binary(a.data(), b.data(), out.data(), out.numel(),
                            [](double x, double y) { return x * y; });
        break;
    }
    return out;
  }
  auto oshape = kernels::broadcast_shape(a.shape(), b.shape());
  Tensor out(oshape);
  kernels::broadcast_binary(op, a.data(), a.shape(), b.data(), b.shape(), out.data(), oshape);
  return out;
}

template <class F>
Var unary_map(const Var& a, F f, Backward backward) {
  Tensor y(a.shape());
  kernels::map_unary(a.value().data(), y.data(), y.numel(), f);
  return make(std::move(y), {a}, std::move(backward));
}

/// Elementwise backward through a constant per-element factor.
Var masked(const Var& gy, Tensor mask) {
  return mul(gy, constant(std::move(mask)));
}

void check_rank4(const Var& x, const char* who) {
  if (x.value().ndim() != 4) throw ModelError(std::string(who) + ": expected NCHW input");
}

}  // namespace

Var Var::detach() const { return constant(node_->value); }

NoGrad::NoGrad() { ++no_grad_depth; }
NoGrad::~NoGrad() { --no_grad_depth; }

Var constant(Tensor t) {
  auto n = std::make_shared<Node>();
  n->value = std::move(t);
  return Var(std::move(n));
}

Var param(Tensor t) {
  auto n = std::make_shared<Node>();
  n->value = std::move(t);
  n->requires_grad = true;
  return Var(std::move(n));
}

Var scalar_const(double v) { return constant(Tensor::scalar(v)); }

Var add(const Var& a, const Var& b) {
  Tensor out = binary_forward(kernels::BinaryOp::add, a.value(), b.value());
  return make(std::move(out), {a, b}, [a, b](const Var& gy, const std::vector<char>& need) {
    std::vector<Var> gs(2);
    if (need[0]) gs[0] = sum_to(gy, a.shape());
    if (need[1]) gs[1] = sum_to(gy, b.shape());
    return gs;
  });
}

Var sub(const Var& a, const Var& b) {
  Tensor out = binary_forward(kernels::BinaryOp::sub, a.value(), b.value());
  return make(std::move(out), {a, b}, [a, b](const Var& gy, const std::vector<char>& need) {
    std::vector<Var> gs(2);
    if (need[0]) gs[0] = sum_to(gy, a.shape());
    if (need[1]) gs[1] = neg(sum_to(gy, b.shape()));
    return gs;
  });
}

Var mul(const Var& a, const Var& b) {
  Tensor out = binary_forward(kernels::BinaryOp::mul, a.value(), b.value());
  return make(std::move(out), {a, b}, [a, b](const Var& gy, const std::vector<char>& need) {
    std::vector<Var> gs(2);
    if (need[0]) gs[0] = sum_to(mul(gy, b), a.shape());
    if (need[1]) gs[1] = sum_to(mul(gy, a), b.shape());
    return gs;
  });
}

Var neg(const Var& a) {
  return unary_map(
      a, [](double v) { return -v; },
      [](const Var& gy, const std::vector<char>&) { return std::vector<Var>{neg(gy)}; });
}

Var add_scalar(const Var& a, double s) {
  return unary_map(
      a, [s](double v) { return v + s; },
      [](const Var& gy, const std::vector<char>&) { return std::vector<Var>{gy}; });
}

Var mul_scalar(const Var& a, double s) {
  return unary_map(
      a, [s](double v) { return v * s; },
      [s](const Var& gy, const std::vector<char>&) {
        return std::vector<Var>{mul_scalar(gy, s)};
      });
}

Var pow_const(const Var& a, double p) {
  return unary_map(
      a, [p](double v) { return std::pow(v, p); },
      [a, p](const Var& gy, const std::vector<char>&) {
        return std::vector<Var>{mul_scalar(mul(gy, pow_const(a, p - 1.0)), p)};
      });
}

Var exp_v(const Var& a) {
  Tensor y(a.shape());
  kernels::map_unary(a.value().data(), y.data(), y.numel(),
                     [](double v) { return std::exp(v); });
  auto n = std::make_shared<Node>();
  n->value = std::move(y);
  if (grad_on() && a.requires_grad()) {
    n->requires_grad = true;
    n->parents = {a.node()};
    std::weak_ptr<Node> self = n;
    n->backward = [self](const Var& gy, const std::vector<char>&) {
      return std::vector<Var>{mul(gy, Var(self.lock()))};
    };
  }
  return Var(std::move(n));
}

Var log_v(const Var& a) {
  return unary_map(
      a, [](double v) { return std::log(v); },
      [a](const Var& gy, const std::vector<char>&) {
        return std::vector<Var>{mul(gy, pow_const(a, -1.0))};
      });
}

Var sqrt_v(const Var& a) {
  return unary_map(
      a, [](double v) { return std::sqrt(v); },
      [a](const Var& gy, const std::vector<char>&) {
        return std::vector<Var>{mul_scalar(mul(gy, pow_const(a, -0.5)), 0.5)};
      });
}

Var relu(const Var& a) {
  Tensor mask(a.shape());
  kernels::map_unary(a.value().data(), mask.data(), mask.numel(),
                     [](double v) { return v > 0.0 ? 1.0 : 0.0; });
  return unary_map(
      a, [](double v) { return v > 0.0 ? v : 0.0; },
      [m = std::move(mask)](const Var& gy, const std::vector<char>&) {
        return std::vector<Var>{masked(gy, m)};
      });
}

Var leaky_relu(const Var& a, double alpha) {
  Tensor mask(a.shape());
  kernels::map_unary(a.value().data(), mask.data(), mask.numel(),
                     [alpha](double v) { return v > 0.0 ? 1.0 : alpha; });
  return unary_map(
      a, [alpha](double v) { return v > 0.0 ? v : alpha * v; },
      [m = std::move(mask)](const Var& gy, const std::vector<char>&) {
        return std::vector<Var>{masked(gy, m)};
      });
}

Var sigmoid(const Var& a) {
  Tensor y(a.shape());
  kernels::map_unary(a.value().data(), y.data(), y.numel(), [](double v) {
    return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  });
  auto n = std::make_shared<Node>();
  n->value = std::move(y);
  if (grad_on() && a.requires_grad()) {
    n->requires_grad = true;
    n->parents = {a.node()};
    std::weak_ptr<Node> self = n;
    n->backward = [self](const Var& gy, const std::vector<char>&) {
      Var s(self.lock());
      return std::vector<Var>{mul(gy, mul(s, add_scalar(neg(s), 1.0)))};
    };
  }
  return Var(std::move(n));
}

Var softplus(const Var& a) {
  return unary_map(
      a,
      [](double v) { return (v > 0.0 ? v : 0.0) + std::log1p(std::exp(-std::abs(v))); },
      [a](const Var& gy, const std::vector<char>&) {
        return std::vector<Var>{mul(gy, sigmoid(a))};
      });
}

Var clamp(const Var& a, double lo, double hi) {
  Tensor mask(a.shape());
  kernels::map_unary(a.value().data(), mask.data(), mask.numel(),
                     [lo, hi](double v) { return (v > lo && v < hi) ? 1.0 : 0.0; });
  return unary_map(
      a, [lo, hi](double v) { return std::min(hi, std::max(lo, v)); },
      [m = std::move(mask)](const Var& gy, const std::vector<char>&) {
        return std::vector<Var>{masked(gy, m)};
      });
}

Var stop_grad(const Var& a) { return constant(a.value()); }

Var reshape(const Var& a, std::vector<int> shape) {
  Tensor y = a.value().reshaped(std::move(shape));
  auto ashape = a.shape();
  return make(std::move(y), {a}, [ashape](const Var& gy, const std::vector<char>&) {
    return std::vector<Var>{reshape(gy, ashape)};
  });
}

Var broadcast_to(const Var& a, const std::vector<int>& shape) {
  const auto& ashape = a.shape();
  if (ashape == shape) return a;
  if (ashape.size() != shape.size())
    throw ModelError("broadcast_to: rank mismatch " + Tensor::shape_str(ashape) + " -> " +
                     Tensor::shape_str(shape));
  int r = static_cast<int>(shape.size());
  std::vector<std::int64_t> stride(static_cast<size_t>(r));
  std::int64_t s = 1;
  for (int d = r - 1; d >= 0; --d) {
    if (ashape[d] != shape[d] && ashape[d] != 1)
      throw ModelError("broadcast_to: incompatible shapes");
    stride[d] = (ashape[d] == 1) ? 0 : s;
    s *= ashape[d];
  }
  Tensor out(shape);
  const double* src = a.value().data();
  double* dst = out.data();
  std::vector<int> idx(static_cast<size_t>(r), 0);
  std::int64_t total = out.numel();
  std::int64_t soff = 0;
  for (std::int64_t i = 0; i < total; ++i) {
    dst[i] = src[soff];
    for (int d = r - 1; d >= 0; --d) {
      soff += stride[d];
      if (++idx[d] < shape[d]) break;
      soff -= static_cast<std::int64_t>(shape[d]) * stride[d];
      idx[d] = 0;
    }
  }
  auto ash = ashape;
  return make(std::move(out), {a}, [ash](const Var& gy, const std::vector<char>&) {
    return std::vector<Var>{sum_to(gy, ash)};
  });
}

Var sum_to(const Var& a, const std::vector<int>& shape) {
  const auto& ashape = a.shape();
  if (ashape == shape) return a;
  if (ashape.size() != shape.size())
    throw ModelError("sum_to: rank mismatch " + Tensor::shape_str(ashape) + " -> " +
                     Tensor::shape_str(shape));
  Tensor out(shape);
  kernels::reduce_sum_to(a.value().data(), ashape, out.data(), shape);
  auto ash = ashape;
  return make(std::move(out), {a}, [ash](const Var& gy, const std::vector<char>&) {
    return std::vector<Var>{broadcast_to(gy, ash)};
  });
}

Var sum_all(const Var& a) {
  Tensor out = Tensor::scalar(kernels::sum_all(a.value().data(), a.numel()));
  auto ashape = a.shape();
  return make(std::move(out), {a}, [ashape](const Var& gy, const std::vector<char>&) {
    std::vector<int> ones(ashape.size(), 1);
    return std::vector<Var>{broadcast_to(reshape(gy, ones), ashape)};
  });
}

Var mean_all(const Var& a) {
  return mul_scalar(sum_all(a), 1.0 / static_cast<double>(a.numel()));
}

Var matmul(const Var& a, const Var& b) {
  if (a.value().ndim() != 2 || b.value().ndim() != 2 || a.shape()[1] != b.shape()[0])
    throw ModelError("matmul: bad shapes " + Tensor::shape_str(a.shape()) + " x " +
                     Tensor::shape_str(b.shape()));
  int m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  Tensor out({m, n});
  kernels::matmul(a.value().data(), b.value().data(), out.data(), m, k, n);
  return make(std::move(out), {a, b}, [a, b](const Var& gy, const std::vector<char>& need) {
    std::vector<Var> gs(2);
    if (need[0]) gs[0] = matmul(gy, transpose(b));
    if (need[1]) gs[1] = matmul(transpose(a), gy);
    return gs;
  });
}

Var transpose(const Var& a) {
  if (a.value().ndim() != 2) throw ModelError("transpose: expected rank 2");
  int m = a.shape()[0], n = a.shape()[1];
  Tensor out({n, m});
  kernels::transpose2d(a.value().data(), out.data(), m, n);
  return make(std::move(out), {a}, [](const Var& gy, const std::vector<char>&) {
    return std::vector<Var>{transpose(gy)};
  });
}

Var bmm(const Var& a, const Var& b) {
  if (a.value().ndim() != 3 || b.value().ndim() != 3 || a.shape()[0] != b.shape()[0] ||
      a.shape()[2] != b.shape()[1])
    throw ModelError("bmm: bad shapes " + Tensor::shape_str(a.shape()) + " x " +
                     Tensor::shape_str(b.shape()));
  int bs = a.shape()[0], m = a.shape()[1], k = a.shape()[2], n = b.shape()[2];
  Tensor out({bs, m, n});
  for (int i = 0; i < bs; ++i)
    kernels::matmul(a.value().data() + static_cast<std::int64_t>(i) * m * k,
                    b.value().data() + static_cast<std::int64_t>(i) * k * n,
                    out.data() + static_cast<std::int64_t>(i) * m * n, m, k, n);
  return make(std::move(out), {a, b}, [a, b](const Var& gy, const std::vector<char>& need) {
    std::vector<Var> gs(2);
    if (need[0]) gs[0] = bmm(gy, transpose_last2(b));
    if (need[1]) gs[1] = bmm(transpose_last2(a), gy);
    return gs;
  });
}

Var transpose_last2(const Var& a) {
  if (a.value().ndim() != 3) throw ModelError("transpose_last2: expected rank 3");
  int bs = a.shape()[0], m = a.shape()[1], n = a.shape()[2];
  Tensor out({bs, n, m});
  for (int i = 0; i < bs; ++i)
    kernels::transpose2d(a.value().data() + static_cast<std::int64_t>(i) * m * n,
                         out.data() + static_cast<std::int64_t>(i) * m * n, m, n);
  return make(std::move(out), {a}, [](const Var& gy, const std::vector<char>&) {
    return std::vector<Var>{transpose_last2(gy)};
  });
}

Var diag_last2(const Var& a) {
  if (a.value().ndim() != 3 || a.shape()[1] != a.shape()[2])
    throw ModelError("diag_last2: expected [B,s,s]");
  int bs = a.shape()[0], s = a.shape()[1];
  Tensor out({bs, s});
  for (int i = 0; i < bs; ++i)
    for (int j = 0; j < s; ++j)
      out[static_cast<std::int64_t>(i) * s + j] =
          a.value()[(static_cast<std::int64_t>(i) * s + j) * s + j];
  return make(std::move(out), {a}, [](const Var& gy, const std::vector<char>&) {
    return std::vector<Var>{diag_embed_last(gy)};
  });
}

Var diag_embed_last(const Var& a) {
  if (a.value().ndim() != 2) throw ModelError("diag_embed_last: expected [B,s]");
  int bs = a.shape()[0], s = a.shape()[1];
  Tensor out({bs, s, s});
  for (int i = 0; i < bs; ++i)
    for (int j = 0; j < s; ++j)
      out[(static_cast<std::int64_t>(i) * s + j) * s + j] =
          a.value()[static_cast<std::int64_t>(i) * s + j];
  return make(std::move(out), {a}, [](const Var& gy, const std::vector<char>&) {
    return std::vector<Var>{diag_last2(gy)};
  });
}

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  check_rank4(x, "conv2d");
  if (w.value().ndim() != 4 || w.shape()[2] != w.shape()[3] || w.shape()[1] != x.shape()[1])
    throw ModelError("conv2d: bad weight " + Tensor::shape_str(w.shape()) + " for input " +
                     Tensor::shape_str(x.shape()));
  auto d = kernels::conv2d_dims(x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3],
                                w.shape()[0], w.shape()[2], stride, pad);
  if (b.defined() && (b.value().ndim() != 1 || b.shape()[0] != d.co))
    throw ModelError("conv2d: bad bias shape");
  Tensor out({d.n, d.co, d.ho, d.wo});
  kernels::conv2d_forward(x.value().data(), w.value().data(),
                          b.defined() ? b.value().data() : nullptr, out.data(), d);
  auto bwd = [x, w, d](const Var& gy, const std::vector<char>& need) {
    std::vector<Var> gs(need.size());
    if (need[0]) gs[0] = conv2d_x_grad(gy, w, d.n, d.ci, d.h, d.w, d.stride, d.pad);
    if (need[1]) gs[1] = conv2d_w_grad(x, gy, d.k, d.stride, d.pad);
    if (need.size() > 2 && need[2])
      gs[2] = reshape(sum_to(gy, {1, d.co, 1, 1}), {d.co});
    return gs;
  };
  if (b.defined()) return make(std::move(out), {x, w, b}, bwd);
  return make(std::move(out), {x, w}, bwd);
}

Var conv2d_x_grad(const Var& gy, const Var& w, int n, int ci, int h, int win, int stride,
                  int pad) {
  auto d = kernels::conv2d_dims(n, ci, h, win, w.shape()[0], w.shape()[2], stride, pad);
  if (gy.shape() != std::vector<int>{d.n, d.co, d.ho, d.wo})
    throw ModelError("conv2d_x_grad: bad gy shape " + Tensor::shape_str(gy.shape()));
  Tensor out({d.n, d.ci, d.h, d.w});
  kernels::conv2d_grad_input(gy.value().data(), w.value().data(), out.data(), d);
  return make(std::move(out), {gy, w},
              [gy, w, d](const Var& u, const std::vector<char>& need) {
                std::vector<Var> gs(2);
                if (need[0]) gs[0] = conv2d(u, w, Var(), d.stride, d.pad);
                if (need[1]) gs[1] = conv2d_w_grad(u, gy, d.k, d.stride, d.pad);
                return gs;
              });
}

Var conv2d_w_grad(const Var& x, const Var& gy, int k, int stride, int pad) {
  auto d = kernels::conv2d_dims(x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3],
                                gy.shape()[1], k, stride, pad);
  if (gy.shape() != std::vector<int>{d.n, d.co, d.ho, d.wo})
    throw ModelError("conv2d_w_grad: bad gy shape " + Tensor::shape_str(gy.shape()));
  Tensor out({d.co, d.ci, d.k, d.k});
  kernels::conv2d_grad_weight(x.value().data(), gy.value().data(), out.data(), d);
  return make(std::move(out), {x, gy},
              [x, gy, d](const Var& g, const std::vector<char>& need) {
                std::vector<Var> gs(2);
                if (need[0])
                  gs[0] = conv2d_x_grad(gy, g, d.n, d.ci, d.h, d.w, d.stride, d.pad);
                if (need[1]) gs[1] = conv2d(x, g, Var(), d.stride, d.pad);
                return gs;
              });
}

Var upsample_nearest2x(const Var& x) {
  check_rank4(x, "upsample_nearest2x");
  int n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  Tensor out({n, c, 2 * h, 2 * w});
  kernels::upsample_nearest2x(x.value().data(), out.data(), n, c, h, w);
  return make(std::move(out), {x}, [](const Var& gy, const std::vector<char>&) {
    return std::vector<Var>{downsample_sum2x(gy)};
  });
}

Var downsample_sum2x(const Var& x) {
  check_rank4(x, "downsample_sum2x");
  int n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  if (h % 2 || w % 2) throw ModelError("downsample_sum2x: odd spatial dims");
  Tensor out({n, c, h / 2, w / 2});
  kernels::downsample_sum2x(x.value().data(), out.data(), n, c, h / 2, w / 2);
  return make(std::move(out), {x}, [](const Var& gy, const std::vector<char>&) {
    return std::vector<Var>{upsample_nearest2x(gy)};
  });
}

Var gather_locs(const Var& x, std::vector<int> locs) {
  check_rank4(x, "gather_locs");
  int n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  int s = static_cast<int>(locs.size());
  for (int l : locs)
    if (l < 0 || l >= h * w) throw ModelError("gather_locs: location out of range");
  Tensor out({n, s, c});
  kernels::gather_locations(x.value().data(), out.data(), n, c, h, w, locs.data(), s);
  return make(std::move(out), {x},
              [locs = std::move(locs), h, w](const Var& gy, const std::vector<char>&) {
                return std::vector<Var>{scatter_locs_add(gy, locs, h, w)};
              });
}

Var scatter_locs_add(const Var& g, std::vector<int> locs, int h, int w) {
  if (g.value().ndim() != 3 || g.shape()[1] != static_cast<int>(locs.size()))
    throw ModelError("scatter_locs_add: expected [n,s,c]");
  int n = g.shape()[0], s = g.shape()[1], c = g.shape()[2];
  Tensor out({n, c, h, w});
  kernels::scatter_locations_add(g.value().data(), out.data(), n, c, h, w, locs.data(), s);
  return make(std::move(out), {g},
              [locs = std::move(locs)](const Var& gy, const std::vector<char>&) {
                return std::vector<Var>{gather_locs(gy, locs)};
              });
}

Var hard_onehot_st(const Var& x) {
  check_rank4(x, "hard_onehot_st");
  int n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  Tensor out(x.shape());
  const double* xd = x.value().data();
  std::int64_t plane = static_cast<std::int64_t>(h) * w;
  for (int b = 0; b < n; ++b) {
    const double* xb = xd + static_cast<std::int64_t>(b) * c * plane;
    double* ob = out.data() + static_cast<std::int64_t>(b) * c * plane;
    for (std::int64_t p = 0; p < plane; ++p) {
      int best = 0;
      double bv = xb[p];
      for (int ch = 1; ch < c; ++ch) {
        double v = xb[static_cast<std::int64_t>(ch) * plane + p];
        if (v > bv) {
          bv = v;
          best = ch;
        }
      }
      ob[static_cast<std::int64_t>(best) * plane + p] = 1.0;
    }
  }
  return make(std::move(out), {x}, [](const Var& gy, const std::vector<char>&) {
    return std::vector<Var>{gy};
  });
}

namespace {

template <class F>
Tensor spatial_remap(const Tensor& x, int oh, int ow, F src_of) {
  int n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  Tensor out({n, c, oh, ow});
  std::int64_t planes = static_cast<std::int64_t>(n) * c;
  for (std::int64_t p = 0; p < planes; ++p) {
    const double* xs = x.data() + p * h * w;
    double* od = out.data() + p * static_cast<std::int64_t>(oh) * ow;
    for (int i = 0; i < oh; ++i)
      for (int j = 0; j < ow; ++j) {
        auto [si, sj] = src_of(i, j);
        od[static_cast<std::int64_t>(i) * ow + j] =
            (si >= 0 && si < h && sj >= 0 && sj < w) ? xs[static_cast<std::int64_t>(si) * w + sj]
                                                     : 0.0;
      }
  }
  return out;
}

}  // namespace

Var flip_h(const Var& x) {
  check_rank4(x, "flip_h");
  int w = x.shape()[3];
  Tensor out = spatial_remap(x.value(), x.shape()[2], w, [w](int i, int j) {
    return std::pair<int, int>(i, w - 1 - j);
  });
  return make(std::move(out), {x}, [](const Var& gy, const std::vector<char>&) {
    return std::vector<Var>{flip_h(gy)};
  });
}

Var flip_v(const Var& x) {
  check_rank4(x, "flip_v");
  int h = x.shape()[2];
  Tensor out = spatial_remap(x.value(), h, x.shape()[3], [h](int i, int j) {
    return std::pair<int, int>(h - 1 - i, j);
  });
  return make(std::move(out), {x}, [](const Var& gy, const std::vector<char>&) {
    return std::vector<Var>{flip_v(gy)};
  });
}

Var rot90(const Var& x, int k) {
  check_rank4(x, "rot90");
  k = ((k % 4) + 4) % 4;
  if (k == 0) return x;
  int h = x.shape()[2], w = x.shape()[3];
  Tensor out;
  switch (k) {
    case 1:  // counterclockwise quarter turn
      out = spatial_remap(x.value(), w, h, [w](int i, int j) {
        return std::pair<int, int>(j, w - 1 - i);
      });
      break;
    case 2:
      out = spatial_remap(x.value(), h, w, [h, w](int i, int j) {
        return std::pair<int, int>(h - 1 - i, w - 1 - j);
      });
      break;
    default:  // k == 3
      out = spatial_remap(x.value(), w, h, [h](int i, int j) {
        return std::pair<int, int>(h - 1 - j, i);
      });
      break;
  }
  return make(std::move(out), {x}, [k](const Var& gy, const std::vector<char>&) {
    return std::vector<Var>{rot90(gy, 4 - k)};
  });
}

Var translate2d(const Var& x, int dy, int dx) {
  check_rank4(x, "translate2d");
  if (dy == 0 && dx == 0) return x;
  Tensor out = spatial_remap(x.value(), x.shape()[2], x.shape()[3], [dy, dx](int i, int j) {
    return std::pair<int, int>(i - dy, j - dx);
  });
  return make(std::move(out), {x}, [dy, dx](const Var& gy, const std::vector<char>&) {
    return std::vector<Var>{translate2d(gy, -dy, -dx)};
  });
}

Var slice_dim0(const Var& x, int start, int len) {
  const auto& shape = x.shape();
  if (shape.empty()) throw ModelError("slice_dim0: scalar input");
  if (start < 0 || len < 1 || start + len > shape[0])
    throw ModelError("slice_dim0: range [" + std::to_string(start) + "," +
                     std::to_string(start + len) + ") out of dim " + std::to_string(shape[0]));
  std::int64_t row = x.numel() / shape[0];
  auto out_shape = shape;
  out_shape[0] = len;
  Tensor out(out_shape);
  std::copy_n(x.value().data() + start * row, len * row, out.data());
  int dim0 = shape[0];
  return make(std::move(out), {x}, [start, len, dim0](const Var& gy, const std::vector<char>&) {
    auto full = gy.shape();
    full[0] = dim0;
    std::vector<Var> parts;
    if (start > 0) {
      auto s = full;
      s[0] = start;
      parts.push_back(constant(Tensor::zeros(s)));
    }
    parts.push_back(gy);
    if (start + len < dim0) {
      auto s = full;
      s[0] = dim0 - start - len;
      parts.push_back(constant(Tensor::zeros(s)));
    }
    return std::vector<Var>{concat_dim0(parts)};
  });
}

Var concat_dim0(const std::vector<Var>& parts) {
  if (parts.empty()) throw ModelError("concat_dim0: no parts");
  auto shape = parts[0].shape();
  if (shape.empty()) throw ModelError("concat_dim0: scalar parts");
  int total = 0;
  for (const auto& p : parts) {
    auto s = p.shape();
    if (s.size() != shape.size()) throw ModelError("concat_dim0: rank mismatch");
    for (size_t d = 1; d < s.size(); ++d)
      if (s[d] != shape[d]) throw ModelError("concat_dim0: trailing dim mismatch");
    total += s[0];
  }
  auto out_shape = shape;
  out_shape[0] = total;
  Tensor out(out_shape);
  double* dst = out.data();
  std::vector<int> sizes;
  for (const auto& p : parts) {
    std::copy_n(p.value().data(), p.numel(), dst);
    dst += p.numel();
    sizes.push_back(p.shape()[0]);
  }
  return make(std::move(out), parts, [sizes](const Var& gy, const std::vector<char>& need) {
    std::vector<Var> gs(sizes.size());
    int off = 0;
    for (size_t i = 0; i < sizes.size(); ++i) {
      if (need[i]) gs[i] = slice_dim0(gy, off, sizes[i]);
      off += sizes[i];
    }
    return gs;
  });
}

Var logsumexp_last(const Var& x) {
  if (x.value().ndim() != 3) throw ModelError("logsumexp_last: expected [B,s,m]");
  int bs = x.shape()[0], s = x.shape()[1], m = x.shape()[2];
  Tensor rowmax({bs, s, 1});
  const double* xd = x.value().data();
  for (std::int64_t r = 0; r < static_cast<std::int64_t>(bs) * s; ++r) {
    const double* row = xd + r * m;
    double mx = row[0];
    for (int j = 1; j < m; ++j) mx = std::max(mx, row[j]);
    rowmax[r] = mx;
  }
  Var mv = constant(std::move(rowmax));
  Var z = sum_to(exp_v(sub(x, mv)), {bs, s, 1});
  return reshape(add(log_v(z), mv), {bs, s});
}

Var l2_normalize_last(const Var& x, double eps) {
  auto shape = x.shape();
  shape.back() = 1;
  Var n2 = sum_to(mul(x, x), shape);
  return mul(x, pow_const(add_scalar(n2, eps), -0.5));
}

std::vector<Var> grad(const Var& output, const std::vector<Var>& wrt) {
  if (!output.defined()) throw ModelError("grad: undefined output");
  if (output.numel() != 1) throw ModelError("grad: output must be scalar");

  std::vector<Node*> order;
  std::unordered_map<Node*, int> state;  // 0 new, 1 open, 2 done
  std::vector<Node*> stack{output.node().get()};
  while (!stack.empty()) {
    Node* n = stack.back();
    int& st = state[n];
    if (st == 0) {
      st = 1;
      for (const auto& p : n->parents)
        if (state[p.get()] == 0) stack.push_back(p.get());
    } else {
      stack.pop_back();
      if (st == 1) {
        st = 2;
        order.push_back(n);
      }
    }
  }

  std::unordered_set<Node*> wanted;
  for (const auto& w : wrt)
    if (w.defined()) wanted.insert(w.node().get());
  std::unordered_map<Node*, char> reaches;
  for (Node* n : order) {
    char r = wanted.count(n) ? 1 : 0;
    if (!r)
      for (const auto& p : n->parents)
        if (reaches[p.get()]) {
          r = 1;
          break;
        }
    reaches[n] = r;
  }

  std::unordered_map<Node*, Var> adj;
  adj.emplace(output.node().get(), constant(Tensor::full(output.shape(), 1.0)));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->backward || !reaches[n]) continue;
    auto ait = adj.find(n);
    if (ait == adj.end()) continue;
    std::vector<char> need(n->parents.size(), 0);
    bool any = false;
    for (size_t i = 0; i < n->parents.size(); ++i) {
      need[i] = reaches[n->parents[i].get()];
      any = any || need[i];
    }
    if (!any) continue;
    auto gs = n->backward(ait->second, need);
    if (gs.size() != n->parents.size()) throw ModelError("grad: backward arity mismatch");
    for (size_t i = 0; i < gs.size(); ++i) {
      if (!need[i] || !gs[i].defined()) continue;
      Node* p = n->parents[i].get();
      if (gs[i].shape() != p->value.shape())
        throw ModelError("grad: backward shape mismatch " +
                         Tensor::shape_str(gs[i].shape()) + " vs " +
                         Tensor::shape_str(p->value.shape()));
      auto slot = adj.find(p);
      if (slot == adj.end())
        adj.emplace(p, gs[i]);
      else
        slot->second = add(slot->second, gs[i]);
    }
  }

  std::vector<Var> out;
  out.reserve(wrt.size());
  for (const auto& w : wrt) {
    auto it = w.defined() ? adj.find(w.node().get()) : adj.end();
    out.push_back(it != adj.end() ? it->second : constant(Tensor::zeros(w.shape())));
  }
  return out;
}

}  // namespace simit::ad
