#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "core/tensor.h"

namespace simit::ad {

class Var;
struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One tape entry. `backward` maps this node's adjoint to adjoints of
/// `parents` and builds those as graph nodes too, so gradients can be
/// differentiated again (needed for the R1 penalty). `need[i]` tells the
/// closure whether parent i's grad will actually be consumed; expensive
/// closures skip dead outputs and return an undefined Var in that slot.
struct Node {
  Tensor value;
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  std::function<std::vector<Var>(const Var&, const std::vector<char>& need)> backward;
};

class Var {
 public:
  Var() = default;
  explicit Var(NodePtr n) : node_(std::move(n)) {}

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  const std::vector<int>& shape() const { return node_->value.shape(); }
  std::int64_t numel() const { return node_->value.numel(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const NodePtr& node() const { return node_; }

  /// Same value, cut off from the graph.
  Var detach() const;

 private:
  NodePtr node_;
};

/// While alive, newly built nodes record no parents (eval paths).
struct NoGrad {
  NoGrad();
  ~NoGrad();
  NoGrad(const NoGrad&) = delete;
  NoGrad& operator=(const NoGrad&) = delete;
};

Var constant(Tensor t);
Var param(Tensor t);  // leaf with requires_grad
Var scalar_const(double v);

Var add(const Var& a, const Var& b);  // broadcasting, same rank
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var neg(const Var& a);
Var add_scalar(const Var& a, double s);
Var mul_scalar(const Var& a, double s);
Var pow_const(const Var& a, double p);
Var exp_v(const Var& a);
Var log_v(const Var& a);
Var sqrt_v(const Var& a);
Var relu(const Var& a);
Var leaky_relu(const Var& a, double alpha);
Var sigmoid(const Var& a);
Var softplus(const Var& a);
Var clamp(const Var& a, double lo, double hi);
Var stop_grad(const Var& a);

Var reshape(const Var& a, std::vector<int> shape);
Var broadcast_to(const Var& a, const std::vector<int>& shape);  // same rank
Var sum_to(const Var& a, const std::vector<int>& shape);        // same rank
Var sum_all(const Var& a);   // -> [1]
Var mean_all(const Var& a);  // -> [1]

Var matmul(const Var& a, const Var& b);  // [m,k]x[k,n]
Var transpose(const Var& a);
Var bmm(const Var& a, const Var& b);  // [B,m,k]x[B,k,n]
Var transpose_last2(const Var& a);
Var diag_last2(const Var& a);        // [B,s,s] -> [B,s]
Var diag_embed_last(const Var& a);   // [B,s] -> [B,s,s]

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
/// Adjoint ops exposed as first-class primitives; conv2d, conv2d_x_grad and
/// conv2d_w_grad express each other's backwards, which is what makes the
/// penalty-on-gradients differentiable.
Var conv2d_x_grad(const Var& gy, const Var& w, int n, int ci, int h, int win,
                  int stride, int pad);
Var conv2d_w_grad(const Var& x, const Var& gy, int k, int stride, int pad);

Var upsample_nearest2x(const Var& x);
Var downsample_sum2x(const Var& x);

Var gather_locs(const Var& x, std::vector<int> locs);  // [n,c,h,w] -> [n,s,c]
Var scatter_locs_add(const Var& g, std::vector<int> locs, int h, int w);

/// Argmax one-hot over the channel dim, straight-through gradient.
Var hard_onehot_st(const Var& x);

Var flip_h(const Var& x);  // width axis
Var flip_v(const Var& x);  // height axis
Var rot90(const Var& x, int k);
Var translate2d(const Var& x, int dy, int dx);  // zero fill

Var slice_dim0(const Var& x, int start, int len);
Var concat_dim0(const std::vector<Var>& parts);

/// log(sum(exp(x), last dim)) with a detached row max; [B,s,s] -> [B,s].
Var logsumexp_last(const Var& x);
Var l2_normalize_last(const Var& x, double eps = 1e-12);

/// d(output)/d(wrt). Output must be scalar. Unreachable entries get zero
/// grads. Results are graph nodes themselves and can be differentiated
/// again.
std::vector<Var> grad(const Var& output, const std::vector<Var>& wrt);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator-(const Var& a) { return neg(a); }
inline Var operator+(const Var& a, double s) { return add_scalar(a, s); }
inline Var operator-(const Var& a, double s) { return add_scalar(a, -s); }
inline Var operator*(const Var& a, double s) { return mul_scalar(a, s); }
inline Var operator*(double s, const Var& a) { return mul_scalar(a, s); }

}  // namespace simit::ad
