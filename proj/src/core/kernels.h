#pragma once

#include <cstdint>
#include <vector>

namespace simit::kernels {

/// Every kernel has a serial reference implementation and an OpenMP one.
/// Both use the same per-element accumulation order, so results are
/// bitwise identical; tests assert that and the bench target compares
/// their runtime.
enum class ExecMode { serial, parallel };

void set_exec_mode(ExecMode mode);
ExecMode exec_mode();

struct Conv2dDims {
  int n, ci, h, w;   // input  [n, ci, h, w]
  int co, k;         // weight [co, ci, k, k]
  int stride, pad;
  int ho, wo;        // output [n, co, ho, wo]
};

Conv2dDims conv2d_dims(int n, int ci, int h, int w, int co, int k, int stride, int pad);

// y[n,co,oh,ow] = bias[co] + sum_{ci,kh,kw} x[n,ci,oh*s-p+kh,ow*s-p+kw] * w[co,ci,kh,kw]
void conv2d_forward(const double* x, const double* w, const double* bias, double* y,
                    const Conv2dDims& d);
// gx = adjoint of conv2d_forward w.r.t. x
void conv2d_grad_input(const double* gy, const double* w, double* gx, const Conv2dDims& d);
// gw = adjoint of conv2d_forward w.r.t. w
void conv2d_grad_weight(const double* x, const double* gy, double* gw, const Conv2dDims& d);

// c[m,n] = sum_k a[m,k] * b[k,n]
void matmul(const double* a, const double* b, double* c, int m, int k, int n);
void transpose2d(const double* a, double* b, int m, int n);

// y[n,c,2h+dy,2w+dx] = x[n,c,h,w]
void upsample_nearest2x(const double* x, double* y, int n, int c, int h, int w);
// y[n,c,h,w] = sum of the 2x2 block of x (adjoint of upsample_nearest2x)
void downsample_sum2x(const double* x, double* y, int n, int c, int h, int w);

// out[n,s,c] = x[n,c,locs[s]] with locs linear spatial indices in [0, h*w)
void gather_locations(const double* x, double* out, int n, int c, int h, int w,
                      const int* locs, int s);
// gx[n,c,locs[s]] += g[n,s,c] (adjoint of gather_locations)
void scatter_locations_add(const double* g, double* gx, int n, int c, int h, int w,
                           const int* locs, int s);

enum class BinaryOp { add, sub, mul };

/// Same-rank broadcasting: per dim, sizes must match or be 1.
void broadcast_binary(BinaryOp op, const double* a, const std::vector<int>& ashape,
                      const double* b, const std::vector<int>& bshape, double* out,
                      const std::vector<int>& oshape);
std::vector<int> broadcast_shape(const std::vector<int>& a, const std::vector<int>& b);

/// Sums g (shape gshape) down to oshape (same rank, dims equal or 1).
void reduce_sum_to(const double* g, const std::vector<int>& gshape, double* out,
                   const std::vector<int>& oshape);

/// Blocked deterministic sum: identical result in both exec modes.
double sum_all(const double* x, std::int64_t n);

bool parallel_enabled();

/// Elementwise map y[i] = f(x[i]); f must be pure.
template <class F>
void map_unary(const double* x, double* y, std::int64_t n, F f) {
  if (parallel_enabled()) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) y[i] = f(x[i]);
  } else {
    for (std::int64_t i = 0; i < n; ++i) y[i] = f(x[i]);
  }
}

/// Elementwise combine z[i] = f(x[i], y[i]) for same-shape operands.
template <class F>
void map_binary(const double* x, const double* y, double* z, std::int64_t n, F f) {
  if (parallel_enabled()) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) z[i] = f(x[i], y[i]);
  } else {
    for (std::int64_t i = 0; i < n; ++i) z[i] = f(x[i], y[i]);
  }
}

}  // namespace simit::kernels
