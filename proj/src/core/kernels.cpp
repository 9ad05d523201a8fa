#include "core/kernels.h"

#include <algorithm>
#include <atomic>
#include <cstring>
#include <stdexcept>

namespace simit::kernels {

namespace {
std::atomic<ExecMode> g_mode{ExecMode::parallel};

inline int div_ceil(int a, int b) { return a >= 0 ? (a + b - 1) / b : -((-a) / b); }
}  // namespace

void set_exec_mode(ExecMode mode) { g_mode.store(mode); }
ExecMode exec_mode() { return g_mode.load(); }
bool parallel_enabled() { return g_mode.load() == ExecMode::parallel; }

Conv2dDims conv2d_dims(int n, int ci, int h, int w, int co, int k, int stride, int pad) {
  Conv2dDims d{n, ci, h, w, co, k, stride, pad, 0, 0};
  d.ho = (h + 2 * pad - k) / stride + 1;
  d.wo = (w + 2 * pad - k) / stride + 1;
  if (d.ho <= 0 || d.wo <= 0) throw std::invalid_argument("conv2d: empty output");
  return d;
}

namespace {

inline void conv2d_forward_row(const double* x, const double* w, const double* bias, double* y,
                               const Conv2dDims& d, int n, int co, int oh) {
  double* yrow = y + (((std::int64_t)n * d.co + co) * d.ho + oh) * d.wo;
  double b = bias ? bias[co] : 0.0;
  for (int ow = 0; ow < d.wo; ++ow) yrow[ow] = b;
  for (int ci = 0; ci < d.ci; ++ci) {
    for (int kh = 0; kh < d.k; ++kh) {
      int ih = oh * d.stride - d.pad + kh;
      if (ih < 0 || ih >= d.h) continue;
      const double* xrow = x + (((std::int64_t)n * d.ci + ci) * d.h + ih) * d.w;
      const double* wrow = w + (((std::int64_t)co * d.ci + ci) * d.k + kh) * d.k;
      for (int kw = 0; kw < d.k; ++kw) {
        double wv = wrow[kw];
        int base = kw - d.pad;
        int lo = std::max(0, div_ceil(-base, d.stride));
        int hi = std::min(d.wo, (d.w - 1 - base) / d.stride + 1);
        const double* xs = xrow + base;
        for (int ow = lo; ow < hi; ++ow) yrow[ow] += wv * xs[(std::int64_t)ow * d.stride];
      }
    }
  }
}

inline void conv2d_grad_input_row(const double* gy, const double* w, double* gx,
                                  const Conv2dDims& d, int n, int ci, int ih) {
  double* gxrow = gx + (((std::int64_t)n * d.ci + ci) * d.h + ih) * d.w;
  std::memset(gxrow, 0, sizeof(double) * (size_t)d.w);
  for (int co = 0; co < d.co; ++co) {
    for (int kh = 0; kh < d.k; ++kh) {
      int num = ih + d.pad - kh;
      if (num < 0 || num % d.stride != 0) continue;
      int oh = num / d.stride;
      if (oh >= d.ho) continue;
      const double* gyrow = gy + (((std::int64_t)n * d.co + co) * d.ho + oh) * d.wo;
      const double* wrow = w + (((std::int64_t)co * d.ci + ci) * d.k + kh) * d.k;
      for (int kw = 0; kw < d.k; ++kw) {
        double wv = wrow[kw];
        int base = kw - d.pad;
        int lo = std::max(0, div_ceil(-base, d.stride));
        int hi = std::min(d.wo, (d.w - 1 - base) / d.stride + 1);
        double* gxs = gxrow + base;
        for (int ow = lo; ow < hi; ++ow) gxs[(std::int64_t)ow * d.stride] += wv * gyrow[ow];
      }
    }
  }
}

inline void conv2d_grad_weight_slice(const double* x, const double* gy, double* gw,
                                     const Conv2dDims& d, int co) {
  for (int ci = 0; ci < d.ci; ++ci) {
    for (int kh = 0; kh < d.k; ++kh) {
      for (int kw = 0; kw < d.k; ++kw) {
        double acc = 0.0;
        int base = kw - d.pad;
        int lo = std::max(0, div_ceil(-base, d.stride));
        int hi = std::min(d.wo, (d.w - 1 - base) / d.stride + 1);
        for (int n = 0; n < d.n; ++n) {
          for (int oh = 0; oh < d.ho; ++oh) {
            int ih = oh * d.stride - d.pad + kh;
            if (ih < 0 || ih >= d.h) continue;
            const double* xrow = x + (((std::int64_t)n * d.ci + ci) * d.h + ih) * d.w + base;
            const double* gyrow = gy + (((std::int64_t)n * d.co + co) * d.ho + oh) * d.wo;
            double s = 0.0;
            for (int ow = lo; ow < hi; ++ow) s += gyrow[ow] * xrow[(std::int64_t)ow * d.stride];
            acc += s;
          }
        }
        gw[(((std::int64_t)co * d.ci + ci) * d.k + kh) * d.k + kw] = acc;
      }
    }
  }
}

}  // namespace

void conv2d_forward(const double* x, const double* w, const double* bias, double* y,
                    const Conv2dDims& d) {
  std::int64_t rows = (std::int64_t)d.n * d.co * d.ho;
  if (parallel_enabled()) {
#pragma omp parallel for schedule(static)
    for (std::int64_t r = 0; r < rows; ++r) {
      int oh = (int)(r % d.ho);
      int co = (int)((r / d.ho) % d.co);
      int n = (int)(r / ((std::int64_t)d.ho * d.co));
      conv2d_forward_row(x, w, bias, y, d, n, co, oh);
    }
  } else {
    for (std::int64_t r = 0; r < rows; ++r) {
      int oh = (int)(r % d.ho);
      int co = (int)((r / d.ho) % d.co);
      int n = (int)(r / ((std::int64_t)d.ho * d.co));
      conv2d_forward_row(x, w, bias, y, d, n, co, oh);
    }
  }
}

void conv2d_grad_input(const double* gy, const double* w, double* gx, const Conv2dDims& d) {
  std::int64_t rows = (std::int64_t)d.n * d.ci * d.h;
  if (parallel_enabled()) {
#pragma omp parallel for schedule(static)
    for (std::int64_t r = 0; r < rows; ++r) {
      int ih = (int)(r % d.h);
      int ci = (int)((r / d.h) % d.ci);
      int n = (int)(r / ((std::int64_t)d.h * d.ci));
      conv2d_grad_input_row(gy, w, gx, d, n, ci, ih);
    }
  } else {
    for (std::int64_t r = 0; r < rows; ++r) {
      int ih = (int)(r % d.h);
      int ci = (int)((r / d.h) % d.ci);
      int n = (int)(r / ((std::int64_t)d.h * d.ci));
      conv2d_grad_input_row(gy, w, gx, d, n, ci, ih);
    }
  }
}

void conv2d_grad_weight(const double* x, const double* gy, double* gw, const Conv2dDims& d) {
  if (parallel_enabled()) {
#pragma omp parallel for schedule(static)
    for (int co = 0; co < d.co; ++co) conv2d_grad_weight_slice(x, gy, gw, d, co);
  } else {
    for (int co = 0; co < d.co; ++co) conv2d_grad_weight_slice(x, gy, gw, d, co);
  }
}

namespace {
inline void matmul_row(const double* a, const double* b, double* c, int i, int k, int n) {
  double* crow = c + (std::int64_t)i * n;
  std::memset(crow, 0, sizeof(double) * (size_t)n);
  const double* arow = a + (std::int64_t)i * k;
  for (int kk = 0; kk < k; ++kk) {
    double av = arow[kk];
    const double* brow = b + (std::int64_t)kk * n;
    for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
  }
}
}  // namespace

void matmul(const double* a, const double* b, double* c, int m, int k, int n) {
  if (parallel_enabled()) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) matmul_row(a, b, c, i, k, n);
  } else {
    for (int i = 0; i < m; ++i) matmul_row(a, b, c, i, k, n);
  }
}

void transpose2d(const double* a, double* b, int m, int n) {
  if (parallel_enabled()) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) b[(std::int64_t)j * m + i] = a[(std::int64_t)i * n + j];
  } else {
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) b[(std::int64_t)j * m + i] = a[(std::int64_t)i * n + j];
  }
}

void upsample_nearest2x(const double* x, double* y, int n, int c, int h, int w) {
  std::int64_t rows = (std::int64_t)n * c * h;
  auto body = [&](std::int64_t r) {
    const double* xrow = x + r * w;
    std::int64_t p = r / h;
    int hh = (int)(r % h);
    double* ya = y + (p * (std::int64_t)(2 * h) + 2 * hh) * (2 * w);
    double* yb = ya + 2 * w;
    for (int ww = 0; ww < w; ++ww) {
      double v = xrow[ww];
      ya[2 * ww] = v;
      ya[2 * ww + 1] = v;
      yb[2 * ww] = v;
      yb[2 * ww + 1] = v;
    }
  };
  if (parallel_enabled()) {
#pragma omp parallel for schedule(static)
    for (std::int64_t r = 0; r < rows; ++r) body(r);
  } else {
    for (std::int64_t r = 0; r < rows; ++r) body(r);
  }
}

void downsample_sum2x(const double* x, double* y, int n, int c, int h, int w) {
  // x is [n,c,2h,2w], y is [n,c,h,w]
  std::int64_t rows = (std::int64_t)n * c * h;
  auto body = [&](std::int64_t r) {
    std::int64_t p = r / h;
    int hh = (int)(r % h);
    const double* xa = x + (p * (std::int64_t)(2 * h) + 2 * hh) * (2 * w);
    const double* xb = xa + 2 * w;
    double* yrow = y + r * w;
    for (int ww = 0; ww < w; ++ww)
      yrow[ww] = xa[2 * ww] + xa[2 * ww + 1] + xb[2 * ww] + xb[2 * ww + 1];
  };
  if (parallel_enabled()) {
#pragma omp parallel for schedule(static)
    for (std::int64_t r = 0; r < rows; ++r) body(r);
  } else {
    for (std::int64_t r = 0; r < rows; ++r) body(r);
  }
}

void gather_locations(const double* x, double* out, int n, int c, int h, int w, const int* locs,
                      int s) {
  std::int64_t hw = (std::int64_t)h * w;
  auto body = [&](std::int64_t r) {
    int si = (int)(r % s);
    int ni = (int)(r / s);
    std::int64_t loc = locs[si];
    double* orow = out + ((std::int64_t)ni * s + si) * c;
    const double* xp = x + (std::int64_t)ni * c * hw + loc;
    for (int cc = 0; cc < c; ++cc) orow[cc] = xp[(std::int64_t)cc * hw];
  };
  std::int64_t rows = (std::int64_t)n * s;
  if (parallel_enabled()) {
#pragma omp parallel for schedule(static)
    for (std::int64_t r = 0; r < rows; ++r) body(r);
  } else {
    for (std::int64_t r = 0; r < rows; ++r) body(r);
  }
}

void scatter_locations_add(const double* g, double* gx, int n, int c, int h, int w,
                           const int* locs, int s) {
  std::int64_t hw = (std::int64_t)h * w;
  // one owner per (n, c) plane so duplicate locations stay race-free
  std::int64_t planes = (std::int64_t)n * c;
  auto body = [&](std::int64_t p) {
    int cc = (int)(p % c);
    int ni = (int)(p / c);
    double* plane = gx + p * hw;
    const double* gn = g + (std::int64_t)ni * s * c + cc;
    for (int si = 0; si < s; ++si) plane[locs[si]] += gn[(std::int64_t)si * c];
  };
  if (parallel_enabled()) {
#pragma omp parallel for schedule(static)
    for (std::int64_t p = 0; p < planes; ++p) body(p);
  } else {
    for (std::int64_t p = 0; p < planes; ++p) body(p);
  }
}

std::vector<int> broadcast_shape(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("broadcast: rank mismatch " + std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()));
  std::vector<int> out(a.size());
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i] == b[i] || b[i] == 1)
      out[i] = a[i];
    else if (a[i] == 1)
      out[i] = b[i];
    else
      throw std::invalid_argument("broadcast: incompatible dims");
  }
  return out;
}

namespace {
std::vector<std::int64_t> strides_for(const std::vector<int>& shape) {
  std::vector<std::int64_t> st(shape.size());
  std::int64_t acc = 1;
  for (int i = (int)shape.size() - 1; i >= 0; --i) {
    st[(size_t)i] = acc;
    acc *= shape[(size_t)i];
  }
  return st;
}
}  // namespace

void broadcast_binary(BinaryOp op, const double* a, const std::vector<int>& ashape,
                      const double* b, const std::vector<int>& bshape, double* out,
                      const std::vector<int>& oshape) {
  int nd = (int)oshape.size();
  auto ost = strides_for(oshape);
  auto ast = strides_for(ashape);
  auto bst = strides_for(bshape);
  std::vector<std::int64_t> amap(nd), bmap(nd);
  for (int i = 0; i < nd; ++i) {
    amap[(size_t)i] = ashape[(size_t)i] == 1 ? 0 : ast[(size_t)i];
    bmap[(size_t)i] = bshape[(size_t)i] == 1 ? 0 : bst[(size_t)i];
  }
  std::int64_t total = 1;
  for (int dd : oshape) total *= dd;
  auto body = [&](std::int64_t idx) {
    std::int64_t rem = idx, ai = 0, bi = 0;
    for (int i = 0; i < nd; ++i) {
      std::int64_t q = rem / ost[(size_t)i];
      rem -= q * ost[(size_t)i];
      ai += q * amap[(size_t)i];
      bi += q * bmap[(size_t)i];
    }
    double av = a[ai], bv = b[bi];
    switch (op) {
      case BinaryOp::add: out[idx] = av + bv; break;
      case BinaryOp::sub: out[idx] = av - bv; break;
      case BinaryOp::mul: out[idx] = av * bv; break;
    }
  };
  if (parallel_enabled()) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < total; ++i) body(i);
  } else {
    for (std::int64_t i = 0; i < total; ++i) body(i);
  }
}

void reduce_sum_to(const double* g, const std::vector<int>& gshape, double* out,
                   const std::vector<int>& oshape) {
  int nd = (int)gshape.size();
  if ((int)oshape.size() != nd) throw std::invalid_argument("reduce_sum_to: rank mismatch");
  auto gst = strides_for(gshape);
  auto ost = strides_for(oshape);
  // reduced dims iterate innermost in fixed order for determinism
  std::vector<int> red_dims, keep_dims;
  for (int i = 0; i < nd; ++i) {
    if (oshape[(size_t)i] == gshape[(size_t)i])
      keep_dims.push_back(i);
    else if (oshape[(size_t)i] == 1)
      red_dims.push_back(i);
    else
      throw std::invalid_argument("reduce_sum_to: incompatible dims");
  }
  std::int64_t onum = 1;
  for (int dd : oshape) onum *= dd;
  std::int64_t rnum = 1;
  for (int i : red_dims) rnum *= gshape[(size_t)i];
  auto body = [&](std::int64_t oi) {
    // decode output index into g base offset
    std::int64_t rem = oi, base = 0;
    for (int i = 0; i < nd; ++i) {
      std::int64_t q = rem / ost[(size_t)i];
      rem -= q * ost[(size_t)i];
      base += q * gst[(size_t)i];
    }
    double acc = 0.0;
    for (std::int64_t ri = 0; ri < rnum; ++ri) {
      std::int64_t r = ri, off = base;
      for (int j = (int)red_dims.size() - 1; j >= 0; --j) {
        int dim = red_dims[(size_t)j];
        std::int64_t ext = gshape[(size_t)dim];
        off += (r % ext) * gst[(size_t)dim];
        r /= ext;
      }
      acc += g[off];
    }
    out[oi] = acc;
  };
  if (parallel_enabled()) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < onum; ++i) body(i);
  } else {
    for (std::int64_t i = 0; i < onum; ++i) body(i);
  }
}

double sum_all(const double* x, std::int64_t n) {
  // fixed blocking so serial and parallel results are bitwise equal
  const std::int64_t block = 4096;
  std::int64_t nb = (n + block - 1) / block;
  std::vector<double> partial((size_t)nb, 0.0);
  auto body = [&](std::int64_t bi) {
    std::int64_t lo = bi * block, hi = std::min(n, lo + block);
    double acc = 0.0;
    for (std::int64_t i = lo; i < hi; ++i) acc += x[i];
    partial[(size_t)bi] = acc;
  };
  if (parallel_enabled()) {
#pragma omp parallel for schedule(static)
    for (std::int64_t bi = 0; bi < nb; ++bi) body(bi);
  } else {
    for (std::int64_t bi = 0; bi < nb; ++bi) body(bi);
  }
  double total = 0.0;
  for (std::int64_t bi = 0; bi < nb; ++bi) total += partial[(size_t)bi];
  return total;
}

}  // namespace simit::kernels
