#include "metrics/metrics.h"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>
#include <fftw3.h>

#include "core/errors.h"

namespace simit::metrics {
namespace {

Tensor to_gray(const Tensor& img) {
  if (img.ndim() == 2) return img;
  if (img.ndim() == 3 && img.dim(0) == 3) {
    int h = img.dim(1), w = img.dim(2);
    Tensor g({h, w});
    std::int64_t hw = static_cast<std::int64_t>(h) * w;
    for (std::int64_t i = 0; i < hw; ++i)
      g[i] = (img[i] + img[hw + i] + img[2 * hw + i]) / 3.0;
    return g;
  }
  throw DataError("expected [H,W] or [3,H,W] image, got " + Tensor::shape_str(img.shape()));
}

double poly_kernel(const double* x, const double* y, int d) {
  double dot = 0;
  for (int i = 0; i < d; ++i) dot += x[i] * y[i];
  double b = dot / d + 1.0;
  return b * b * b;
}

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

EMat covariance(const Eigen::Map<const EMat>& x, const Eigen::RowVectorXd& mu, double jitter) {
  EMat centered = x.rowwise() - mu;
  EMat cov = centered.transpose() * centered / static_cast<double>(x.rows() - 1);
  cov.diagonal().array() += jitter;
  return cov;
}

}  // namespace

double ssim(const Tensor& x, const Tensor& y, const SsimParams& params) {
  if (params.c1 <= 0 || params.c2 <= 0) throw ConfigError("ssim constants must be positive");
  if (params.window < 3 || params.window % 2 == 0)
    throw ConfigError("ssim window must be odd and >= 3");
  if (!x.same_shape(y))
    throw DataError("ssim shape mismatch: " + Tensor::shape_str(x.shape()) + " vs " +
                    Tensor::shape_str(y.shape()));
  Tensor gx = to_gray(x), gy = to_gray(y);
  int h = gx.dim(0), w = gx.dim(1), win = params.window;
  if (h < win || w < win) throw DataError("image smaller than ssim window");
  int np = win * win;
  double cov_norm = static_cast<double>(np) / (np - 1);
  double total = 0;
  std::int64_t count = 0;
  for (int y0 = 0; y0 + win <= h; ++y0) {
    for (int x0 = 0; x0 + win <= w; ++x0) {
      double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
      for (int dy = 0; dy < win; ++dy)
        for (int dx = 0; dx < win; ++dx) {
          double a = gx[(y0 + dy) * static_cast<std::int64_t>(w) + x0 + dx];
          double b = gy[(y0 + dy) * static_cast<std::int64_t>(w) + x0 + dx];
          sx += a;
          sy += b;
          sxx += a * a;
          syy += b * b;
          sxy += a * b;
        }
      double mx = sx / np, my = sy / np;
      double vx = cov_norm * (sxx / np - mx * mx);
      double vy = cov_norm * (syy / np - my * my);
      double vxy = cov_norm * (sxy / np - mx * my);
      total += (2 * mx * my + params.c1) * (2 * vxy + params.c2) /
               ((mx * mx + my * my + params.c1) * (vx + vy + params.c2));
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

double kid(const Tensor& real_feats, const Tensor& fake_feats) {
  if (real_feats.ndim() != 2 || fake_feats.ndim() != 2 || real_feats.dim(1) != fake_feats.dim(1))
    throw DataError("kid expects [n,d] feature sets with matching d");
  int m = real_feats.dim(0), n = fake_feats.dim(0), d = real_feats.dim(1);
  if (m < 2 || n < 2) throw DataError("kid needs at least 2 samples per set");
  if (!real_feats.all_finite() || !fake_feats.all_finite())
    throw NumericError("kid: non-finite features");
  auto xrow = [&](int i) { return real_feats.data() + static_cast<std::int64_t>(i) * d; };
  auto yrow = [&](int i) { return fake_feats.data() + static_cast<std::int64_t>(i) * d; };
  if (m == n) {
    // Paired u-statistic: exactly zero when the sets coincide element-wise.
    double acc = 0;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) {
        if (i == j) continue;
        acc += poly_kernel(xrow(i), xrow(j), d) + poly_kernel(yrow(i), yrow(j), d) -
               poly_kernel(xrow(i), yrow(j), d) - poly_kernel(yrow(i), xrow(j), d);
      }
    return acc / (static_cast<double>(m) * (m - 1));
  }
  double kxx = 0, kyy = 0, kxy = 0;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      if (i != j) kxx += poly_kernel(xrow(i), xrow(j), d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) kyy += poly_kernel(yrow(i), yrow(j), d);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) kxy += poly_kernel(xrow(i), yrow(j), d);
  return kxx / (static_cast<double>(m) * (m - 1)) + kyy / (static_cast<double>(n) * (n - 1)) -
         2 * kxy / (static_cast<double>(m) * n);
}

double fid(const Tensor& real_feats, const Tensor& fake_feats, double jitter) {
  if (real_feats.ndim() != 2 || fake_feats.ndim() != 2 || real_feats.dim(1) != fake_feats.dim(1))
    throw DataError("fid expects [n,d] feature sets with matching d");
  int m = real_feats.dim(0), n = fake_feats.dim(0), d = real_feats.dim(1);
  if (m < 2 || n < 2) throw DataError("fid needs at least 2 samples per set");
  if (!real_feats.all_finite() || !fake_feats.all_finite())
    throw NumericError("fid: non-finite features");
  Eigen::Map<const EMat> a(real_feats.data(), m, d);
  Eigen::Map<const EMat> b(fake_feats.data(), n, d);
  Eigen::RowVectorXd mu1 = a.colwise().mean(), mu2 = b.colwise().mean();
  EMat s1 = covariance(a, mu1, jitter), s2 = covariance(b, mu2, jitter);

  Eigen::SelfAdjointEigenSolver<EMat> es1(s1);
  if (es1.info() != Eigen::Success) throw NumericError("fid: eigendecomposition failed");
  Eigen::VectorXd ev1 = es1.eigenvalues();
  double scale1 = std::max(1.0, ev1.cwiseAbs().maxCoeff());
  for (int i = 0; i < ev1.size(); ++i) {
    if (ev1[i] < -1e-8 * scale1) throw NumericError("fid: covariance not PSD after jitter");
    ev1[i] = std::sqrt(std::max(ev1[i], 0.0));
  }
  EMat root1 = es1.eigenvectors() * ev1.asDiagonal() * es1.eigenvectors().transpose();

  EMat prod = root1 * s2 * root1;
  prod = ((prod + prod.transpose()) / 2).eval();
  Eigen::SelfAdjointEigenSolver<EMat> esp(prod);
  if (esp.info() != Eigen::Success) throw NumericError("fid: eigendecomposition failed");
  Eigen::VectorXd evp = esp.eigenvalues();
  double scalep = std::max(1.0, evp.cwiseAbs().maxCoeff());
  double tr_root = 0;
  for (int i = 0; i < evp.size(); ++i) {
    if (evp[i] < -1e-8 * scalep) throw NumericError("fid: covariance product not PSD");
    tr_root += std::sqrt(std::max(evp[i], 0.0));
  }
  double value = (mu1 - mu2).squaredNorm() + s1.trace() + s2.trace() - 2 * tr_root;
  return std::max(value, 0.0);
}

double log_gabor_kernel(double omega, double phi, const LogGaborBank& bank, int scale, int orient) {
  if (scale < 0 || scale >= static_cast<int>(bank.scale_mults.size()) || orient < 0 ||
      orient >= static_cast<int>(bank.orientations.size()))
    throw ConfigError("log-gabor bank index out of range");
  if (bank.ratio <= 0 || bank.ratio >= 1) throw ConfigError("log-gabor ratio must be in (0,1)");
  if (omega <= 0) return 0.0;
  double omega_m = bank.omega0 / bank.scale_mults[static_cast<size_t>(scale)];
  double lr = std::log(omega / omega_m);
  double denom = 2 * std::log(bank.ratio) * std::log(bank.ratio);
  double dphi = std::atan2(std::sin(phi - bank.orientations[static_cast<size_t>(orient)]),
                           std::cos(phi - bank.orientations[static_cast<size_t>(orient)]));
  return std::exp(-lr * lr / denom - dphi * dphi / (2 * bank.sigma_phi * bank.sigma_phi));
}

Tensor bone_mask(const Tensor& us_image, const LogGaborBank& bank, const BoneMaskParams& params) {
  Tensor gray = to_gray(us_image);
  int h = gray.dim(0), w = gray.dim(1);
  if (h <= params.skip_top_rows)
    throw DataError("image height " + std::to_string(h) + " not above excluded top rows");
  std::int64_t hw = static_cast<std::int64_t>(h) * w;

  std::vector<fftw_complex> in(static_cast<size_t>(hw)), spec(static_cast<size_t>(hw)),
      filt(static_cast<size_t>(hw)), resp(static_cast<size_t>(hw));
  for (std::int64_t i = 0; i < hw; ++i) {
    in[static_cast<size_t>(i)][0] = gray[i];
    in[static_cast<size_t>(i)][1] = 0;
  }
  fftw_plan fwd = fftw_plan_dft_2d(h, w, in.data(), spec.data(), FFTW_FORWARD, FFTW_ESTIMATE);
  fftw_execute(fwd);
  fftw_destroy_plan(fwd);
  fftw_plan bwd = fftw_plan_dft_2d(h, w, filt.data(), resp.data(), FFTW_BACKWARD, FFTW_ESTIMATE);

  std::vector<double> energy(static_cast<size_t>(hw), 0.0);     // sum (|even|-|odd|)_+
  std::vector<double> amplitude(static_cast<size_t>(hw), 0.0);  // sum sqrt(even^2+odd^2)
  for (size_t r = 0; r < bank.orientations.size(); ++r) {
    for (size_t m = 0; m < bank.scale_mults.size(); ++m) {
      for (int v = 0; v < h; ++v) {
        double fy = (v <= h / 2 ? v : v - h) / static_cast<double>(h);
        for (int u = 0; u < w; ++u) {
          double fx = (u <= w / 2 ? u : u - w) / static_cast<double>(w);
          double g = log_gabor_kernel(std::hypot(fx, fy), std::atan2(fy, fx), bank,
                                      static_cast<int>(m), static_cast<int>(r));
          size_t i = static_cast<size_t>(v) * w + u;
          filt[i][0] = spec[i][0] * g;
          filt[i][1] = spec[i][1] * g;
        }
      }
      fftw_execute(bwd);
      // One-sided angular support makes the inverse transform analytic:
      // real part = even response, imaginary part = odd response.
      for (std::int64_t i = 0; i < hw; ++i) {
        double even = resp[static_cast<size_t>(i)][0] / hw;
        double odd = resp[static_cast<size_t>(i)][1] / hw;
        energy[static_cast<size_t>(i)] += std::max(std::abs(even) - std::abs(odd), 0.0);
        amplitude[static_cast<size_t>(i)] += std::hypot(even, odd);
      }
    }
  }
  fftw_destroy_plan(bwd);

  std::vector<double> valid;
  valid.reserve(static_cast<size_t>(hw));
  for (int y = params.skip_top_rows; y < h; ++y)
    for (int x = 0; x < w; ++x) valid.push_back(energy[static_cast<size_t>(y) * w + x]);
  size_t k = static_cast<size_t>(std::clamp(params.noise_percentile, 0.0, 100.0) / 100.0 *
                                 (valid.size() - 1));
  std::nth_element(valid.begin(), valid.begin() + static_cast<std::ptrdiff_t>(k), valid.end());
  double noise_t = valid[k];

  Tensor mask = Tensor::zeros({h, w});
  for (int y = params.skip_top_rows; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      size_t i = static_cast<size_t>(y) * w + x;
      double sym = std::max(energy[i] - noise_t, 0.0) / (amplitude[i] + 1e-9);
      if (sym >= params.binarize) mask[static_cast<std::int64_t>(i)] = 1.0;
    }
  return mask;
}

double bone_iou(const Tensor& mask_a, const Tensor& mask_b) {
  if (!mask_a.same_shape(mask_b))
    throw DataError("iou shape mismatch: " + Tensor::shape_str(mask_a.shape()) + " vs " +
                    Tensor::shape_str(mask_b.shape()));
  std::int64_t inter = 0, uni = 0;
  for (std::int64_t i = 0; i < mask_a.numel(); ++i) {
    bool a = mask_a[i] >= 0.5, b = mask_b[i] >= 0.5;
    inter += a && b;
    uni += a || b;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

datagen::LabelMap argmax_labels(const Tensor& scores) {
  Tensor s = scores;
  if (s.ndim() == 4 && s.dim(0) == 1) s = s.reshaped({s.dim(1), s.dim(2), s.dim(3)});
  if (s.ndim() != 3 || s.dim(0) < 2)
    throw DataError("argmax_labels: expected [C,H,W] scores with C >= 2, got " +
                    Tensor::shape_str(scores.shape()));
  int c = s.dim(0), h = s.dim(1), w = s.dim(2);
  datagen::LabelMap lm;
  lm.num_classes = c;
  lm.classes = Tensor::zeros({h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      int best = 0;
      for (int k = 1; k < c; ++k)
        if (s.at({k, y, x}) > s.at({best, y, x})) best = k;
      lm.classes.at({y, x}) = best;
    }
  return lm;
}

SegScores toy_segmentation_accuracy(const datagen::LabelMap& pred, const datagen::LabelMap& gt) {
  if (pred.num_classes != gt.num_classes)
    throw DataError("class count mismatch: " + std::to_string(pred.num_classes) + " vs " +
                    std::to_string(gt.num_classes));
  if (!pred.classes.same_shape(gt.classes))
    throw DataError("label shape mismatch: " + Tensor::shape_str(pred.classes.shape()) + " vs " +
                    Tensor::shape_str(gt.classes.shape()));
  int cc = gt.num_classes;
  std::vector<std::int64_t> conf(static_cast<size_t>(cc) * cc, 0);
  for (std::int64_t i = 0; i < gt.classes.numel(); ++i) {
    int g = static_cast<int>(gt.classes[i]), p = static_cast<int>(pred.classes[i]);
    if (g < 0 || g >= cc || p < 0 || p >= cc) throw DataError("label value out of class range");
    ++conf[static_cast<size_t>(g) * cc + p];
  }
  SegScores s;
  std::int64_t diag = 0;
  double acc_sum = 0;
  int present = 0;
  for (int c = 0; c < cc; ++c) {
    std::int64_t row = 0, col = 0;
    for (int j = 0; j < cc; ++j) {
      row += conf[static_cast<size_t>(c) * cc + j];
      col += conf[static_cast<size_t>(j) * cc + c];
    }
    std::int64_t hit = conf[static_cast<size_t>(c) * cc + c];
    diag += hit;
    if (row > 0) {
      double r = static_cast<double>(hit) / static_cast<double>(row);
      s.per_class_acc.push_back(r);
      acc_sum += r;
      ++present;
    } else {
      s.per_class_acc.push_back(-1.0);
    }
    if (col > 0)
      s.per_class_precision.push_back(static_cast<double>(hit) / static_cast<double>(col));
    else
      s.per_class_precision.push_back(row > 0 ? 0.0 : -1.0);
  }
  s.pix_acc = static_cast<double>(diag) / static_cast<double>(gt.classes.numel());
  s.class_acc = present > 0 ? acc_sum / present : 0.0;
  return s;
}

RandomProjectionEmbedder::RandomProjectionEmbedder(std::uint64_t seed, int out_dim, int grid,
                                                   int hidden)
    : out_dim_(out_dim), grid_(grid), hidden_(hidden) {
  if (out_dim < 1 || grid < 1 || hidden < 1) throw ConfigError("embedder dims must be positive");
  int in = 3 * grid * grid;
  Rng rng(mix_seed(seed, 0xE3BEDDE5));
  w1_.resize(static_cast<size_t>(hidden) * in);
  for (auto& v : w1_) v = rng.normal() / std::sqrt(static_cast<double>(in));
  w2_.resize(static_cast<size_t>(out_dim) * hidden);
  for (auto& v : w2_) v = rng.normal() / std::sqrt(static_cast<double>(hidden));
}

std::vector<double> RandomProjectionEmbedder::embed(const Tensor& image) const {
  Tensor img = image;
  if (img.ndim() == 2) img = img.reshaped({1, img.dim(0), img.dim(1)});
  if (img.ndim() != 3 || (img.dim(0) != 1 && img.dim(0) != 3))
    throw DataError("embedder expects [H,W], [1,H,W] or [3,H,W], got " +
                    Tensor::shape_str(image.shape()));
  int ch = img.dim(0), h = img.dim(1), w = img.dim(2);
  int in = 3 * grid_ * grid_;
  std::vector<double> cells(static_cast<size_t>(in), 0.0);
  for (int c = 0; c < 3; ++c) {
    const double* plane = img.data() + static_cast<std::int64_t>(c % ch) * h * w;
    for (int gy = 0; gy < grid_; ++gy) {
      int y0 = gy * h / grid_, y1 = std::max(y0 + 1, (gy + 1) * h / grid_);
      for (int gx = 0; gx < grid_; ++gx) {
        int x0 = gx * w / grid_, x1 = std::max(x0 + 1, (gx + 1) * w / grid_);
        double sum = 0;
        for (int y = y0; y < std::min(y1, h); ++y)
          for (int x = x0; x < std::min(x1, w); ++x)
            sum += plane[static_cast<std::int64_t>(y) * w + x];
        int area = (std::min(y1, h) - y0) * (std::min(x1, w) - x0);
        cells[static_cast<size_t>((c * grid_ + gy) * grid_ + gx)] = sum / std::max(area, 1);
      }
    }
  }
  std::vector<double> mid(static_cast<size_t>(hidden_));
  for (int i = 0; i < hidden_; ++i) {
    double acc = 0;
    for (int j = 0; j < in; ++j) acc += w1_[static_cast<size_t>(i) * in + j] * cells[static_cast<size_t>(j)];
    mid[static_cast<size_t>(i)] = std::tanh(acc);
  }
  std::vector<double> out(static_cast<size_t>(out_dim_));
  for (int i = 0; i < out_dim_; ++i) {
    double acc = 0;
    for (int j = 0; j < hidden_; ++j)
      acc += w2_[static_cast<size_t>(i) * hidden_ + j] * mid[static_cast<size_t>(j)];
    out[static_cast<size_t>(i)] = std::tanh(acc);
  }
  return out;
}

Tensor embed_set(const Embedder& e, const std::vector<Tensor>& images) {
  if (images.empty()) throw DataError("embed_set: empty image list");
  Tensor out({static_cast<int>(images.size()), e.dim()});
  for (size_t i = 0; i < images.size(); ++i) {
    std::vector<double> f = e.embed(images[i]);
    std::copy(f.begin(), f.end(), out.data() + static_cast<std::int64_t>(i) * e.dim());
  }
  return out;
}

}  // namespace simit::metrics
