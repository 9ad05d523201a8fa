#pragma once

#include <cstdint>
#include <numbers>
#include <vector>

#include "core/rng.h"
#include "core/tensor.h"
#include "datagen/datagen.h"

namespace simit::metrics {

struct SsimParams {
  double c1 = 1e-4;  // (0.01 L)^2 at dynamic range L = 1
  double c2 = 9e-4;  // (0.03 L)^2
  int window = 7;
};

/// Mean over all fully-contained windows; inputs are [H,W] or [3,H,W]
/// (channel-averaged). Uniform window, sample covariance.
double ssim(const Tensor& x, const Tensor& y, const SsimParams& params = {});

/// Unbiased MMD^2 with kernel (x.y/d + 1)^3 over [n,d] feature rows. Equal
/// set sizes use the paired u-statistic (exactly zero on identical sets);
/// unequal sizes fall back to the three-term estimator.
double kid(const Tensor& real_feats, const Tensor& fake_feats);

/// ||mu1-mu2||^2 + tr(S1 + S2 - 2 (S1 S2)^{1/2}) with eps-jitter on the
/// covariances.
double fid(const Tensor& real_feats, const Tensor& fake_feats, double jitter = 1e-10);

struct LogGaborBank {
  double omega0 = 1.0 / 8.0;  // finest center frequency, cycles/pixel
  double ratio = 0.25;        // kappa_m / omega_m
  std::vector<double> scale_mults = {1.0, 2.0, 4.0};
  std::vector<double> orientations = {std::numbers::pi / 6, std::numbers::pi / 2,
                                      5 * std::numbers::pi / 6};
  double sigma_phi = 0.55;  // radians
};

/// Radial-by-angular kernel for scale/orientation indices of the bank;
/// angular distance is wrapped to (-pi, pi]. Defined as 0 at omega = 0.
double log_gabor_kernel(double omega, double phi, const LogGaborBank& bank, int scale, int orient);

struct BoneMaskParams {
  double noise_percentile = 85.0;
  double binarize = 0.10;
  int skip_top_rows = 25;
};

/// Phase-symmetry surface mask: even-filter dominance aggregated over the
/// bank, noise-thresholded, amplitude-normalized, binarized. The top rows
/// (skin reflections) are forced to zero.
Tensor bone_mask(const Tensor& us_image, const LogGaborBank& bank = {},
                 const BoneMaskParams& params = {});

/// |a and b| / |a or b| on binary masks; 1 when both are empty.
double bone_iou(const Tensor& mask_a, const Tensor& mask_b);

struct SegScores {
  double pix_acc = 0;
  double class_acc = 0;                    // mean recall over classes present in gt
  std::vector<double> per_class_acc;       // recall; -1 for classes absent in gt
  std::vector<double> per_class_precision; // -1 for classes never predicted nor present
};

SegScores toy_segmentation_accuracy(const datagen::LabelMap& pred, const datagen::LabelMap& gt);

/// Channel argmax of class scores, [C,H,W] or [1,C,H,W], ties to the lower
/// class index.
datagen::LabelMap argmax_labels(const Tensor& scores);

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual int dim() const = 0;
  virtual std::vector<double> embed(const Tensor& image) const = 0;
};

/// Box-averages the image onto a coarse grid, then applies two fixed
/// random projections with tanh nonlinearities. Deterministic given seed.
class RandomProjectionEmbedder : public Embedder {
 public:
  explicit RandomProjectionEmbedder(std::uint64_t seed, int out_dim = 64, int grid = 8,
                                    int hidden = 128);
  int dim() const override { return out_dim_; }
  std::vector<double> embed(const Tensor& image) const override;

 private:
  int out_dim_, grid_, hidden_;
  std::vector<double> w1_, w2_;  // [hidden, 3*grid*grid], [out, hidden]
};

Tensor embed_set(const Embedder& e, const std::vector<Tensor>& images);  // [n,d]

}  // namespace simit::metrics
