#include "padis/metrics.hpp"

#include <cmath>
#include <limits>

namespace padis {

namespace {

void same_shape(const RealImage& a, const RealImage& b, const char* what) {
  require_dims(a.rows() == b.rows() && a.cols() == b.cols(), std::string(what) + ": shape mismatch");
}

// 1D Gaussian taps normalized to sum 1.
Eigen::ArrayXd gaussian_taps(int window, double sigma) {
  Eigen::ArrayXd taps(window);
  const double c = 0.5 * (window - 1);
  for (int i = 0; i < window; ++i) taps(i) = std::exp(-0.5 * std::pow((i - c) / sigma, 2));
  return taps / taps.sum();
}

// Separable "valid" filtering.
RealImage filter_valid(const RealImage& img, const Eigen::ArrayXd& taps) {
  const auto w = taps.size();
  const auto out_r = img.rows() - w + 1;
  const auto out_c = img.cols() - w + 1;
  RealImage tmp = RealImage::Zero(img.rows(), out_c);
  for (Eigen::Index k = 0; k < w; ++k) tmp += taps(k) * img.middleCols(k, out_c);
  RealImage out = RealImage::Zero(out_r, out_c);
  for (Eigen::Index k = 0; k < w; ++k) out += taps(k) * tmp.middleRows(k, out_r);
  return out;
}

}  // namespace

double psnr(const RealImage& recon, const RealImage& truth, std::optional<double> data_range) {
  same_shape(recon, truth, "psnr");
  const double range = data_range.value_or(truth.maxCoeff());
  if (!(range > 0.0)) throw DomainError("psnr: data range must be positive");
  const double mse = (recon - truth).square().mean();
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 20.0 * std::log10(range / std::sqrt(mse));
}

double nrmse(const RealImage& recon, const RealImage& truth) {
  same_shape(recon, truth, "nrmse");
  const double denom = std::sqrt(truth.square().sum());
  if (denom == 0.0) throw DomainError("nrmse: ground truth has zero norm");
  return std::sqrt((recon - truth).square().sum()) / denom;
}

double ssim(const RealImage& recon, const RealImage& truth, const SsimOptions& opts) {
  same_shape(recon, truth, "ssim");
  if (opts.window < 1 || opts.window > recon.rows() || opts.window > recon.cols())
    throw DimensionError("ssim: window larger than image");
  const double range = opts.data_range.value_or(truth.maxCoeff());
  if (!(range > 0.0)) throw DomainError("ssim: data range must be positive");
  const double c1 = std::pow(opts.k1 * range, 2);
  const double c2 = std::pow(opts.k2 * range, 2);
  const Eigen::ArrayXd taps = gaussian_taps(opts.window, opts.sigma);

  const RealImage mu_x = filter_valid(recon, taps);
  const RealImage mu_y = filter_valid(truth, taps);
  const RealImage sxx = filter_valid(recon * recon, taps) - mu_x * mu_x;
  const RealImage syy = filter_valid(truth * truth, taps) - mu_y * mu_y;
  const RealImage sxy = filter_valid(recon * truth, taps) - mu_x * mu_y;
  const RealImage map = ((2.0 * mu_x * mu_y + c1) * (2.0 * sxy + c2)) /
                        ((mu_x * mu_x + mu_y * mu_y + c1) * (sxx + syy + c2));
  return map.mean();
}

MetricReport evaluate_metrics(const RealImage& recon, const RealImage& truth) {
  return {psnr(recon, truth), ssim(recon, truth), nrmse(recon, truth)};
}

PairedDelta paired_differences(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw DimensionError("paired_differences: mismatched image sets");
  if (a.size() < 2) throw DomainError("paired_differences: need at least two images");
  const auto n = static_cast<Eigen::Index>(a.size());
  Eigen::ArrayXd d(n);
  for (Eigen::Index i = 0; i < n; ++i) d(i) = a[i] - b[i];
  PairedDelta out;
  out.n = static_cast<int>(n);
  out.mean = d.mean();
  out.sd = std::sqrt((d - out.mean).square().sum() / static_cast<double>(n - 1));
  return out;
}

UncertaintyMap pixelwise_std(const std::vector<RealImage>& recons, const CropRegion& crop) {
  if (recons.size() < 2) throw DomainError("pixelwise_std: need at least two reconstructions");
  const auto rows = recons.front().rows();
  const auto cols = recons.front().cols();
  for (const auto& r : recons)
    require_dims(r.rows() == rows && r.cols() == cols, "pixelwise_std: shapes differ");
  const Eigen::Index h = crop.rows > 0 ? crop.rows : rows - crop.row;
  const Eigen::Index w = crop.cols > 0 ? crop.cols : cols - crop.col;
  if (crop.row < 0 || crop.col < 0 || h < 1 || w < 1 || crop.row + h > rows || crop.col + w > cols)
    throw DimensionError("pixelwise_std: crop region outside image");

  // Deviations from the first input keep identical inputs exactly zero.
  const double n = static_cast<double>(recons.size());
  const RealImage ref = recons.front().block(crop.row, crop.col, h, w);
  RealImage mean = RealImage::Zero(h, w);
  for (const auto& r : recons) mean += r.block(crop.row, crop.col, h, w) - ref;
  mean /= n;
  RealImage ss = RealImage::Zero(h, w);
  for (const auto& r : recons) ss += (r.block(crop.row, crop.col, h, w) - ref - mean).square();
  UncertaintyMap out;
  out.sd = (ss / (n - 1.0)).sqrt();
  out.mean_sd = out.sd.mean();
  return out;
}

}  // namespace padis
