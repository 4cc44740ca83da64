#pragma once

#include "padis/core.hpp"

#include <optional>
#include <vector>

namespace padis {

struct MetricReport {
  double psnr = 0.0;
  double ssim = 0.0;
  double nrmse = 0.0;
};

/// 20 log10(data_range / RMSE); +inf when RMSE = 0. data_range defaults to
/// the maximum of `truth`.
double psnr(const RealImage& recon, const RealImage& truth,
            std::optional<double> data_range = std::nullopt);

/// ||recon - truth|| / ||truth||.
double nrmse(const RealImage& recon, const RealImage& truth);

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  std::optional<double> data_range;  // default: max of truth
};

/// Mean SSIM over every window position fully inside the image, Gaussian
/// weighted local statistics.
double ssim(const RealImage& recon, const RealImage& truth, const SsimOptions& opts = {});

MetricReport evaluate_metrics(const RealImage& recon, const RealImage& truth);

struct PairedDelta {
  double mean = 0.0;
  double sd = 0.0;
  int n = 0;
};

/// Per-image differences a_i - b_i summarized by mean and sample SD.
PairedDelta paired_differences(const std::vector<double>& a, const std::vector<double>& b);

struct CropRegion {
  Eigen::Index row = 0;
  Eigen::Index col = 0;
  Eigen::Index rows = 0;  // 0 means "to the edge"
  Eigen::Index cols = 0;
};

struct UncertaintyMap {
  RealImage sd;       // per-pixel sample SD over the crop region
  double mean_sd = 0.0;
};

UncertaintyMap pixelwise_std(const std::vector<RealImage>& recons, const CropRegion& crop = {});

}  // namespace padis
