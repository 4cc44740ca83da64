#pragma once

// Shared fixtures and independent reference computations for the tests.

#include "padis/core.hpp"
#include "padis/mri_forward.hpp"
#include "padis/priors.hpp"
#include "padis/reader_study.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>

namespace padis::test {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "padis") {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            (tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& p) const { return path_ / p; }

 private:
  std::filesystem::path path_;
};

/// Random complex maps normalized to unit sum of squares everywhere.
inline CoilSensitivities random_sens(Eigen::Index rows, Eigen::Index cols, int coils, Rng& rng) {
  CoilSensitivities s;
  s.support = BoolImage::Constant(rows, cols, true);
  for (int c = 0; c < coils; ++c) s.maps.push_back(random_complex_image(rows, cols, rng));
  RealImage ss = RealImage::Zero(rows, cols);
  for (const auto& m : s.maps) ss += m.abs2();
  for (auto& m : s.maps) m /= ss.sqrt();
  return s;
}

/// Random column mask keeping about 1/R of the columns.
inline SamplingMask random_mask(int width, double keep_prob, Rng& rng) {
  SamplingMask m;
  m.kept_lines.resize(width);
  for (auto& v : m.kept_lines) v = rng.uniform() < keep_prob ? 1 : 0;
  m.acs_width = 0;
  m.nominal_R = 1.0 / keep_prob;
  return m;
}

/// Direct O(N^2) centered unitary DFT along both axes.
inline ComplexImage naive_dft2c(const ComplexImage& x, bool inverse) {
  const Eigen::Index R = x.rows(), C = x.cols();
  const double sgn = inverse ? 1.0 : -1.0;
  auto kernel = [&](Eigen::Index n) {
    const Eigen::Index h = n / 2;
    Eigen::MatrixXcd k(n, n);
    for (Eigen::Index a = 0; a < n; ++a)
      for (Eigen::Index b = 0; b < n; ++b)
        k(a, b) = std::polar(1.0 / std::sqrt(static_cast<double>(n)),
                             sgn * 2.0 * std::numbers::pi * static_cast<double>((a - h) * (b - h)) /
                                 static_cast<double>(n));
    return k;
  };
  const Eigen::MatrixXcd kr = kernel(R), kc = kernel(C);
  const Eigen::MatrixXcd m = x.matrix();
  return (kr * m * kc.transpose()).array();
}

inline double max_abs(const ComplexImage& a) { return a.size() ? a.abs().maxCoeff() : 0.0; }

inline double norm(const ComplexImage& a) { return std::sqrt(a.abs2().sum()); }

/// Mixture with random means, well-conditioned random covariances and
/// random weights over 2*P*P dimensions.
inline GmmPatchPrior random_gmm(int patch_size, int components, Rng& rng, double scale = 1.0,
                                PositionConditioning cond = PositionConditioning::none) {
  const int dim = 2 * patch_size * patch_size + (cond == PositionConditioning::feature_augmented ? 2 : 0);
  std::vector<GmmPatchPrior::Component> comps;
  double wsum = 0.0;
  for (int k = 0; k < components; ++k) {
    GmmPatchPrior::Component c;
    c.weight = rng.uniform(0.5, 1.5);
    wsum += c.weight;
    c.mean.resize(dim);
    for (int i = 0; i < dim; ++i) c.mean(i) = scale * rng.normal();
    Eigen::MatrixXd b(dim, dim);
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < dim; ++j) b(i, j) = rng.normal();
    c.covariance = scale * scale * (b * b.transpose() / dim + 0.2 * Eigen::MatrixXd::Identity(dim, dim));
    comps.push_back(std::move(c));
  }
  for (auto& c : comps) c.weight /= wsum;
  return GmmPatchPrior(patch_size, std::move(comps), cond);
}

/// Votes reproducing the published three-rater preference table: 60 cases,
/// raters r1..r3 with 50, 58 and 47 target picks, 55 majority wins, cohorts
/// slices = 25 | 500 and contrast = T1/FLAIR | T2.
inline std::vector<VoteRecord> preference_table_votes(const std::string& target = "padis") {
  std::vector<VoteRecord> votes;
  for (int i = 0; i < 60; ++i) {
    char id[8];
    std::snprintf(id, sizeof id, "c%02d", i + 1);
    const bool win = i < 55;
    const std::map<std::string, std::string> cohorts{
        {"slices", i < 30 ? "25" : "500"},
        {"contrast", (win ? i < 21 : i < 58) ? "T1/FLAIR" : "T2"}};
    const bool r1 = win && i >= 5;
    const bool r2 = win || i < 58;
    const bool r3 = win && (i < 5 || i >= 13);
    votes.push_back({id, "r1", r1 ? target : "a", cohorts});
    votes.push_back({id, "r2", r2 ? target : "b", cohorts});
    votes.push_back({id, "r3", r3 ? target : (i % 2 ? "a" : "b"), cohorts});
  }
  return votes;
}

}  // namespace padis::test
