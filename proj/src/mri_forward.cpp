#include "padis/mri_forward.hpp"

#include <algorithm>
#include <cmath>

namespace padis {

int SamplingMask::kept_count() const {
  return static_cast<int>(std::count_if(kept_lines.begin(), kept_lines.end(),
                                        [](std::uint8_t v) { return v != 0; }));
}

std::vector<ComplexImage> coil_images(const KSpace& y) {
  std::vector<ComplexImage> out;
  out.reserve(y.coils.size());
  for (const auto& k : y.coils) out.push_back(ifft2c<double>(k));
  return out;
}

cdouble inner(const KSpace& a, const KSpace& b) {
  require_dims(a.num_coils() == b.num_coils(), "inner: coil count mismatch");
  cdouble acc = 0.0;
  for (int c = 0; c < a.num_coils(); ++c) acc += (a.coils[c].conjugate() * b.coils[c]).sum();
  return acc;
}

double squared_norm(const KSpace& y) {
  double acc = 0.0;
  for (const auto& k : y.coils) acc += k.abs2().sum();
  return acc;
}

KSpace operator-(const KSpace& a, const KSpace& b) {
  require_dims(a.num_coils() == b.num_coils(), "k-space difference: coil count mismatch");
  KSpace out = a;
  for (int c = 0; c < a.num_coils(); ++c) out.coils[c] -= b.coils[c];
  return out;
}

KSpace scaled(const KSpace& y, double s) {
  KSpace out = y;
  for (auto& k : out.coils) k *= s;
  return out;
}

NoiseCovariance estimate_noise_covariance(const std::vector<ComplexImage>& coil_imgs,
                                          Eigen::Index row0, Eigen::Index col0,
                                          Eigen::Index patch_size) {
  require_dims(!coil_imgs.empty(), "estimate_noise_covariance: no coils");
  const auto rows = coil_imgs.front().rows();
  const auto cols = coil_imgs.front().cols();
  if (patch_size < 2 || row0 < 0 || col0 < 0 || row0 + patch_size > rows ||
      col0 + patch_size > cols)
    throw DimensionError("estimate_noise_covariance: patch out of bounds");

  const auto nc = static_cast<Eigen::Index>(coil_imgs.size());
  const Eigen::Index n = patch_size * patch_size;
  Eigen::MatrixXcd samples(nc, n);
  for (Eigen::Index c = 0; c < nc; ++c) {
    require_dims(coil_imgs[c].rows() == rows && coil_imgs[c].cols() == cols,
                 "estimate_noise_covariance: coil image shapes differ");
    const ComplexImage block = coil_imgs[c].block(row0, col0, patch_size, patch_size);
    for (Eigen::Index i = 0; i < n; ++i) samples(c, i) = block.data()[i];
  }
  samples.colwise() -= samples.rowwise().mean();
  Eigen::MatrixXcd cov = samples * samples.adjoint() / static_cast<double>(n - 1);
  const Eigen::MatrixXcd herm = 0.5 * (cov + cov.adjoint());
  return {herm};
}

KSpace prewhiten(const KSpace& y, const NoiseCovariance& cov) {
  const auto nc = y.num_coils();
  require_dims(cov.matrix.rows() == nc && cov.matrix.cols() == nc,
               "prewhiten: covariance size differs from coil count");
  const double trace = cov.matrix.trace().real();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(cov.matrix, Eigen::EigenvaluesOnly);
  if (!(trace > 0.0) || eig.eigenvalues().minCoeff() <= 1e-12 * trace)
    throw FactorizationError("prewhiten: noise covariance is singular");
  Eigen::LLT<Eigen::MatrixXcd> llt(cov.matrix);
  if (llt.info() != Eigen::Success) throw FactorizationError("prewhiten: factorization failed");
  const Eigen::MatrixXcd l = llt.matrixL();
  const Eigen::MatrixXcd l_inv = l.triangularView<Eigen::Lower>().solve(
      Eigen::MatrixXcd::Identity(nc, nc));

  KSpace out = y;
  Eigen::VectorXcd v(nc);
  for (Eigen::Index i = 0; i < y.rows(); ++i)
    for (Eigen::Index j = 0; j < y.cols(); ++j) {
      for (int c = 0; c < nc; ++c) v(c) = y.coils[c](i, j);
      const Eigen::VectorXcd w = l_inv * v;
      for (int c = 0; c < nc; ++c) out.coils[c](i, j) = w(c);
    }
  return out;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw DomainError("percentile: no values");
  std::sort(values.begin(), values.end());
  const double rank = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = rank - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

AcsNormalization normalize_by_acs(const KSpace& y, Eigen::Index acs_size) {
  require_dims(y.num_coils() > 0, "normalize_by_acs: no coils");
  const auto rows = y.rows();
  const auto cols = y.cols();
  if (acs_size < 1 || acs_size > rows || acs_size > cols)
    throw DimensionError("normalize_by_acs: ACS size exceeds k-space");
  const auto r0 = centered_start(rows, acs_size);
  const auto c0 = centered_start(cols, acs_size);
  for (Eigen::Index c = c0; c < c0 + acs_size; ++c)
    if (!y.mask.kept(c)) throw DomainError("normalize_by_acs: ACS region is not fully sampled");

  std::vector<ComplexImage> low_res;
  low_res.reserve(y.coils.size());
  for (const auto& k : y.coils) {
    ComplexImage block = ComplexImage::Zero(rows, cols);
    block.block(r0, c0, acs_size, acs_size) = k.block(r0, c0, acs_size, acs_size);
    low_res.push_back(ifft2c<double>(block));
  }
  const RealImage rss = rss_combine(low_res);
  const double scale = percentile(std::vector<double>(rss.data(), rss.data() + rss.size()), 0.99);
  if (!(scale > 0.0)) throw DomainError("normalize_by_acs: ACS region carries no signal");
  return {scaled(y, 1.0 / scale), scale};
}

RealImage rss_combine(const std::vector<ComplexImage>& coil_imgs) {
  require_dims(!coil_imgs.empty(), "rss_combine: no coils");
  RealImage acc = RealImage::Zero(coil_imgs.front().rows(), coil_imgs.front().cols());
  for (const auto& img : coil_imgs) {
    require_dims(img.rows() == acc.rows() && img.cols() == acc.cols(),
                 "rss_combine: coil image shapes differ");
    acc += img.abs2();
  }
  return acc.sqrt();
}

}  // namespace padis
