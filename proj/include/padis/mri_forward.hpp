#pragma once

// Multi-coil Cartesian MRI acquisition model y = P F S x and its adjoint,
// plus the preprocessing used before reconstruction (noise covariance,
// pre-whitening, ACS normalization, root-sum-of-squares).

#include "padis/core.hpp"
#include "padis/fft.hpp"

#include <cstdint>
#include <vector>

namespace padis {

using BoolImage = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Phase-encode line selection. Undersampling acts on columns only.
struct SamplingMask {
  std::vector<std::uint8_t> kept_lines;  // 0/1, one per column
  int acs_width = 0;
  double nominal_R = 1.0;

  static SamplingMask full(int width) {
    return {std::vector<std::uint8_t>(width, 1), width, 1.0};
  }

  int width() const { return static_cast<int>(kept_lines.size()); }
  bool kept(Eigen::Index col) const { return kept_lines[col] != 0; }
  int kept_count() const;

  bool operator==(const SamplingMask&) const = default;
};

/// First index of a length-`w` window centered on the DC sample of an
/// `n`-point centered transform.
inline Eigen::Index centered_start(Eigen::Index n, Eigen::Index w) { return n / 2 - w / 2; }

template <typename Scalar>
struct CoilSensitivitiesT {
  std::vector<ComplexImageT<Scalar>> maps;
  BoolImage support;

  int num_coils() const { return static_cast<int>(maps.size()); }
  Eigen::Index rows() const { return support.rows(); }
  Eigen::Index cols() const { return support.cols(); }

  /// Checks the sum-of-squares normalization on support and zeros off it.
  void validate(double tol = 1e-6) const;
};
using CoilSensitivities = CoilSensitivitiesT<double>;

template <typename Scalar>
struct KSpaceT {
  std::vector<ComplexImageT<Scalar>> coils;
  SamplingMask mask;

  int num_coils() const { return static_cast<int>(coils.size()); }
  Eigen::Index rows() const { return coils.empty() ? 0 : coils.front().rows(); }
  Eigen::Index cols() const { return coils.empty() ? 0 : coils.front().cols(); }
};
using KSpace = KSpaceT<double>;

/// N_c x N_c Hermitian positive semidefinite matrix.
struct NoiseCovariance {
  Eigen::MatrixXcd matrix;
};

template <typename Scalar>
void apply_mask_inplace(ComplexImageT<Scalar>& ksp, const SamplingMask& mask) {
  for (Eigen::Index c = 0; c < ksp.cols(); ++c)
    if (!mask.kept(c)) ksp.col(c).setZero();
}

template <typename Scalar>
void CoilSensitivitiesT<Scalar>::validate(double tol) const {
  require_dims(!maps.empty(), "coil sensitivities: no coils");
  for (const auto& m : maps)
    require_dims(m.rows() == rows() && m.cols() == cols(), "coil sensitivities: map shape mismatch");
  for (Eigen::Index i = 0; i < rows(); ++i)
    for (Eigen::Index j = 0; j < cols(); ++j) {
      double ss = 0.0;
      for (const auto& m : maps) ss += std::norm(m(i, j));
      if (support(i, j) ? std::abs(ss - 1.0) > tol : ss != 0.0)
        throw DomainError("coil sensitivities: normalization violated at (" + std::to_string(i) +
                          "," + std::to_string(j) + ")");
    }
}

/// y_c = mask * F(S_c x).
template <typename Scalar>
KSpaceT<Scalar> apply_forward(const ComplexImageT<Scalar>& x, const CoilSensitivitiesT<Scalar>& sens,
                              const SamplingMask& mask) {
  require_dims(x.rows() == sens.rows() && x.cols() == sens.cols(),
               "apply_forward: image and coil map shapes differ");
  require_dims(mask.width() == x.cols(), "apply_forward: mask width differs from image width");
  KSpaceT<Scalar> y;
  y.mask = mask;
  y.coils.reserve(sens.maps.size());
  for (const auto& s : sens.maps) {
    ComplexImageT<Scalar> k = fft2c<Scalar>(s * x);
    apply_mask_inplace(k, mask);
    y.coils.push_back(std::move(k));
  }
  return y;
}

/// sum_c conj(S_c) F^H(mask * y_c).
template <typename Scalar>
ComplexImageT<Scalar> apply_adjoint(const KSpaceT<Scalar>& y, const CoilSensitivitiesT<Scalar>& sens) {
  require_dims(y.num_coils() == sens.num_coils(), "apply_adjoint: coil count mismatch");
  require_dims(y.rows() == sens.rows() && y.cols() == sens.cols(),
               "apply_adjoint: k-space and coil map shapes differ");
  require_dims(y.mask.width() == y.cols(), "apply_adjoint: mask width differs from k-space width");
  ComplexImageT<Scalar> x = ComplexImageT<Scalar>::Zero(sens.rows(), sens.cols());
  for (int c = 0; c < y.num_coils(); ++c) {
    ComplexImageT<Scalar> k = y.coils[c];
    apply_mask_inplace(k, y.mask);
    x += sens.maps[c].conjugate() * ifft2c<Scalar>(k);
  }
  return x;
}

inline KSpace apply_forward(const ComplexImage& x, const CoilSensitivities& sens, const SamplingMask& mask) {
  return apply_forward<double>(x, sens, mask);
}
inline ComplexImage apply_adjoint(const KSpace& y, const CoilSensitivities& sens) {
  return apply_adjoint<double>(y, sens);
}

/// Coil images from k-space, one per coil (no mask applied beyond zeros already present).
std::vector<ComplexImage> coil_images(const KSpace& y);

/// Complex inner product <a, b> = sum conj(a) b over all coils.
cdouble inner(const KSpace& a, const KSpace& b);
double squared_norm(const KSpace& y);
KSpace operator-(const KSpace& a, const KSpace& b);
KSpace scaled(const KSpace& y, double s);

NoiseCovariance estimate_noise_covariance(const std::vector<ComplexImage>& coil_imgs,
                                          Eigen::Index row0, Eigen::Index col0,
                                          Eigen::Index patch_size = 30);

/// y' = L^{-1} y at each k-space location, C = L L^H.
KSpace prewhiten(const KSpace& y, const NoiseCovariance& cov);

struct AcsNormalization {
  KSpace normalized;
  double scale = 1.0;
};

/// Divides y by the 99th percentile of the RSS image of its centered
/// acs_size x acs_size block (zero-filled to full size).
AcsNormalization normalize_by_acs(const KSpace& y, Eigen::Index acs_size = 24);

/// Percentile with linear interpolation at rank q*(n-1) of the sorted values.
double percentile(std::vector<double> values, double q);

RealImage rss_combine(const std::vector<ComplexImage>& coil_imgs);

}  // namespace padis
