#pragma once

// Centered, unitary 2D DFT. k-space is DC-centered: the zero frequency sits at
// index (rows/2, cols/2). Both directions carry 1/sqrt(rows*cols) so the pair
// is an isometry.

#include "padis/core.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <vector>

namespace padis {

namespace detail {

template <typename Scalar>
Eigen::FFT<Scalar>& fft_engine() {
  thread_local Eigen::FFT<Scalar> engine = [] {
    Eigen::FFT<Scalar> e;
    e.SetFlag(Eigen::FFT<Scalar>::Unscaled);
    return e;
  }();
  return engine;
}

// One centered 1D transform of `n` strided samples, in place.
template <typename Scalar>
void centered_fft_1d(std::complex<Scalar>* data, Eigen::Index n, Eigen::Index stride, bool inverse,
                     std::vector<std::complex<Scalar>>& in, std::vector<std::complex<Scalar>>& out) {
  const Eigen::Index half = n / 2;
  in.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) in[j] = data[((j + half) % n) * stride];  // ifftshift
  auto& engine = fft_engine<Scalar>();
  if (inverse)
    engine.inv(out, in);
  else
    engine.fwd(out, in);
  for (Eigen::Index j = 0; j < n; ++j) data[((j + half) % n) * stride] = out[j];  // fftshift
}

template <typename Scalar>
ComplexImageT<Scalar> centered_fft_2d(ComplexImageT<Scalar> img, bool inverse) {
  const Eigen::Index rows = img.rows();
  const Eigen::Index cols = img.cols();
  std::vector<std::complex<Scalar>> in, out;
  for (Eigen::Index r = 0; r < rows; ++r)
    centered_fft_1d<Scalar>(img.data() + r * cols, cols, 1, inverse, in, out);
  for (Eigen::Index c = 0; c < cols; ++c)
    centered_fft_1d<Scalar>(img.data() + c, rows, cols, inverse, in, out);
  img *= Scalar(1) / std::sqrt(static_cast<Scalar>(rows * cols));
  return img;
}

}  // namespace detail

template <typename Scalar>
ComplexImageT<Scalar> fft2c(const ComplexImageT<Scalar>& img) {
  return detail::centered_fft_2d<Scalar>(img, false);
}

template <typename Scalar>
ComplexImageT<Scalar> ifft2c(const ComplexImageT<Scalar>& ksp) {
  return detail::centered_fft_2d<Scalar>(ksp, true);
}

}  // namespace padis
