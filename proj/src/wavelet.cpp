#include "padis/wavelet.hpp"

#include <cmath>
#include <vector>

namespace padis {

namespace {

const double kInvSqrt2 = 1.0 / std::sqrt(2.0);

void haar_step_1d(cdouble* data, Eigen::Index n, Eigen::Index stride, bool inverse,
                  std::vector<cdouble>& tmp) {
  const Eigen::Index half = n / 2;
  tmp.resize(n);
  if (!inverse) {
    for (Eigen::Index i = 0; i < half; ++i) {
      const cdouble a = data[(2 * i) * stride];
      const cdouble b = data[(2 * i + 1) * stride];
      tmp[i] = (a + b) * kInvSqrt2;
      tmp[half + i] = (a - b) * kInvSqrt2;
    }
  } else {
    for (Eigen::Index i = 0; i < half; ++i) {
      const cdouble s = data[i * stride];
      const cdouble d = data[(half + i) * stride];
      tmp[2 * i] = (s + d) * kInvSqrt2;
      tmp[2 * i + 1] = (s - d) * kInvSqrt2;
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) data[i * stride] = tmp[i];
}

void check_levels(const ComplexImage& img, int levels) {
  if (levels < 0) throw DomainError("haar: negative level count");
  const Eigen::Index f = Eigen::Index{1} << levels;
  if (img.rows() % f != 0 || img.cols() % f != 0)
    throw DimensionError("haar: image sides not divisible by 2^levels");
}

}  // namespace

ComplexImage haar_forward(const ComplexImage& img, int levels) {
  check_levels(img, levels);
  ComplexImage out = img;
  const Eigen::Index stride = out.cols();
  std::vector<cdouble> tmp;
  Eigen::Index rows = out.rows();
  Eigen::Index cols = out.cols();
  for (int l = 0; l < levels; ++l) {
    for (Eigen::Index r = 0; r < rows; ++r) haar_step_1d(out.data() + r * stride, cols, 1, false, tmp);
    for (Eigen::Index c = 0; c < cols; ++c) haar_step_1d(out.data() + c, rows, stride, false, tmp);
    rows /= 2;
    cols /= 2;
  }
  return out;
}

ComplexImage haar_inverse(const ComplexImage& coeffs, int levels) {
  check_levels(coeffs, levels);
  ComplexImage out = coeffs;
  const Eigen::Index stride = out.cols();
  std::vector<cdouble> tmp;
  for (int l = levels - 1; l >= 0; --l) {
    const Eigen::Index rows = out.rows() >> l;
    const Eigen::Index cols = out.cols() >> l;
    for (Eigen::Index c = 0; c < cols; ++c) haar_step_1d(out.data() + c, rows, stride, true, tmp);
    for (Eigen::Index r = 0; r < rows; ++r) haar_step_1d(out.data() + r * stride, cols, 1, true, tmp);
  }
  return out;
}

bool is_power_of_two(Eigen::Index n) { return n > 0 && (n & (n - 1)) == 0; }

int max_haar_levels(Eigen::Index rows, Eigen::Index cols, Eigen::Index min_band) {
  int levels = 0;
  while (rows % 2 == 0 && cols % 2 == 0 && rows / 2 >= min_band && cols / 2 >= min_band) {
    rows /= 2;
    cols /= 2;
    ++levels;
  }
  return levels;
}

}  // namespace padis
