#include "padis/core.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace padis {

std::uint64_t Rng::uniform_index(std::uint64_t n) {
  if (n == 0) throw DomainError("uniform_index: empty range");
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t v = gen_.next();
  while (v >= limit) v = gen_.next();
  return v % n;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

ComplexImage random_complex_image(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  ComplexImage img(rows, cols);
  for (Eigen::Index i = 0; i < img.size(); ++i) img.data()[i] = rng.complex_normal();
  return img;
}

}  // namespace padis
