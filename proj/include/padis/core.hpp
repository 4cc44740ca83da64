#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace padis {

template <typename Scalar>
using ComplexImageT =
    Eigen::Array<std::complex<Scalar>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using RealImageT = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using ComplexImage = ComplexImageT<double>;
using RealImage = RealImageT<double>;
using cdouble = std::complex<double>;

// Error hierarchy. Every failure the library reports is one of these.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DimensionError : Error {
  using Error::Error;
};
struct DomainError : Error {
  using Error::Error;
};
struct FactorizationError : Error {
  using Error::Error;
};
struct DivergedError : Error {
  DivergedError(const std::string& what, int level) : Error(what), level(level) {}
  int level;
};
struct FormatError : Error {
  using Error::Error;
};
struct TruncationError : FormatError {
  using FormatError::FormatError;
};
struct ConsistencyError : FormatError {
  using FormatError::FormatError;
};
struct EndiannessError : FormatError {
  using FormatError::FormatError;
};

inline void require_dims(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& a) {
  return a.derived().allFinite();
}

/// SplitMix64. The one generator used everywhere a seed appears, so that
/// masks, phantoms and sampler noise are reproducible bit for bit.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

/// Seeded random source with the handful of draws the library needs.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_.next(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(gen_.next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Rejection sampling, no modulo bias.
  std::uint64_t uniform_index(std::uint64_t n);

  // Standard normal via Box-Muller; the second variate is cached.
  double normal();
  cdouble complex_normal() {
    const double re = normal();
    return {re, normal()};
  }

  template <typename Derived>
  void fill_normal(Eigen::DenseBase<Derived>& a) {
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      for (Eigen::Index j = 0; j < a.cols(); ++j) a(i, j) = normal();
  }

 private:
  SplitMix64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

ComplexImage random_complex_image(Eigen::Index rows, Eigen::Index cols, Rng& rng);

}  // namespace padis
