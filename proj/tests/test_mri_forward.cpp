#include "padis/mri_forward.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace padis;
using padis::test::max_abs;

namespace {

KSpace random_kspace(const CoilSensitivities& s, const SamplingMask& mask, Rng& rng) {
  KSpace u;
  u.mask = mask;
  for (int c = 0; c < s.num_coils(); ++c) {
    ComplexImage k = random_complex_image(s.rows(), s.cols(), rng);
    apply_mask_inplace(k, mask);
    u.coils.push_back(std::move(k));
  }
  return u;
}

double adjoint_gap(const ComplexImage& x, const KSpace& u, const CoilSensitivities& s, const SamplingMask& m) {
  const cdouble lhs = inner(apply_forward(x, s, m), u);
  const cdouble rhs = (x.conjugate() * apply_adjoint(u, s)).sum();
  return std::abs(lhs - rhs) / (test::norm(x) * std::sqrt(squared_norm(u)));
}

}  // namespace

TEST_SUITE("mri_forward") {
  TEST_CASE("centered unitary FFT matches a direct DFT for even and odd sizes") {
    Rng rng(3);
    for (auto [r, c] : {std::pair{8, 8}, std::pair{6, 10}, std::pair{7, 5}}) {
      const ComplexImage x = random_complex_image(r, c, rng);
      CHECK(max_abs(fft2c<double>(x) - test::naive_dft2c(x, false)) < 1e-12);
      CHECK(max_abs(ifft2c<double>(x) - test::naive_dft2c(x, true)) < 1e-12);
      CHECK(max_abs(ifft2c<double>(fft2c<double>(x)) - x) < 1e-12);
    }
  }

  TEST_CASE("DC sample sits at the center") {
    ComplexImage x = ComplexImage::Constant(8, 6, cdouble(1.0, 0.0));
    const ComplexImage k = fft2c<double>(x);
    CHECK(std::abs(k(4, 3) - std::sqrt(48.0)) < 1e-12);
    CHECK(k.abs().sum() - std::abs(k(4, 3)) < 1e-10);
  }

  TEST_CASE("single coil, full sampling: forward is the FFT and adjoint inverts it") {
    Rng rng(1);
    const ComplexImage x = random_complex_image(16, 16, rng);
    CoilSensitivities s;
    s.support = BoolImage::Constant(16, 16, true);
    s.maps.push_back(ComplexImage::Ones(16, 16));
    const KSpace y = apply_forward(x, s, SamplingMask::full(16));
    CHECK(max_abs(y.coils[0] - fft2c<double>(x)) < 1e-12);
    CHECK(max_abs(apply_adjoint(y, s) - x) < 1e-12);
  }

  TEST_CASE("zero in, zero out") {
    Rng rng(2);
    const CoilSensitivities s = test::random_sens(8, 8, 3, rng);
    const SamplingMask m = test::random_mask(8, 0.5, rng);
    const KSpace y = apply_forward(ComplexImage::Zero(8, 8), s, m);
    CHECK(squared_norm(y) == 0.0);
    KSpace z = y;
    CHECK(apply_adjoint(z, s).abs().maxCoeff() == 0.0);
  }

  TEST_CASE("unkept lines are exactly zero and masking is idempotent") {
    Rng rng(4);
    const CoilSensitivities s = test::random_sens(12, 12, 2, rng);
    const SamplingMask m = test::random_mask(12, 0.5, rng);
    const KSpace y = apply_forward(random_complex_image(12, 12, rng), s, m);
    for (const auto& k : y.coils)
      for (int c = 0; c < 12; ++c)
        if (!m.kept(c)) CHECK(k.col(c).abs().maxCoeff() == 0.0);
    ComplexImage twice = y.coils[0];
    apply_mask_inplace(twice, m);
    apply_mask_inplace(twice, m);
    CHECK((twice == y.coils[0]).all());
  }

  TEST_CASE("adjoint dot test: 16x16, 2 coils, R=2, 100 random u") {
    Rng rng(5);
    const CoilSensitivities s = test::random_sens(16, 16, 2, rng);
    SamplingMask m = SamplingMask::full(16);
    for (int c = 0; c < 16; c += 2) m.kept_lines[c] = 0;
    const ComplexImage x = random_complex_image(16, 16, rng);
    for (int i = 0; i < 100; ++i) CHECK(adjoint_gap(x, random_kspace(s, m, rng), s, m) <= 1e-10);
  }

  TEST_CASE("adjoint dot test over random shapes, coil counts and masks") {
    Rng rng(6);
    for (int trial = 0; trial < 30; ++trial) {
      const int rows = 4 + static_cast<int>(rng.uniform_index(13));
      const int cols = 4 + static_cast<int>(rng.uniform_index(13));
      const int coils = 1 + static_cast<int>(rng.uniform_index(5));
      const CoilSensitivities s = test::random_sens(rows, cols, coils, rng);
      const SamplingMask m = test::random_mask(cols, rng.uniform(0.1, 1.0), rng);
      CHECK(adjoint_gap(random_complex_image(rows, cols, rng), random_kspace(s, m, rng), s, m) <= 1e-10);
    }
  }

  TEST_CASE("A^H A is the identity at full sampling with normalized maps") {
    Rng rng(7);
    const CoilSensitivities s = test::random_sens(10, 10, 4, rng);
    const ComplexImage x = random_complex_image(10, 10, rng);
    CHECK(max_abs(apply_adjoint(apply_forward(x, s, SamplingMask::full(10)), s) - x) < 1e-12);
  }

  TEST_CASE("shape mismatches raise dimension errors") {
    Rng rng(8);
    const CoilSensitivities s = test::random_sens(8, 8, 2, rng);
    CHECK_THROWS_AS(apply_forward(ComplexImage::Zero(8, 6), s, SamplingMask::full(6)), DimensionError);
    CHECK_THROWS_AS(apply_forward(ComplexImage::Zero(8, 8), s, SamplingMask::full(6)), DimensionError);
    KSpace y = apply_forward(ComplexImage::Zero(8, 8), s, SamplingMask::full(8));
    y.coils.pop_back();
    CHECK_THROWS_AS(apply_adjoint(y, s), DimensionError);
  }

  TEST_CASE("coil map validation") {
    Rng rng(9);
    CoilSensitivities s = test::random_sens(6, 6, 2, rng);
    CHECK_NOTHROW(s.validate());
    s.support(1, 1) = false;
    CHECK_THROWS_AS(s.validate(), DomainError);
    s.maps[0](1, 1) = 0.0;
    s.maps[1](1, 1) = 0.0;
    CHECK_NOTHROW(s.validate());
  }

  TEST_CASE("noise covariance: identical coils give rank one with equal entries") {
    Rng rng(10);
    const ComplexImage a = random_complex_image(40, 40, rng);
    const NoiseCovariance c = estimate_noise_covariance({a, a}, 5, 5, 30);
    CHECK(std::abs(c.matrix(0, 1) - c.matrix(0, 0)) < 1e-12);
    CHECK(std::abs(c.matrix(1, 1) - c.matrix(0, 0)) < 1e-12);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(c.matrix);
    CHECK(std::abs(eig.eigenvalues()(0)) < 1e-12 * c.matrix.trace().real());
  }

  TEST_CASE("noise covariance: sample covariance with n-1 divisor, Hermitian") {
    Rng rng(11);
    std::vector<ComplexImage> coils;
    for (int c = 0; c < 3; ++c) coils.push_back(random_complex_image(12, 12, rng));
    const NoiseCovariance cov = estimate_noise_covariance(coils, 2, 3, 6);
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) {
        cdouble ma = coils[a].block(2, 3, 6, 6).mean(), mb = coils[b].block(2, 3, 6, 6).mean();
        cdouble acc = 0.0;
        for (int i = 0; i < 6; ++i)
          for (int j = 0; j < 6; ++j) acc += (coils[a](2 + i, 3 + j) - ma) * std::conj(coils[b](2 + i, 3 + j) - mb);
        CHECK(std::abs(cov.matrix(a, b) - acc / 35.0) < 1e-12);
      }
    CHECK((cov.matrix - cov.matrix.adjoint()).norm() < 1e-12);
  }

  TEST_CASE("noise covariance: constant patch gives zero, out-of-bounds patch throws") {
    const ComplexImage k = ComplexImage::Constant(32, 32, cdouble(2.0, -1.0));
    CHECK(estimate_noise_covariance({k, k}, 0, 0, 30).matrix.norm() < 1e-12);
    CHECK_THROWS_AS(estimate_noise_covariance({k}, 3, 3, 30), DimensionError);
    CHECK_THROWS_AS(estimate_noise_covariance({k}, -1, 0, 30), DimensionError);
  }

  TEST_CASE("noise covariance: unit complex noise gives a diagonal near one over 100 seeds") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      Rng rng(1000 + seed);
      std::vector<ComplexImage> coils;
      for (int c = 0; c < 2; ++c) {
        ComplexImage z(30, 30);
        for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = rng.complex_normal() / std::sqrt(2.0);
        coils.push_back(z);
      }
      const NoiseCovariance cov = estimate_noise_covariance(coils, 0, 0, 30);
      CHECK(std::abs(cov.matrix(0, 0).real() - 1.0) < 0.2);
      CHECK(std::abs(cov.matrix(1, 1).real() - 1.0) < 0.2);
    }
  }

  TEST_CASE("prewhiten: identity and scaled identity") {
    Rng rng(12);
    const CoilSensitivities s = test::random_sens(8, 8, 3, rng);
    const KSpace y = apply_forward(random_complex_image(8, 8, rng), s, SamplingMask::full(8));
    const KSpace same = prewhiten(y, {Eigen::MatrixXcd::Identity(3, 3)});
    const KSpace half = prewhiten(y, {4.0 * Eigen::MatrixXcd::Identity(3, 3)});
    for (int c = 0; c < 3; ++c) {
      CHECK(max_abs(same.coils[c] - y.coils[c]) < 1e-15);
      CHECK(max_abs(half.coils[c] - 0.5 * y.coils[c]) < 1e-15);
    }
  }

  TEST_CASE("prewhiten: noise with covariance C whitens to identity within 5%") {
    Rng rng(13);
    const int nc = 4;
    Eigen::MatrixXcd b(nc, nc);
    for (int i = 0; i < nc; ++i)
      for (int j = 0; j < nc; ++j) b(i, j) = rng.complex_normal();
    const Eigen::MatrixXcd C = b * b.adjoint() + 0.5 * Eigen::MatrixXcd::Identity(nc, nc);
    const Eigen::MatrixXcd L = C.llt().matrixL();
    KSpace y;
    y.mask = SamplingMask::full(128);
    for (int c = 0; c < nc; ++c) y.coils.push_back(ComplexImage::Zero(128, 128));
    for (Eigen::Index p = 0; p < 128 * 128; ++p) {
      Eigen::VectorXcd z(nc);
      for (int c = 0; c < nc; ++c) z(c) = rng.complex_normal() / std::sqrt(2.0);
      const Eigen::VectorXcd n = L * z;
      for (int c = 0; c < nc; ++c) y.coils[c].data()[p] = n(c);
    }
    const KSpace w = prewhiten(y, {C});
    Eigen::MatrixXcd emp = Eigen::MatrixXcd::Zero(nc, nc);
    for (Eigen::Index p = 0; p < 128 * 128; ++p) {
      Eigen::VectorXcd v(nc);
      for (int c = 0; c < nc; ++c) v(c) = w.coils[c].data()[p];
      emp += v * v.adjoint();
    }
    emp /= 128.0 * 128.0;
    const Eigen::MatrixXcd I = Eigen::MatrixXcd::Identity(nc, nc);
    CHECK((emp - I).norm() / I.norm() < 0.05);
  }

  TEST_CASE("prewhiten: singular covariance is rejected") {
    KSpace y;
    y.mask = SamplingMask::full(4);
    y.coils = {ComplexImage::Ones(4, 4), ComplexImage::Ones(4, 4)};
    Eigen::MatrixXcd C = Eigen::MatrixXcd::Ones(2, 2);
    CHECK_THROWS_AS(prewhiten(y, {C}), FactorizationError);
  }

  TEST_CASE("percentile uses linear interpolation at rank q(n-1)") {
    CHECK(percentile({3.0, 1.0, 2.0}, 0.5) == 2.0);
    CHECK(percentile({0.0, 10.0}, 0.99) == doctest::Approx(9.9).epsilon(1e-15));
    std::vector<double> v(101);
    for (int i = 0; i <= 100; ++i) v[i] = 100 - i;
    CHECK(percentile(v, 0.99) == doctest::Approx(99.0));
  }

  TEST_CASE("ACS normalization: homogeneity, constant magnitude, unit percentile") {
    Rng rng(14);
    const CoilSensitivities s = test::random_sens(32, 32, 3, rng);
    const KSpace y = apply_forward(random_complex_image(32, 32, rng), s, SamplingMask::full(32));
    const AcsNormalization a = normalize_by_acs(y, 8);
    const AcsNormalization b = normalize_by_acs(scaled(y, 10.0), 8);
    CHECK(b.scale == doctest::Approx(10.0 * a.scale).epsilon(1e-12));
    for (int c = 0; c < 3; ++c) CHECK(max_abs(a.normalized.coils[c] - b.normalized.coils[c]) < 1e-10);

    // Recompute the percentile from the normalized data with an independent block reconstruction.
    std::vector<ComplexImage> low;
    for (const auto& k : a.normalized.coils) {
      ComplexImage blk = ComplexImage::Zero(32, 32);
      blk.block(12, 12, 8, 8) = k.block(12, 12, 8, 8);
      low.push_back(test::naive_dft2c(blk, true));
    }
    RealImage rss = RealImage::Zero(32, 32);
    for (const auto& l : low) rss += l.abs2();
    rss = rss.sqrt();
    std::vector<double> vals(rss.data(), rss.data() + rss.size());
    std::sort(vals.begin(), vals.end());
    const double rank = 0.99 * (vals.size() - 1);
    const auto lo = static_cast<std::size_t>(rank);
    const double p99 = vals[lo] + (rank - lo) * (vals[lo + 1] - vals[lo]);
    CHECK(std::abs(p99 - 1.0) < 1e-9);

    KSpace dc;
    dc.mask = SamplingMask::full(16);
    dc.coils = {ComplexImage::Zero(16, 16)};
    dc.coils[0](8, 8) = cdouble(0.0, 48.0);
    CHECK(normalize_by_acs(dc, 4).scale == doctest::Approx(3.0).epsilon(1e-12));
  }

  TEST_CASE("ACS normalization requires a fully sampled ACS block") {
    Rng rng(15);
    const CoilSensitivities s = test::random_sens(16, 16, 1, rng);
    SamplingMask m = SamplingMask::full(16);
    m.kept_lines[8] = 0;
    const KSpace y = apply_forward(random_complex_image(16, 16, rng), s, m);
    CHECK_THROWS_AS(normalize_by_acs(y, 4), DomainError);
    CHECK_THROWS_AS(normalize_by_acs(y, 40), DimensionError);
  }

  TEST_CASE("root sum of squares") {
    Rng rng(16);
    const ComplexImage a = random_complex_image(5, 7, rng);
    CHECK((rss_combine({a}) - a.abs()).abs().maxCoeff() < 1e-15);
    const ComplexImage one = ComplexImage::Constant(4, 4, std::polar(1.0, 0.3));
    CHECK((rss_combine({one, one}) - std::sqrt(2.0)).abs().maxCoeff() < 1e-15);
    const ComplexImage b = random_complex_image(5, 7, rng), c = random_complex_image(5, 7, rng);
    const RealImage r = rss_combine({a, b, c});
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 7; ++j)
        CHECK(std::abs(r(i, j) - std::sqrt(std::norm(a(i, j)) + std::norm(b(i, j)) + std::norm(c(i, j)))) < 1e-14);
  }
}
