#include "padis/data_io.hpp"

#include <cmath>
#include <numbers>

namespace padis {

namespace {

struct Ellipse {
  double cx, cy, a, b, theta, value;

  // Smoothed indicator: a tanh ramp of half-width `edge` (image units)
  // across the boundary.
  double weight(double u, double v, double edge) const {
    const double du = u - cx, dv = v - cy;
    const double c = std::cos(theta), s = std::sin(theta);
    const double p = (c * du + s * dv) / a;
    const double q = (-s * du + c * dv) / b;
    const double dist = (1.0 - std::sqrt(p * p + q * q)) * std::min(a, b);
    return edge > 0 ? 0.5 * (1.0 + std::tanh(dist / edge)) : (dist >= 0 ? 1.0 : 0.0);
  }
};

}  // namespace

Phantom generate_phantom(int size, int num_coils, std::uint64_t seed) {
  if (size < 32) throw DomainError("generate_phantom: size must be at least 32");
  if (num_coils < 1) throw DomainError("generate_phantom: need at least one coil");
  Rng rng(seed);

  const Ellipse body{rng.uniform(-0.04, 0.04), rng.uniform(-0.04, 0.04), rng.uniform(0.78, 0.88),
                     rng.uniform(0.66, 0.8),   rng.uniform(-0.3, 0.3),   rng.uniform(0.55, 0.7)};
  std::vector<Ellipse> inner;
  const int n_inner = 4 + static_cast<int>(rng.uniform_index(4));
  for (int k = 0; k < n_inner; ++k) {
    const double r = rng.uniform(0.0, 0.45);
    const double ang = rng.uniform(0.0, 2.0 * std::numbers::pi);
    inner.push_back({body.cx + r * std::cos(ang), body.cy + r * std::sin(ang), rng.uniform(0.08, 0.3),
                     rng.uniform(0.06, 0.22), rng.uniform(0.0, std::numbers::pi),
                     rng.uniform(-0.35, 0.4)});
  }
  const double gu = rng.uniform(-0.15, 0.15), gv = rng.uniform(-0.15, 0.15);
  const double ph_u = rng.uniform(-0.6, 0.6), ph_v = rng.uniform(-0.6, 0.6);
  const double ph_uv = rng.uniform(-0.4, 0.4), ph_0 = rng.uniform(-std::numbers::pi, std::numbers::pi);

  Phantom ph;
  ph.truth = ComplexImage::Zero(size, size);
  ph.sens.support = BoolImage::Constant(size, size, true);
  const double edge = 2.0 / (size - 1);  // one-pixel ramp
  auto coord = [size](Eigen::Index i) { return -1.0 + 2.0 * static_cast<double>(i) / (size - 1); };
  for (Eigen::Index i = 0; i < size; ++i)
    for (Eigen::Index j = 0; j < size; ++j) {
      const double u = coord(j), v = coord(i);
      const double wb = body.weight(u, v, edge);
      if (wb < 1e-6) continue;
      double mag = body.value;
      for (const auto& e : inner) mag += e.value * e.weight(u, v, edge);
      mag = wb * std::max(mag, 0.05) * (1.0 + gu * u + gv * v);
      const double phase = ph_0 + ph_u * u + ph_v * v + ph_uv * u * v;
      ph.truth(i, j) = std::polar(mag, phase);
    }

  if (num_coils == 1) {
    ph.sens.maps.push_back(ph.sens.support.cast<double>().cast<cdouble>());
    return ph;
  }

  const double width = 0.7;
  const double spin = rng.uniform(0.0, 2.0 * std::numbers::pi);
  std::vector<ComplexImage> raw;
  for (int c = 0; c < num_coils; ++c) {
    const double ang = spin + 2.0 * std::numbers::pi * c / num_coils;
    const double pu = 1.1 * std::cos(ang), pv = 1.1 * std::sin(ang);
    const double cu = rng.uniform(-1.0, 1.0), cv = rng.uniform(-1.0, 1.0);
    ComplexImage m(size, size);
    for (Eigen::Index i = 0; i < size; ++i)
      for (Eigen::Index j = 0; j < size; ++j) {
        const double u = coord(j), v = coord(i);
        const double d2 = (u - pu) * (u - pu) + (v - pv) * (v - pv);
        m(i, j) = std::polar(std::exp(-d2 / (2.0 * width * width)), cu * u + cv * v);
      }
    raw.push_back(std::move(m));
  }
  for (Eigen::Index i = 0; i < size; ++i)
    for (Eigen::Index j = 0; j < size; ++j) {
      double ss = 0.0;
      for (const auto& m : raw) ss += std::norm(m(i, j));
      const double s = ph.sens.support(i, j) ? 1.0 / std::sqrt(ss) : 0.0;
      for (auto& m : raw) m(i, j) *= s;
    }
  ph.sens.maps = std::move(raw);
  return ph;
}

}  // namespace padis
