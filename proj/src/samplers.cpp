#include "padis/samplers.hpp"

#include "padis/patch_engine.hpp"
#include "padis/wavelet.hpp"

#include <cmath>

namespace padis {

std::vector<double> make_schedule(const ScheduleParams& p) {
  if (p.steps < 2) throw DomainError("make_schedule: need K >= 2");
  if (!(p.sigma_min > 0.0) || !(p.sigma_min < p.sigma_max))
    throw DomainError("make_schedule: need 0 < sigma_min < sigma_max");
  if (!(p.rho > 0.0)) throw DomainError("make_schedule: need rho > 0");
  const double inv_rho = 1.0 / p.rho;
  const double hi = std::pow(p.sigma_max, inv_rho);
  const double lo = std::pow(p.sigma_min, inv_rho);
  std::vector<double> t(p.steps);
  for (int k = 0; k < p.steps; ++k) {
    const double frac = static_cast<double>(k) / static_cast<double>(p.steps - 1);
    t[k] = std::pow(hi + frac * (lo - hi), p.rho);
  }
  // The pow round trip is not exact; the formula's endpoints are.
  t.front() = p.sigma_max;
  t.back() = p.sigma_min;
  return t;
}

ComplexImage ve_dps_reconstruct(const KSpace& y, const CoilSensitivities& sens,
                                const ScoreModel& model, const ScheduleParams& sched,
                                const DpsConfig& cfg,
                                const std::function<void(const DpsTrace&)>& trace) {
  if (!(cfg.zeta > 0.0)) throw DomainError("ve_dps: zeta must be positive");
  if (cfg.inner_loops < 1) throw DomainError("ve_dps: need at least one inner loop");
  if (model.patch_size() != 0 && model.patch_size() != cfg.patch_size)
    throw DimensionError("ve_dps: prior patch size " + std::to_string(model.patch_size()) +
                         " differs from sampler patch size " + std::to_string(cfg.patch_size));
  if (cfg.jacobian == JacobianMode::exact_vjp && !model.has_vjp())
    throw DomainError("ve_dps: exact-vjp mode needs a model with vjp");
  require_dims(y.rows() == y.cols(), "ve_dps: image must be square");

  const PadSpec spec = PadSpec::make(static_cast<int>(y.rows()), cfg.pad, cfg.patch_size);
  const std::vector<double> ts = make_schedule(sched);
  const PositionalEncoding enc = make_positional_encoding(spec);
  const int np = spec.padded_size();
  Rng rng(cfg.seed);

  ComplexImage x = pad_image(zero_filled_adjoint(y, sens), spec);
  ComplexImage eps(np, np);
  const int last = sched.steps - 1;
  for (int k = 0; k <= last; ++k) {
    const double t = ts[k];
    const double alpha = 0.5 * t * t;
    for (int j = 0; j < cfg.inner_loops; ++j) {
      for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = rng.complex_normal();
      const ComplexImage noisy = x + t * eps;
      const PatchGrid grid = make_grid(spec, sample_offset(spec, rng));
      const ComplexImage denoised = patch_denoise(noisy, t, model, grid, enc);
      const ComplexImage score = (denoised - x) / (t * t);

      const KSpace residual = y - apply_forward(crop_image(denoised, spec), sens, y.mask);
      const double sse = squared_norm(residual);
      if (sse > 0.0) {
        ComplexImage g = pad_image(ComplexImage(-2.0 * apply_adjoint(residual, sens)), spec);
        if (cfg.jacobian == JacobianMode::exact_vjp)
          g = patch_denoise_vjp(noisy, t, model, grid, enc, g);
        x -= (cfg.zeta / std::sqrt(sse)) * g;
      }
      if (k < last)
        x += (0.5 * alpha) * score + std::sqrt(alpha) * eps;
      else
        x += (0.5 * alpha) * score;

      if (!x.allFinite())
        throw DivergedError("ve_dps: non-finite iterate at level " + std::to_string(k), k);
      if (trace) trace({k, j, t, sse});
    }
  }
  return crop_image(x, spec);
}

double estimate_lipschitz(const CoilSensitivities& sens, const SamplingMask& mask, int iters,
                          std::uint64_t seed) {
  Rng rng(seed);
  ComplexImage v = random_complex_image(sens.rows(), sens.cols(), rng);
  double lambda = 0.0;
  for (int i = 0; i < iters; ++i) {
    const double nv = std::sqrt(v.abs2().sum());
    if (nv == 0.0) return 0.0;
    v /= nv;
    const ComplexImage w = apply_adjoint(apply_forward(v, sens, mask), sens);
    lambda = (v.conjugate() * w).sum().real();
    v = w;
  }
  return lambda;
}

double wavelet_detail_l1(const ComplexImage& coeffs, int levels) {
  const Eigen::Index ar = coeffs.rows() >> levels;
  const Eigen::Index ac = coeffs.cols() >> levels;
  return coeffs.abs().sum() - coeffs.topLeftCorner(ar, ac).abs().sum();
}

ComplexImage soft_threshold_details(const ComplexImage& coeffs, int levels, double threshold) {
  const Eigen::Index ar = coeffs.rows() >> levels;
  const Eigen::Index ac = coeffs.cols() >> levels;
  ComplexImage out = coeffs;
  for (Eigen::Index r = 0; r < out.rows(); ++r)
    for (Eigen::Index c = 0; c < out.cols(); ++c) {
      if (r < ar && c < ac) continue;
      const double mag = std::abs(out(r, c));
      out(r, c) = mag > threshold ? out(r, c) * ((mag - threshold) / mag) : cdouble(0.0);
    }
  return out;
}

IstaResult ista_l1_wavelet(const KSpace& y, const CoilSensitivities& sens, const IstaOptions& opts) {
  if (!(opts.lambda >= 0.0)) throw DomainError("ista: lambda must be non-negative");
  if (!is_power_of_two(y.rows()) || !is_power_of_two(y.cols()))
    throw DimensionError("ista: image sides must be powers of two");
  if ((y.rows() >> opts.levels) < 1 || (y.cols() >> opts.levels) < 1)
    throw DimensionError("ista: too many wavelet levels for image size");

  const double lip = estimate_lipschitz(sens, y.mask, opts.power_iters, opts.seed) * 1.01;
  IstaResult res;
  res.step = lip > 0.0 ? 1.0 / lip : 1.0;
  const double thresh = res.step * opts.lambda;

  ComplexImage x = zero_filled_adjoint(y, sens);
  for (int it = 0; it < opts.iters; ++it) {
    const KSpace r = y - apply_forward(x, sens, y.mask);
    const ComplexImage z = x + res.step * apply_adjoint(r, sens);
    const ComplexImage c = soft_threshold_details(haar_forward(z, opts.levels), opts.levels, thresh);
    x = haar_inverse(c, opts.levels);
    const double data = 0.5 * squared_norm(y - apply_forward(x, sens, y.mask));
    res.objective.push_back(data + opts.lambda * wavelet_detail_l1(c, opts.levels));
  }
  res.image = std::move(x);
  return res;
}

}  // namespace padis
