#pragma once

#include "padis/core.hpp"
#include "padis/mri_forward.hpp"
#include "padis/score_model.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace padis {

struct ScheduleParams {
  int steps = 104;  // K
  double sigma_min = 0.003;
  double sigma_max = 10.0;
  double rho = 7.0;
};

/// t_k = (s_max^(1/rho) + k/(K-1) (s_min^(1/rho) - s_max^(1/rho)))^rho, k = 0..K-1.
/// The endpoints are returned as s_max and s_min exactly.
std::vector<double> make_schedule(const ScheduleParams& p);

enum class JacobianMode { identity, exact_vjp };

struct DpsConfig {
  double zeta = 3.0;      // data-consistency weight
  int inner_loops = 10;   // L
  int pad = 64;           // M; 0 selects the fixed whole-canvas tiling
  int patch_size = 64;    // P
  JacobianMode jacobian = JacobianMode::identity;
  std::uint64_t seed = 0;
};

struct DpsTrace {
  int level;
  int inner;
  double t;
  double sse;
};

/// Patch-based VE diffusion posterior sampling. For each of K noise levels
/// and L inner loops: inject noise, denoise one randomly offset partition,
/// take a normalized data-consistency step against crop(D), then a score
/// step with the same noise draw re-added (omitted on the last level).
ComplexImage ve_dps_reconstruct(const KSpace& y, const CoilSensitivities& sens,
                                const ScoreModel& model, const ScheduleParams& sched,
                                const DpsConfig& cfg,
                                const std::function<void(const DpsTrace&)>& trace = {});

/// A^H y; the classical baseline and the sampler's warm start.
inline ComplexImage zero_filled_adjoint(const KSpace& y, const CoilSensitivities& sens) {
  return apply_adjoint(y, sens);
}

/// Largest eigenvalue of A^H A by power iteration.
double estimate_lipschitz(const CoilSensitivities& sens, const SamplingMask& mask, int iters,
                          std::uint64_t seed);

struct IstaOptions {
  double lambda = 0.0;
  int iters = 200;
  int levels = 3;  // Haar levels; the approximation band is never thresholded
  int power_iters = 30;
  std::uint64_t seed = 0;
};

struct IstaResult {
  ComplexImage image;
  std::vector<double> objective;  // after each iteration, 0.5||y - Ax||^2 + lambda ||Wx||_1
  double step = 0.0;
};

/// x <- W^H soft(W(x + tau A^H(y - Ax)), tau lambda), starting from A^H y.
IstaResult ista_l1_wavelet(const KSpace& y, const CoilSensitivities& sens, const IstaOptions& opts);

/// l1 norm of the detail bands only.
double wavelet_detail_l1(const ComplexImage& coeffs, int levels);
ComplexImage soft_threshold_details(const ComplexImage& coeffs, int levels, double threshold);

}  // namespace padis
