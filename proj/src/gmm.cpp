#include "padis/priors.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace padis {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

// Column-wise log-sum-exp of a K x n matrix.
Eigen::VectorXd logsumexp_cols(const Eigen::MatrixXd& a) {
  Eigen::VectorXd out(a.cols());
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    const double mx = a.col(j).maxCoeff();
    out(j) = std::isfinite(mx) ? mx + std::log((a.col(j).array() - mx).exp().sum()) : mx;
  }
  return out;
}

Eigen::MatrixXd floor_eigenvalues(const Eigen::MatrixXd& cov, double floor_value) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (cov + cov.transpose()));
  const Eigen::VectorXd lam = eig.eigenvalues().cwiseMax(floor_value);
  return eig.eigenvectors() * lam.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

Eigen::MatrixXd position_centers(const PatchBatch& positions, int patch_size) {
  const int half = patch_size * patch_size;
  require_dims(positions.rows() == 2 * half, "position_centers: crop size mismatch");
  Eigen::MatrixXd out(2, positions.cols());
  out.row(0) = positions.topRows(half).colwise().mean();
  out.row(1) = positions.bottomRows(half).colwise().mean();
  return out;
}

GmmPatchPrior::GmmPatchPrior(int patch_size, std::vector<Component> components,
                             PositionConditioning conditioning)
    : patch_size_(patch_size), components_(std::move(components)), conditioning_(conditioning) {
  if (components_.empty()) throw DomainError("GmmPatchPrior: no components (unfitted prior)");
  const int d = dim();
  const int feat = conditioning_ == PositionConditioning::feature_augmented ? d + 2 : d;
  double wsum = 0.0;
  for (const auto& c : components_) {
    if (c.mean.size() != feat || c.covariance.rows() != feat || c.covariance.cols() != feat)
      throw DimensionError("GmmPatchPrior: component dimension does not match patch size");
    if (!(c.weight >= 0.0)) throw DomainError("GmmPatchPrior: negative mixture weight");
    wsum += c.weight;
  }
  if (std::abs(wsum - 1.0) > 1e-9) throw DomainError("GmmPatchPrior: weights do not sum to 1");

  cond_.reserve(components_.size());
  for (const auto& c : components_) {
    Conditional k;
    Eigen::MatrixXd sxx = c.covariance.topLeftCorner(d, d);
    k.mean = c.mean.head(d);
    if (conditioning_ == PositionConditioning::feature_augmented) {
      const Eigen::MatrixXd sxp = c.covariance.topRightCorner(d, 2);
      const Eigen::Matrix2d spp = c.covariance.bottomRightCorner(2, 2);
      k.pos_cov_inv = spp.inverse();
      k.gain = sxp * k.pos_cov_inv;
      k.pos_mean = c.mean.tail(2);
      k.pos_log_norm = -kLog2Pi - 0.5 * std::log(spp.determinant());
      sxx -= k.gain * sxp.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (sxx + sxx.transpose()));
    k.basis = eig.eigenvectors();
    k.eigvals = eig.eigenvalues().cwiseMax(0.0);
    cond_.push_back(std::move(k));
  }
}

Eigen::MatrixXd GmmPatchPrior::centers(const PatchBatch& positions) const {
  return position_centers(positions, patch_size_);
}

GmmPatchPrior::Evaluation GmmPatchPrior::evaluate(const PatchBatch& noisy, double t,
                                                  const PatchBatch& positions,
                                                  bool keep_terms) const {
  require_dims(noisy.rows() == dim(), "gmm: patch size mismatch");
  if (!(t > 0.0)) throw DomainError("gmm_denoise: t must be positive");
  const bool augmented = conditioning_ == PositionConditioning::feature_augmented;
  Eigen::MatrixXd pos_centers;
  if (augmented) {
    require_dims(positions.cols() == noisy.cols(), "gmm: positions missing for augmented prior");
    pos_centers = centers(positions);
  }
  const auto n = noisy.cols();
  const auto nk = static_cast<Eigen::Index>(components_.size());
  const double t2 = t * t;

  Evaluation ev;
  Eigen::MatrixXd logp(nk, n);
  if (keep_terms) {
    ev.posterior.resize(nk);
    ev.gradient.resize(nk);
  }
  for (Eigen::Index k = 0; k < nk; ++k) {
    const auto& c = cond_[k];
    Eigen::MatrixXd diff = noisy.colwise() - c.mean;
    Eigen::RowVectorXd pos_term = Eigen::RowVectorXd::Zero(n);
    if (augmented) {
      const Eigen::MatrixXd dp = pos_centers.colwise() - c.pos_mean;
      diff -= c.gain * dp;
      pos_term = (dp.array() * (c.pos_cov_inv * dp).array()).colwise().sum() * -0.5;
      pos_term.array() += c.pos_log_norm;
    }
    const Eigen::VectorXd inv = (c.eigvals.array() + t2).inverse();
    const Eigen::MatrixXd z = c.basis.transpose() * diff;
    const double log_det = (c.eigvals.array() + t2).log().sum();
    const Eigen::RowVectorXd quad = (z.array().square().colwise() * inv.array()).colwise().sum();
    logp.row(k) = (-0.5 * (static_cast<double>(dim()) * kLog2Pi + log_det) +
                   std::log(components_[k].weight)) +
                  (-0.5 * quad.array()) + pos_term.array();
    if (keep_terms) {
      ev.gradient[k] = -(c.basis * (z.array().colwise() * inv.array()).matrix());
      ev.posterior[k] = noisy + t2 * ev.gradient[k];
    }
  }
  ev.log_density = logsumexp_cols(logp);
  ev.gamma = (logp.rowwise() - ev.log_density.transpose()).array().exp();
  return ev;
}

PatchBatch GmmPatchPrior::denoise(const PatchBatch& noisy, double t,
                                  const PatchBatch& positions) const {
  const Evaluation ev = evaluate(noisy, t, positions, true);
  PatchBatch out = PatchBatch::Zero(noisy.rows(), noisy.cols());
  for (std::size_t k = 0; k < ev.posterior.size(); ++k)
    out += (ev.posterior[k].array().rowwise() * ev.gamma.row(k).array()).matrix();
  return out;
}

// J = sum_k gamma_k B_k + sum_k mu_k grad(gamma_k)^T with
// B_k = Sigma_k (Sigma_k + t^2 I)^{-1} and grad(gamma_k) = gamma_k (g_k - g_bar).
PatchBatch GmmPatchPrior::vjp(const PatchBatch& noisy, double t, const PatchBatch& positions,
                              const PatchBatch& cotangent) const {
  require_dims(cotangent.rows() == noisy.rows() && cotangent.cols() == noisy.cols(),
               "gmm vjp: cotangent shape mismatch");
  const Evaluation ev = evaluate(noisy, t, positions, true);
  const double t2 = t * t;
  const auto n = noisy.cols();
  PatchBatch out = PatchBatch::Zero(noisy.rows(), n);
  PatchBatch g_bar = PatchBatch::Zero(noisy.rows(), n);
  PatchBatch den = PatchBatch::Zero(noisy.rows(), n);
  for (std::size_t k = 0; k < ev.posterior.size(); ++k) {
    const auto& c = cond_[k];
    const Eigen::ArrayXd shrink = c.eigvals.array() / (c.eigvals.array() + t2);
    const Eigen::MatrixXd bv =
        c.basis * ((c.basis.transpose() * cotangent).array().colwise() * shrink).matrix();
    const Eigen::RowVectorXd mu_dot_v =
        (ev.posterior[k].array() * cotangent.array()).colwise().sum();
    const Eigen::ArrayXXd gk = ev.gamma.row(k).replicate(noisy.rows(), 1).array();
    out += (gk * bv.array()).matrix();
    out += (gk * ev.gradient[k].array() *
            mu_dot_v.replicate(noisy.rows(), 1).array())
               .matrix();
    g_bar += (gk * ev.gradient[k].array()).matrix();
    den += (gk * ev.posterior[k].array()).matrix();
  }
  const Eigen::RowVectorXd den_dot_v = (den.array() * cotangent.array()).colwise().sum();
  out -= (g_bar.array() * den_dot_v.replicate(noisy.rows(), 1).array()).matrix();
  return out;
}

Eigen::VectorXd GmmPatchPrior::log_density(const PatchBatch& noisy, double t,
                                           const PatchBatch& positions) const {
  return evaluate(noisy, t, positions, false).log_density;
}

namespace {

struct Estep {
  Eigen::MatrixXd gamma;  // K x n
  double mean_loglik;
};

Estep expectation(const Eigen::MatrixXd& x, const std::vector<GmmPatchPrior::Component>& comps) {
  const auto n = x.cols();
  const auto d = static_cast<double>(x.rows());
  const auto nk = static_cast<Eigen::Index>(comps.size());
  Eigen::MatrixXd logp(nk, n);
  for (Eigen::Index k = 0; k < nk; ++k) {
    const auto& c = comps[k];
    if (c.weight <= 0.0) {
      logp.row(k).setConstant(-std::numeric_limits<double>::infinity());
      continue;
    }
    Eigen::LLT<Eigen::MatrixXd> llt(c.covariance);
    if (llt.info() != Eigen::Success) throw FactorizationError("EM: covariance not positive definite");
    const Eigen::MatrixXd z = llt.matrixL().solve(x.colwise() - c.mean);
    const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    logp.row(k) = (-0.5 * z.array().square().colwise().sum()) +
                  (std::log(c.weight) - 0.5 * (d * kLog2Pi + log_det));
  }
  const Eigen::VectorXd lse = logsumexp_cols(logp);
  Estep e;
  e.gamma = (logp.rowwise() - lse.transpose()).array().exp();
  e.mean_loglik = lse.mean();
  return e;
}

}  // namespace

MixtureFit fit_gaussian_mixture(const Eigen::MatrixXd& x, const EmOptions& opts, Rng& rng) {
  const auto n = x.cols();
  const auto d = x.rows();
  const int nk = opts.num_components;
  if (nk < 1) throw DomainError("fit_gmm_em: need at least one component");
  if (n < nk) throw DomainError("fit_gmm_em: fewer samples than components");

  const Eigen::VectorXd global_mean = x.rowwise().mean();
  const Eigen::MatrixXd centered = x.colwise() - global_mean;
  const double mean_var = centered.array().square().sum() / static_cast<double>(n * d);

  MixtureFit fit;
  fit.cov_floor = std::max(opts.cov_floor_rel * mean_var, 1e-12);
  const bool diagonal = opts.covariance == CovarianceType::diagonal;
  auto regularize = [&](Eigen::MatrixXd cov) {
    if (diagonal) {
      Eigen::VectorXd diag = cov.diagonal().cwiseMax(fit.cov_floor);
      return Eigen::MatrixXd(diag.asDiagonal());
    }
    return floor_eigenvalues(cov, fit.cov_floor);
  };

  const bool identical = ((x.colwise() - x.col(0)).array() == 0.0).all();
  if (identical || !(mean_var > 0.0)) {
    fit.degenerate = true;
    fit.cov_floor = std::max(opts.cov_floor_rel * (identical ? 0.0 : mean_var), 1e-12);
    fit.components.push_back(
        {1.0, Eigen::VectorXd(x.col(0)), Eigen::MatrixXd::Identity(d, d) * fit.cov_floor});
    fit.log_likelihood.push_back(expectation(x, fit.components).mean_loglik);
    return fit;
  }

  // k-means++ seeding of the means.
  std::vector<Eigen::Index> seeds;
  seeds.push_back(static_cast<Eigen::Index>(rng.uniform_index(n)));
  Eigen::VectorXd d2 = (x.colwise() - x.col(seeds[0])).colwise().squaredNorm();
  while (static_cast<int>(seeds.size()) < nk) {
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      double u = rng.uniform() * total;
      for (pick = 0; pick < n - 1; ++pick) {
        u -= d2(pick);
        if (u < 0.0) break;
      }
    } else {
      pick = static_cast<Eigen::Index>(rng.uniform_index(n));
    }
    seeds.push_back(pick);
    d2 = d2.cwiseMin((x.colwise() - x.col(pick)).colwise().squaredNorm().transpose());
  }

  const Eigen::MatrixXd global_cov =
      regularize(centered * centered.transpose() / static_cast<double>(n));
  for (auto s : seeds) fit.components.push_back({1.0 / nk, x.col(s), global_cov});

  double prev = -std::numeric_limits<double>::infinity();
  Estep e = expectation(x, fit.components);
  for (int it = 0; it < opts.max_iters; ++it) {
    for (int k = 0; k < nk; ++k) {
      auto& c = fit.components[k];
      const double nk_eff = e.gamma.row(k).sum();
      c.weight = nk_eff / static_cast<double>(n);
      if (nk_eff < 1e-10 * static_cast<double>(n)) continue;  // empty component keeps its shape
      c.mean = x * e.gamma.row(k).transpose() / nk_eff;
      const Eigen::MatrixXd dev = x.colwise() - c.mean;
      const Eigen::MatrixXd weighted = dev.array().rowwise() * e.gamma.row(k).array();
      c.covariance = regularize(weighted * dev.transpose() / nk_eff);
    }
    double wsum = 0.0;
    for (const auto& c : fit.components) wsum += c.weight;
    for (auto& c : fit.components) c.weight /= wsum;

    e = expectation(x, fit.components);
    fit.log_likelihood.push_back(e.mean_loglik);
    if (std::isfinite(prev) && std::abs(e.mean_loglik - prev) < opts.tol * std::abs(prev)) {
      fit.converged = true;
      break;
    }
    prev = e.mean_loglik;
  }
  return fit;
}

EmResult fit_gmm_em(const PatchBatch& patches, int patch_size, const EmOptions& opts, Rng& rng,
                    const PatchBatch& positions) {
  require_dims(patches.rows() == 2 * patch_size * patch_size,
               "fit_gmm_em: patches do not match patch size");
  Eigen::MatrixXd features = patches;
  if (opts.conditioning == PositionConditioning::feature_augmented) {
    require_dims(positions.cols() == patches.cols(), "fit_gmm_em: positions missing");
    features.resize(patches.rows() + 2, patches.cols());
    features.topRows(patches.rows()) = patches;
    features.bottomRows(2) = position_centers(positions, patch_size);
  }
  MixtureFit fit = fit_gaussian_mixture(features, opts, rng);
  std::vector<GmmPatchPrior::Component> comps;
  for (const auto& c : fit.components)
    if (c.weight > 0.0) comps.push_back(c);
  double wsum = 0.0;
  for (const auto& c : comps) wsum += c.weight;
  for (auto& c : comps) c.weight /= wsum;
  return {GmmPatchPrior(patch_size, std::move(comps), opts.conditioning),
          std::move(fit.log_likelihood), fit.degenerate, fit.converged};
}

}  // namespace padis
