#pragma once

#include "padis/core.hpp"
#include "padis/score_model.hpp"

#include <filesystem>
#include <optional>
#include <vector>

namespace padis {

/// x ~ N(mu, sigma0^2 I) on each patch. denoise(x, t) = mu + s (x - mu) with
/// s = sigma0^2 / (sigma0^2 + t^2).
class IsotropicGaussianPrior final : public ScoreModel {
 public:
  IsotropicGaussianPrior(int patch_size, Eigen::VectorXd mean, double variance);
  static IsotropicGaussianPrior constant(int patch_size, cdouble mean, double variance);

  int patch_size() const override { return patch_size_; }
  PatchBatch denoise(const PatchBatch& noisy, double t, const PatchBatch& positions) const override;
  bool has_vjp() const override { return true; }
  PatchBatch vjp(const PatchBatch& noisy, double t, const PatchBatch& positions,
                 const PatchBatch& cotangent) const override;
  std::string name() const override { return "gaussian"; }

  double shrinkage(double t) const { return variance_ / (variance_ + t * t); }
  const Eigen::VectorXd& mean() const { return mean_; }
  double variance() const { return variance_; }

 private:
  int patch_size_;
  Eigen::VectorXd mean_;
  double variance_;
};

enum class PositionConditioning { none, feature_augmented };
enum class CovarianceType { full, diagonal };

/// Gaussian mixture over 2*P*P real patch vectors. With feature-augmented
/// position conditioning each component is a joint Gaussian over the patch
/// and the 2-vector encoding at the patch center; denoising conditions on
/// the (noise-free) position.
class GmmPatchPrior final : public ScoreModel {
 public:
  struct Component {
    double weight = 0.0;
    Eigen::VectorXd mean;        // feature mean (patch, then position if augmented)
    Eigen::MatrixXd covariance;  // feature covariance
  };

  GmmPatchPrior(int patch_size, std::vector<Component> components,
                PositionConditioning conditioning = PositionConditioning::none);

  int patch_size() const override { return patch_size_; }
  PatchBatch denoise(const PatchBatch& noisy, double t, const PatchBatch& positions) const override;
  bool has_vjp() const override { return true; }
  PatchBatch vjp(const PatchBatch& noisy, double t, const PatchBatch& positions,
                 const PatchBatch& cotangent) const override;
  std::string name() const override { return "gmm"; }

  /// log p_t(x) = log sum_k w_k N(x; m_k(pos), C_k + t^2 I), one entry per column.
  Eigen::VectorXd log_density(const PatchBatch& noisy, double t, const PatchBatch& positions) const;

  int num_components() const { return static_cast<int>(components_.size()); }
  int dim() const { return 2 * patch_size_ * patch_size_; }
  PositionConditioning conditioning() const { return conditioning_; }
  const std::vector<Component>& components() const { return components_; }

 private:
  // Per-component quantities for the patch block after conditioning on position.
  struct Conditional {
    Eigen::MatrixXd basis;       // eigenvectors of the conditional covariance
    Eigen::VectorXd eigvals;     // its eigenvalues
    Eigen::VectorXd mean;        // patch mean (before the position shift)
    Eigen::MatrixXd gain;        // Sigma_xp Sigma_pp^{-1}, dim x 2 (augmented only)
    Eigen::VectorXd pos_mean;    // m_p
    Eigen::Matrix2d pos_cov_inv; // Sigma_pp^{-1}
    double pos_log_norm = 0.0;   // -log(2 pi) - 0.5 log det Sigma_pp
  };

  struct Evaluation {
    Eigen::MatrixXd gamma;                   // K x n responsibilities
    Eigen::VectorXd log_density;             // n
    std::vector<Eigen::MatrixXd> posterior;  // K of dim x n, mu_k
    std::vector<Eigen::MatrixXd> gradient;   // K of dim x n, g_k = -C_k^{-1} d_k
  };

  Evaluation evaluate(const PatchBatch& noisy, double t, const PatchBatch& positions,
                      bool keep_terms) const;
  Eigen::MatrixXd centers(const PatchBatch& positions) const;

  int patch_size_;
  std::vector<Component> components_;
  PositionConditioning conditioning_;
  std::vector<Conditional> cond_;
};

struct EmOptions {
  int num_components = 4;
  int max_iters = 100;
  double tol = 1e-6;
  /// Eigenvalue floor relative to mean per-coordinate data variance.
  double cov_floor_rel = 1e-6;
  CovarianceType covariance = CovarianceType::full;
  PositionConditioning conditioning = PositionConditioning::none;
};

/// Result of EM on arbitrary-dimension feature vectors.
struct MixtureFit {
  std::vector<GmmPatchPrior::Component> components;
  std::vector<double> log_likelihood;  // mean per-sample log-likelihood after each M-step
  double cov_floor = 0.0;
  bool degenerate = false;
  bool converged = false;
};

/// EM for a Gaussian mixture on the columns of `features`. Initial means by
/// k-means++ seeding; covariance eigenvalues floored at
/// cov_floor_rel * (mean per-coordinate variance).
MixtureFit fit_gaussian_mixture(const Eigen::MatrixXd& features, const EmOptions& opts, Rng& rng);

struct EmResult {
  GmmPatchPrior prior;
  std::vector<double> log_likelihood;
  bool degenerate = false;
  bool converged = false;
};

/// Fits a patch prior. With feature-augmented conditioning `positions` must
/// hold the positional crops matching each patch column.
EmResult fit_gmm_em(const PatchBatch& patches, int patch_size, const EmOptions& opts, Rng& rng,
                    const PatchBatch& positions = {});

/// The 2-vector encoding at the center of each positional crop.
Eigen::MatrixXd position_centers(const PatchBatch& positions, int patch_size);

/// External patch denoiser: per noise level sigma_l an affine map
/// D(x) = W_l x + b_l, linearly interpolated in log sigma between levels and
/// clamped at the ends. Exposes no vjp.
class LinearPatchDenoiser final : public ScoreModel {
 public:
  LinearPatchDenoiser(int patch_size, std::vector<double> sigmas,
                      std::vector<Eigen::MatrixXd> weights, std::vector<Eigen::VectorXd> biases);

  int patch_size() const override { return patch_size_; }
  PatchBatch denoise(const PatchBatch& noisy, double t, const PatchBatch& positions) const override;
  std::string name() const override { return "linear-patch"; }

 private:
  int patch_size_;
  std::vector<double> sigmas_;
  std::vector<Eigen::MatrixXd> weights_;
  std::vector<Eigen::VectorXd> biases_;
};

/// Hides the vjp capability of a wrapped model.
class NoVjpModel final : public ScoreModel {
 public:
  explicit NoVjpModel(ScoreModelPtr inner) : inner_(std::move(inner)) {}
  int patch_size() const override { return inner_->patch_size(); }
  PatchBatch denoise(const PatchBatch& noisy, double t, const PatchBatch& pos) const override {
    return inner_->denoise(noisy, t, pos);
  }
  std::string name() const override { return inner_->name(); }

 private:
  ScoreModelPtr inner_;
};

}  // namespace padis
