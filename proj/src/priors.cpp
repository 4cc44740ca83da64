#include "padis/priors.hpp"

#include <algorithm>
#include <cmath>

namespace padis {

PatchBatch ScoreModel::vjp(const PatchBatch&, double, const PatchBatch&, const PatchBatch&) const {
  throw DomainError("model '" + name() + "' does not provide a vector-Jacobian product");
}

IsotropicGaussianPrior::IsotropicGaussianPrior(int patch_size, Eigen::VectorXd mean, double variance)
    : patch_size_(patch_size), mean_(std::move(mean)), variance_(variance) {
  if (!(variance > 0.0)) throw DomainError("IsotropicGaussianPrior: variance must be positive");
  require_dims(mean_.size() == 2 * patch_size * patch_size,
               "IsotropicGaussianPrior: mean length is not 2*P*P");
}

IsotropicGaussianPrior IsotropicGaussianPrior::constant(int patch_size, cdouble mean,
                                                        double variance) {
  const int half = patch_size * patch_size;
  Eigen::VectorXd m(2 * half);
  m.head(half).setConstant(mean.real());
  m.tail(half).setConstant(mean.imag());
  return {patch_size, std::move(m), variance};
}

PatchBatch IsotropicGaussianPrior::denoise(const PatchBatch& noisy, double t,
                                           const PatchBatch&) const {
  require_dims(noisy.rows() == mean_.size(), "gaussian_denoise: patch size mismatch");
  if (!(t > 0.0)) throw DomainError("gaussian_denoise: t must be positive");
  const double s = shrinkage(t);
  return (s * (noisy.colwise() - mean_)).colwise() + mean_;
}

PatchBatch IsotropicGaussianPrior::vjp(const PatchBatch& noisy, double t, const PatchBatch&,
                                       const PatchBatch& cotangent) const {
  require_dims(noisy.rows() == mean_.size() && cotangent.rows() == noisy.rows() &&
                   cotangent.cols() == noisy.cols(),
               "gaussian vjp: shape mismatch");
  return shrinkage(t) * cotangent;
}

LinearPatchDenoiser::LinearPatchDenoiser(int patch_size, std::vector<double> sigmas,
                                         std::vector<Eigen::MatrixXd> weights,
                                         std::vector<Eigen::VectorXd> biases)
    : patch_size_(patch_size),
      sigmas_(std::move(sigmas)),
      weights_(std::move(weights)),
      biases_(std::move(biases)) {
  const auto dim = 2 * patch_size * patch_size;
  if (sigmas_.empty() || sigmas_.size() != weights_.size() || sigmas_.size() != biases_.size())
    throw FormatError("linear-patch: sigmas, weights and biases differ in count");
  for (std::size_t l = 0; l < sigmas_.size(); ++l) {
    if (!(sigmas_[l] > 0.0)) throw FormatError("linear-patch: sigmas must be positive");
    if (l > 0 && !(sigmas_[l] > sigmas_[l - 1]))
      throw FormatError("linear-patch: sigmas must be strictly increasing");
    if (weights_[l].rows() != dim || weights_[l].cols() != dim || biases_[l].size() != dim)
      throw FormatError("linear-patch: weights/biases do not match patch size");
  }
}

PatchBatch LinearPatchDenoiser::denoise(const PatchBatch& noisy, double t, const PatchBatch&) const {
  require_dims(noisy.rows() == 2 * patch_size_ * patch_size_, "linear-patch: patch size mismatch");
  auto apply = [&](std::size_t l) -> PatchBatch {
    return (weights_[l] * noisy).colwise() + biases_[l];
  };
  if (t <= sigmas_.front()) return apply(0);
  if (t >= sigmas_.back()) return apply(sigmas_.size() - 1);
  const auto hi = static_cast<std::size_t>(
      std::upper_bound(sigmas_.begin(), sigmas_.end(), t) - sigmas_.begin());
  const std::size_t lo = hi - 1;
  const double w = (std::log(t) - std::log(sigmas_[lo])) /
                   (std::log(sigmas_[hi]) - std::log(sigmas_[lo]));
  return (1.0 - w) * apply(lo) + w * apply(hi);
}

}  // namespace padis
