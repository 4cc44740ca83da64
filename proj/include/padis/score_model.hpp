#pragma once

#include <Eigen/Dense>

#include <atomic>
#include <memory>
#include <string>

namespace padis {

/// A batch of P x P patches as real feature vectors, one column per patch.
/// Column layout: channel 0 (real part) row-major, then channel 1
/// (imaginary part) row-major, 2*P*P entries in total. Positional crops use
/// the same layout with channel 0 = x coordinate, channel 1 = y coordinate.
using PatchBatch = Eigen::MatrixXd;

/// The denoiser D(patch, t, position) behind every sampler.
///
/// Implementations must be reentrant: a fitted model is shared read-only
/// between threads.
class ScoreModel {
 public:
  virtual ~ScoreModel() = default;

  /// Patch edge length the model was built for; 0 means any size.
  virtual int patch_size() const = 0;

  /// Posterior-mean estimate of the clean patches given patches corrupted by
  /// white Gaussian noise of standard deviation `t` per real channel.
  virtual PatchBatch denoise(const PatchBatch& noisy, double t,
                             const PatchBatch& positions) const = 0;

  virtual bool has_vjp() const { return false; }

  /// J^T * cotangent, J the Jacobian of denoise() with respect to `noisy`.
  virtual PatchBatch vjp(const PatchBatch& noisy, double t, const PatchBatch& positions,
                         const PatchBatch& cotangent) const;

  virtual std::string name() const = 0;
};

using ScoreModelPtr = std::shared_ptr<const ScoreModel>;

/// D(x, t) = x. Its score is identically zero.
class IdentityDenoiser final : public ScoreModel {
 public:
  int patch_size() const override { return 0; }
  PatchBatch denoise(const PatchBatch& noisy, double, const PatchBatch&) const override {
    return noisy;
  }
  bool has_vjp() const override { return true; }
  PatchBatch vjp(const PatchBatch&, double, const PatchBatch&,
                 const PatchBatch& cotangent) const override {
    return cotangent;
  }
  std::string name() const override { return "identity"; }
};

/// Wraps a model and counts denoise() invocations.
class CountingModel final : public ScoreModel {
 public:
  explicit CountingModel(ScoreModelPtr inner) : inner_(std::move(inner)) {}

  int patch_size() const override { return inner_->patch_size(); }
  PatchBatch denoise(const PatchBatch& noisy, double t, const PatchBatch& pos) const override {
    calls_.fetch_add(1, std::memory_order_relaxed);
    return inner_->denoise(noisy, t, pos);
  }
  bool has_vjp() const override { return inner_->has_vjp(); }
  PatchBatch vjp(const PatchBatch& noisy, double t, const PatchBatch& pos,
                 const PatchBatch& cot) const override {
    return inner_->vjp(noisy, t, pos, cot);
  }
  std::string name() const override { return inner_->name(); }

  long calls() const { return calls_.load(); }

 private:
  ScoreModelPtr inner_;
  mutable std::atomic<long> calls_{0};
};

}  // namespace padis
