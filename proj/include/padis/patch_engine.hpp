#pragma once

// Zero padding, offset partition grids, positional encodings, patch
// extraction and residual reassembly.
//
// Canvas geometry: an N x N image padded by M per side gives an N' x N'
// canvas, N' = N + 2M, tiled by n = N'/P patches per axis. A grid at offset
// (a, b) places patch (i, j) at [iP + a, iP + a + P) x [jP + b, jP + b + P).
// Those indices live on a canvas extended by a guard band of G = M pixels
// past the bottom/right edge; the guard band is the periodic continuation of
// the canvas, so guard pixel N' + d aliases canvas pixel d. Every grid is
// therefore a disjoint cover of the whole N' x N' canvas.

#include "padis/core.hpp"
#include "padis/score_model.hpp"

#include <vector>

namespace padis {

struct PadSpec {
  int base_size = 0;   // N
  int pad = 0;         // M, per side
  int patch_size = 0;  // P

  /// Validates N' % P == 0 and the sizes themselves.
  static PadSpec make(int base_size, int pad, int patch_size);

  /// Padding M = (k+1)P - N with k = floor(N/P).
  static int minimal_pad(int base_size, int patch_size);

  int padded_size() const { return base_size + 2 * pad; }
  int guard() const { return pad; }
  int patches_per_axis() const { return padded_size() / patch_size; }
  bool randomizes_offsets() const { return pad > 0; }
};

struct PatchOffset {
  int row = 0;
  int col = 0;
  bool operator==(const PatchOffset&) const = default;
};

/// Half-open bounds in guard-extended canvas coordinates.
struct PatchIndex {
  int row_start, row_end, col_start, col_end;
};

struct PatchGrid {
  PatchOffset offset;
  int canvas_size = 0;
  int patch_size = 0;
  std::vector<PatchIndex> patches;  // row-major over (i, j)
};

struct PositionalEncoding {
  RealImage x;  // varies along columns
  RealImage y;  // varies along rows
};

template <typename Scalar>
ComplexImageT<Scalar> pad_image(const ComplexImageT<Scalar>& img, const PadSpec& spec) {
  require_dims(img.rows() == spec.base_size && img.cols() == spec.base_size,
               "pad_image: image is not N x N for this PadSpec");
  const int np = spec.padded_size();
  ComplexImageT<Scalar> out = ComplexImageT<Scalar>::Zero(np, np);
  out.block(spec.pad, spec.pad, spec.base_size, spec.base_size) = img;
  return out;
}

template <typename Scalar>
ComplexImageT<Scalar> crop_image(const ComplexImageT<Scalar>& padded, const PadSpec& spec) {
  require_dims(padded.rows() == spec.padded_size() && padded.cols() == spec.padded_size(),
               "crop_image: image is not N' x N' for this PadSpec");
  return padded.block(spec.pad, spec.pad, spec.base_size, spec.base_size);
}

inline ComplexImage pad_image(const ComplexImage& img, const PadSpec& spec) {
  return pad_image<double>(img, spec);
}
inline ComplexImage crop_image(const ComplexImage& padded, const PadSpec& spec) {
  return crop_image<double>(padded, spec);
}

PositionalEncoding make_positional_encoding(int canvas_size);
inline PositionalEncoding make_positional_encoding(const PadSpec& spec) {
  return make_positional_encoding(spec.padded_size());
}

PatchGrid make_grid(const PadSpec& spec, PatchOffset offset);

/// Uniform over [0, M-1]^2; (0, 0) when M = 0.
PatchOffset sample_offset(const PadSpec& spec, Rng& rng);

PatchBatch extract_patches(const ComplexImage& canvas, const PatchGrid& grid);
PatchBatch extract_positions(const PositionalEncoding& enc, const PatchGrid& grid);

/// Writes patch columns back into an image (pure placement, no residuals).
void place_patches(ComplexImage& canvas, const PatchGrid& grid, const PatchBatch& patches);

/// output = noisy + sum over patches of (denoised - noisy patch).
ComplexImage reassemble_denoised(const ComplexImage& noisy, const PatchGrid& grid,
                                 const PatchBatch& denoised);

/// Denoises every patch of `grid` with one model call and reassembles.
ComplexImage patch_denoise(const ComplexImage& noisy, double t, const ScoreModel& model,
                           const PatchGrid& grid, const PositionalEncoding& enc);

/// J^T v for the patch denoiser above; J = I + sum_p (J_p - I) on the canvas.
ComplexImage patch_denoise_vjp(const ComplexImage& noisy, double t, const ScoreModel& model,
                               const PatchGrid& grid, const PositionalEncoding& enc,
                               const ComplexImage& cotangent);

/// (D(x) - x) / t^2 over one partition at the given offset.
ComplexImage patch_score_at(const ComplexImage& x_padded, double t, const ScoreModel& model,
                            const PadSpec& spec, PatchOffset offset);

/// Same, over one partition with a randomly drawn offset.
ComplexImage aggregate_patch_score(const ComplexImage& x_padded, double t, const ScoreModel& model,
                                   const PadSpec& spec, Rng& rng);

struct TrainingPatch {
  Eigen::VectorXd data;      // 2*P*P, PatchBatch column layout
  Eigen::VectorXd position;  // matching positional-encoding crop
  int size = 0;
  int image = 0;
  int row = 0;
  int col = 0;
};

/// Per-side zero padding applied to training images: N/4.
inline int training_pad(int base_size) { return base_size / 4; }

/// Random-size, random-location patches from zero-padded training images.
/// Images are square N x N and unpadded; each is padded by training_pad(N).
std::vector<TrainingPatch> sample_training_patches(const std::vector<ComplexImage>& images,
                                                   const std::vector<int>& sizes,
                                                   const std::vector<double>& probs, int count,
                                                   Rng& rng);

/// Columns of a PatchBatch from training patches of one size.
PatchBatch to_batch(const std::vector<TrainingPatch>& patches);

}  // namespace padis
