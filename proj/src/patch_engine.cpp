#include "padis/patch_engine.hpp"

#include <cmath>
#include <numeric>

namespace padis {

PadSpec PadSpec::make(int base_size, int pad, int patch_size) {
  if (base_size < 1 || patch_size < 1 || pad < 0)
    throw DomainError("PadSpec: sizes must be positive and padding non-negative");
  PadSpec spec{base_size, pad, patch_size};
  if (spec.padded_size() % patch_size != 0)
    throw DomainError("PadSpec: padded size " + std::to_string(spec.padded_size()) +
                      " is not divisible by patch size " + std::to_string(patch_size));
  return spec;
}

int PadSpec::minimal_pad(int base_size, int patch_size) {
  const int k = base_size / patch_size;
  return (k + 1) * patch_size - base_size;
}

PositionalEncoding make_positional_encoding(int canvas_size) {
  if (canvas_size < 2) throw DomainError("positional encoding needs at least 2 pixels");
  Eigen::ArrayXd ramp(canvas_size);
  for (int i = 0; i < canvas_size; ++i)
    ramp(i) = -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(canvas_size - 1);
  ramp(0) = -1.0;
  ramp(canvas_size - 1) = 1.0;
  PositionalEncoding enc;
  enc.x = ramp.transpose().replicate(canvas_size, 1);
  enc.y = ramp.replicate(1, canvas_size);
  return enc;
}

PatchGrid make_grid(const PadSpec& spec, PatchOffset offset) {
  const int m = spec.pad;
  const bool origin = offset.row == 0 && offset.col == 0;
  if (!origin && (offset.row < 0 || offset.col < 0 || offset.row >= m || offset.col >= m))
    throw DomainError("make_grid: offset outside [0, M-1]^2");
  PatchGrid grid;
  grid.offset = offset;
  grid.canvas_size = spec.padded_size();
  grid.patch_size = spec.patch_size;
  const int n = spec.patches_per_axis();
  const int p = spec.patch_size;
  grid.patches.reserve(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      grid.patches.push_back(
          {i * p + offset.row, i * p + offset.row + p, j * p + offset.col, j * p + offset.col + p});
  return grid;
}

PatchOffset sample_offset(const PadSpec& spec, Rng& rng) {
  if (!spec.randomizes_offsets()) return {};
  const auto m = static_cast<std::uint64_t>(spec.pad);
  const int a = static_cast<int>(rng.uniform_index(m));
  const int b = static_cast<int>(rng.uniform_index(m));
  return {a, b};
}

namespace {

void check_canvas(Eigen::Index rows, Eigen::Index cols, const PatchGrid& grid) {
  require_dims(rows == grid.canvas_size && cols == grid.canvas_size,
               "patch grid does not match canvas size");
}

inline int wrap(int coord, int size) { return coord >= size ? coord - size : coord; }

}  // namespace

PatchBatch extract_patches(const ComplexImage& canvas, const PatchGrid& grid) {
  check_canvas(canvas.rows(), canvas.cols(), grid);
  const int p = grid.patch_size;
  const int s = grid.canvas_size;
  const int half = p * p;
  PatchBatch out(2 * half, static_cast<Eigen::Index>(grid.patches.size()));
  for (std::size_t k = 0; k < grid.patches.size(); ++k) {
    const auto& z = grid.patches[k];
    for (int r = 0; r < p; ++r) {
      const int cr = wrap(z.row_start + r, s);
      for (int c = 0; c < p; ++c) {
        const cdouble v = canvas(cr, wrap(z.col_start + c, s));
        out(r * p + c, k) = v.real();
        out(half + r * p + c, k) = v.imag();
      }
    }
  }
  return out;
}

PatchBatch extract_positions(const PositionalEncoding& enc, const PatchGrid& grid) {
  check_canvas(enc.x.rows(), enc.x.cols(), grid);
  const int p = grid.patch_size;
  const int s = grid.canvas_size;
  const int half = p * p;
  PatchBatch out(2 * half, static_cast<Eigen::Index>(grid.patches.size()));
  for (std::size_t k = 0; k < grid.patches.size(); ++k) {
    const auto& z = grid.patches[k];
    for (int r = 0; r < p; ++r) {
      const int cr = wrap(z.row_start + r, s);
      for (int c = 0; c < p; ++c) {
        const int cc = wrap(z.col_start + c, s);
        out(r * p + c, k) = enc.x(cr, cc);
        out(half + r * p + c, k) = enc.y(cr, cc);
      }
    }
  }
  return out;
}

void place_patches(ComplexImage& canvas, const PatchGrid& grid, const PatchBatch& patches) {
  check_canvas(canvas.rows(), canvas.cols(), grid);
  const int p = grid.patch_size;
  const int s = grid.canvas_size;
  const int half = p * p;
  require_dims(patches.rows() == 2 * half &&
                   patches.cols() == static_cast<Eigen::Index>(grid.patches.size()),
               "place_patches: patch count or shape mismatch");
  for (std::size_t k = 0; k < grid.patches.size(); ++k) {
    const auto& z = grid.patches[k];
    for (int r = 0; r < p; ++r) {
      const int cr = wrap(z.row_start + r, s);
      for (int c = 0; c < p; ++c)
        canvas(cr, wrap(z.col_start + c, s)) =
            cdouble(patches(r * p + c, k), patches(half + r * p + c, k));
    }
  }
}

ComplexImage reassemble_denoised(const ComplexImage& noisy, const PatchGrid& grid,
                                 const PatchBatch& denoised) {
  check_canvas(noisy.rows(), noisy.cols(), grid);
  const int p = grid.patch_size;
  const int s = grid.canvas_size;
  const int half = p * p;
  require_dims(denoised.rows() == 2 * half &&
                   denoised.cols() == static_cast<Eigen::Index>(grid.patches.size()),
               "reassemble_denoised: patch count or shape mismatch");
  // (noisy - sum of noisy patches) + sum of denoised patches.
  ComplexImage acc_denoised = ComplexImage::Zero(s, s);
  ComplexImage acc_noisy = ComplexImage::Zero(s, s);
  for (std::size_t k = 0; k < grid.patches.size(); ++k) {
    const auto& z = grid.patches[k];
    for (int r = 0; r < p; ++r) {
      const int cr = wrap(z.row_start + r, s);
      for (int c = 0; c < p; ++c) {
        const int cc = wrap(z.col_start + c, s);
        acc_denoised(cr, cc) += cdouble(denoised(r * p + c, k), denoised(half + r * p + c, k));
        acc_noisy(cr, cc) += noisy(cr, cc);
      }
    }
  }
  return (noisy - acc_noisy) + acc_denoised;
}

ComplexImage patch_denoise(const ComplexImage& noisy, double t, const ScoreModel& model,
                           const PatchGrid& grid, const PositionalEncoding& enc) {
  const int mp = model.patch_size();
  if (mp != 0 && mp != grid.patch_size)
    throw DimensionError("patch_denoise: model patch size " + std::to_string(mp) +
                         " differs from grid patch size " + std::to_string(grid.patch_size));
  const PatchBatch patches = extract_patches(noisy, grid);
  const PatchBatch positions = extract_positions(enc, grid);
  return reassemble_denoised(noisy, grid, model.denoise(patches, t, positions));
}

ComplexImage patch_denoise_vjp(const ComplexImage& noisy, double t, const ScoreModel& model,
                               const PatchGrid& grid, const PositionalEncoding& enc,
                               const ComplexImage& cotangent) {
  if (!model.has_vjp()) throw DomainError("patch_denoise_vjp: model has no vjp");
  const PatchBatch patches = extract_patches(noisy, grid);
  const PatchBatch positions = extract_positions(enc, grid);
  const PatchBatch cot = extract_patches(cotangent, grid);
  return reassemble_denoised(cotangent, grid, model.vjp(patches, t, positions, cot));
}

ComplexImage patch_score_at(const ComplexImage& x_padded, double t, const ScoreModel& model,
                            const PadSpec& spec, PatchOffset offset) {
  if (!(t > 0.0)) throw DomainError("patch score needs t > 0");
  const PatchGrid grid = make_grid(spec, offset);
  const PositionalEncoding enc = make_positional_encoding(spec);
  return (patch_denoise(x_padded, t, model, grid, enc) - x_padded) / (t * t);
}

ComplexImage aggregate_patch_score(const ComplexImage& x_padded, double t, const ScoreModel& model,
                                   const PadSpec& spec, Rng& rng) {
  return patch_score_at(x_padded, t, model, spec, sample_offset(spec, rng));
}

std::vector<TrainingPatch> sample_training_patches(const std::vector<ComplexImage>& images,
                                                   const std::vector<int>& sizes,
                                                   const std::vector<double>& probs, int count,
                                                   Rng& rng) {
  if (images.empty()) throw DomainError("sample_training_patches: empty image set");
  if (sizes.empty() || sizes.size() != probs.size())
    throw DomainError("sample_training_patches: sizes and probabilities differ in length");
  const double total = std::accumulate(probs.begin(), probs.end(), 0.0);
  if (std::abs(total - 1.0) > 1e-9)
    throw DomainError("sample_training_patches: probabilities do not sum to 1");

  const int n = static_cast<int>(images.front().rows());
  for (const auto& img : images)
    require_dims(img.rows() == n && img.cols() == n,
                 "sample_training_patches: images must be square and equal-sized");
  const int pad = training_pad(n);
  const int canvas = n + 2 * pad;
  for (int s : sizes)
    if (s < 1 || s > canvas) throw DomainError("sample_training_patches: patch size too large");

  const PadSpec spec{n, pad, 1};
  std::vector<ComplexImage> padded;
  padded.reserve(images.size());
  for (const auto& img : images) padded.push_back(pad_image(img, spec));
  const PositionalEncoding enc = make_positional_encoding(canvas);

  std::vector<TrainingPatch> out;
  out.reserve(count);
  for (int k = 0; k < count; ++k) {
    const double u = rng.uniform();
    std::size_t which = sizes.size() - 1;
    double cum = 0.0;
    for (std::size_t s = 0; s < sizes.size(); ++s) {
      cum += probs[s];
      if (u < cum) {
        which = s;
        break;
      }
    }
    const int p = sizes[which];
    TrainingPatch tp;
    tp.size = p;
    tp.image = static_cast<int>(rng.uniform_index(padded.size()));
    tp.row = static_cast<int>(rng.uniform_index(canvas - p + 1));
    tp.col = static_cast<int>(rng.uniform_index(canvas - p + 1));
    const int half = p * p;
    tp.data.resize(2 * half);
    tp.position.resize(2 * half);
    const auto& src = padded[tp.image];
    for (int r = 0; r < p; ++r)
      for (int c = 0; c < p; ++c) {
        const cdouble v = src(tp.row + r, tp.col + c);
        tp.data(r * p + c) = v.real();
        tp.data(half + r * p + c) = v.imag();
        tp.position(r * p + c) = enc.x(tp.row + r, tp.col + c);
        tp.position(half + r * p + c) = enc.y(tp.row + r, tp.col + c);
      }
    out.push_back(std::move(tp));
  }
  return out;
}

PatchBatch to_batch(const std::vector<TrainingPatch>& patches) {
  if (patches.empty()) return {};
  const auto dim = patches.front().data.size();
  PatchBatch out(dim, static_cast<Eigen::Index>(patches.size()));
  for (std::size_t k = 0; k < patches.size(); ++k) {
    require_dims(patches[k].data.size() == dim, "to_batch: patches differ in size");
    out.col(static_cast<Eigen::Index>(k)) = patches[k].data;
  }
  return out;
}

}  // namespace padis
