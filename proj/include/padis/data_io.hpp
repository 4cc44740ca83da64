#pragma once

// On-disk containers and deterministic data generation. Byte layouts are
// documented in docs/formats.md.

#include "padis/core.hpp"
#include "padis/mri_forward.hpp"
#include "padis/priors.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace padis {

struct MaskSeedSpec {
  std::uint64_t seed = 0;
  int width = 0;
  double R = 1.0;
  int acs = 24;
};

/// Keeps the centered `acs` columns, then the first floor(width/R) - acs
/// entries of a SplitMix64-driven Fisher-Yates shuffle of the remaining
/// columns (ascending order before the shuffle).
SamplingMask generate_mask(const MaskSeedSpec& spec);

struct Phantom {
  ComplexImage truth;
  CoilSensitivities sens;
};

/// Ellipse phantom with smooth intensity and phase, plus Gaussian-profile
/// coil maps normalized to unit sum of squares. The support is the full
/// field of view.
Phantom generate_phantom(int size, int num_coils, std::uint64_t seed);

/// Multi-coil volume in a directory: meta.json, kspace.bin, optional maps.bin
/// and mask.bin.
struct VolumeContainer {
  int height = 0;
  int width = 0;
  int num_coils = 0;
  std::string contrast;
  std::vector<ComplexImage> kspace;  // per coil
  std::vector<ComplexImage> maps;    // empty or per coil
  std::vector<std::uint8_t> mask;    // empty or one byte per column
};

void write_volume(const std::filesystem::path& dir, const VolumeContainer& vol);
VolumeContainer read_volume(const std::filesystem::path& dir);

/// Single complex (or real, stored with zero imaginary part) image:
/// meta.json + image.bin, same float32 pair encoding.
void write_image(const std::filesystem::path& dir, const ComplexImage& img,
                 const std::string& kind = "complex");
ComplexImage read_image(const std::filesystem::path& dir);

/// Weights container: meta.json (model tag, patch size, attributes, tensor
/// table) + weights.bin (concatenated little-endian tensors).
struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<double> values;  // row-major
  std::string dtype = "float64";
};

struct WeightsContainer {
  std::string model;
  int patch_size = 0;
  std::map<std::string, std::string> attributes;
  std::map<std::string, Tensor> tensors;
};

void write_weights(const std::filesystem::path& dir, const WeightsContainer& w);
WeightsContainer read_weights(const std::filesystem::path& dir);

WeightsContainer to_weights(const GmmPatchPrior& prior);
GmmPatchPrior gmm_from_weights(const WeightsContainer& w);
WeightsContainer to_weights(int patch_size, const std::vector<double>& sigmas,
                            const std::vector<Eigen::MatrixXd>& weights,
                            const std::vector<Eigen::VectorXd>& biases);

/// Loads a GMM prior with its vjp.
GmmPatchPrior load_gmm_prior(const std::filesystem::path& dir);

/// Loads any supported weights container ("gmm" or "linear-patch") as a
/// model without vjp, the contract for externally produced weights.
ScoreModelPtr load_external_denoiser(const std::filesystem::path& dir);

}  // namespace padis
