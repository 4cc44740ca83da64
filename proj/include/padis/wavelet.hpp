#pragma once

#include "padis/core.hpp"

namespace padis {

/// Orthonormal 2D Haar transform, `levels` dyadic levels, in Mallat layout:
/// the coarse approximation band occupies the top-left
/// (rows >> levels) x (cols >> levels) block. Sides must be divisible by
/// 2^levels.
ComplexImage haar_forward(const ComplexImage& img, int levels);
ComplexImage haar_inverse(const ComplexImage& coeffs, int levels);

bool is_power_of_two(Eigen::Index n);

/// Largest level count such that the approximation band is at least
/// `min_band` pixels on each side.
int max_haar_levels(Eigen::Index rows, Eigen::Index cols, Eigen::Index min_band = 1);

}  // namespace padis
