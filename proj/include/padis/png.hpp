#pragma once

// Lossless 16-bit grayscale PNG encoding for study media.

#include "padis/core.hpp"

#include <string>

namespace padis {

/// Maps [0, scale] linearly onto [0, 65535], clamping; scale <= 0 maps to 0.
std::string encode_png16(const RealImage& img, double scale);

/// Decodes a 16-bit grayscale PNG into raw sample values.
Eigen::Array<std::uint16_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> decode_png16(
    const std::string& bytes);

}  // namespace padis
