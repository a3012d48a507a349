#pragma once

#include <string>

#include "lfvit/tensor.hpp"

namespace lfvit {

// Binary PPM (P6, maxval 255) decoded to channel-major floats in [0,1],
// shape [3 x side x side]. expected_side > 0 enforces the square size; 0
// accepts any square image. Throws IoError with distinct messages for a
// malformed header, wrong dimensions, and a truncated payload.
Tensor load_image(const std::string& path, int expected_side);

// Inverse of load_image: values are clamped to [0,1] and quantized with
// round(v*255). A file produced by save_image reloads bit-identically.
void save_image(const std::string& path, const Tensor& image);

}  // namespace lfvit
