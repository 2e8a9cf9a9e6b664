#pragma once

#include <string>

#include "stylefuse/tensor.hpp"

namespace sf {

/// 8-bit RGB PNG <-> [3,H,W] tensor in [0,1]. Grayscale and alpha inputs are
/// expanded or dropped on load.
Tensor load_png(const std::string& path);
/// Values are clamped to [0,1] and stored as round-half-up(255 v).
void save_png(const std::string& path, const Tensor& image);

/// round-half-up(255 clamp(v)) for one value.
unsigned char quantize_u8(double v);
/// Round trip through 8-bit storage without touching the filesystem.
Tensor quantize(const Tensor& image);

}  // namespace sf
