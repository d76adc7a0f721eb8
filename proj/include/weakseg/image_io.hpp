#pragma once

#include <string>

#include "weakseg/tensor.hpp"

namespace weakseg {

// 8-bit RGB PNG -> (3, H, W) tensor in [0,1]. Throws std::runtime_error on
// missing/corrupt files.
Tensor read_png_rgb(const std::string& path);

// (3, H, W) tensor in [0,1] -> 8-bit RGB PNG (values clamped).
void write_png_rgb(const std::string& path, const Tensor& image);

// (H, W) tensor in [0,1] -> 8-bit grayscale PNG (values clamped).
void write_png_gray(const std::string& path, const Tensor& map);

}  // namespace weakseg
