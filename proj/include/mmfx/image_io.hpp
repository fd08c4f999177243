#pragma once

#include <string>

#include "mmfx/tensor.hpp"

namespace mmfx {

// Grayscale images move through the pipeline as [1 x h x w] tensors with
// values in [0,1]; on disk they are 8-bit binary PGM (P5, maxval 255).

Tensor read_pgm(const std::string& path);
void write_pgm(const std::string& path, const Tensor& image);

// Binary PPM (P6) writer for heatmap overlays. rgb is [3 x h x w] in [0,1].
void write_ppm(const std::string& path, const Tensor& rgb);

// Red-alpha blend of a [0,1] heatmap over a grayscale image:
//   alpha = 0.6 * map, red = (1-alpha)*gray + alpha, green = blue = (1-alpha)*gray.
Tensor overlay_heatmap(const Tensor& image, const Tensor& map_hw);

}  // namespace mmfx
