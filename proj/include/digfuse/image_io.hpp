#pragma once
// Image file I/O. PNG (via libpng) and binary PGM/PPM, 8- or 16-bit,
// grayscale or RGB. Pixels map linearly to model space: 8-bit v -> v/127.5-1
// (so 0 -> -1 and 255 -> +1); saving inverts the map with clamping to the
// display range and half-to-even rounding, making save/load a pure
// quantization for in-range images.
#include <filesystem>
#include <string>

#include "digfuse/tensor.hpp"

namespace digfuse {

// Throws InputError for unreadable files or unsupported layouts (palette
// and alpha-carrying PNGs are rejected, not silently converted).
ImageTensor load_image(const std::filesystem::path& path);

// Format chosen by extension: .png, .pgm (1 channel), .ppm (3 channels).
// bit_depth is 8 or 16.
void save_image(const std::filesystem::path& path, const ImageTensor& img,
                int bit_depth = 8);

// The display<->model maps used above, exposed for tests.
double model_to_display(double v, int bit_depth = 8);  // clamp + half-to-even
double display_to_model(double v, int bit_depth = 8);

}  // namespace digfuse
