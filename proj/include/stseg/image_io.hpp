#pragma once

// 8-bit PNG storage for RGB images and single-channel label maps.

#include <algorithm>
#include <cmath>
#include <string>

#include "stseg/tensor.hpp"

namespace stseg {

/// Writes item 0 of a [1, 3, H, W] image in [0,1] as 8-bit RGB (values rounded).
void write_png_rgb(const std::string& path, const Tensor<float>& image);
/// Reads an 8-bit RGB, RGBA, gray or palette PNG as [1, 3, H, W] in [0,1].
Tensor<float> read_png_rgb(const std::string& path);

/// Writes a [1, H, W] label map as an 8-bit single-channel index image.
void write_png_labels(const std::string& path, const LabelMap& labels);
LabelMap read_png_labels(const std::string& path);

/// The value an image takes after an 8-bit round trip.
inline float quantize8(float v) { return std::round(std::clamp(v, 0.0f, 1.0f) * 255.0f) / 255.0f; }

}  // namespace stseg
