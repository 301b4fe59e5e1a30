#pragma once

#include <filesystem>

#include "salad/core/types.hpp"

namespace salad {

/// Decodes any 8/16-bit PNG into RGB floats in [0,1] at its native size.
RgbImage read_png_rgb(const std::filesystem::path& path);
void write_png_rgb(const RgbImage& image, const std::filesystem::path& path);

/// Single-channel 8-bit read; any nonzero value counts as set unless `value` >= 0,
/// in which case only pixels equal to `value` are set.
Mask read_png_mask(const std::filesystem::path& path, int value = -1);
void write_png_mask(const Mask& mask, const std::filesystem::path& path);
/// Raw 8-bit values (e.g. region masks carrying a defect-type pixel value).
Plane<std::uint8_t> read_png_gray(const std::filesystem::path& path);
void write_png_gray(const Plane<std::uint8_t>& values, const std::filesystem::path& path);

/// Greyscale visualisation of a float plane, linearly mapped from [lo, hi].
void write_png_heatmap(const Plane<float>& plane, float lo, float hi,
                       const std::filesystem::path& path);

/// Reads, converts and bilinearly resizes to the working resolution.
ImageSample load_image(const std::filesystem::path& path, Split split, Label label);

}  // namespace salad
