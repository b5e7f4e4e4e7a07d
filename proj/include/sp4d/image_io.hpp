#pragma once

#include <string>

#include "sp4d/image.hpp"

namespace sp4d {

// 8-bit RGB PNG (palette/gray/alpha inputs are converted on read).
ImageU8 read_png_rgb8(const std::string& path);
void write_png_rgb8(const std::string& path, const ImageU8& img); // tags sRGB

// single-channel PNGs: 16-bit for depth, 8-bit for masks
Image<uint16_t> read_png_gray16(const std::string& path);
void write_png_gray16(const std::string& path, const Image<uint16_t>& img);
ImageU8 read_png_gray8(const std::string& path);
void write_png_gray8(const std::string& path, const ImageU8& img);

// PFM, single channel ("Pf"), little-endian, bottom-up scanlines.
Image<float> read_pfm(const std::string& path);
void write_pfm(const std::string& path, const Image<float>& img);

}  // namespace sp4d
