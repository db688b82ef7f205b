#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "asl/tensor.hpp"

namespace asl {

/// 8-bit interleaved raster as decoded from disk.
struct Raster {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<std::uint8_t> pixels;  // height * width * channels, row-major
};

/// Decodes PNG, JPEG, or RAW0 (chosen by content, not extension).
/// Throws IngestionError naming the path on failure.
Raster read_raster(const std::filesystem::path& path);

/// RAW0: "RAW0", u16 H, u16 W, u8 C, then H*W*C bytes; multi-byte fields little-endian.
Raster decode_raw0(const std::vector<std::uint8_t>& bytes, const std::string& origin);
std::vector<std::uint8_t> encode_raw0(const Raster& raster);
void write_raw0(const Raster& raster, const std::filesystem::path& path);
void write_png(const Raster& raster, const std::filesystem::path& path);

/// value / 255 per channel; result is [H, W, C] in [0, 1].
Tensor normalize(const Raster& raster);
/// Inverse of normalize: round(v * 255) clamped into 0..255.
Raster quantize(const Tensor& image);

/// Gray is replicated, alpha dropped; 3-channel input is returned unchanged.
Raster to_rgb(Raster raster);

/// Bilinear resize with half-pixel centers (align_corners = false). Input and
/// output are [H, W, C]. Same-size input is returned unchanged.
Tensor resize_bilinear(const Tensor& image, std::size_t out_h, std::size_t out_w);

/// Central out_h x out_w window; throws ShapeError if the image is smaller.
Tensor center_crop(const Tensor& image, std::size_t out_h, std::size_t out_w);

}  // namespace asl
