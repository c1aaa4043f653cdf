#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "rfcn/tensor.hpp"

namespace rfcn {

struct GrayImage {
    int h = 0, w = 0;
    int maxval = 255;
    std::vector<std::uint8_t> pixels;  // row-major
};

// Binary PGM (P5), maxval up to 255.
GrayImage read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const GrayImage& img);

// 8-bit grayscale PNG.
GrayImage read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const GrayImage& img);

/// Dispatch on extension (.pgm / .png).
GrayImage read_gray_image(const std::filesystem::path& path);
void write_gray_image(const std::filesystem::path& path, const GrayImage& img);

/// 1xHxW tensor in [0,1], normalized by the image maxval.
Tensor image_to_tensor(const GrayImage& img);
/// Clamps to [0,1] and rounds to 8 bits.
GrayImage tensor_to_image(const Tensor& t);

/// IDX image file (magic 0x00000803): N glyphs as HxW tensors in [0,1].
std::vector<Tensor> read_idx_images(const std::filesystem::path& path, int limit = -1);

}  // namespace rfcn
