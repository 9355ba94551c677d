#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace atbseg::png {

struct GrayImage {
  int width = 0;
  int height = 0;
  int bit_depth = 8;  // 8 or 16
  std::vector<std::uint16_t> samples;
};

/// Decodes any PNG to a single gray channel at its stored bit depth (8 or 16).
GrayImage read_gray(const std::filesystem::path& path);

void write_gray(const std::filesystem::path& path, const GrayImage& image);

}  // namespace atbseg::png
