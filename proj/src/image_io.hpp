#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace dpc {

// All writers go through a temp file + rename so outputs are never partial.
void atomic_write(const std::filesystem::path& path,
                  const std::function<void(std::ostream&)>& writer);

// 8-bit PNG, values mapped linearly between [0,1] and 0..255.
// Grayscale files load as [h,w,1]; color as [h,w,3] (alpha is dropped).
Tensor<float> read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Tensor<float>& img);

// Float raster: header "Pf" (1 channel) or "PF" (3), a negative scale line
// marking little-endian data, then row-major 32-bit floats, top row first.
Tensor<float> read_pfm(const std::filesystem::path& path);
void write_pfm(const std::filesystem::path& path, const Tensor<float>& img);

// ASCII PLY point cloud with properties x y z nx ny nz.
struct PointCloud {
  std::vector<std::array<double, 6>> vertices;  // x y z nx ny nz
};
void write_ply(const std::filesystem::path& path, const PointCloud& cloud);
PointCloud read_ply(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace dpc
