#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace texsr {

/// Single-channel raster, row-major, nominal range [0,1].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Image() = default;
  Image(int h, int w, double fill = 0.0);
  Image(int h, int w, std::vector<double> values);

  std::size_t size() const noexcept { return data.size(); }
  double& operator()(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
  double operator()(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }

  bool same_shape(const Image& o) const noexcept { return height == o.height && width == o.width; }
  friend bool operator==(const Image&, const Image&) = default;
};

/// Channel-major C x H x W tensor.
struct FeatureMap {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  FeatureMap() = default;
  FeatureMap(int c, int h, int w, double fill = 0.0);
  FeatureMap(int c, int h, int w, std::vector<double> values);

  std::size_t size() const noexcept { return data.size(); }
  std::size_t plane_size() const noexcept { return static_cast<std::size_t>(height) * width; }

  double& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  double at(int c, int y, int x) const { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }

  std::span<double> channel(int c) { return {data.data() + c * plane_size(), plane_size()}; }
  std::span<const double> channel(int c) const { return {data.data() + c * plane_size(), plane_size()}; }

  bool same_shape(const FeatureMap& o) const noexcept {
    return channels == o.channels && height == o.height && width == o.width;
  }
  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;
};

FeatureMap as_feature_map(const Image& img);

/// Dense sampling layout for square patches.
struct PatchGrid {
  int patch_size = 3;
  int stride = 1;
  int origin_rows = 0;
  int origin_cols = 0;

  std::size_t count() const noexcept { return static_cast<std::size_t>(origin_rows) * origin_cols; }
  int origin_y(std::size_t i) const noexcept { return static_cast<int>(i / origin_cols) * stride; }
  int origin_x(std::size_t i) const noexcept { return static_cast<int>(i % origin_cols) * stride; }
};

/// Throws Errc::invalid_argument when the patch does not fit.
PatchGrid make_grid(int height, int width, int patch_size = 3, int stride = 1);

/// Patches in row-major origin order; each is C*p*p values laid out
/// channel, row, column.
struct PatchSet {
  std::size_t patch_length = 0;
  std::vector<double> values;

  std::size_t count() const noexcept { return patch_length == 0 ? 0 : values.size() / patch_length; }
  std::span<const double> patch(std::size_t i) const { return {values.data() + i * patch_length, patch_length}; }
  std::span<double> patch(std::size_t i) { return {values.data() + i * patch_length, patch_length}; }
};

PatchSet extract_patches(const FeatureMap& fm, const PatchGrid& grid);

/// Inverse of extract_patches: overlapping contributions are averaged by
/// coverage count. Elements no patch covers are zero.
FeatureMap assemble_patches(const PatchSet& patches, const PatchGrid& grid, int channels, int height, int width);

} // namespace texsr
