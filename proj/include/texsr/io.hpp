#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "texsr/image.hpp"

namespace texsr {

enum class PgmDepth { u8, u16 };

/// Loads a binary P5 PGM (8 or 16 bit) or an STTF tensor of shape HxW or 1xHxW.
/// Samples are divided by the format's maximum value.
Image load_image(const std::filesystem::path& path);

/// Clamps to [0,1] and quantizes round-half-up.
void save_image(const Image& img, const std::filesystem::path& path, PgmDepth depth = PgmDepth::u8);

// STTF tensor container: "STTF", u32 version, u32 ndim, u32 dims[ndim],
// little-endian payload. Version 1 stores float32, version 2 float64.
enum class TensorPrecision : std::uint32_t { f32 = 1, f64 = 2 };

struct Tensor {
  std::vector<std::uint32_t> dims;
  std::vector<double> values;

  std::size_t element_count() const noexcept;
};

void write_tensor(std::ostream& os, const Tensor& t, TensorPrecision precision);
Tensor read_tensor(std::istream& is);

void save_tensor(const Tensor& t, const std::filesystem::path& path, TensorPrecision precision);
Tensor load_tensor(const std::filesystem::path& path);

void save_feature_map(const FeatureMap& fm, const std::filesystem::path& path,
                      TensorPrecision precision = TensorPrecision::f32);
FeatureMap load_feature_map(const std::filesystem::path& path);

Tensor to_tensor(const Image& img);
Tensor to_tensor(const FeatureMap& fm);

} // namespace texsr
