#include "texsr/image.hpp"

#include <cmath>
#include <string>

#include "texsr/error.hpp"

namespace texsr {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
  case Errc::malformed_header: return "malformed header";
  case Errc::unsupported_bit_depth: return "unsupported bit depth";
  case Errc::truncated_payload: return "truncated payload";
  case Errc::io_failure: return "i/o failure";
  case Errc::invalid_argument: return "invalid argument";
  case Errc::shape_mismatch: return "shape mismatch";
  case Errc::version_mismatch: return "version mismatch";
  case Errc::missing_reference: return "missing reference";
  case Errc::empty_input: return "empty input";
  case Errc::mode_mismatch: return "mode mismatch";
  case Errc::numeric_failure: return "numeric failure";
  }
  return "unknown error";
}

namespace {

void check_dims(long long expected, std::size_t actual) {
  if (expected < 0 || static_cast<std::size_t>(expected) != actual) {
    throw Error(Errc::shape_mismatch,
                "buffer holds " + std::to_string(actual) + " values, dims need " + std::to_string(expected));
  }
}

} // namespace

Image::Image(int h, int w, double fill) : height(h), width(w) {
  if (h < 0 || w < 0) throw Error(Errc::invalid_argument, "negative image dims");
  data.assign(static_cast<std::size_t>(h) * w, fill);
}

Image::Image(int h, int w, std::vector<double> values) : height(h), width(w), data(std::move(values)) {
  check_dims(static_cast<long long>(h) * w, data.size());
}

FeatureMap::FeatureMap(int c, int h, int w, double fill) : channels(c), height(h), width(w) {
  if (c < 0 || h < 0 || w < 0) throw Error(Errc::invalid_argument, "negative feature map dims");
  data.assign(static_cast<std::size_t>(c) * h * w, fill);
}

FeatureMap::FeatureMap(int c, int h, int w, std::vector<double> values)
    : channels(c), height(h), width(w), data(std::move(values)) {
  check_dims(static_cast<long long>(c) * h * w, data.size());
}

FeatureMap as_feature_map(const Image& img) { return FeatureMap(1, img.height, img.width, img.data); }

PatchGrid make_grid(int height, int width, int patch_size, int stride) {
  if (patch_size < 1 || stride < 1) throw Error(Errc::invalid_argument, "patch size and stride must be >= 1");
  if (patch_size > height || patch_size > width) {
    throw Error(Errc::invalid_argument, "patch of size " + std::to_string(patch_size) + " does not fit a " +
                                            std::to_string(height) + "x" + std::to_string(width) + " map");
  }
  PatchGrid g;
  g.patch_size = patch_size;
  g.stride = stride;
  g.origin_rows = (height - patch_size) / stride + 1;
  g.origin_cols = (width - patch_size) / stride + 1;
  return g;
}

PatchSet extract_patches(const FeatureMap& fm, const PatchGrid& grid) {
  const int p = grid.patch_size;
  if (p > fm.height || p > fm.width) throw Error(Errc::invalid_argument, "patch larger than feature map");
  if ((grid.origin_rows - 1) * grid.stride + p > fm.height || (grid.origin_cols - 1) * grid.stride + p > fm.width) {
    throw Error(Errc::shape_mismatch, "patch grid does not match feature map dims");
  }

  PatchSet out;
  out.patch_length = static_cast<std::size_t>(fm.channels) * p * p;
  out.values.resize(grid.count() * out.patch_length);
  for (std::size_t i = 0; i < grid.count(); ++i) {
    const int oy = grid.origin_y(i);
    const int ox = grid.origin_x(i);
    double* dst = out.values.data() + i * out.patch_length;
    for (int c = 0; c < fm.channels; ++c) {
      for (int dy = 0; dy < p; ++dy) {
        for (int dx = 0; dx < p; ++dx) *dst++ = fm.at(c, oy + dy, ox + dx);
      }
    }
  }
  return out;
}

FeatureMap assemble_patches(const PatchSet& patches, const PatchGrid& grid, int channels, int height, int width) {
  const int p = grid.patch_size;
  if (patches.count() != grid.count()) {
    throw Error(Errc::shape_mismatch, "expected " + std::to_string(grid.count()) + " patches, got " +
                                          std::to_string(patches.count()));
  }
  if (patches.patch_length != static_cast<std::size_t>(channels) * p * p) {
    throw Error(Errc::shape_mismatch, "patch length does not match channel count");
  }
  if ((grid.origin_rows - 1) * grid.stride + p > height || (grid.origin_cols - 1) * grid.stride + p > width) {
    throw Error(Errc::shape_mismatch, "patch grid exceeds output dims");
  }

  // Running mean per element, so identical overlapping values reassemble
  // bit-exactly.
  FeatureMap out(channels, height, width);
  std::vector<int> coverage(static_cast<std::size_t>(height) * width, 0);
  const std::size_t plane = out.plane_size();
  for (std::size_t i = 0; i < grid.count(); ++i) {
    const int oy = grid.origin_y(i);
    const int ox = grid.origin_x(i);
    const double* src = patches.values.data() + i * patches.patch_length;
    for (int dy = 0; dy < p; ++dy) {
      for (int dx = 0; dx < p; ++dx) ++coverage[static_cast<std::size_t>(oy + dy) * width + ox + dx];
    }
    for (int c = 0; c < channels; ++c) {
      for (int dy = 0; dy < p; ++dy) {
        for (int dx = 0; dx < p; ++dx) {
          const std::size_t k = static_cast<std::size_t>(oy + dy) * width + ox + dx;
          double& m = out.data[c * plane + k];
          m += (*src++ - m) / coverage[k];
        }
      }
    }
  }
  return out;
}

} // namespace texsr
