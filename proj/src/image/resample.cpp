#include "texsr/resample.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "texsr/error.hpp"

namespace texsr {

namespace {

constexpr double kCubicA = -0.5;

struct Taps {
  std::array<int, 4> index;
  std::array<double, 4> weight;
};

std::vector<Taps> make_taps(int in_len, int out_len, double inv_scale) {
  std::vector<Taps> taps(static_cast<std::size_t>(out_len));
  for (int i = 0; i < out_len; ++i) {
    const double src = (i + 0.5) * inv_scale - 0.5;
    const double base = std::floor(src);
    const double t = src - base;
    auto& tp = taps[static_cast<std::size_t>(i)];
    for (int k = 0; k < 4; ++k) {
      tp.index[k] = std::clamp(static_cast<int>(base) - 1 + k, 0, in_len - 1);
      tp.weight[k] = cubic_weight(t - (k - 1));
    }
  }
  return taps;
}

int scaled_dim(int n, Ratio scale) {
  const long long out = std::llround(static_cast<double>(n) * scale.num / scale.den);
  if (out < 1) throw Error(Errc::invalid_argument, "resize to zero size");
  return static_cast<int>(out);
}

} // namespace

double cubic_weight(double x) noexcept {
  const double ax = std::abs(x);
  if (ax <= 1.0) return ((kCubicA + 2.0) * ax - (kCubicA + 3.0)) * ax * ax + 1.0;
  if (ax < 2.0) return ((kCubicA * ax - 5.0 * kCubicA) * ax + 8.0 * kCubicA) * ax - 4.0 * kCubicA;
  return 0.0;
}

Image bicubic_resize(const Image& img, Ratio scale) {
  if (scale.num <= 0 || scale.den <= 0) throw Error(Errc::invalid_argument, "scale must be positive");
  if (img.height < 1 || img.width < 1) throw Error(Errc::invalid_argument, "empty image");
  if (scale.num == scale.den) return img;

  const int out_h = scaled_dim(img.height, scale);
  const int out_w = scaled_dim(img.width, scale);
  const double inv = static_cast<double>(scale.den) / scale.num;
  const auto col_taps = make_taps(img.width, out_w, inv);
  const auto row_taps = make_taps(img.height, out_h, inv);

  // Horizontal pass then vertical pass.
  Image tmp(img.height, out_w);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < out_w; ++x) {
      const auto& tp = col_taps[static_cast<std::size_t>(x)];
      double acc = 0.0;
      for (int k = 0; k < 4; ++k) acc += tp.weight[k] * img(y, tp.index[k]);
      tmp(y, x) = acc;
    }
  }
  Image out(out_h, out_w);
  for (int y = 0; y < out_h; ++y) {
    const auto& tp = row_taps[static_cast<std::size_t>(y)];
    for (int x = 0; x < out_w; ++x) {
      double acc = 0.0;
      for (int k = 0; k < 4; ++k) acc += tp.weight[k] * tmp(tp.index[k], x);
      out(y, x) = acc;
    }
  }
  return out;
}

Degraded degrade(const Image& hr, int factor) {
  if (factor < 2) throw Error(Errc::invalid_argument, "degradation factor must be >= 2");
  if (hr.height % factor != 0 || hr.width % factor != 0) {
    throw Error(Errc::invalid_argument, std::to_string(hr.height) + "x" + std::to_string(hr.width) +
                                            " is not divisible by " + std::to_string(factor));
  }
  Degraded d;
  d.lr = bicubic_resize(hr, {1, factor});
  d.lr_up = bicubic_resize(d.lr, {factor, 1});
  return d;
}

} // namespace texsr
