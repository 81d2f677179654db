#pragma once

#include "texsr/image.hpp"

namespace texsr {

/// Positive rational scale factor num/den.
struct Ratio {
  int num = 1;
  int den = 1;

  double value() const noexcept { return static_cast<double>(num) / den; }
};

/// Catmull-Rom cubic (a = -0.5) kernel weight at distance x.
double cubic_weight(double x) noexcept;

/// Separable bicubic interpolation with replicated borders and half-pixel
/// centres: output sample i reads input coordinate (i + 0.5) / scale - 0.5.
/// Output dims are round(input dims * scale). No anti-alias prefilter.
Image bicubic_resize(const Image& img, Ratio scale);

struct Degraded {
  Image lr;
  Image lr_up;
};

/// lr = resize(hr, 1/factor), lr_up = resize(lr, factor).
Degraded degrade(const Image& hr, int factor);

} // namespace texsr
