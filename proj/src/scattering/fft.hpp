#pragma once

#include <complex>
#include <memory>
#include <span>

namespace texsr::detail {

using cplx = std::complex<double>;

/// Unnormalized 2D complex DFT of a fixed size. Plans are built once and
/// executed on caller buffers, so one instance is safe to share across
/// threads.
class Fft2d {
public:
  Fft2d(int height, int width);
  ~Fft2d();
  Fft2d(const Fft2d&) = delete;
  Fft2d& operator=(const Fft2d&) = delete;

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(height_) * width_; }

  void forward(std::span<const cplx> in, std::span<cplx> out) const;
  /// Includes the 1/(H*W) factor.
  void inverse(std::span<const cplx> in, std::span<cplx> out) const;

private:
  struct Plans;
  int height_;
  int width_;
  std::unique_ptr<Plans> plans_;
};

} // namespace texsr::detail
