#pragma once

#include <complex>
#include <memory>
#include <numbers>
#include <span>
#include <vector>

#include "texsr/image.hpp"

namespace texsr {

namespace detail {
class Fft2d;
}

struct ScatterConfig {
  int J = 2;
  int L = 8;
  /// false: outputs keep the input resolution; true: decimated by 2^J.
  bool subsample = false;
  /// Gaussian width at scale 0; scale j uses sigma0 * 2^j.
  double sigma0 = 0.8;
  /// Mother-wavelet central frequency; scale j uses xi0 * 2^-j.
  double xi0 = 3.0 * std::numbers::pi / 4.0;

  double slant() const noexcept { return 4.0 / L; }
  int channel_count() const noexcept { return 1 + J * L + L * L * J * (J - 1) / 2; }
  void validate() const;
};

/// Morlet filters, sampled on the DFT grid of a fixed signal size. The
/// Fourier transform of each filter is real (the spatial filters are
/// Hermitian), so only the real spectrum is stored.
class FilterBank {
public:
  FilterBank(const ScatterConfig& cfg, int height, int width);

  const ScatterConfig& config() const noexcept { return cfg_; }
  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }

  /// Spectrum of psi_{j,l}, row-major over DFT frequency indices.
  std::span<const double> psi(int j, int l) const { return psi_[static_cast<std::size_t>(j * cfg_.L + l)]; }
  std::span<const double> phi() const { return phi_; }
  std::size_t bandpass_count() const noexcept { return psi_.size(); }

  /// Littlewood-Paley sum |phi(w)|^2 + 1/2 sum |psi(w)|^2 over the full
  /// circle of orientations; the rotations in [pi, 2pi) are the reflections
  /// psi(-w) of the stored ones. Its maximum bounds the energy gain of one
  /// wavelet layer on real inputs.
  std::vector<double> littlewood_paley() const;

private:
  ScatterConfig cfg_;
  int height_;
  int width_;
  std::vector<std::vector<double>> psi_;
  std::vector<double> phi_;
};

/// Intermediates from a forward pass, consumed by backward().
struct ScatterTape {
  int height = 0;
  int width = 0;
  std::vector<std::complex<double>> u1;   // per (j1,l1): img * psi
  std::vector<std::complex<double>> u2;   // per order-2 path: |u1| * psi
};

/// The scattering transform for one signal size. Immutable after
/// construction; forward/backward are safe to call concurrently.
class ScatteringTransform {
public:
  ScatteringTransform(const ScatterConfig& cfg, int height, int width);
  ~ScatteringTransform();
  ScatteringTransform(ScatteringTransform&&) noexcept;
  ScatteringTransform& operator=(ScatteringTransform&&) noexcept;

  const FilterBank& bank() const noexcept { return *bank_; }
  const ScatterConfig& config() const noexcept { return bank_->config(); }
  int output_height() const noexcept;
  int output_width() const noexcept;

  /// Channel order: order 0; order 1 by (j1, l1); order 2 by (j1, l1, j2 > j1, l2).
  FeatureMap forward(const Image& img, ScatterTape* tape = nullptr) const;
  /// Vector-Jacobian product: gradient of a scalar loss w.r.t. the input
  /// image given its gradient w.r.t. the output. The modulus has
  /// subgradient 0 at the origin.
  Image backward(const ScatterTape& tape, const FeatureMap& grad_out) const;

private:
  std::shared_ptr<const FilterBank> bank_;
  std::unique_ptr<detail::Fft2d> fft_;
};

/// Throws Errc::invalid_argument when dims are below 2^J.
FilterBank build_filter_bank(const ScatterConfig& cfg, int height, int width);

FeatureMap scatter(const Image& img, const ScatterConfig& cfg);

/// One filter bank for the whole batch; all images must share dims.
std::vector<FeatureMap> scatter_batch(std::span<const Image> imgs, const ScatterConfig& cfg);

} // namespace texsr
