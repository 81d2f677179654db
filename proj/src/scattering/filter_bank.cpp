#include <cmath>
#include <numbers>
#include <string>

#include "texsr/error.hpp"
#include "texsr/scattering.hpp"

namespace texsr {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
// Periodization range for the spectra: w + 2*pi*m, m in [kAliasLo, kAliasHi].
// The widest spectrum (scale 0) has standard deviation 1/0.8 rad, so three
// periods on either side leave nothing above double precision.
constexpr int kAliasLo = -3;
constexpr int kAliasHi = 2;

// Continuous Fourier transform of the unit-mass anisotropic Gaussian
// envelope modulated to centre xi * (cos theta, sin theta) in (x, y).
class GaborSpectrum {
public:
  GaborSpectrum(double sigma, double slant, double xi, double theta)
      : sigma2_(sigma * sigma), inv_slant2_(1.0 / (slant * slant)), ux_(std::cos(theta)), uy_(std::sin(theta)),
        cx_(xi * ux_), cy_(xi * uy_) {}

  double operator()(double wy, double wx) const {
    const double dy = wy - cy_;
    const double dx = wx - cx_;
    const double along = dx * ux_ + dy * uy_;
    const double across = -dx * uy_ + dy * ux_;
    return std::exp(-0.5 * sigma2_ * (along * along + across * across * inv_slant2_));
  }

private:
  double sigma2_, inv_slant2_, ux_, uy_, cx_, cy_;
};

// DFT of the spatially sampled, periodized filter via Poisson summation.
std::vector<double> sample_spectrum(const GaborSpectrum& g, int height, int width) {
  std::vector<double> out(static_cast<std::size_t>(height) * width);
  for (int ky = 0; ky < height; ++ky) {
    const double wy0 = kTwoPi * ky / height;
    for (int kx = 0; kx < width; ++kx) {
      const double wx0 = kTwoPi * kx / width;
      double acc = 0.0;
      for (int my = kAliasLo; my <= kAliasHi; ++my) {
        for (int mx = kAliasLo; mx <= kAliasHi; ++mx) acc += g(wy0 + kTwoPi * my, wx0 + kTwoPi * mx);
      }
      out[static_cast<std::size_t>(ky) * width + kx] = acc;
    }
  }
  return out;
}

} // namespace

void ScatterConfig::validate() const {
  if (J < 1 || L < 1) throw Error(Errc::invalid_argument, "scattering needs J >= 1 and L >= 1");
  if (!(sigma0 > 0.0) || !(xi0 > 0.0)) throw Error(Errc::invalid_argument, "sigma0 and xi0 must be positive");
}

FilterBank::FilterBank(const ScatterConfig& cfg, int height, int width) : cfg_(cfg), height_(height), width_(width) {
  cfg.validate();
  const int min_dim = 1 << cfg.J;
  if (height < min_dim || width < min_dim) {
    throw Error(Errc::invalid_argument, std::to_string(height) + "x" + std::to_string(width) +
                                            " is too small for J=" + std::to_string(cfg.J));
  }

  psi_.reserve(static_cast<std::size_t>(cfg.J * cfg.L));
  for (int j = 0; j < cfg.J; ++j) {
    const double sigma = cfg.sigma0 * std::ldexp(1.0, j);
    const double xi = cfg.xi0 * std::ldexp(1.0, -j);
    for (int l = 0; l < cfg.L; ++l) {
      const double theta = std::numbers::pi * l / cfg.L;
      auto gabor = sample_spectrum({sigma, cfg.slant(), xi, theta}, height, width);
      const auto envelope = sample_spectrum({sigma, cfg.slant(), 0.0, theta}, height, width);
      // Morlet correction: subtract the envelope so the DC term vanishes.
      const double kappa = gabor[0] / envelope[0];
      for (std::size_t k = 0; k < gabor.size(); ++k) gabor[k] -= kappa * envelope[k];
      gabor[0] = 0.0;
      psi_.push_back(std::move(gabor));
    }
  }
  phi_ = sample_spectrum({cfg.sigma0 * std::ldexp(1.0, cfg.J), 1.0, 0.0, 0.0}, height, width);
}

std::vector<double> FilterBank::littlewood_paley() const {
  std::vector<double> lp(phi_.size());
  for (int ky = 0; ky < height_; ++ky) {
    const int ry = (height_ - ky) % height_;
    for (int kx = 0; kx < width_; ++kx) {
      const int rx = (width_ - kx) % width_;
      const std::size_t k = static_cast<std::size_t>(ky) * width_ + kx;
      const std::size_t r = static_cast<std::size_t>(ry) * width_ + rx;
      double acc = 0.0;
      for (const auto& p : psi_) acc += p[k] * p[k] + p[r] * p[r];
      lp[k] = phi_[k] * phi_[k] + 0.5 * acc;
    }
  }
  return lp;
}

FilterBank build_filter_bank(const ScatterConfig& cfg, int height, int width) { return FilterBank(cfg, height, width); }

} // namespace texsr
