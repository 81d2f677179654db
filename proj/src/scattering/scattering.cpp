#include "texsr/scattering.hpp"

#include <cmath>
#include <string>

#include "fft.hpp"
#include "texsr/error.hpp"

namespace texsr {

using detail::cplx;

namespace {

struct SecondOrderPath {
  int first;  // j1 * L + l1
  int j2;
  int l2;
};

std::vector<SecondOrderPath> second_order_paths(const ScatterConfig& cfg) {
  std::vector<SecondOrderPath> paths;
  for (int j1 = 0; j1 < cfg.J; ++j1) {
    for (int l1 = 0; l1 < cfg.L; ++l1) {
      for (int j2 = j1 + 1; j2 < cfg.J; ++j2) {
        for (int l2 = 0; l2 < cfg.L; ++l2) paths.push_back({j1 * cfg.L + l1, j2, l2});
      }
    }
  }
  return paths;
}

void multiply(std::span<const cplx> a, std::span<const double> filter, std::span<cplx> out) {
  for (std::size_t k = 0; k < a.size(); ++k) out[k] = a[k] * filter[k];
}

void modulus(std::span<const cplx> u, std::span<cplx> out) {
  for (std::size_t k = 0; k < u.size(); ++k) out[k] = std::abs(u[k]);
}

// Scratch buffers for one transform call.
struct Workspace {
  std::vector<cplx> a, b, c;
  explicit Workspace(std::size_t n) : a(n), b(n), c(n) {}
};

} // namespace

ScatteringTransform::ScatteringTransform(const ScatterConfig& cfg, int height, int width)
    : bank_(std::make_shared<const FilterBank>(cfg, height, width)),
      fft_(std::make_unique<detail::Fft2d>(height, width)) {}

ScatteringTransform::~ScatteringTransform() = default;
ScatteringTransform::ScatteringTransform(ScatteringTransform&&) noexcept = default;
ScatteringTransform& ScatteringTransform::operator=(ScatteringTransform&&) noexcept = default;

int ScatteringTransform::output_height() const noexcept {
  const int s = config().subsample ? (1 << config().J) : 1;
  return (bank_->height() + s - 1) / s;
}

int ScatteringTransform::output_width() const noexcept {
  const int s = config().subsample ? (1 << config().J) : 1;
  return (bank_->width() + s - 1) / s;
}

FeatureMap ScatteringTransform::forward(const Image& img, ScatterTape* tape) const {
  const auto& bank = *bank_;
  const auto& cfg = bank.config();
  if (img.height != bank.height() || img.width != bank.width()) {
    throw Error(Errc::shape_mismatch, "image " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                                          " does not match filter bank " + std::to_string(bank.height()) + "x" +
                                          std::to_string(bank.width()));
  }
  const std::size_t n = fft_->size();
  const int stride = cfg.subsample ? (1 << cfg.J) : 1;
  const int out_h = output_height();
  const int out_w = output_width();
  FeatureMap out(cfg.channel_count(), out_h, out_w);

  Workspace ws(n);
  std::vector<cplx> x_hat(n), a1_hat(n), u1(n), u2(n);

  auto emit_lowpass = [&](std::span<const cplx> spectrum, int channel) {
    multiply(spectrum, bank.phi(), ws.a);
    fft_->inverse(ws.a, ws.b);
    auto dst = out.channel(channel);
    for (int y = 0; y < out_h; ++y) {
      for (int x = 0; x < out_w; ++x) {
        dst[static_cast<std::size_t>(y) * out_w + x] =
            ws.b[static_cast<std::size_t>(y * stride) * img.width + x * stride].real();
      }
    }
  };

  for (std::size_t k = 0; k < n; ++k) ws.c[k] = img.data[k];
  fft_->forward(ws.c, x_hat);
  emit_lowpass(x_hat, 0);

  const auto paths = second_order_paths(cfg);
  if (tape != nullptr) {
    tape->height = img.height;
    tape->width = img.width;
    tape->u1.assign(bank.bandpass_count() * n, cplx{});
    tape->u2.assign(paths.size() * n, cplx{});
  }

  const int first_order_base = 1;
  const int second_order_base = 1 + cfg.J * cfg.L;
  std::size_t path_idx = 0;
  for (int j1 = 0; j1 < cfg.J; ++j1) {
    for (int l1 = 0; l1 < cfg.L; ++l1) {
      const int p1 = j1 * cfg.L + l1;
      multiply(x_hat, bank.psi(j1, l1), ws.a);
      fft_->inverse(ws.a, u1);
      if (tape != nullptr) std::copy(u1.begin(), u1.end(), tape->u1.begin() + static_cast<std::ptrdiff_t>(p1 * n));
      modulus(u1, ws.c);
      fft_->forward(ws.c, a1_hat);
      emit_lowpass(a1_hat, first_order_base + p1);

      for (; path_idx < paths.size() && paths[path_idx].first == p1; ++path_idx) {
        const auto& path = paths[path_idx];
        multiply(a1_hat, bank.psi(path.j2, path.l2), ws.a);
        fft_->inverse(ws.a, u2);
        if (tape != nullptr) {
          std::copy(u2.begin(), u2.end(), tape->u2.begin() + static_cast<std::ptrdiff_t>(path_idx * n));
        }
        modulus(u2, ws.c);
        fft_->forward(ws.c, ws.b);
        emit_lowpass(ws.b, second_order_base + static_cast<int>(path_idx));
      }
    }
  }
  return out;
}

Image ScatteringTransform::backward(const ScatterTape& tape, const FeatureMap& grad_out) const {
  const auto& bank = *bank_;
  const auto& cfg = bank.config();
  const int h = bank.height();
  const int w = bank.width();
  if (tape.height != h || tape.width != w) throw Error(Errc::shape_mismatch, "tape does not match transform");
  if (grad_out.channels != cfg.channel_count() || grad_out.height != output_height() ||
      grad_out.width != output_width()) {
    throw Error(Errc::shape_mismatch, "gradient does not match scattering output");
  }
  const std::size_t n = fft_->size();
  const int stride = cfg.subsample ? (1 << cfg.J) : 1;
  const auto paths = second_order_paths(cfg);
  if (tape.u1.size() != bank.bandpass_count() * n || tape.u2.size() != paths.size() * n) {
    throw Error(Errc::shape_mismatch, "incomplete scattering tape");
  }

  Workspace ws(n);
  std::vector<cplx> grad_x_hat(n, cplx{}), grad_a1(n), spectrum(n);

  // Adjoint of (decimate o lowpass): zero-fill then lowpass, returned as a
  // spectrum in `spectrum`.
  auto lowpass_adjoint_spectrum = [&](int channel) {
    std::fill(ws.c.begin(), ws.c.end(), cplx{});
    const auto g = grad_out.channel(channel);
    for (int y = 0; y < grad_out.height; ++y) {
      for (int x = 0; x < grad_out.width; ++x) {
        ws.c[static_cast<std::size_t>(y * stride) * w + x * stride] = g[static_cast<std::size_t>(y) * grad_out.width + x];
      }
    }
    fft_->forward(ws.c, ws.a);
    multiply(ws.a, bank.phi(), spectrum);
  };

  // grad w.r.t. |u| -> grad w.r.t. u, written into ws.c.
  auto through_modulus = [&](std::span<const cplx> u, std::span<const cplx> grad_mod) {
    for (std::size_t k = 0; k < n; ++k) {
      const double m = std::abs(u[k]);
      ws.c[k] = m > 0.0 ? grad_mod[k].real() * u[k] / m : cplx{};
    }
  };

  lowpass_adjoint_spectrum(0);
  for (std::size_t k = 0; k < n; ++k) grad_x_hat[k] += spectrum[k];

  const int second_order_base = 1 + cfg.J * cfg.L;
  std::size_t path_idx = 0;
  for (int j1 = 0; j1 < cfg.J; ++j1) {
    for (int l1 = 0; l1 < cfg.L; ++l1) {
      const int p1 = j1 * cfg.L + l1;
      lowpass_adjoint_spectrum(1 + p1);
      fft_->inverse(spectrum, grad_a1);
      for (auto& v : grad_a1) v = v.real();

      for (; path_idx < paths.size() && paths[path_idx].first == p1; ++path_idx) {
        const auto& path = paths[path_idx];
        const std::span<const cplx> u2(tape.u2.data() + path_idx * n, n);
        lowpass_adjoint_spectrum(second_order_base + static_cast<int>(path_idx));
        fft_->inverse(spectrum, ws.b);
        through_modulus(u2, ws.b);
        fft_->forward(ws.c, ws.a);
        multiply(ws.a, bank.psi(path.j2, path.l2), spectrum);
        fft_->inverse(spectrum, ws.b);
        for (std::size_t k = 0; k < n; ++k) grad_a1[k] += ws.b[k].real();
      }

      const std::span<const cplx> u1(tape.u1.data() + static_cast<std::size_t>(p1) * n, n);
      through_modulus(u1, grad_a1);
      fft_->forward(ws.c, ws.a);
      const auto psi = bank.psi(j1, l1);
      for (std::size_t k = 0; k < n; ++k) grad_x_hat[k] += ws.a[k] * psi[k];
    }
  }

  fft_->inverse(grad_x_hat, ws.a);
  Image grad(h, w);
  for (std::size_t k = 0; k < n; ++k) grad.data[k] = ws.a[k].real();
  return grad;
}

FeatureMap scatter(const Image& img, const ScatterConfig& cfg) {
  return ScatteringTransform(cfg, img.height, img.width).forward(img);
}

std::vector<FeatureMap> scatter_batch(std::span<const Image> imgs, const ScatterConfig& cfg) {
  std::vector<FeatureMap> out;
  if (imgs.empty()) return out;
  for (const auto& img : imgs) {
    if (!img.same_shape(imgs.front())) throw Error(Errc::shape_mismatch, "batch images differ in dims");
  }
  const ScatteringTransform transform(cfg, imgs.front().height, imgs.front().width);
  out.reserve(imgs.size());
  for (const auto& img : imgs) out.push_back(transform.forward(img));
  return out;
}

} // namespace texsr
