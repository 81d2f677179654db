#include "fft.hpp"

#include <fftw3.h>

#include <mutex>
#include <vector>

#include "texsr/error.hpp"

namespace texsr::detail {

namespace {
// The FFTW planner keeps global state.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}
} // namespace

struct Fft2d::Plans {
  fftw_plan fwd = nullptr;
  fftw_plan inv = nullptr;
};

Fft2d::Fft2d(int height, int width) : height_(height), width_(width), plans_(std::make_unique<Plans>()) {
  if (height < 1 || width < 1) throw Error(Errc::invalid_argument, "fft dims must be positive");
  std::vector<cplx> a(size()), b(size());
  auto* pa = reinterpret_cast<fftw_complex*>(a.data());
  auto* pb = reinterpret_cast<fftw_complex*>(b.data());
  const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
  std::lock_guard lock(planner_mutex());
  plans_->fwd = fftw_plan_dft_2d(height, width, pa, pb, FFTW_FORWARD, flags);
  plans_->inv = fftw_plan_dft_2d(height, width, pa, pb, FFTW_BACKWARD, flags);
  if (plans_->fwd == nullptr || plans_->inv == nullptr) throw Error(Errc::numeric_failure, "fftw planning failed");
}

Fft2d::~Fft2d() {
  std::lock_guard lock(planner_mutex());
  if (plans_->fwd != nullptr) fftw_destroy_plan(plans_->fwd);
  if (plans_->inv != nullptr) fftw_destroy_plan(plans_->inv);
}

void Fft2d::forward(std::span<const cplx> in, std::span<cplx> out) const {
  // fftw_execute_dft takes non-const input but leaves out-of-place input intact.
  fftw_execute_dft(plans_->fwd, reinterpret_cast<fftw_complex*>(const_cast<cplx*>(in.data())),
                   reinterpret_cast<fftw_complex*>(out.data()));
}

void Fft2d::inverse(std::span<const cplx> in, std::span<cplx> out) const {
  fftw_execute_dft(plans_->inv, reinterpret_cast<fftw_complex*>(const_cast<cplx*>(in.data())),
                   reinterpret_cast<fftw_complex*>(out.data()));
  const double norm = 1.0 / static_cast<double>(size());
  for (auto& v : out) v *= norm;
}

} // namespace texsr::detail
