#include "qmri/fft/fft2.hpp"

#include <fftw3.h>

#include <cmath>
#include <mutex>

namespace qmri {

namespace {

// FFTW's planner is not re-entrant.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

struct Fft2::Impl {
  fftw_complex* buf = nullptr;
  fftw_plan fwd = nullptr;
  fftw_plan bwd = nullptr;

  ~Impl() {
    std::lock_guard lock(planner_mutex());
    if (fwd) fftw_destroy_plan(fwd);
    if (bwd) fftw_destroy_plan(bwd);
    if (buf) fftw_free(buf);
  }
};

Fft2::Fft2(std::size_t height, std::size_t width) : h_(height), w_(width), impl_(std::make_unique<Impl>()) {
  require(h_ > 0 && w_ > 0, ErrorKind::shape, "Fft2: empty grid");
  std::lock_guard lock(planner_mutex());
  impl_->buf = fftw_alloc_complex(h_ * w_);
  impl_->fwd = fftw_plan_dft_2d(static_cast<int>(h_), static_cast<int>(w_), impl_->buf, impl_->buf,
                                FFTW_FORWARD, FFTW_ESTIMATE);
  impl_->bwd = fftw_plan_dft_2d(static_cast<int>(h_), static_cast<int>(w_), impl_->buf, impl_->buf,
                                FFTW_BACKWARD, FFTW_ESTIMATE);
}

Fft2::~Fft2() = default;
Fft2::Fft2(Fft2&&) noexcept = default;
Fft2& Fft2::operator=(Fft2&&) noexcept = default;

void Fft2::forward(std::span<cplx> slab) {
  require(slab.size() == h_ * w_, ErrorKind::shape, "Fft2::forward: slab size mismatch");
  auto* b = reinterpret_cast<cplx*>(impl_->buf);
  std::copy(slab.begin(), slab.end(), b);
  fftw_execute(impl_->fwd);
  const double s = 1.0 / std::sqrt(static_cast<double>(h_ * w_));
  for (std::size_t i = 0; i < h_ * w_; ++i) b[i] *= s;
  fftshift2(std::span<const cplx>(b, h_ * w_), slab, h_, w_);
}

void Fft2::inverse(std::span<cplx> slab) {
  require(slab.size() == h_ * w_, ErrorKind::shape, "Fft2::inverse: slab size mismatch");
  auto* b = reinterpret_cast<cplx*>(impl_->buf);
  ifftshift2(slab, std::span<cplx>(b, h_ * w_), h_, w_);
  fftw_execute(impl_->bwd);
  const double s = 1.0 / std::sqrt(static_cast<double>(h_ * w_));
  for (std::size_t i = 0; i < h_ * w_; ++i) slab[i] = b[i] * s;
}

void fftshift2(std::span<const cplx> src, std::span<cplx> dst, std::size_t h, std::size_t w) {
  const std::size_t sh = h / 2, sw = w / 2;
  for (std::size_t r = 0; r < h; ++r) {
    const std::size_t rd = (r + sh) % h;
    for (std::size_t c = 0; c < w; ++c) dst[rd * w + (c + sw) % w] = src[r * w + c];
  }
}

void ifftshift2(std::span<const cplx> src, std::span<cplx> dst, std::size_t h, std::size_t w) {
  const std::size_t sh = h / 2, sw = w / 2;
  for (std::size_t r = 0; r < h; ++r) {
    const std::size_t rs = (r + sh) % h;
    for (std::size_t c = 0; c < w; ++c) dst[r * w + c] = src[rs * w + (c + sw) % w];
  }
}

}  // namespace qmri
