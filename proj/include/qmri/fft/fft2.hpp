#pragma once

#include <cstddef>
#include <memory>
#include <span>

#include "qmri/core/grid.hpp"

namespace qmri {

// Unitary 2-D DFT (1/sqrt(HW) both directions) on H×W complex slabs, with
// k-space stored centered (DC at row H/2, column W/2). One instance owns its
// work buffer, so use one per worker.
class Fft2 {
 public:
  Fft2(std::size_t height, std::size_t width);
  ~Fft2();
  Fft2(Fft2&&) noexcept;
  Fft2& operator=(Fft2&&) noexcept;
  Fft2(const Fft2&) = delete;
  Fft2& operator=(const Fft2&) = delete;

  std::size_t height() const { return h_; }
  std::size_t width() const { return w_; }

  // image -> centered k-space, in place
  void forward(std::span<cplx> slab);
  // centered k-space -> image, in place
  void inverse(std::span<cplx> slab);

 private:
  struct Impl;
  std::size_t h_ = 0, w_ = 0;
  std::unique_ptr<Impl> impl_;
};

// fftshift / ifftshift of an H×W slab (out-of-place into dst).
void fftshift2(std::span<const cplx> src, std::span<cplx> dst, std::size_t h, std::size_t w);
void ifftshift2(std::span<const cplx> src, std::span<cplx> dst, std::size_t h, std::size_t w);

}  // namespace qmri
