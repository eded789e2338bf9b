#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "qmri/core/grid.hpp"
#include "qmri/core/rng.hpp"
#include "qmri/core/types.hpp"
#include "qmri/phantom/phantom.hpp"

namespace qmri::forward {

// Cartesian ky-line selection, shared by every coil and echo. Indices are
// rows of the centered k-space grid.
struct SamplingMask {
  std::vector<std::uint8_t> keep;
  int acceleration = 1;
  std::size_t central_block = 0;

  std::size_t lines() const { return keep.size(); }
  std::size_t kept() const;
  bool operator==(const SamplingMask&) const = default;
};

// budget = round(h / accel); central_block = min(central_cap, budget) lines
// around h/2; the remaining budget drawn uniformly without replacement.
SamplingMask make_mask(std::size_t h, int accel, std::size_t central_cap, RngStream& rng);
SamplingMask full_mask(std::size_t h);

constexpr double kNoNoise = std::numeric_limits<double>::infinity();

// Multi-coil measurements (C, N, H, W), zero on unkept lines.
struct KSpaceSet {
  ComplexGrid data;
  SamplingMask mask;
  double input_snr_db = kNoNoise;

  std::size_t coils() const { return data.dim(0); }
  std::size_t echoes() const { return data.dim(1); }
};

// A = P F S per coil and echo, with a unitary centered 2-D DFT.
class MeasurementOperator {
 public:
  MeasurementOperator(phantom::CoilMaps coils, SamplingMask mask);

  const phantom::CoilMaps& coils() const { return coils_; }
  const SamplingMask& mask() const { return mask_; }
  std::size_t height() const { return coils_.s.dim(1); }
  std::size_t width() const { return coils_.s.dim(2); }

  // Raw grid forms: (N,H,W) image <-> (C,N,H,W) k-space.
  ComplexGrid apply(const ComplexGrid& x) const;
  ComplexGrid adjoint(const ComplexGrid& y) const;
  // AᴴA x
  ComplexGrid normal(const ComplexGrid& x) const;

  KSpaceSet apply(const MGREImage& x) const;
  MGREImage adjoint(const KSpaceSet& y, std::vector<double> echo_times) const;

  // Same coils, different mask.
  MeasurementOperator with_mask(SamplingMask mask) const;

 private:
  void check_image(const ComplexGrid& x) const;
  void check_kspace(const ComplexGrid& y) const;

  phantom::CoilMaps coils_;
  SamplingMask mask_;
};

// Complex white Gaussian noise on kept lines with
// E‖e‖² = ‖y‖² · 10^(-snr_db/10). snr_db = +inf leaves y unchanged.
KSpaceSet add_noise(const KSpaceSet& y, double snr_db, RngStream& rng);

// 20·log10(‖signal‖/‖noise‖) over kept lines.
double realized_snr_db(const KSpaceSet& clean, const KSpaceSet& noisy);

// Inner product sum(conj(a)·b).
cplx inner(const ComplexGrid& a, const ComplexGrid& b);
double norm2(const ComplexGrid& a);

}  // namespace qmri::forward
