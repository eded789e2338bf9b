#include "qmri/forward/operator.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "qmri/fft/fft2.hpp"
#include "qmri/simd/kernels.hpp"

namespace qmri::forward {

namespace {

// One transform per thread and grid size keeps operators immutable and shareable.
Fft2& thread_fft(std::size_t h, std::size_t w) {
  thread_local std::map<std::pair<std::size_t, std::size_t>, Fft2> cache;
  auto it = cache.find({h, w});
  if (it == cache.end()) it = cache.emplace(std::make_pair(h, w), Fft2(h, w)).first;
  return it->second;
}

void zero_unkept(std::span<cplx> slab, const SamplingMask& m, std::size_t w) {
  for (std::size_t r = 0; r < m.lines(); ++r)
    if (!m.keep[r]) std::fill_n(slab.begin() + static_cast<std::ptrdiff_t>(r * w), w, cplx{});
}

}  // namespace

std::size_t SamplingMask::kept() const {
  return static_cast<std::size_t>(std::count(keep.begin(), keep.end(), std::uint8_t{1}));
}

SamplingMask make_mask(std::size_t h, int accel, std::size_t central_cap, RngStream& rng) {
  require(accel >= 1, ErrorKind::domain, "make_mask: acceleration must be >= 1");
  require(h >= central_cap, ErrorKind::domain, "make_mask: central_cap exceeds line count");
  const auto budget = static_cast<std::size_t>(std::lround(static_cast<double>(h) / accel));
  require(budget > 0, ErrorKind::domain, "make_mask: line budget is zero");
  SamplingMask m;
  m.keep.assign(h, 0);
  m.acceleration = accel;
  m.central_block = std::min(central_cap, budget);
  const std::size_t start = h / 2 - m.central_block / 2;
  for (std::size_t r = start; r < start + m.central_block; ++r) m.keep[r] = 1;

  std::vector<std::size_t> outer;
  for (std::size_t r = 0; r < h; ++r)
    if (!m.keep[r]) outer.push_back(r);
  const std::size_t extra = budget - m.central_block;
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < extra; ++i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(i, outer.size() - 1));
    std::swap(outer[i], outer[j]);
    m.keep[outer[i]] = 1;
  }
  return m;
}

SamplingMask full_mask(std::size_t h) {
  SamplingMask m;
  m.keep.assign(h, 1);
  m.acceleration = 1;
  m.central_block = h;
  return m;
}

MeasurementOperator::MeasurementOperator(phantom::CoilMaps coils, SamplingMask mask)
    : coils_(std::move(coils)), mask_(std::move(mask)) {
  require(coils_.s.ndim() == 3, ErrorKind::shape, "MeasurementOperator: coil maps must be (C,H,W)");
  require(mask_.lines() == coils_.s.dim(1), ErrorKind::shape,
          "MeasurementOperator: mask length does not match coil map height");
}

MeasurementOperator MeasurementOperator::with_mask(SamplingMask mask) const {
  return MeasurementOperator(coils_, std::move(mask));
}

void MeasurementOperator::check_image(const ComplexGrid& x) const {
  require(x.ndim() == 3 && x.dim(1) == height() && x.dim(2) == width(), ErrorKind::shape,
          "shape mismatch: image " + dims_to_string(x.dims()) + " vs coil maps " +
              dims_to_string(coils_.s.dims()));
}

void MeasurementOperator::check_kspace(const ComplexGrid& y) const {
  require(y.ndim() == 4 && y.dim(0) == coils_.coils() && y.dim(2) == height() && y.dim(3) == width(),
          ErrorKind::shape,
          "shape mismatch: k-space " + dims_to_string(y.dims()) + " vs coil maps " +
              dims_to_string(coils_.s.dims()));
}

ComplexGrid MeasurementOperator::apply(const ComplexGrid& x) const {
  check_image(x);
  const std::size_t nc = coils_.coils(), ne = x.dim(0), h = height(), w = width(), hw = h * w;
  const auto& k = simd::active();
  Fft2& fft = thread_fft(h, w);
  ComplexGrid y({nc, ne, h, w});
  for (std::size_t i = 0; i < nc; ++i) {
    const cplx* s = coils_.s.slab(i).data();
    for (std::size_t e = 0; e < ne; ++e) {
      std::span<cplx> out = y.span().subspan((i * ne + e) * hw, hw);
      k.cmul(hw, s, x.slab(e).data(), out.data());
      fft.forward(out);
      zero_unkept(out, mask_, w);
    }
  }
  return y;
}

ComplexGrid MeasurementOperator::adjoint(const ComplexGrid& y) const {
  check_kspace(y);
  const std::size_t nc = coils_.coils(), ne = y.dim(1), h = height(), w = width(), hw = h * w;
  const auto& k = simd::active();
  Fft2& fft = thread_fft(h, w);
  ComplexGrid x({ne, h, w});
  std::vector<cplx> tmp(hw);
  for (std::size_t i = 0; i < nc; ++i) {
    const cplx* s = coils_.s.slab(i).data();
    for (std::size_t e = 0; e < ne; ++e) {
      const auto in = y.span().subspan((i * ne + e) * hw, hw);
      std::copy(in.begin(), in.end(), tmp.begin());
      zero_unkept(tmp, mask_, w);
      fft.inverse(tmp);
      k.cmul_conj_acc(hw, s, tmp.data(), x.slab(e).data());
    }
  }
  return x;
}

ComplexGrid MeasurementOperator::normal(const ComplexGrid& x) const {
  check_image(x);
  const std::size_t nc = coils_.coils(), ne = x.dim(0), h = height(), w = width(), hw = h * w;
  const auto& k = simd::active();
  Fft2& fft = thread_fft(h, w);
  ComplexGrid out({ne, h, w});
  std::vector<cplx> tmp(hw);
  for (std::size_t i = 0; i < nc; ++i) {
    const cplx* s = coils_.s.slab(i).data();
    for (std::size_t e = 0; e < ne; ++e) {
      k.cmul(hw, s, x.slab(e).data(), tmp.data());
      fft.forward(tmp);
      zero_unkept(tmp, mask_, w);
      fft.inverse(tmp);
      k.cmul_conj_acc(hw, s, tmp.data(), out.slab(e).data());
    }
  }
  return out;
}

KSpaceSet MeasurementOperator::apply(const MGREImage& x) const {
  return KSpaceSet{apply(x.data), mask_, kNoNoise};
}

MGREImage MeasurementOperator::adjoint(const KSpaceSet& y, std::vector<double> echo_times) const {
  require(y.mask == mask_, ErrorKind::shape, "adjoint: k-space mask does not match operator mask");
  MGREImage img{adjoint(y.data), std::move(echo_times)};
  require(img.echo_times.size() == img.echoes(), ErrorKind::shape, "adjoint: echo_times length != N");
  return img;
}

KSpaceSet add_noise(const KSpaceSet& y, double snr_db, RngStream& rng) {
  KSpaceSet out = y;
  if (std::isinf(snr_db) && snr_db > 0) return out;
  const std::size_t nc = y.data.dim(0), ne = y.data.dim(1), h = y.data.dim(2), w = y.data.dim(3);
  double energy = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < nc; ++i)
    for (std::size_t e = 0; e < ne; ++e)
      for (std::size_t r = 0; r < h; ++r) {
        if (!y.mask.keep[r]) continue;
        for (std::size_t c = 0; c < w; ++c) energy += std::norm(y.data(i, e, r, c));
        count += w;
      }
  require(energy > 0.0, ErrorKind::domain, "add_noise: measurements are all zero (SNR undefined)");
  const double sigma2 = energy / (static_cast<double>(count) * std::pow(10.0, snr_db / 10.0));
  const double s = std::sqrt(sigma2 / 2.0);
  for (std::size_t i = 0; i < nc; ++i)
    for (std::size_t e = 0; e < ne; ++e)
      for (std::size_t r = 0; r < h; ++r) {
        if (!y.mask.keep[r]) continue;
        for (std::size_t c = 0; c < w; ++c) {
          const double re = rng.normal(), im = rng.normal();
          out.data(i, e, r, c) += cplx(s * re, s * im);
        }
      }
  out.input_snr_db = snr_db;
  return out;
}

double realized_snr_db(const KSpaceSet& clean, const KSpaceSet& noisy) {
  require_same_dims(clean.data.dims(), noisy.data.dims(), "realized_snr_db");
  double sig = 0.0, err = 0.0;
  for (std::size_t i = 0; i < clean.data.size(); ++i) {
    sig += std::norm(clean.data[i]);
    err += std::norm(noisy.data[i] - clean.data[i]);
  }
  return 10.0 * std::log10(sig / err);
}

cplx inner(const ComplexGrid& a, const ComplexGrid& b) {
  require_same_dims(a.dims(), b.dims(), "inner");
  cplx s{};
  for (std::size_t i = 0; i < a.size(); ++i) s += std::conj(a[i]) * b[i];
  return s;
}

double norm2(const ComplexGrid& a) {
  double s = 0.0;
  for (const auto& v : a.vec()) s += std::norm(v);
  return std::sqrt(s);
}

}  // namespace qmri::forward
