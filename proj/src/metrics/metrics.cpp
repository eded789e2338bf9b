#include "qmri/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace qmri::metrics {

namespace {

template <class T>
double snr_impl(const Grid<T>& ref, const Grid<T>& est) {
  require_same_dims(ref.dims(), est.dims(), "snr_db");
  double sig = 0.0, err = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    sig += std::norm(ref[i]);
    err += std::norm(ref[i] - est[i]);
  }
  require(sig > 0.0, ErrorKind::domain, "snr_db: zero reference");
  if (err == 0.0) return kPerfectSnrDb;
  return std::min(kPerfectSnrDb, 10.0 * std::log10(sig / err));
}

std::vector<double> gaussian_window(std::size_t n, double sigma) {
  std::vector<double> g(n * n);
  const double c = 0.5 * static_cast<double>(n - 1);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double di = static_cast<double>(i) - c, dj = static_cast<double>(j) - c;
      g[i * n + j] = std::exp(-(di * di + dj * dj) / (2.0 * sigma * sigma));
      sum += g[i * n + j];
    }
  for (auto& v : g) v /= sum;
  return g;
}

double ssim_slab(const double* a, const double* b, std::size_t h, std::size_t w, double range,
                 const SsimParams& p, const std::vector<double>& win) {
  const std::size_t n = p.window;
  const double c1 = (p.k1 * range) * (p.k1 * range);
  const double c2 = (p.k2 * range) * (p.k2 * range);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t r = 0; r + n <= h; ++r)
    for (std::size_t c = 0; c + n <= w; ++c) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const double g = win[i * n + j];
          const double x = a[(r + i) * w + c + j], y = b[(r + i) * w + c + j];
          ma += g * x;
          mb += g * y;
          saa += g * x * x;
          sbb += g * y * y;
          sab += g * x * y;
        }
      const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  return total / static_cast<double>(count);
}

}  // namespace

double snr_db(const RealGrid& ref, const RealGrid& est) { return snr_impl(ref, est); }
double snr_db(const ComplexGrid& ref, const ComplexGrid& est) { return snr_impl(ref, est); }

double ssim(const RealGrid& ref, const RealGrid& est, std::optional<double> dynamic_range, const SsimParams& p) {
  require_same_dims(ref.dims(), est.dims(), "ssim");
  require(ref.ndim() == 2, ErrorKind::shape, "ssim: expected a 2-D image");
  const std::size_t h = ref.dim(0), w = ref.dim(1);
  require(p.window <= h && p.window <= w, ErrorKind::shape, "ssim: window larger than image");
  double range;
  if (dynamic_range) {
    range = *dynamic_range;
  } else {
    const auto [lo, hi] = std::minmax_element(ref.vec().begin(), ref.vec().end());
    range = *hi - *lo;
  }
  if (range <= 0.0) range = 1.0;
  return ssim_slab(ref.data(), est.data(), h, w, range, p, gaussian_window(p.window, p.sigma));
}

double ssim_stack(const RealGrid& ref, const RealGrid& est, const SsimParams& p) {
  require_same_dims(ref.dims(), est.dims(), "ssim_stack");
  require(ref.ndim() == 3, ErrorKind::shape, "ssim_stack: expected (N,H,W)");
  const std::size_t n = ref.dim(0), h = ref.dim(1), w = ref.dim(2);
  require(p.window <= h && p.window <= w, ErrorKind::shape, "ssim: window larger than image");
  const auto [lo, hi] = std::minmax_element(ref.vec().begin(), ref.vec().end());
  double range = *hi - *lo;
  if (range <= 0.0) range = 1.0;
  const auto win = gaussian_window(p.window, p.sigma);
  double total = 0.0;
  for (std::size_t k = 0; k < n; ++k)
    total += ssim_slab(ref.slab(k).data(), est.slab(k).data(), h, w, range, p, win);
  return total / static_cast<double>(n);
}

RealGrid magnitude(const ComplexGrid& g) {
  RealGrid m(g.dims());
  for (std::size_t i = 0; i < g.size(); ++i) m[i] = std::abs(g[i]);
  return m;
}

RealGrid apply_mask(const RealGrid& g, const MaskGrid& mask) {
  RealGrid out = g;
  const std::size_t hw = mask.size();
  require(g.size() % hw == 0, ErrorKind::shape, "apply_mask: mask does not tile the grid");
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!mask[i % hw]) out[i] = 0.0;
  return out;
}

}  // namespace qmri::metrics
