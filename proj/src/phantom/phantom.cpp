#include "qmri/phantom/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "qmri/biophys/model.hpp"

namespace qmri::phantom {

namespace {

constexpr std::uint64_t kMapsStream = 1;
constexpr std::uint64_t kCoilStream = 2;

struct Ellipse {
  double cu, cv;  // center, normalized coords
  double au, av;  // semi-axes
  double theta;   // rotation, rad

  bool contains(double u, double v) const {
    const double du = u - cu, dv = v - cv;
    const double c = std::cos(theta), s = std::sin(theta);
    const double x = (c * du + s * dv) / au;
    const double y = (-s * du + c * dv) / av;
    return x * x + y * y <= 1.0;
  }
};

// Normalized coordinates in [-1, 1] about the grid center.
double norm_u(std::size_t c, std::size_t w) {
  return (static_cast<double>(c) - 0.5 * static_cast<double>(w - 1)) / (0.5 * static_cast<double>(w));
}

double clamp_range(double v, const Range& r) { return std::clamp(v, r.min, r.max); }

double draw(RngStream& rng, const Range& r) { return r.min == r.max ? r.min : rng.uniform(r.min, r.max); }

Ellipse head_ellipse(RngStream& rng) {
  return Ellipse{0.0, 0.0, rng.uniform(0.66, 0.74), rng.uniform(0.76, 0.84),
                 rng.uniform(-0.15, 0.15)};
}

}  // namespace

void PhantomSpec::validate() const {
  require(height >= 8 && width >= 8, ErrorKind::domain, "phantom: degenerate geometry (H or W < 8)");
  require(n_echoes >= 1, ErrorKind::domain, "phantom: n_echoes must be >= 1");
  require(t1 > 0.0 && dt > 0.0, ErrorKind::domain, "phantom: t1 and dt must be > 0");
  for (const Range* r : {&r2s_range, &x0_range, &omega_range, &bg_gradient_range})
    require(r->min <= r->max, ErrorKind::domain, "phantom: empty range");
  require(r2s_range.min >= 0.0, ErrorKind::domain, "phantom: r2s_range.min must be >= 0");
  require(x0_range.min >= 0.0, ErrorKind::domain, "phantom: x0_range.min must be >= 0");
  require(n_coils >= 1, ErrorKind::domain, "phantom: n_coils must be >= 1");
}

std::vector<double> PhantomSpec::echo_times() const { return uniform_echo_times(n_echoes, t1, dt); }

double sinc(double u) {
  if (std::abs(u) < 1e-4) return 1.0 - u * u / 6.0;
  return std::sin(u) / u;
}

QMaps make_qmaps(const PhantomSpec& spec) {
  spec.validate();
  RngStream rng = RngStream(spec.seed, spec.stream_id).fork(kMapsStream);
  const std::size_t h = spec.height, w = spec.width, n = spec.n_echoes;
  constexpr double pi = std::numbers::pi;

  const Ellipse head = head_ellipse(rng);
  const double x0_base = draw(rng, spec.x0_range);
  const double r2s_base = draw(rng, spec.r2s_range);
  const double omega_base = draw(rng, spec.omega_range);

  struct Region {
    Ellipse shape;
    double x0, r2s, omega;
  };
  std::vector<Region> regions;
  for (std::size_t e = 0; e < spec.n_ellipses; ++e) {
    const double rad = 0.6 * std::sqrt(rng.uniform());
    const double ang = rng.uniform(0.0, 2.0 * pi);
    Ellipse el{rad * head.au * std::cos(ang), rad * head.av * std::sin(ang), rng.uniform(0.1, 0.35),
               rng.uniform(0.1, 0.35), rng.uniform(0.0, pi)};
    const double x0 = draw(rng, spec.x0_range);
    const double r2s = draw(rng, spec.r2s_range);
    const double omega = draw(rng, spec.omega_range);
    regions.push_back({el, x0, r2s, omega});
  }

  // Smooth fields: intensity bias, linear frequency offset, background gradient rate.
  const double bias_p = rng.uniform(0.5, 1.5), bias_q = rng.uniform(0.5, 1.5), bias_phi = rng.uniform(0.0, 2 * pi);
  const double ramp_u = rng.uniform(-8.0, 8.0), ramp_v = rng.uniform(-8.0, 8.0);
  const double g1u = rng.uniform(-1.0, 1.0), g1v = rng.uniform(-1.0, 1.0), g1p = rng.uniform(0.0, 2 * pi);
  const double g2u = rng.uniform(-1.5, 1.5), g2v = rng.uniform(-1.5, 1.5), g2p = rng.uniform(0.0, 2 * pi);

  QMaps q;
  q.x0 = RealGrid({h, w});
  q.r2s = RealGrid({h, w});
  q.omega = RealGrid({h, w});
  q.f_of_t = ComplexGrid({n, h, w}, cplx(1.0, 0.0));
  q.rem = MaskGrid({h, w});
  const std::vector<double> te = spec.echo_times();

  for (std::size_t r = 0; r < h; ++r) {
    const double v = norm_u(r, h);
    for (std::size_t c = 0; c < w; ++c) {
      const double u = norm_u(c, w);
      if (!head.contains(u, v)) continue;
      double x0 = x0_base, r2s = r2s_base, omega = omega_base;
      for (const auto& reg : regions) {
        if (reg.shape.contains(u, v)) {
          x0 = reg.x0;
          r2s = reg.r2s;
          omega = reg.omega;
        }
      }
      x0 *= 1.0 + 0.1 * std::cos(pi * (bias_p * u + bias_q * v) + bias_phi);
      omega += ramp_u * u + ramp_v * v;
      const double s = 0.5 + 0.25 * (std::cos(pi * (g1u * u + g1v * v) + g1p) +
                                     std::cos(pi * (g2u * u + g2v * v) + g2p));
      const double g = spec.bg_gradient_range.min +
                       (spec.bg_gradient_range.max - spec.bg_gradient_range.min) * s;

      q.rem(r, c) = 1;
      q.x0(r, c) = clamp_range(x0, spec.x0_range);
      q.r2s(r, c) = r2s;
      q.omega(r, c) = clamp_range(omega, spec.omega_range);
      for (std::size_t k = 0; k < n; ++k) q.f_of_t(k, r, c) = cplx(sinc(g * te[k]), 0.0);
    }
  }
  return q;
}

CoilMaps make_coil_maps(const PhantomSpec& spec) {
  spec.validate();
  RngStream rng = RngStream(spec.seed, spec.stream_id).fork(kCoilStream);
  const std::size_t h = spec.height, w = spec.width, nc = spec.n_coils;
  constexpr double pi = std::numbers::pi;

  struct Lobe {
    double cu, cv, sigma, pu, pv, p0;
  };
  std::vector<Lobe> lobes;
  const double jitter = rng.uniform(0.0, 2.0 * pi);
  for (std::size_t i = 0; i < nc; ++i) {
    const double ang = jitter + 2.0 * pi * static_cast<double>(i) / static_cast<double>(nc) +
                       rng.uniform(-0.2, 0.2);
    const double rad = rng.uniform(0.9, 1.2);
    lobes.push_back({rad * std::cos(ang), rad * std::sin(ang), rng.uniform(0.6, 0.9),
                     rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(0.0, 2.0 * pi)});
  }

  CoilMaps maps{ComplexGrid({nc, h, w})};
  for (std::size_t r = 0; r < h; ++r) {
    const double v = norm_u(r, h);
    for (std::size_t c = 0; c < w; ++c) {
      const double u = norm_u(c, w);
      double energy = 0.0;
      for (std::size_t i = 0; i < nc; ++i) {
        const auto& l = lobes[i];
        const double d2 = (u - l.cu) * (u - l.cu) + (v - l.cv) * (v - l.cv);
        const double mag = std::exp(-d2 / (2.0 * l.sigma * l.sigma));
        const double ph = l.pu * u + l.pv * v + l.p0;
        maps.s(i, r, c) = std::polar(mag, ph);
        energy += mag * mag;
      }
      // Unit sum-of-squares, phase referenced to coil 0.
      const double inv = 1.0 / std::sqrt(energy);
      const cplx ref = std::polar(1.0, -std::arg(maps.s(0, r, c)));
      for (std::size_t i = 0; i < nc; ++i) maps.s(i, r, c) = maps.s(i, r, c) * ref * inv;
    }
  }
  return maps;
}

MGREImage forward_biophysics(const QMaps& q, std::span<const double> echo_times) {
  const std::size_t h = q.height(), w = q.width(), n = echo_times.size();
  require(q.f_of_t.ndim() == 3 && q.f_of_t.dim(0) == n, ErrorKind::shape,
          "forward_biophysics: echo count of f_of_t does not match echo_times");
  MGREImage img{ComplexGrid({n, h, w}), std::vector<double>(echo_times.begin(), echo_times.end())};
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) {
      if (!q.rem(r, c)) continue;
      for (std::size_t k = 0; k < n; ++k)
        img.data(k, r, c) = biophys::signal_at(q.x0(r, c), q.r2s(r, c), q.omega(r, c), q.f_of_t(k, r, c),
                                               echo_times[k]);
    }
  return img;
}

}  // namespace qmri::phantom
