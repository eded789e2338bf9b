#include "qmri/biophys/nlls.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <thread>

#include "qmri/biophys/model.hpp"

namespace qmri::biophys {

namespace {

constexpr std::size_t kMaxParams = 3;
using Vec = std::array<double, kMaxParams>;
using Mat = std::array<Vec, kMaxParams>;

// Gaussian elimination with partial pivoting on the leading n×n block.
bool solve(Mat a, Vec b, std::size_t n, Vec& x) {
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    if (a[piv][c] == 0.0 || !std::isfinite(a[piv][c])) return false;
    std::swap(a[c], a[piv]);
    std::swap(b[c], b[piv]);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
      b[r] -= f * b[c];
    }
  }
  for (std::size_t c = n; c-- > 0;) {
    double s = b[c];
    for (std::size_t k = c + 1; k < n; ++k) s -= a[c][k] * x[k];
    x[c] = s / a[c][c];
  }
  return true;
}

struct Problem {
  std::span<const cplx> s;
  std::span<const cplx> f;
  std::span<const double> t;
  bool magnitude_only;
};

double objective(const Problem& p, double x0, double r2s, double omega) {
  double cost = 0.0;
  for (std::size_t k = 0; k < p.t.size(); ++k) {
    if (p.magnitude_only) {
      const double d = std::abs(p.s[k]) - x0 * std::exp(-r2s * p.t[k]) * std::abs(p.f[k]);
      cost += d * d;
    } else {
      cost += std::norm(p.s[k] - signal_at(x0, r2s, omega, p.f[k], p.t[k]));
    }
  }
  return cost;
}

// Normal equations MᵀM and Mᵀr for the model Jacobian M = ∂m/∂p.
void normal_equations(const Problem& p, const Vec& q, std::size_t np, Mat& jtj, Vec& jtr) {
  jtj = {};
  jtr = {};
  for (std::size_t k = 0; k < p.t.size(); ++k) {
    const double t = p.t[k];
    const double e = std::exp(-q[1] * t);
    if (p.magnitude_only) {
      const double fa = std::abs(p.f[k]);
      const double m = q[0] * e * fa;
      const double r = std::abs(p.s[k]) - m;
      const double g[2] = {e * fa, -t * m};
      for (std::size_t i = 0; i < 2; ++i) {
        jtr[i] += g[i] * r;
        for (std::size_t j = 0; j < 2; ++j) jtj[i][j] += g[i] * g[j];
      }
      continue;
    }
    const cplx rot(std::cos(q[2] * t), -std::sin(q[2] * t));
    const cplx dx0 = e * rot * p.f[k];
    const cplx m = q[0] * dx0;
    const cplx r = p.s[k] - m;
    const cplx g[3] = {dx0, -t * m, cplx(0.0, -t) * m};
    for (std::size_t i = 0; i < np; ++i) {
      jtr[i] += g[i].real() * r.real() + g[i].imag() * r.imag();
      for (std::size_t j = 0; j < np; ++j)
        jtj[i][j] += g[i].real() * g[j].real() + g[i].imag() * g[j].imag();
    }
  }
}

VoxelFit initial_guess(const Problem& p, double r2s_max) {
  VoxelFit g;
  // log|s/f| = log x0 - r2s·t
  double st = 0, sy = 0, stt = 0, sty = 0, n = 0;
  for (std::size_t k = 0; k < p.t.size(); ++k) {
    const double a = std::abs(p.s[k]), b = std::abs(p.f[k]);
    if (a <= 0.0 || b <= 0.0) continue;
    const double y = std::log(a / b);
    st += p.t[k];
    sy += y;
    stt += p.t[k] * p.t[k];
    sty += p.t[k] * y;
    n += 1;
  }
  if (n >= 2) {
    const double den = n * stt - st * st;
    const double slope = den != 0.0 ? (n * sty - st * sy) / den : 0.0;
    const double icpt = (sy - slope * st) / n;
    g.r2s = std::clamp(-slope, 0.0, r2s_max);
    g.x0 = std::exp(icpt);
  } else {
    g.x0 = std::abs(p.s[0]);
  }
  if (p.t.size() >= 2 && std::abs(p.f[0]) > 0 && std::abs(p.f[1]) > 0) {
    const cplx d = (p.s[1] / p.f[1]) * std::conj(p.s[0] / p.f[0]);
    g.omega = -std::arg(d) / (p.t[1] - p.t[0]);
  }
  return g;
}

}  // namespace

double fit_objective(std::span<const cplx> signal, std::span<const cplx> f, std::span<const double> echo_times,
                     double x0, double r2s, double omega, bool magnitude_only) {
  return objective(Problem{signal, f, echo_times, magnitude_only}, x0, r2s, omega);
}

VoxelFit nlls_fit_voxel(std::span<const cplx> signal, std::span<const cplx> f, std::span<const double> echo_times,
                        const FitOptions& opt, const std::optional<VoxelFit>& init) {
  require(signal.size() == echo_times.size() && f.size() == echo_times.size(), ErrorKind::shape,
          "nlls_fit_voxel: echo count mismatch");
  require(echo_times.size() >= 3, ErrorKind::domain, "nlls_fit_voxel: need at least 3 echoes");
  double energy = 0.0;
  for (const auto& v : signal) energy += std::norm(v);
  VoxelFit out;
  if (!(std::sqrt(energy) > opt.signal_threshold)) {
    out.status = FitStatus::below_signal_threshold;
    return out;
  }

  const Problem p{signal, f, echo_times, opt.magnitude_only};
  const VoxelFit g = init ? *init : initial_guess(p, opt.r2s_max);
  const std::size_t np = opt.magnitude_only ? 2 : (opt.fit_omega ? 3 : 2);
  Vec q{g.x0, std::clamp(g.r2s, 0.0, opt.r2s_max), g.omega};
  double cost = objective(p, q[0], q[1], q[2]);
  if (opt.record_trace) out.trace.push_back(cost);

  double mu = opt.damping_init;
  bool converged = cost == 0.0;
  int it = 0;
  for (; it < opt.max_iters && !converged; ++it) {
    Mat jtj;
    Vec jtr;
    normal_equations(p, q, np, jtj, jtr);
    bool accepted = false;
    // Inner loop: raise damping until a step reduces the objective.
    while (!accepted) {
      Mat a = jtj;
      for (std::size_t i = 0; i < np; ++i) a[i][i] += mu * std::max(jtj[i][i], 1e-300);
      Vec d{};
      if (!solve(a, jtr, np, d)) {
        mu *= opt.damping_factor;
        if (mu > 1e20) break;
        continue;
      }
      Vec cand = q;
      for (std::size_t i = 0; i < np; ++i) cand[i] += d[i];
      cand[1] = std::clamp(cand[1], 0.0, opt.r2s_max);
      const double c = objective(p, cand[0], cand[1], cand[2]);
      if (std::isfinite(c) && c < cost) {
        double rel = 0.0;
        for (std::size_t i = 0; i < np; ++i)
          rel = std::max(rel, std::abs(cand[i] - q[i]) / (std::abs(q[i]) + opt.step_tol));
        q = cand;
        cost = c;
        mu = std::max(mu / opt.damping_factor, 1e-15);
        accepted = true;
        if (opt.record_trace) out.trace.push_back(cost);
        if (rel <= opt.step_tol || cost == 0.0) converged = true;
      } else {
        mu *= opt.damping_factor;
        if (mu > 1e20) break;
      }
    }
    // No step improves the objective at any damping: a numerical minimum.
    if (!accepted) converged = true;
  }
  out.x0 = q[0];
  out.r2s = q[1];
  out.omega = q[2];
  out.residual = std::sqrt(cost);
  out.iters = it;
  out.converged = converged;
  out.status = converged ? FitStatus::ok : FitStatus::not_converged;
  return out;
}

MapFit nlls_fit_map(const MGREImage& x, const ComplexGrid& f_of_t, const MaskGrid& rem, FitOptions opt,
                    unsigned workers) {
  require_same_dims(x.data.dims(), f_of_t.dims(), "nlls_fit_map: image vs f_of_t");
  const std::size_t n = x.echoes(), h = x.height(), w = x.width();
  require(rem.ndim() == 2 && rem.dim(0) == h && rem.dim(1) == w, ErrorKind::shape,
          "nlls_fit_map: rem shape mismatch");
  require(x.echo_times.size() == n, ErrorKind::shape, "nlls_fit_map: echo_times length != N");

  double first = 0.0;
  std::size_t nmask = 0;
  for (std::size_t v = 0; v < h * w; ++v)
    if (rem[v]) {
      first += std::abs(x.data[v]);
      ++nmask;
    }
  MapFit out;
  out.maps.x0 = RealGrid({h, w});
  out.maps.r2s = RealGrid({h, w});
  out.maps.omega = RealGrid({h, w});
  out.maps.f_of_t = f_of_t;
  out.maps.rem = rem;
  if (nmask == 0) return out;
  opt.signal_threshold = 1e-3 * first / static_cast<double>(nmask);
  opt.record_trace = false;

  std::vector<FitStatus> status(h * w, FitStatus::ok);
  auto run_rows = [&](std::size_t r0, std::size_t r1) {
    std::vector<cplx> s(n), fv(n);
    for (std::size_t r = r0; r < r1; ++r)
      for (std::size_t c = 0; c < w; ++c) {
        const std::size_t v = r * w + c;
        if (!rem[v]) continue;
        for (std::size_t k = 0; k < n; ++k) {
          s[k] = x.data(k, r, c);
          fv[k] = f_of_t(k, r, c);
        }
        const VoxelFit fit = nlls_fit_voxel(s, fv, x.echo_times, opt);
        status[v] = fit.status;
        if (fit.status == FitStatus::below_signal_threshold) continue;
        out.maps.x0[v] = fit.x0;
        out.maps.r2s[v] = fit.r2s;
        out.maps.omega[v] = fit.omega;
      }
  };
  workers = std::max(1u, workers);
  if (workers == 1) {
    run_rows(0, h);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (h + workers - 1) / workers;
    for (unsigned t = 0; t < workers; ++t) {
      const std::size_t r0 = t * chunk, r1 = std::min(h, r0 + chunk);
      if (r0 < r1) pool.emplace_back(run_rows, r0, r1);
    }
    for (auto& th : pool) th.join();
  }
  for (std::size_t v = 0; v < h * w; ++v) {
    if (!rem[v]) continue;
    switch (status[v]) {
      case FitStatus::ok: ++out.report.fitted; break;
      case FitStatus::below_signal_threshold: ++out.report.below_threshold; break;
      case FitStatus::not_converged: ++out.report.fitted; ++out.report.not_converged; break;
    }
  }
  return out;
}

}  // namespace qmri::biophys
