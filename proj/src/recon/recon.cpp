#include "qmri/recon/recon.hpp"

#include <algorithm>
#include <cmath>

namespace qmri::recon {

namespace {

void check_inputs(const forward::MeasurementOperator& op, const forward::KSpaceSet& y) {
  require(y.data.ndim() == 4 && y.coils() == op.coils().coils() && y.data.dim(2) == op.height() &&
              y.data.dim(3) == op.width(),
          ErrorKind::shape, "recon: k-space " + dims_to_string(y.data.dims()) + " does not match the operator");
}

double data_term(const forward::MeasurementOperator& op, const ComplexGrid& x, const ComplexGrid& y) {
  ComplexGrid ax = op.apply(x);
  double s = 0.0;
  for (std::size_t i = 0; i < ax.size(); ++i) s += std::norm(ax[i] - y[i]);
  return 0.5 * s;
}

// Aᴴ(Ax - y) = AᴴA x - Aᴴy
ComplexGrid data_gradient(const forward::MeasurementOperator& op, const ComplexGrid& x, const ComplexGrid& aty) {
  ComplexGrid g = op.normal(x);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] -= aty[i];
  return g;
}

double diff_norm(const ComplexGrid& a, const ComplexGrid& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::norm(a[i] - b[i]);
  return std::sqrt(s);
}

// Forward differences with a zero last column/row.
template <class T>
void grad2(const T* x, std::size_t h, std::size_t w, T* gh, T* gv) {
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) {
      const std::size_t i = r * w + c;
      gh[i] = c + 1 < w ? x[i + 1] - x[i] : T{};
      gv[i] = r + 1 < h ? x[i + w] - x[i] : T{};
    }
}

// Adjoint of grad2.
template <class T>
void grad2_adjoint(const T* ph, const T* pv, std::size_t h, std::size_t w, T* out) {
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) {
      const std::size_t i = r * w + c;
      T v{};
      if (c > 0) v += ph[i - 1];
      if (c + 1 < w) v -= ph[i];
      if (r > 0) v += pv[i - w];
      if (r + 1 < h) v -= pv[i];
      out[i] = v;
    }
}

// Projection onto the complex unit disk.
cplx project_unit(cplx p) {
  const double m = std::abs(p);
  return m > 1.0 ? p / m : p;
}

// argmin_x ½‖x - z‖² + lam·‖Dx‖₁ via projected gradient on the dual p
// (|p| <= 1 elementwise, complex); p carries over between calls.
class TvProx {
 public:
  TvProx(std::size_t slabs, std::size_t h, std::size_t w)
      : h_(h), w_(w), ph_(slabs * h * w), pv_(slabs * h * w), u_(h * w), gh_(h * w), gv_(h * w) {}

  void apply(std::size_t slab, const cplx* z, double lam, std::size_t iters, cplx* x) {
    const std::size_t n = h_ * w_;
    if (lam == 0.0) {
      std::copy_n(z, n, x);
      return;
    }
    cplx* ph = ph_.data() + slab * n;
    cplx* pv = pv_.data() + slab * n;
    const double step = 1.0 / (8.0 * lam);
    for (std::size_t it = 0; it < iters; ++it) {
      grad2_adjoint(ph, pv, h_, w_, u_.data());
      for (std::size_t i = 0; i < n; ++i) u_[i] = z[i] - lam * u_[i];
      grad2(u_.data(), h_, w_, gh_.data(), gv_.data());
      for (std::size_t i = 0; i < n; ++i) {
        ph[i] = project_unit(ph[i] + step * gh_[i]);
        pv[i] = project_unit(pv[i] + step * gv_[i]);
      }
    }
    grad2_adjoint(ph, pv, h_, w_, u_.data());
    for (std::size_t i = 0; i < n; ++i) x[i] = z[i] - lam * u_[i];
  }

 private:
  std::size_t h_, w_;
  std::vector<cplx> ph_, pv_, u_, gh_, gv_;
};

void check_divergence(std::size_t& rising, double prev, double cur, std::size_t patience, std::size_t k,
                      const char* who) {
  rising = cur > prev ? rising + 1 : 0;
  require(std::isfinite(cur), ErrorKind::numeric, std::string(who) + ": non-finite value at iteration " +
                                                      std::to_string(k));
  require(patience == 0 || rising < patience, ErrorKind::numeric,
          std::string(who) + ": diverging, increased for " + std::to_string(rising) +
              " consecutive iterations (iteration " + std::to_string(k) + ", value " + std::to_string(cur) + ")");
}

}  // namespace

MGREImage zero_fill(const forward::MeasurementOperator& op, const forward::KSpaceSet& y,
                    std::vector<double> echo_times) {
  check_inputs(op, y);
  return op.adjoint(y, std::move(echo_times));
}

double total_variation(const ComplexGrid& x) {
  require(x.ndim() == 3, ErrorKind::shape, "total_variation: expected (N,H,W)");
  const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), hw = h * w;
  std::vector<cplx> gh(hw), gv(hw);
  double tv = 0.0;
  for (std::size_t e = 0; e < n; ++e) {
    grad2(x.data() + e * hw, h, w, gh.data(), gv.data());
    for (std::size_t i = 0; i < hw; ++i) tv += std::abs(gh[i]) + std::abs(gv[i]);
  }
  return tv;
}

ReconResult tv_recon(const forward::MeasurementOperator& op, const forward::KSpaceSet& y,
                     std::vector<double> echo_times, const TvOptions& opt) {
  check_inputs(op, y);
  require(opt.tau >= 0.0, ErrorKind::usage, "tv_recon: tau must be >= 0");
  require(opt.gamma > 0.0 && opt.gamma <= 1.0, ErrorKind::usage, "tv_recon: gamma must be in (0, 1]");

  const ComplexGrid aty = op.adjoint(y.data);
  const std::size_t n = aty.dim(0), h = aty.dim(1), w = aty.dim(2), hw = h * w;
  ComplexGrid x = aty;
  auto objective = [&](const ComplexGrid& v) { return data_term(op, v, y.data) + opt.tau * total_variation(v); };

  ReconResult res;
  res.objective.push_back(objective(x));
  TvProx prox(n, h, w);
  std::vector<cplx> z(hw);
  std::size_t rising = 0;
  for (std::size_t k = 1; k <= opt.iters; ++k) {
    ComplexGrid g = data_gradient(op, x, aty);
    ComplexGrid next({n, h, w});
    for (std::size_t e = 0; e < n; ++e) {
      for (std::size_t i = 0; i < hw; ++i) z[i] = x[e * hw + i] - opt.gamma * g[e * hw + i];
      prox.apply(e, z.data(), opt.gamma * opt.tau, opt.inner_iters, next.data() + e * hw);
    }
    res.residual.push_back(diff_norm(next, x));
    x = std::move(next);
    res.objective.push_back(objective(x));
    check_divergence(rising, res.objective[k - 1], res.objective[k], opt.divergence_patience, k, "tv_recon");
  }
  res.x = MGREImage{std::move(x), std::move(echo_times)};
  return res;
}

ReconResult red_recon(const forward::MeasurementOperator& op, const forward::KSpaceSet& y,
                      std::vector<double> echo_times, const DenoiserFn& denoiser, const RedOptions& opt) {
  check_inputs(op, y);
  require(opt.tau >= 0.0, ErrorKind::usage, "red_recon: tau must be >= 0");
  require(opt.gamma >= 0.0 && opt.gamma <= 1.0, ErrorKind::usage, "red_recon: gamma must be in [0, 1]");
  require(static_cast<bool>(denoiser), ErrorKind::usage, "red_recon: no denoiser");

  const ComplexGrid aty = op.adjoint(y.data);
  ComplexGrid x = aty;
  ReconResult res;
  std::size_t rising = 0;
  for (std::size_t k = 1; k <= opt.iters; ++k) {
    ComplexGrid g = data_gradient(op, x, aty);
    ComplexGrid d = denoiser(x);
    require(d.dims() == x.dims(), ErrorKind::shape, "red_recon: denoiser changed the image shape");
    ComplexGrid next = x;
    for (std::size_t i = 0; i < x.size(); ++i) next[i] = x[i] - opt.gamma * (g[i] + opt.tau * (x[i] - d[i]));
    res.residual.push_back(diff_norm(next, x));
    x = std::move(next);
    if (k > 1) {
      check_divergence(rising, res.residual[k - 2], res.residual[k - 1], 0, k, "red_recon");
      require(opt.divergence_patience == 0 || rising < opt.divergence_patience ||
                  res.residual[k - 1] <= res.residual.front(),
              ErrorKind::numeric,
              "red_recon: diverging, fixed-point residual grew for " + std::to_string(rising) +
                  " consecutive iterations (iteration " + std::to_string(k) + ")");
    }
  }
  res.x = MGREImage{std::move(x), std::move(echo_times)};
  return res;
}

TauSearch golden_section_tau(double lo, double hi, std::size_t evaluations,
                             const std::function<double(double)>& score) {
  require(lo > 0.0 && hi > lo, ErrorKind::usage, "tau search: need 0 < lo < hi");
  require(evaluations >= 2, ErrorKind::usage, "tau search: need at least 2 evaluations");
  TauSearch out;
  auto eval = [&](double logt) {
    const double t = std::exp(logt);
    const double s = score(t);
    out.evaluations.emplace_back(t, s);
    if (out.evaluations.size() == 1 || s > out.best_score) {
      out.best_score = s;
      out.best_tau = t;
    }
    return s;
  };
  const double r = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = std::log(lo), b = std::log(hi);
  double c = b - r * (b - a), d = a + r * (b - a);
  double fc = eval(c), fd = eval(d);
  for (std::size_t i = 2; i < evaluations; ++i) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - r * (b - a);
      fc = eval(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + r * (b - a);
      fd = eval(d);
    }
  }
  return out;
}

}  // namespace qmri::recon
