#include "qmri/unfold/unfold.hpp"

#include <cmath>

namespace qmri::unfold {

using nn::Tensor;

void UnfoldSpec::validate() const {
  require(gamma > 0.0 && gamma <= 1.0, ErrorKind::usage, "unfold: gamma must be in (0, 1]");
  require(tau_init > 0.0, ErrorKind::usage, "unfold: tau_init must be positive");
  require(shared_weights, ErrorKind::usage, "unfold: only shared denoiser weights are supported");
}

CorrectNet::CorrectNet(const UnfoldSpec& u, const nn::DenoiserSpec& d, const nn::EstimatorSpec& e,
                       std::uint64_t seed)
    : uspec_(u) {
  uspec_.validate();
  RngStream rng(seed, 0x5eed);
  RngStream drng = rng.fork(1), erng = rng.fork(2);
  denoiser_ = std::make_unique<nn::Denoiser>(d, store_, drng, "dnn");
  // softplus⁻¹(τ) = log(e^τ - 1)
  tau_raw_ = store_.add("tau_raw", {1}, {std::log(std::expm1(uspec_.tau_init))}, "softplus_inv");
  estimator_ = std::make_unique<nn::Estimator>(e, store_, erng, "est");
}

Tensor CorrectNet::tau() const { return nn::softplus(tau_raw_); }

Tensor to_tensor(const ComplexGrid& x) {
  require(x.ndim() == 3, ErrorKind::shape, "to_tensor: expected (N,H,W), got " + dims_to_string(x.dims()));
  const std::size_t n = x.dim(0), hw = x.dim(1) * x.dim(2);
  std::vector<double> v(2 * n * hw);
  for (std::size_t e = 0; e < n; ++e)
    for (std::size_t i = 0; i < hw; ++i) {
      v[(2 * e) * hw + i] = x[e * hw + i].real();
      v[(2 * e + 1) * hw + i] = x[e * hw + i].imag();
    }
  return Tensor::constant({n, 2, x.dim(1), x.dim(2)}, std::move(v));
}

namespace {

void spans_to_complex(std::span<const double> v, std::size_t n, std::size_t hw, ComplexGrid& out) {
  for (std::size_t e = 0; e < n; ++e)
    for (std::size_t i = 0; i < hw; ++i) out[e * hw + i] = cplx(v[(2 * e) * hw + i], v[(2 * e + 1) * hw + i]);
}

void complex_to_span(const ComplexGrid& x, std::size_t n, std::size_t hw, std::span<double> out) {
  for (std::size_t e = 0; e < n; ++e)
    for (std::size_t i = 0; i < hw; ++i) {
      out[(2 * e) * hw + i] = x[e * hw + i].real();
      out[(2 * e + 1) * hw + i] = x[e * hw + i].imag();
    }
}

}  // namespace

ComplexGrid to_complex(const Tensor& t) {
  require(t.shape().size() == 4 && t.dim(1) == 2, ErrorKind::shape,
          "to_complex: expected (N,2,H,W), got " + nn::shape_string(t.shape()));
  const std::size_t n = t.dim(0), hw = t.dim(2) * t.dim(3);
  ComplexGrid out({n, t.dim(2), t.dim(3)});
  spans_to_complex(t.values(), n, hw, out);
  return out;
}

Tensor unrolled(const nn::Denoiser& d, const Tensor& tau, std::size_t k_steps, double gamma,
                const forward::MeasurementOperator& op, const forward::KSpaceSet& y, const ComplexGrid* x_init) {
  require(y.data.ndim() == 4 && y.coils() == op.coils().coils() && y.data.dim(2) == op.height() &&
              y.data.dim(3) == op.width(),
          ErrorKind::shape, "r_theta: k-space " + dims_to_string(y.data.dims()) + " does not match the operator");
  const Tensor aty = to_tensor(op.adjoint(y.data));
  const std::size_t n = aty.dim(0), h = aty.dim(2), w = aty.dim(3), hw = h * w;
  auto shared_op = std::make_shared<forward::MeasurementOperator>(op);
  nn::LinearFn normal = [shared_op, n, h, w, hw](std::span<const double> in, std::span<double> out) {
    ComplexGrid x({n, h, w});
    spans_to_complex(in, n, hw, x);
    complex_to_span(shared_op->normal(x), n, hw, out);
  };

  Tensor x = aty;
  if (x_init) {
    require(x_init->dims() == Dims({n, h, w}), ErrorKind::shape, "r_theta: initial image shape mismatch");
    x = to_tensor(*x_init);
  }
  for (std::size_t k = 1; k <= k_steps; ++k) {
    Tensor grad = nn::sub(nn::linear_map(x, x.shape(), normal, normal), aty);
    Tensor reg = nn::sub(x, d.forward(x));
    x = nn::sub(x, nn::scale(nn::add(grad, nn::mul_scalar(reg, tau)), gamma));
    for (double v : x.values())
      require(std::isfinite(v), ErrorKind::numeric, "r_theta: non-finite iterate at step " + std::to_string(k));
  }
  return x;
}

Tensor r_theta(const CorrectNet& net, const forward::MeasurementOperator& op, const forward::KSpaceSet& y) {
  const auto& u = net.unfold_spec();
  return unrolled(net.denoiser(), net.tau(), u.k_steps, u.gamma, op, y);
}

nn::EstimatorOutput e_phi(const nn::Estimator& est, const Tensor& x_hat) {
  Tensor mag = nn::complex_magnitude(x_hat);
  Tensor s = nn::channel_mean(mag, 0);
  if (s.item() == 0.0) {
    const nn::Shape sh{1, 1, mag.dim(2), mag.dim(3)};
    return {Tensor::zeros(sh), Tensor::zeros(sh)};
  }
  nn::EstimatorOutput out = est.forward(nn::div_scalar(mag, s));
  out.x0 = nn::mul_scalar(out.x0, s);
  return out;
}

Tensor loss_rec(const Tensor& x_hat, const Tensor& x_gt) {
  require(x_hat.shape() == x_gt.shape(), ErrorKind::shape,
          "loss_rec: shape mismatch " + nn::shape_string(x_hat.shape()) + " vs " + nn::shape_string(x_gt.shape()));
  return nn::scale(nn::sum_squares(nn::sub(x_hat, x_gt)), 1.0 / static_cast<double>(x_hat.size()));
}

Tensor loss_est(const nn::EstimatorOutput& maps, const ComplexGrid& x_gt, std::span<const double> te,
                const ComplexGrid& f_of_t, const MaskGrid& rem) {
  require(x_gt.ndim() == 3 && f_of_t.dims() == x_gt.dims(), ErrorKind::shape,
          "loss_est: F(t) " + dims_to_string(f_of_t.dims()) + " vs image " + dims_to_string(x_gt.dims()));
  const std::size_t n = x_gt.dim(0), h = x_gt.dim(1), w = x_gt.dim(2), hw = h * w;
  require(rem.dims() == Dims{h, w}, ErrorKind::shape, "loss_est: REM shape mismatch");
  require(te.size() == n, ErrorKind::shape, "loss_est: echo time count mismatch");
  require(maps.x0.size() == hw && maps.r2s.size() == hw, ErrorKind::shape, "loss_est: map shape mismatch");

  std::vector<std::size_t> voxels;
  for (std::size_t i = 0; i < hw; ++i)
    if (rem[i]) voxels.push_back(i);
  require(!voxels.empty(), ErrorKind::domain, "loss_est: empty mask");

  const double inv = 1.0 / static_cast<double>(voxels.size() * n);
  // per (voxel, echo): attenuation a = |F|·e^{-R t} and residual r
  auto att = std::make_shared<std::vector<double>>(voxels.size() * n);
  auto res = std::make_shared<std::vector<double>>(voxels.size() * n);
  const auto x0 = maps.x0.values(), r2 = maps.r2s.values();
  double loss = 0.0;
  for (std::size_t v = 0; v < voxels.size(); ++v) {
    const std::size_t i = voxels[v];
    for (std::size_t e = 0; e < n; ++e) {
      const double a = std::abs(f_of_t[e * hw + i]) * std::exp(-r2[i] * te[e]);
      const double r = x0[i] * a - std::abs(x_gt[e * hw + i]);
      (*att)[v * n + e] = a;
      (*res)[v * n + e] = r;
      loss += r * r;
    }
  }
  std::vector<double> t(te.begin(), te.end());
  return nn::make_result({1}, {loss * inv}, {maps.x0, maps.r2s},
                         [att, res, voxels = std::move(voxels), t = std::move(t), n, inv](nn::Node& node) {
                           nn::Node& x0n = *node.inputs[0];
                           nn::Node& r2n = *node.inputs[1];
                           const double g = 2.0 * inv * node.grad[0];
                           for (std::size_t v = 0; v < voxels.size(); ++v) {
                             const std::size_t i = voxels[v];
                             double gx = 0.0, gr = 0.0;
                             for (std::size_t e = 0; e < n; ++e) {
                               const double a = (*att)[v * n + e], r = (*res)[v * n + e];
                               gx += r * a;
                               gr -= r * x0n.value[i] * t[e] * a;
                             }
                             if (x0n.requires_grad) x0n.ensure_grad()[i] += g * gx;
                             if (r2n.requires_grad) r2n.ensure_grad()[i] += g * gr;
                           }
                         });
}

RealGrid to_map(const Tensor& t) {
  require(t.shape().size() == 4 && t.dim(0) == 1 && t.dim(1) == 1, ErrorKind::shape,
          "to_map: expected (1,1,H,W), got " + nn::shape_string(t.shape()));
  RealGrid out({t.dim(2), t.dim(3)});
  std::copy(t.values().begin(), t.values().end(), out.data());
  return out;
}

}  // namespace qmri::unfold
