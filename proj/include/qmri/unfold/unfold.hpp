#pragma once

#include <memory>

#include "qmri/forward/operator.hpp"
#include "qmri/nn/layers.hpp"

namespace qmri::unfold {

struct UnfoldSpec {
  std::size_t k_steps = 8;
  double gamma = 0.5;
  double tau_init = 0.1;  // τ = softplus(raw)
  bool shared_weights = true;

  void validate() const;
};

// Denoiser D_θ, step weight τ and estimator E_φ in one parameter store.
class CorrectNet {
 public:
  CorrectNet(const UnfoldSpec& u, const nn::DenoiserSpec& d, const nn::EstimatorSpec& e, std::uint64_t seed);
  CorrectNet(const CorrectNet&) = delete;
  CorrectNet& operator=(const CorrectNet&) = delete;

  const UnfoldSpec& unfold_spec() const { return uspec_; }
  const nn::Denoiser& denoiser() const { return *denoiser_; }
  const nn::Estimator& estimator() const { return *estimator_; }
  nn::ParamStore& params() { return store_; }
  const nn::ParamStore& params() const { return store_; }

  nn::Tensor tau() const;  // softplus(raw), differentiable
  double tau_value() const { return tau().item(); }

 private:
  UnfoldSpec uspec_;
  nn::ParamStore store_;
  std::unique_ptr<nn::Denoiser> denoiser_;
  std::unique_ptr<nn::Estimator> estimator_;
  nn::Tensor tau_raw_;
};

// (N, H, W) complex <-> (N, 2, H, W) real, channel 0 = re, 1 = im.
nn::Tensor to_tensor(const ComplexGrid& x);
ComplexGrid to_complex(const nn::Tensor& t);

// x⁰ = Aᴴy; x^k = x^{k-1} - γ(Aᴴ(Ax^{k-1} - y) + τ(x^{k-1} - D(x^{k-1}))).
// Returns x^K as an (N, 2, H, W) tensor, differentiable in θ and τ.
nn::Tensor r_theta(const CorrectNet& net, const forward::MeasurementOperator& op, const forward::KSpaceSet& y);

// Same iteration with explicit D and τ; x⁰ defaults to Aᴴy.
nn::Tensor unrolled(const nn::Denoiser& d, const nn::Tensor& tau, std::size_t k_steps, double gamma,
                    const forward::MeasurementOperator& op, const forward::KSpaceSet& y,
                    const ComplexGrid* x_init = nullptr);

// E_φ on |x̂| normalized by its mean first-echo magnitude s; X0 is rescaled
// by s. An all-zero x̂ gives all-zero maps.
nn::EstimatorOutput e_phi(const nn::Estimator& est, const nn::Tensor& x_hat);

// Mean of squared differences over all real and imaginary entries.
nn::Tensor loss_rec(const nn::Tensor& x_hat, const nn::Tensor& x_gt);

// Mean over REM voxels and echoes of (X0·e^{-R2*·t}·|F(t)| - |x_gt|)².
nn::Tensor loss_est(const nn::EstimatorOutput& maps, const ComplexGrid& x_gt, std::span<const double> echo_times,
                    const ComplexGrid& f_of_t, const MaskGrid& rem);

// Maps from an estimator output.
RealGrid to_map(const nn::Tensor& t);

}  // namespace qmri::unfold
