#pragma once

#include <functional>
#include <vector>

#include "qmri/forward/operator.hpp"

namespace qmri::recon {

// Aᴴy
MGREImage zero_fill(const forward::MeasurementOperator& op, const forward::KSpaceSet& y,
                    std::vector<double> echo_times);

struct ReconResult {
  MGREImage x;
  std::vector<double> objective;  // TV: ½‖y-Ax‖² + τ‖Dx‖₁ per iterate, x⁰ first
  std::vector<double> residual;   // ‖x^k - x^{k-1}‖ per iteration
};

struct TvOptions {
  double tau = 0.0;
  std::size_t iters = 50;
  double gamma = 0.5;
  std::size_t inner_iters = 10;
  std::size_t divergence_patience = 5;
};

// Proximal gradient on ½‖y-Ax‖² + τ‖Dx‖₁, D = forward differences along
// rows and columns of every echo, each difference taken as a complex modulus
// so the penalty is invariant to a global phase. The prox is solved by a
// warm-started dual projection loop.
ReconResult tv_recon(const forward::MeasurementOperator& op, const forward::KSpaceSet& y,
                     std::vector<double> echo_times, const TvOptions& opt = {});

// Σ |∂_h x| + |∂_v x| over an (N, H, W) stack (complex modulus).
double total_variation(const ComplexGrid& x);

using DenoiserFn = std::function<ComplexGrid(const ComplexGrid&)>;

struct RedOptions {
  double tau = 0.0;
  std::size_t iters = 50;
  double gamma = 0.5;
  std::size_t divergence_patience = 5;
};

// x^k = x^{k-1} - γ(Aᴴ(Ax^{k-1} - y) + τ(x^{k-1} - D(x^{k-1}))), x⁰ = Aᴴy.
// Aborts when the fixed-point residual grows for `divergence_patience`
// iterations in a row and exceeds its first value.
ReconResult red_recon(const forward::MeasurementOperator& op, const forward::KSpaceSet& y,
                      std::vector<double> echo_times, const DenoiserFn& denoiser, const RedOptions& opt = {});

struct TauSearch {
  double best_tau = 0.0;
  double best_score = 0.0;
  std::vector<std::pair<double, double>> evaluations;  // (τ, score)
};

// Golden-section search over log τ in [lo, hi] maximizing score(τ).
TauSearch golden_section_tau(double lo, double hi, std::size_t evaluations,
                             const std::function<double(double)>& score);

}  // namespace qmri::recon
