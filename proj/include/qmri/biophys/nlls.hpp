#pragma once

#include <optional>
#include <span>
#include <vector>

#include "qmri/core/types.hpp"

namespace qmri::biophys {

enum class FitStatus { ok, below_signal_threshold, not_converged };

struct VoxelFit {
  double x0 = 0.0;
  double r2s = 0.0;    // 1/s
  double omega = 0.0;  // rad/s
  double residual = 0.0;  // ‖signal - model‖₂
  bool converged = false;
  int iters = 0;
  FitStatus status = FitStatus::ok;
  std::vector<double> trace;  // accepted objective values, when requested
};

struct FitOptions {
  bool fit_omega = true;
  bool magnitude_only = false;
  double r2s_max = 200.0;
  int max_iters = 100;
  double damping_init = 1e-2;
  double damping_factor = 10.0;
  double step_tol = 1e-12;         // relative parameter change that counts as converged
  double signal_threshold = 1e-12; // ‖signal‖₂ at or below this is not fitted
  bool record_trace = false;
};

// Levenberg–Marquardt fit of x0·exp(-r2s·t - i·omega·t)·f over (x0, r2s, omega).
// Initialized from a log-linear magnitude regression and the phase step
// between the first two echoes unless `init` is given.
VoxelFit nlls_fit_voxel(std::span<const cplx> signal, std::span<const cplx> f,
                        std::span<const double> echo_times, const FitOptions& opt = {},
                        const std::optional<VoxelFit>& init = std::nullopt);

struct FitReport {
  std::size_t fitted = 0;
  std::size_t below_threshold = 0;
  std::size_t not_converged = 0;
};

struct MapFit {
  QMaps maps;
  FitReport report;
};

// Voxel-wise fit inside rem; zeros elsewhere. The signal threshold is set to
// 1e-3 × mean first-echo magnitude over rem. Output is independent of `workers`.
MapFit nlls_fit_map(const MGREImage& x, const ComplexGrid& f_of_t, const MaskGrid& rem,
                    FitOptions opt = {}, unsigned workers = 1);

// Sum of squared residuals used by the fit (complex or magnitude mode).
double fit_objective(std::span<const cplx> signal, std::span<const cplx> f,
                     std::span<const double> echo_times, double x0, double r2s, double omega,
                     bool magnitude_only);

}  // namespace qmri::biophys
