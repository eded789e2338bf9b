#pragma once

#include <cmath>
#include <complex>
#include <span>

#include "qmri/core/grid.hpp"

namespace qmri::biophys {

// Single-compartment mGRE signal at echo time t:
//   x(t) = x0 · exp(-r2s·t - i·omega·t) · f
inline cplx signal_at(double x0, double r2s, double omega, cplx f, double t) {
  const double mag = x0 * std::exp(-r2s * t);
  return mag * cplx(std::cos(omega * t), -std::sin(omega * t)) * f;
}

// Evaluates the model at every echo; out.size() == f.size() == echo_times.size().
void model_eval(double x0, double r2s, double omega, std::span<const cplx> f,
                std::span<const double> echo_times, std::span<cplx> out);

}  // namespace qmri::biophys
