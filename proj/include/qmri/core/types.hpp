#pragma once

#include <vector>

#include "qmri/core/grid.hpp"

namespace qmri {

// Complex multi-echo image, data shape (N, H, W), with echo times in seconds.
struct MGREImage {
  ComplexGrid data;
  std::vector<double> echo_times;

  std::size_t echoes() const { return data.dim(0); }
  std::size_t height() const { return data.dim(1); }
  std::size_t width() const { return data.dim(2); }

  // Throws on a violated invariant: N >= 1, strictly increasing positive
  // echo times matching N, finite entries.
  void validate() const;
};

// Quantitative maps on an H×W grid. f_of_t is (N, H, W).
struct QMaps {
  RealGrid x0;
  RealGrid r2s;    // 1/s
  RealGrid omega;  // rad/s
  ComplexGrid f_of_t;
  MaskGrid rem;

  std::size_t height() const { return x0.dim(0); }
  std::size_t width() const { return x0.dim(1); }
};

// t_k = t1 + k*dt, k = 0..n-1.
std::vector<double> uniform_echo_times(std::size_t n, double t1, double dt);

}  // namespace qmri
