#pragma once

#include <cstdint>
#include <utility>

#include "qmri/core/grid.hpp"
#include "qmri/core/rng.hpp"
#include "qmri/core/types.hpp"

namespace qmri::phantom {

struct Range {
  double min = 0.0;
  double max = 0.0;
};

// Synthetic brain-like slice. Defaults: 96×96, 10 echoes at 4,8,...,40 ms, 4 coils.
struct PhantomSpec {
  std::size_t height = 96;
  std::size_t width = 96;
  std::size_t n_echoes = 10;
  double t1 = 0.004;  // s
  double dt = 0.004;  // s
  std::size_t n_ellipses = 8;
  Range r2s_range{5.0, 60.0};       // 1/s
  Range x0_range{0.3, 1.0};         // a.u.
  Range omega_range{-40.0, 40.0};   // rad/s
  Range bg_gradient_range{0.0, 40.0};  // rad/s; F(t) = sinc(g·t)
  std::size_t n_coils = 4;
  std::uint64_t seed = 42;
  std::uint64_t stream_id = 0;

  void validate() const;
  std::vector<double> echo_times() const;
};

struct CoilMaps {
  ComplexGrid s;  // (C, H, W)
  std::size_t coils() const { return s.dim(0); }
};

// sin(u)/u with sinc(0) = 1.
double sinc(double u);

QMaps make_qmaps(const PhantomSpec& spec);
CoilMaps make_coil_maps(const PhantomSpec& spec);

// Clean mGRE image from the maps; zero outside the REM.
MGREImage forward_biophysics(const QMaps& q, std::span<const double> echo_times);

}  // namespace qmri::phantom
