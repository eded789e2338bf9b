#include "qmri/core/types.hpp"

#include <cmath>

namespace qmri {

void MGREImage::validate() const {
  require(data.ndim() == 3, ErrorKind::shape, "MGREImage: data must be (N,H,W), got " + dims_to_string(data.dims()));
  require(data.dim(0) >= 1, ErrorKind::shape, "MGREImage: N must be >= 1");
  require(echo_times.size() == data.dim(0), ErrorKind::shape, "MGREImage: echo_times length != N");
  require(echo_times[0] > 0.0, ErrorKind::domain, "MGREImage: echo_times[0] must be > 0");
  for (std::size_t k = 1; k < echo_times.size(); ++k)
    require(echo_times[k] > echo_times[k - 1], ErrorKind::domain, "MGREImage: echo_times not strictly increasing");
  for (const auto& v : data.vec())
    require(std::isfinite(v.real()) && std::isfinite(v.imag()), ErrorKind::numeric, "MGREImage: non-finite entry");
}

std::vector<double> uniform_echo_times(std::size_t n, double t1, double dt) {
  std::vector<double> t(n);
  for (std::size_t k = 0; k < n; ++k) t[k] = t1 + static_cast<double>(k) * dt;
  return t;
}

}  // namespace qmri
