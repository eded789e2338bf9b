#include "qmri/biophys/model.hpp"

namespace qmri::biophys {

void model_eval(double x0, double r2s, double omega, std::span<const cplx> f,
                std::span<const double> echo_times, std::span<cplx> out) {
  require(f.size() == echo_times.size() && out.size() == echo_times.size(), ErrorKind::shape,
          "model_eval: echo count mismatch");
  for (std::size_t k = 0; k < echo_times.size(); ++k)
    out[k] = signal_at(x0, r2s, omega, f[k], echo_times[k]);
}

}  // namespace qmri::biophys
