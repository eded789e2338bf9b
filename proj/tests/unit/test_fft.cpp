#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "qmri/core/rng.hpp"
#include "qmri/fft/fft2.hpp"

using namespace qmri;

namespace {

std::vector<cplx> random_slab(std::size_t n, RngStream& rng) {
  std::vector<cplx> v(n);
  for (auto& z : v) z = {rng.normal(), rng.normal()};
  return v;
}

double energy(const std::vector<cplx>& v) {
  double e = 0;
  for (auto z : v) e += std::norm(z);
  return e;
}

// Direct unitary DFT with the k-space origin at (H/2, W/2) and the image
// origin at (0, 0): X[u,v] = 1/sqrt(HW) Σ x[r,c] e^{-2πi((u-H/2)r/H + (v-W/2)c/W)}.
std::vector<cplx> naive_centered_dft(const std::vector<cplx>& x, std::size_t h, std::size_t w) {
  std::vector<cplx> out(h * w);
  const double pi2 = 2 * std::numbers::pi;
  for (std::size_t u = 0; u < h; ++u)
    for (std::size_t v = 0; v < w; ++v) {
      cplx acc = 0;
      for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) {
          const double ku = static_cast<double>(u) - static_cast<double>(h / 2);
          const double kv = static_cast<double>(v) - static_cast<double>(w / 2);
          const double pr = static_cast<double>(r);
          const double pc = static_cast<double>(c);
          const double ph = -pi2 * (ku * pr / static_cast<double>(h) + kv * pc / static_cast<double>(w));
          acc += x[r * w + c] * cplx(std::cos(ph), std::sin(ph));
        }
      out[u * w + v] = acc / std::sqrt(static_cast<double>(h * w));
    }
  return out;
}

}  // namespace

TEST_SUITE("fft") {
  TEST_CASE("matches a direct centered DFT") {
    RngStream rng(1, 0);
    for (auto [h, w] : {std::pair<std::size_t, std::size_t>{4, 4}, {6, 8}, {5, 7}}) {
      auto x = random_slab(h * w, rng);
      auto ref = naive_centered_dft(x, h, w);
      Fft2 f(h, w);
      auto y = x;
      f.forward(y);
      double err = 0;
      for (std::size_t i = 0; i < y.size(); ++i) err = std::max(err, std::abs(y[i] - ref[i]));
      CHECK(err < 1e-12);
    }
  }

  TEST_CASE("unitary: Parseval and exact inverse") {
    RngStream rng(2, 0);
    Fft2 f(16, 12);
    auto x = random_slab(16 * 12, rng);
    auto y = x;
    f.forward(y);
    CHECK(energy(y) == doctest::Approx(energy(x)).epsilon(1e-12));
    f.inverse(y);
    double err = 0;
    for (std::size_t i = 0; i < y.size(); ++i) err = std::max(err, std::abs(y[i] - x[i]));
    CHECK(err < 1e-13);
  }

  TEST_CASE("DC lands at the grid centre") {
    Fft2 f(8, 6);
    std::vector<cplx> x(48, cplx(1.0, 0.0));
    f.forward(x);
    CHECK(std::abs(x[4 * 6 + 3] - cplx(std::sqrt(48.0), 0.0)) < 1e-12);
    double rest = 0;
    for (std::size_t i = 0; i < x.size(); ++i)
      if (i != 4 * 6 + 3) rest += std::abs(x[i]);
    CHECK(rest < 1e-12);
  }

  TEST_CASE("fftshift and ifftshift are inverse permutations") {
    for (auto [h, w] : {std::pair<std::size_t, std::size_t>{4, 6}, {5, 3}}) {
      std::vector<cplx> x(h * w), s(h * w), back(h * w);
      for (std::size_t i = 0; i < x.size(); ++i) x[i] = cplx(static_cast<double>(i), 0);
      fftshift2(x, s, h, w);
      CHECK(s[(h / 2) * w + w / 2] == x[0]);
      ifftshift2(s, back, h, w);
      CHECK(back == x);
    }
  }

  TEST_CASE("size mismatch is an error") {
    Fft2 f(4, 4);
    std::vector<cplx> x(15);
    CHECK_THROWS(f.forward(x));
  }
}
