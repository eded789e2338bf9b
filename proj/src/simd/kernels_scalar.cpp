#include "qmri/simd/kernels.hpp"

namespace qmri::simd {

namespace {

void gemm_nn_scalar(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                    const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * ldc;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * lda + p];
      const double* bp = b + p * ldb;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

void gemm_nt_scalar(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                    const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * lda + p] * b[j * ldb + p];
      c[i * ldc + j] += s;
    }
}

double dot_scalar(std::size_t n, const double* x, const double* y) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy_scalar(std::size_t n, double alpha, const double* x, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

// Written out explicitly: std::complex operator* carries NaN/inf recovery
// branches that are irrelevant here.
void cmul_scalar(std::size_t n, const cplx* a, const cplx* b, cplx* out) {
  for (std::size_t i = 0; i < n; ++i) {
    const double ar = a[i].real(), ai = a[i].imag(), br = b[i].real(), bi = b[i].imag();
    out[i] = cplx(ar * br - ai * bi, ar * bi + ai * br);
  }
}

void cmul_conj_acc_scalar(std::size_t n, const cplx* s, const cplx* z, cplx* out) {
  for (std::size_t i = 0; i < n; ++i) {
    const double sr = s[i].real(), si = s[i].imag(), zr = z[i].real(), zi = z[i].imag();
    out[i] += cplx(sr * zr + si * zi, sr * zi - si * zr);
  }
}

}  // namespace

const KernelTable& scalar_kernels() {
  static const KernelTable table{"scalar",       gemm_nn_scalar, gemm_nt_scalar, dot_scalar,
                                 axpy_scalar,    cmul_scalar,    cmul_conj_acc_scalar};
  return table;
}

}  // namespace qmri::simd
