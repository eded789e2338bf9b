#pragma once

// Data-parallel inner loops. Every kernel has a scalar reference and, where
// the CPU supports it, an AVX2+FMA variant; the active table is selected once
// at startup (override with QMRI_SIMD=scalar). Variants agree to rounding,
// not bitwise; a given table is deterministic run to run.

#include <complex>
#include <cstddef>

namespace qmri::simd {

using cplx = std::complex<double>;

struct KernelTable {
  const char* name;

  // C[M×N] += A[M×K] · B[K×N], row-major with leading dimensions.
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                  const double* b, std::size_t ldb, double* c, std::size_t ldc);
  // C[M×N] += A[M×K] · B[N×K]ᵀ
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                  const double* b, std::size_t ldb, double* c, std::size_t ldc);
  double (*dot)(std::size_t n, const double* x, const double* y);
  // y += alpha·x
  void (*axpy)(std::size_t n, double alpha, const double* x, double* y);
  // out[i] = a[i]·b[i]
  void (*cmul)(std::size_t n, const cplx* a, const cplx* b, cplx* out);
  // out[i] += conj(s[i])·z[i]
  void (*cmul_conj_acc)(std::size_t n, const cplx* s, const cplx* z, cplx* out);
};

const KernelTable& scalar_kernels();
// nullptr when the build or the CPU lacks AVX2+FMA.
const KernelTable* avx2_kernels();
// Table used by the library.
const KernelTable& active();
// Force a table (tests, benchmarking). Not thread-safe against concurrent use.
void set_active(const KernelTable& table);

}  // namespace qmri::simd
