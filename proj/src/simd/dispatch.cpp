#include <atomic>
#include <cstdlib>
#include <string_view>

#include "qmri/simd/kernels.hpp"

namespace qmri::simd {

namespace {

const KernelTable* select() {
  if (const char* env = std::getenv("QMRI_SIMD"); env && std::string_view(env) == "scalar")
    return &scalar_kernels();
  if (const KernelTable* t = avx2_kernels()) return t;
  return &scalar_kernels();
}

std::atomic<const KernelTable*>& slot() {
  static std::atomic<const KernelTable*> table{select()};
  return table;
}

}  // namespace

const KernelTable& active() { return *slot().load(std::memory_order_relaxed); }

void set_active(const KernelTable& table) { slot().store(&table, std::memory_order_relaxed); }

}  // namespace qmri::simd
