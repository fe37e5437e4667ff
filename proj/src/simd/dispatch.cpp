#include <atomic>
#include <cstdlib>
#include <cstring>

#include "dialnav/simd/kernels.hpp"

namespace dialnav::simd {

const KernelTable* avx2_kernels_impl();

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* select_default() {
  const char* env = std::getenv("DIALNAV_SIMD");
  if (env != nullptr && std::strcmp(env, "scalar") == 0) return &scalar_kernels();
  if (const KernelTable* t = avx2_kernels()) return t;
  return &scalar_kernels();
}

std::atomic<const KernelTable*>& active() {
  static std::atomic<const KernelTable*> table{select_default()};
  return table;
}

}  // namespace

const KernelTable* avx2_kernels() {
  static const KernelTable* table = cpu_has_avx2() ? avx2_kernels_impl() : nullptr;
  return table;
}

const KernelTable& kernels() { return *active().load(std::memory_order_acquire); }

bool force_isa(Isa isa) {
  if (isa == Isa::avx2) {
    if (const KernelTable* t = avx2_kernels()) {
      active().store(t, std::memory_order_release);
      return true;
    }
    active().store(&scalar_kernels(), std::memory_order_release);
    return false;
  }
  active().store(&scalar_kernels(), std::memory_order_release);
  return true;
}

std::string_view isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

}  // namespace dialnav::simd
