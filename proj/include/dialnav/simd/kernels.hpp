#pragma once

// Dense double-precision kernels used by every matrix product in the model.
//
// Each kernel has a scalar reference implementation and, on x86-64 hosts
// that report AVX2+FMA at runtime, a vectorized variant. The active table is
// chosen once on first use; DIALNAV_SIMD=scalar in the environment pins the
// scalar path. All matrices are row-major with explicit leading dimensions.

#include <cstddef>
#include <string_view>

namespace dialnav::simd {

enum class Isa { scalar, avx2 };

struct KernelTable {
  Isa isa;
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // C (+)= A * B      A: m x k, B: k x n
  void (*gemm_nn)(int m, int n, int k, const double* a, int lda, const double* b, int ldb,
                  double* c, int ldc, bool accumulate);
  // C (+)= A * B^T    A: m x k, B: n x k
  void (*gemm_nt)(int m, int n, int k, const double* a, int lda, const double* b, int ldb,
                  double* c, int ldc, bool accumulate);
  // C (+)= A^T * B    A: k x m, B: k x n
  void (*gemm_tn)(int m, int n, int k, const double* a, int lda, const double* b, int ldb,
                  double* c, int ldc, bool accumulate);
};

const KernelTable& scalar_kernels();

// nullptr when the binary was built without AVX2 support or the CPU lacks it.
const KernelTable* avx2_kernels();

// The table used by the rest of the library.
const KernelTable& kernels();

// Overrides the runtime choice; used by equivalence tests. Requesting avx2 on
// a host without it falls back to scalar and returns false.
bool force_isa(Isa isa);

std::string_view isa_name(Isa isa);

}  // namespace dialnav::simd
