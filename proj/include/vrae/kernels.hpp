#pragma once

// Inner-loop kernels. Every kernel has a portable scalar reference; an AVX2/FMA
// variant is compiled separately and selected at runtime when the CPU has it.

#include <cstddef>
#include <string_view>

namespace vrae::kernels {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);

/// Bias-corrected Adam coefficients for one step.
struct AdamCoeffs {
  float lr;
  float beta1;
  float beta2;
  float epsilon;
  float bias_correction1;  // 1 - beta1^t
  float bias_correction2;  // 1 - beta2^t
};

/// C (m x n) = op(A) (m x k) * op(B) (k x n), row-major with leading dimensions.
/// When accumulate is set the product is added to C instead of overwriting it.
using SgemmFn = void (*)(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
                         const float* a, std::size_t lda, const float* b, std::size_t ldb, bool accumulate,
                         float* c, std::size_t ldc);
using UnaryFn = void (*)(const float* x, float* y, std::size_t n);
using BinaryFn = void (*)(const float* a, const float* b, float* y, std::size_t n);
using AdamFn = void (*)(float* param, float* m, float* v, const float* grad, std::size_t n, const AdamCoeffs& c);

struct KernelTable {
  Isa isa;
  SgemmFn sgemm;
  UnaryFn relu;
  /// dx = dy where y > 0, else 0. Arguments: (y, dy, dx).
  BinaryFn relu_backward;
  BinaryFn add;
  AdamFn adam;
};

const KernelTable& scalar_table();

/// nullptr when the AVX2 translation unit is not part of this build.
const KernelTable* avx2_table();

bool cpu_supports(Isa isa);

/// Table used by the float layer engine. Defaults to the best supported ISA,
/// overridable with VRAE_SIMD=scalar|avx2 or select().
const KernelTable& active();

/// Throws std::runtime_error when the ISA is unavailable.
void select(Isa isa);

/// Portable reference GEMM, used directly for double precision.
template <typename T>
void gemm_reference(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T* a,
                    std::size_t lda, const T* b, std::size_t ldb, bool accumulate, T* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * ldc;
    if (trans_b) {
      // Rows of B are contiguous along k: dot-product order.
      for (std::size_t j = 0; j < n; ++j) {
        T acc = T(0);
        const T* brow = b + j * ldb;
        for (std::size_t p = 0; p < k; ++p) acc += (trans_a ? a[p * lda + i] : a[i * lda + p]) * brow[p];
        crow[j] = accumulate ? crow[j] + acc : acc;
      }
      continue;
    }
    if (!accumulate) {
      for (std::size_t j = 0; j < n; ++j) crow[j] = T(0);
    }
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = trans_a ? a[p * lda + i] : a[i * lda + p];
      const T* brow = b + p * ldb;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

}  // namespace vrae::kernels
