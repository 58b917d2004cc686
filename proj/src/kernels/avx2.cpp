// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.

#include "vrae/kernels.hpp"
#include "vrae/parallel.hpp"

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <vector>

namespace vrae::kernels {
namespace {

constexpr std::size_t kMr = 6;
constexpr std::size_t kNr = 16;
constexpr std::size_t kKc = 256;
constexpr std::size_t kNc = 1024;

// Packs rows [0, m) x cols [p0, p0 + kc) of op(A) into kMr-row panels, k-major.
void pack_a(bool trans, const float* a, std::size_t lda, std::size_t m, std::size_t p0, std::size_t kc,
            float* out) {
  for (std::size_t ir = 0; ir < m; ir += kMr) {
    const std::size_t mr = std::min(kMr, m - ir);
    for (std::size_t p = 0; p < kc; ++p) {
      for (std::size_t r = 0; r < kMr; ++r) {
        if (r < mr) {
          const std::size_t i = ir + r;
          const std::size_t q = p0 + p;
          *out++ = trans ? a[q * lda + i] : a[i * lda + q];
        } else {
          *out++ = 0.0f;
        }
      }
    }
  }
}

// Packs rows [p0, p0 + kc) x cols [j0, j0 + nc) of op(B) into kNr-column panels.
void pack_b(bool trans, const float* b, std::size_t ldb, std::size_t p0, std::size_t kc, std::size_t j0,
            std::size_t nc, float* out) {
  for (std::size_t jr = 0; jr < nc; jr += kNr) {
    const std::size_t nr = std::min(kNr, nc - jr);
    for (std::size_t p = 0; p < kc; ++p) {
      const std::size_t q = p0 + p;
      if (!trans && nr == kNr) {
        const float* src = b + q * ldb + j0 + jr;
        _mm256_storeu_ps(out, _mm256_loadu_ps(src));
        _mm256_storeu_ps(out + 8, _mm256_loadu_ps(src + 8));
        out += kNr;
        continue;
      }
      for (std::size_t col = 0; col < kNr; ++col) {
        if (col < nr) {
          const std::size_t j = j0 + jr + col;
          *out++ = trans ? b[j * ldb + q] : b[q * ldb + j];
        } else {
          *out++ = 0.0f;
        }
      }
    }
  }
}

void micro_kernel(std::size_t kc, const float* ap, const float* bp, float* c, std::size_t ldc, std::size_t mr,
                  std::size_t nr, bool overwrite) {
  __m256 acc[kMr][2];
  for (auto& row : acc) {
    row[0] = _mm256_setzero_ps();
    row[1] = _mm256_setzero_ps();
  }
  for (std::size_t p = 0; p < kc; ++p) {
    const __m256 b0 = _mm256_loadu_ps(bp);
    const __m256 b1 = _mm256_loadu_ps(bp + 8);
    for (std::size_t r = 0; r < kMr; ++r) {
      const __m256 av = _mm256_broadcast_ss(ap + r);
      acc[r][0] = _mm256_fmadd_ps(av, b0, acc[r][0]);
      acc[r][1] = _mm256_fmadd_ps(av, b1, acc[r][1]);
    }
    ap += kMr;
    bp += kNr;
  }
  if (mr == kMr && nr == kNr) {
    for (std::size_t r = 0; r < kMr; ++r) {
      float* crow = c + r * ldc;
      if (overwrite) {
        _mm256_storeu_ps(crow, acc[r][0]);
        _mm256_storeu_ps(crow + 8, acc[r][1]);
      } else {
        _mm256_storeu_ps(crow, _mm256_add_ps(_mm256_loadu_ps(crow), acc[r][0]));
        _mm256_storeu_ps(crow + 8, _mm256_add_ps(_mm256_loadu_ps(crow + 8), acc[r][1]));
      }
    }
    return;
  }
  alignas(32) float tile[kMr][kNr];
  for (std::size_t r = 0; r < kMr; ++r) {
    _mm256_store_ps(tile[r], acc[r][0]);
    _mm256_store_ps(tile[r] + 8, acc[r][1]);
  }
  for (std::size_t r = 0; r < mr; ++r) {
    float* crow = c + r * ldc;
    for (std::size_t j = 0; j < nr; ++j) crow[j] = overwrite ? tile[r][j] : crow[j] + tile[r][j];
  }
}

void sgemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda,
           const float* b, std::size_t ldb, bool accumulate, float* c, std::size_t ldc) {
  if (m == 0 || n == 0) return;
  if (k == 0) {
    if (!accumulate) {
      for (std::size_t i = 0; i < m; ++i) std::fill(c + i * ldc, c + i * ldc + n, 0.0f);
    }
    return;
  }
  const std::size_t m_panels = (m + kMr - 1) / kMr;
  thread_local std::vector<float> a_buf;
  thread_local std::vector<float> b_buf;
  a_buf.resize(m_panels * kMr * kKc);
  b_buf.resize(((std::min(n, kNc) + kNr - 1) / kNr) * kNr * kKc);

  for (std::size_t jc = 0; jc < n; jc += kNc) {
    const std::size_t nc = std::min(kNc, n - jc);
    const std::size_t n_panels = (nc + kNr - 1) / kNr;
    for (std::size_t pc = 0; pc < k; pc += kKc) {
      const std::size_t kc = std::min(kKc, k - pc);
      const bool overwrite = pc == 0 && !accumulate;
      pack_a(trans_a, a, lda, m, pc, kc, a_buf.data());
      pack_b(trans_b, b, ldb, pc, kc, jc, nc, b_buf.data());
      const float* ap_base = a_buf.data();
      const float* bp_base = b_buf.data();
      const long tiles = static_cast<long>(m_panels * n_panels);
#pragma omp parallel for schedule(static) if (num_threads() > 1 && tiles > 1)
      for (long t = 0; t < tiles; ++t) {
        const std::size_t jp = static_cast<std::size_t>(t) / m_panels;
        const std::size_t ip = static_cast<std::size_t>(t) % m_panels;
        const std::size_t i0 = ip * kMr;
        const std::size_t j0 = jp * kNr;
        micro_kernel(kc, ap_base + ip * kMr * kc, bp_base + jp * kNr * kc, c + i0 * ldc + jc + j0, ldc,
                     std::min(kMr, m - i0), std::min(kNr, nc - j0), overwrite);
      }
    }
  }
}

void relu(const float* x, float* y, std::size_t n) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(y + i, _mm256_max_ps(_mm256_loadu_ps(x + i), zero));
  for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_backward(const float* y, const float* dy, float* dx, std::size_t n) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(y + i), zero, _CMP_GT_OQ);
    _mm256_storeu_ps(dx + i, _mm256_and_ps(mask, _mm256_loadu_ps(dy + i)));
  }
  for (; i < n; ++i) dx[i] = y[i] > 0.0f ? dy[i] : 0.0f;
}

void add(const float* a, const float* b, float* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) y[i] = a[i] + b[i];
}

// Same operation order as the scalar kernel, so results are bit-identical.
void adam(float* param, float* m, float* v, const float* grad, std::size_t n, const AdamCoeffs& c) {
  const float one_minus_b1 = 1.0f - c.beta1;
  const float one_minus_b2 = 1.0f - c.beta2;
  const __m256 b1 = _mm256_set1_ps(c.beta1);
  const __m256 b2 = _mm256_set1_ps(c.beta2);
  const __m256 omb1 = _mm256_set1_ps(one_minus_b1);
  const __m256 omb2 = _mm256_set1_ps(one_minus_b2);
  const __m256 bc1 = _mm256_set1_ps(c.bias_correction1);
  const __m256 bc2 = _mm256_set1_ps(c.bias_correction2);
  const __m256 lr = _mm256_set1_ps(c.lr);
  const __m256 eps = _mm256_set1_ps(c.epsilon);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 g = _mm256_loadu_ps(grad + i);
    const __m256 mi = _mm256_add_ps(_mm256_mul_ps(b1, _mm256_loadu_ps(m + i)), _mm256_mul_ps(omb1, g));
    const __m256 vi =
        _mm256_add_ps(_mm256_mul_ps(b2, _mm256_loadu_ps(v + i)), _mm256_mul_ps(omb2, _mm256_mul_ps(g, g)));
    _mm256_storeu_ps(m + i, mi);
    _mm256_storeu_ps(v + i, vi);
    const __m256 m_hat = _mm256_div_ps(mi, bc1);
    const __m256 v_hat = _mm256_div_ps(vi, bc2);
    const __m256 step = _mm256_div_ps(_mm256_mul_ps(lr, m_hat), _mm256_add_ps(_mm256_sqrt_ps(v_hat), eps));
    _mm256_storeu_ps(param + i, _mm256_sub_ps(_mm256_loadu_ps(param + i), step));
  }
  for (; i < n; ++i) {
    const float g = grad[i];
    m[i] = c.beta1 * m[i] + one_minus_b1 * g;
    v[i] = c.beta2 * v[i] + one_minus_b2 * (g * g);
    const float m_hat = m[i] / c.bias_correction1;
    const float v_hat = v[i] / c.bias_correction2;
    param[i] = param[i] - c.lr * m_hat / (std::sqrt(v_hat) + c.epsilon);
  }
}

}  // namespace

const KernelTable* avx2_table() {
  static const KernelTable table{Isa::avx2, sgemm, relu, relu_backward, add, adam};
  return &table;
}

}  // namespace vrae::kernels
