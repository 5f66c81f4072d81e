// AVX2+FMA variants of the float kernels. Built with -mavx2 -mfma for
// this translation unit only; selection happens at runtime.

#include "styletag/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#define STYLETAG_X86 1
#include <immintrin.h>
#else
#define STYLETAG_X86 0
#endif

namespace styletag::kernels {

#if STYLETAG_X86

namespace avx2 {

namespace {

inline float hsum256(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  lo = _mm_hadd_ps(lo, lo);
  lo = _mm_hadd_ps(lo, lo);
  return _mm_cvtss_f32(lo);
}

inline void scale_row(float* c, int n, float beta) {
  if (beta == 0.0f) {
    int j = 0;
    __m256 z = _mm256_setzero_ps();
    for (; j + 8 <= n; j += 8) _mm256_storeu_ps(c + j, z);
    for (; j < n; ++j) c[j] = 0.0f;
  } else if (beta != 1.0f) {
    int j = 0;
    __m256 b = _mm256_set1_ps(beta);
    for (; j + 8 <= n; j += 8) _mm256_storeu_ps(c + j, _mm256_mul_ps(_mm256_loadu_ps(c + j), b));
    for (; j < n; ++j) c[j] *= beta;
  }
}

}  // namespace

void gemm_nn(float* C, const float* A, const float* B, int M, int K, int N, float beta) {
  for (int i = 0; i < M; ++i) {
    float* c = C + std::size_t(i) * N;
    scale_row(c, N, beta);
    for (int k = 0; k < K; ++k) {
      float av = A[std::size_t(i) * K + k];
      if (av == 0.0f) continue;
      const float* b = B + std::size_t(k) * N;
      __m256 a = _mm256_set1_ps(av);
      int j = 0;
      for (; j + 8 <= N; j += 8) {
        __m256 cv = _mm256_loadu_ps(c + j);
        cv = _mm256_fmadd_ps(a, _mm256_loadu_ps(b + j), cv);
        _mm256_storeu_ps(c + j, cv);
      }
      for (; j < N; ++j) c[j] += av * b[j];
    }
  }
}

void gemm_nt(float* C, const float* A, const float* B, int M, int K, int N, float beta) {
  for (int i = 0; i < M; ++i) {
    const float* a = A + std::size_t(i) * K;
    for (int j = 0; j < N; ++j) {
      const float* b = B + std::size_t(j) * K;
      __m256 acc = _mm256_setzero_ps();
      int k = 0;
      for (; k + 8 <= K; k += 8)
        acc = _mm256_fmadd_ps(_mm256_loadu_ps(a + k), _mm256_loadu_ps(b + k), acc);
      float sum = hsum256(acc);
      for (; k < K; ++k) sum += a[k] * b[k];
      float& c = C[std::size_t(i) * N + j];
      c = beta == 0.0f ? sum : beta * c + sum;
    }
  }
}

void gemm_tn(float* C, const float* A, const float* B, int M, int K, int N, float beta) {
  if (beta == 0.0f) {
    std::size_t total = std::size_t(K) * N;
    std::size_t i = 0;
    __m256 z = _mm256_setzero_ps();
    for (; i + 8 <= total; i += 8) _mm256_storeu_ps(C + i, z);
    for (; i < total; ++i) C[i] = 0.0f;
  } else if (beta != 1.0f) {
    std::size_t total = std::size_t(K) * N;
    for (std::size_t i = 0; i < total; ++i) C[i] *= beta;
  }
  for (int m = 0; m < M; ++m) {
    const float* a = A + std::size_t(m) * K;
    const float* b = B + std::size_t(m) * N;
    for (int k = 0; k < K; ++k) {
      float av = a[k];
      if (av == 0.0f) continue;
      float* c = C + std::size_t(k) * N;
      __m256 avv = _mm256_set1_ps(av);
      int j = 0;
      for (; j + 8 <= N; j += 8) {
        __m256 cv = _mm256_loadu_ps(c + j);
        cv = _mm256_fmadd_ps(avv, _mm256_loadu_ps(b + j), cv);
        _mm256_storeu_ps(c + j, cv);
      }
      for (; j < N; ++j) c[j] += av * b[j];
    }
  }
}

void softmax_rows(float* X, int rows, int cols) {
  for (int r = 0; r < rows; ++r) {
    float* x = X + std::size_t(r) * cols;
    // max
    float mx = x[0];
    int j = 0;
    if (cols >= 8) {
      __m256 vmax = _mm256_loadu_ps(x);
      for (j = 8; j + 8 <= cols; j += 8) vmax = _mm256_max_ps(vmax, _mm256_loadu_ps(x + j));
      alignas(32) float tmp[8];
      _mm256_store_ps(tmp, vmax);
      mx = tmp[0];
      for (int t = 1; t < 8; ++t) mx = tmp[t] > mx ? tmp[t] : mx;
    } else {
      j = 1;
    }
    for (; j < cols; ++j) mx = x[j] > mx ? x[j] : mx;
    // exp and sum (exp stays scalar; the reduction order matches scalar
    // closely enough for the equivalence tolerance)
    float sum = 0.0f;
    for (int t = 0; t < cols; ++t) {
      x[t] = std::exp(x[t] - mx);
      sum += x[t];
    }
    float inv = 1.0f / sum;
    __m256 vinv = _mm256_set1_ps(inv);
    int t = 0;
    for (; t + 8 <= cols; t += 8)
      _mm256_storeu_ps(x + t, _mm256_mul_ps(_mm256_loadu_ps(x + t), vinv));
    for (; t < cols; ++t) x[t] *= inv;
  }
}

namespace {

// polynomial exp on [-87, 87], classic range-reduction form; relative
// error stays within a few ulps of the scalar expf
inline __m256 exp256(__m256 x) {
  const __m256 hi = _mm256_set1_ps(87.3365f);
  const __m256 lo = _mm256_set1_ps(-87.3365f);
  x = _mm256_min_ps(_mm256_max_ps(x, lo), hi);
  const __m256 log2e = _mm256_set1_ps(1.442695040f);
  const __m256 c1 = _mm256_set1_ps(0.693359375f);
  const __m256 c2 = _mm256_set1_ps(-2.12194440e-4f);
  __m256 fx = _mm256_mul_ps(x, log2e);
  fx = _mm256_round_ps(fx, _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  x = _mm256_fnmadd_ps(fx, c1, x);
  x = _mm256_fnmadd_ps(fx, c2, x);
  __m256 z = _mm256_mul_ps(x, x);
  __m256 p = _mm256_set1_ps(1.9875691500e-4f);
  p = _mm256_fmadd_ps(p, x, _mm256_set1_ps(1.3981999507e-3f));
  p = _mm256_fmadd_ps(p, x, _mm256_set1_ps(8.3334519073e-3f));
  p = _mm256_fmadd_ps(p, x, _mm256_set1_ps(4.1665795894e-2f));
  p = _mm256_fmadd_ps(p, x, _mm256_set1_ps(1.6666665459e-1f));
  p = _mm256_fmadd_ps(p, x, _mm256_set1_ps(5.0000001201e-1f));
  p = _mm256_fmadd_ps(p, z, x);
  p = _mm256_add_ps(p, _mm256_set1_ps(1.0f));
  __m256i n = _mm256_cvtps_epi32(fx);
  n = _mm256_add_epi32(n, _mm256_set1_epi32(127));
  n = _mm256_slli_epi32(n, 23);
  return _mm256_mul_ps(p, _mm256_castsi256_ps(n));
}

// tanh(z) = 1 - 2 / (exp(2z) + 1)
inline __m256 tanh256(__m256 z) {
  __m256 e = exp256(_mm256_add_ps(z, z));
  __m256 one = _mm256_set1_ps(1.0f);
  return _mm256_sub_ps(one,
                       _mm256_div_ps(_mm256_set1_ps(2.0f), _mm256_add_ps(e, one)));
}

const __m256 kGeluCv = _mm256_set1_ps(float(generic::kGeluC));
const __m256 kGeluAv = _mm256_set1_ps(float(generic::kGeluA));

}  // namespace

void gelu_fwd(float* y, const float* x, std::size_t n) {
  const __m256 half = _mm256_set1_ps(0.5f);
  const __m256 one = _mm256_set1_ps(1.0f);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 v = _mm256_loadu_ps(x + i);
    __m256 v3 = _mm256_mul_ps(_mm256_mul_ps(v, v), v);
    __m256 u = _mm256_mul_ps(kGeluCv, _mm256_fmadd_ps(kGeluAv, v3, v));
    __m256 t = tanh256(u);
    _mm256_storeu_ps(y + i, _mm256_mul_ps(_mm256_mul_ps(half, v), _mm256_add_ps(one, t)));
  }
  if (i < n) generic::gelu_fwd(y + i, x + i, n - i);
}

void gelu_bwd(float* dx, const float* x, const float* dy, std::size_t n) {
  const __m256 half = _mm256_set1_ps(0.5f);
  const __m256 one = _mm256_set1_ps(1.0f);
  const __m256 three_a = _mm256_set1_ps(3.0f * float(generic::kGeluA));
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 v = _mm256_loadu_ps(x + i);
    __m256 v2 = _mm256_mul_ps(v, v);
    __m256 v3 = _mm256_mul_ps(v2, v);
    __m256 u = _mm256_mul_ps(kGeluCv, _mm256_fmadd_ps(kGeluAv, v3, v));
    __m256 t = tanh256(u);
    __m256 sech2 = _mm256_fnmadd_ps(t, t, one);
    __m256 du = _mm256_mul_ps(kGeluCv, _mm256_fmadd_ps(three_a, v2, one));
    __m256 g = _mm256_fmadd_ps(_mm256_mul_ps(_mm256_mul_ps(half, v), sech2), du,
                               _mm256_mul_ps(half, _mm256_add_ps(one, t)));
    _mm256_storeu_ps(dx + i, _mm256_mul_ps(_mm256_loadu_ps(dy + i), g));
  }
  if (i < n) generic::gelu_bwd(dx + i, x + i, dy + i, n - i);
}

void axpy(float* y, const float* x, float a, std::size_t n) {
  __m256 av = _mm256_set1_ps(a);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 yv = _mm256_loadu_ps(y + i);
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), yv));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void add_bias_rows(float* X, const float* bias, int rows, int cols) {
  for (int r = 0; r < rows; ++r) {
    float* x = X + std::size_t(r) * cols;
    int j = 0;
    for (; j + 8 <= cols; j += 8)
      _mm256_storeu_ps(x + j, _mm256_add_ps(_mm256_loadu_ps(x + j), _mm256_loadu_ps(bias + j)));
    for (; j < cols; ++j) x[j] += bias[j];
  }
}

void colsum(float* out, const float* X, int rows, int cols) {
  for (int r = 0; r < rows; ++r) {
    const float* x = X + std::size_t(r) * cols;
    int j = 0;
    for (; j + 8 <= cols; j += 8)
      _mm256_storeu_ps(out + j, _mm256_add_ps(_mm256_loadu_ps(out + j), _mm256_loadu_ps(x + j)));
    for (; j < cols; ++j) out[j] += x[j];
  }
}

void adam_step(float* p, float* m, float* v, const float* g, std::size_t n, float lr, float beta1,
               float beta2, float eps, float bc1, float bc2) {
  __m256 vb1 = _mm256_set1_ps(beta1);
  __m256 vb1c = _mm256_set1_ps(1.0f - beta1);
  __m256 vb2 = _mm256_set1_ps(beta2);
  __m256 vb2c = _mm256_set1_ps(1.0f - beta2);
  __m256 vlr = _mm256_set1_ps(lr);
  __m256 veps = _mm256_set1_ps(eps);
  __m256 vibc1 = _mm256_set1_ps(1.0f / bc1);
  __m256 vibc2 = _mm256_set1_ps(1.0f / bc2);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 gv = _mm256_loadu_ps(g + i);
    __m256 mv = _mm256_fmadd_ps(vb1c, gv, _mm256_mul_ps(vb1, _mm256_loadu_ps(m + i)));
    __m256 vv =
        _mm256_fmadd_ps(vb2c, _mm256_mul_ps(gv, gv), _mm256_mul_ps(vb2, _mm256_loadu_ps(v + i)));
    _mm256_storeu_ps(m + i, mv);
    _mm256_storeu_ps(v + i, vv);
    __m256 mhat = _mm256_mul_ps(mv, vibc1);
    __m256 vhat = _mm256_mul_ps(vv, vibc2);
    __m256 denom = _mm256_add_ps(_mm256_sqrt_ps(vhat), veps);
    __m256 upd = _mm256_div_ps(_mm256_mul_ps(vlr, mhat), denom);
    _mm256_storeu_ps(p + i, _mm256_sub_ps(_mm256_loadu_ps(p + i), upd));
  }
  for (; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0f - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0f - beta2) * g[i] * g[i];
    float mhat = m[i] * (1.0f / bc1);
    float vhat = v[i] * (1.0f / bc2);
    p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

}  // namespace avx2

namespace {

const FloatKernelTable kAvx2Table = {
    &avx2::gemm_nn,  &avx2::gemm_nt,       &avx2::gemm_tn, &avx2::softmax_rows,
    &avx2::gelu_fwd, &avx2::gelu_bwd,      &avx2::axpy,    &avx2::add_bias_rows,
    &avx2::colsum,   &avx2::adam_step,
};

bool cpu_has_avx2_fma() {
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}

}  // namespace

const FloatKernelTable* avx2_table() {
  static const FloatKernelTable* table = cpu_has_avx2_fma() ? &kAvx2Table : nullptr;
  return table;
}

#else  // !STYLETAG_X86

const FloatKernelTable* avx2_table() { return nullptr; }

#endif

}  // namespace styletag::kernels
