#pragma once

#include <cmath>
#include <cstddef>
#include <string>

namespace styletag::kernels {

// Runtime-selected backend for the float inner loops. Scalar versions
// are the reference; the AVX2 variants must agree with them to float
// rounding (equivalence-tested in tests/test_kernels.cpp).
enum class Backend { scalar, avx2 };

bool avx2_supported();
Backend active_backend();
void set_backend(Backend b);  // throws ConfigError if unsupported on this CPU
const char* backend_name(Backend b);

// ---- dispatched float kernels -------------------------------------------
// gemm_nn: C[M,N] = beta*C + A[M,K] * B[K,N]
void gemm_nn(float* C, const float* A, const float* B, int M, int K, int N, float beta);
// gemm_nt: C[M,N] = beta*C + A[M,K] * B[N,K]^T
void gemm_nt(float* C, const float* A, const float* B, int M, int K, int N, float beta);
// gemm_tn: C[K,N] = beta*C + A[M,K]^T * B[M,N]
void gemm_tn(float* C, const float* A, const float* B, int M, int K, int N, float beta);
// in-place row-wise softmax
void softmax_rows(float* X, int rows, int cols);
// GELU (tanh form); smooth, so finite-difference verification of the
// backward pass stays well conditioned
void gelu_fwd(float* y, const float* x, std::size_t n);
// dx = dy * gelu'(x)
void gelu_bwd(float* dx, const float* x, const float* dy, std::size_t n);
// y += a * x
void axpy(float* y, const float* x, float a, std::size_t n);
// X[r,:] += bias for every row
void add_bias_rows(float* X, const float* bias, int rows, int cols);
// out[j] += sum_i X[i,j]
void colsum(float* out, const float* X, int rows, int cols);
// Adam step with bias correction: m,v updated in place, p -= lr*mhat/(sqrt(vhat)+eps)
void adam_step(float* p, float* m, float* v, const float* g, std::size_t n, float lr,
               float beta1, float beta2, float eps, float bc1, float bc2);

// ---- generic scalar templates (used directly for the double-precision
// gradient-check mode; the float overloads above shadow these) -----------
namespace generic {

template <typename T>
void gemm_nn(T* C, const T* A, const T* B, int M, int K, int N, T beta) {
  for (int i = 0; i < M; ++i) {
    T* c = C + std::size_t(i) * N;
    if (beta == T(0)) {
      for (int j = 0; j < N; ++j) c[j] = T(0);
    } else if (beta != T(1)) {
      for (int j = 0; j < N; ++j) c[j] *= beta;
    }
    for (int k = 0; k < K; ++k) {
      T a = A[std::size_t(i) * K + k];
      const T* b = B + std::size_t(k) * N;
      for (int j = 0; j < N; ++j) c[j] += a * b[j];
    }
  }
}

template <typename T>
void gemm_nt(T* C, const T* A, const T* B, int M, int K, int N, T beta) {
  for (int i = 0; i < M; ++i) {
    for (int j = 0; j < N; ++j) {
      T acc = T(0);
      const T* a = A + std::size_t(i) * K;
      const T* b = B + std::size_t(j) * K;
      for (int k = 0; k < K; ++k) acc += a[k] * b[k];
      T& c = C[std::size_t(i) * N + j];
      c = beta == T(0) ? acc : beta * c + acc;
    }
  }
}

template <typename T>
void gemm_tn(T* C, const T* A, const T* B, int M, int K, int N, T beta) {
  if (beta == T(0)) {
    for (std::size_t i = 0; i < std::size_t(K) * N; ++i) C[i] = T(0);
  } else if (beta != T(1)) {
    for (std::size_t i = 0; i < std::size_t(K) * N; ++i) C[i] *= beta;
  }
  for (int m = 0; m < M; ++m) {
    const T* a = A + std::size_t(m) * K;
    const T* b = B + std::size_t(m) * N;
    for (int k = 0; k < K; ++k) {
      T av = a[k];
      if (av == T(0)) continue;
      T* c = C + std::size_t(k) * N;
      for (int j = 0; j < N; ++j) c[j] += av * b[j];
    }
  }
}

template <typename T>
void softmax_rows(T* X, int rows, int cols) {
  for (int r = 0; r < rows; ++r) {
    T* x = X + std::size_t(r) * cols;
    T mx = x[0];
    for (int j = 1; j < cols; ++j) mx = x[j] > mx ? x[j] : mx;
    T sum = T(0);
    for (int j = 0; j < cols; ++j) {
      x[j] = std::exp(x[j] - mx);
      sum += x[j];
    }
    T inv = T(1) / sum;
    for (int j = 0; j < cols; ++j) x[j] *= inv;
  }
}

inline constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
inline constexpr double kGeluA = 0.044715;

template <typename T>
void gelu_fwd(T* y, const T* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    T v = x[i];
    T u = T(kGeluC) * (v + T(kGeluA) * v * v * v);
    y[i] = T(0.5) * v * (T(1) + std::tanh(u));
  }
}

template <typename T>
void gelu_bwd(T* dx, const T* x, const T* dy, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    T v = x[i];
    T u = T(kGeluC) * (v + T(kGeluA) * v * v * v);
    T t = std::tanh(u);
    T sech2 = T(1) - t * t;
    T du = T(kGeluC) * (T(1) + T(3) * T(kGeluA) * v * v);
    dx[i] = dy[i] * (T(0.5) * (T(1) + t) + T(0.5) * v * sech2 * du);
  }
}

template <typename T>
void axpy(T* y, const T* x, T a, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

template <typename T>
void add_bias_rows(T* X, const T* bias, int rows, int cols) {
  for (int r = 0; r < rows; ++r) {
    T* x = X + std::size_t(r) * cols;
    for (int j = 0; j < cols; ++j) x[j] += bias[j];
  }
}

template <typename T>
void colsum(T* out, const T* X, int rows, int cols) {
  for (int r = 0; r < rows; ++r) {
    const T* x = X + std::size_t(r) * cols;
    for (int j = 0; j < cols; ++j) out[j] += x[j];
  }
}

template <typename T>
void adam_step(T* p, T* m, T* v, const T* g, std::size_t n, T lr, T beta1, T beta2, T eps,
               T bc1, T bc2) {
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = beta1 * m[i] + (T(1) - beta1) * g[i];
    v[i] = beta2 * v[i] + (T(1) - beta2) * g[i] * g[i];
    T mhat = m[i] / bc1;
    T vhat = v[i] / bc2;
    p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

}  // namespace generic

// double-precision entry points used by the 64-bit verification mode;
// these always run the scalar reference path
inline void gemm_nn(double* C, const double* A, const double* B, int M, int K, int N,
                    double beta) {
  generic::gemm_nn(C, A, B, M, K, N, beta);
}
inline void gemm_nt(double* C, const double* A, const double* B, int M, int K, int N,
                    double beta) {
  generic::gemm_nt(C, A, B, M, K, N, beta);
}
inline void gemm_tn(double* C, const double* A, const double* B, int M, int K, int N,
                    double beta) {
  generic::gemm_tn(C, A, B, M, K, N, beta);
}
inline void softmax_rows(double* X, int rows, int cols) { generic::softmax_rows(X, rows, cols); }
inline void gelu_fwd(double* y, const double* x, std::size_t n) { generic::gelu_fwd(y, x, n); }
inline void gelu_bwd(double* dx, const double* x, const double* dy, std::size_t n) {
  generic::gelu_bwd(dx, x, dy, n);
}
inline void axpy(double* y, const double* x, double a, std::size_t n) {
  generic::axpy(y, x, a, n);
}
inline void add_bias_rows(double* X, const double* bias, int rows, int cols) {
  generic::add_bias_rows(X, bias, rows, cols);
}
inline void colsum(double* out, const double* X, int rows, int cols) {
  generic::colsum(out, X, rows, cols);
}
inline void adam_step(double* p, double* m, double* v, const double* g, std::size_t n, double lr,
                      double beta1, double beta2, double eps, double bc1, double bc2) {
  generic::adam_step(p, m, v, g, n, lr, beta1, beta2, eps, bc1, bc2);
}

// Raw backend tables, exposed so the equivalence tests can drive both
// implementations explicitly regardless of the active dispatch.
struct FloatKernelTable {
  void (*gemm_nn)(float*, const float*, const float*, int, int, int, float);
  void (*gemm_nt)(float*, const float*, const float*, int, int, int, float);
  void (*gemm_tn)(float*, const float*, const float*, int, int, int, float);
  void (*softmax_rows)(float*, int, int);
  void (*gelu_fwd)(float*, const float*, std::size_t);
  void (*gelu_bwd)(float*, const float*, const float*, std::size_t);
  void (*axpy)(float*, const float*, float, std::size_t);
  void (*add_bias_rows)(float*, const float*, int, int);
  void (*colsum)(float*, const float*, int, int);
  void (*adam_step)(float*, float*, float*, const float*, std::size_t, float, float, float, float,
                    float, float);
};

const FloatKernelTable& scalar_table();
const FloatKernelTable* avx2_table();  // nullptr when the CPU lacks AVX2+FMA

}  // namespace styletag::kernels
