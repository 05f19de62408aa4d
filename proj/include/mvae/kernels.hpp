#pragma once

#include <cstddef>

namespace mvae::kernels {

// Dense inner-loop kernels behind the numerics layer. Every kernel exists as
// a scalar reference implementation and (on x86-64) an AVX2 variant selected
// at runtime. Both backends follow the exact same floating-point evaluation
// order, so their results are bit-identical; the equivalence tests assert
// exact equality, not a tolerance.
//
// Reduction-order contract for the row-dot-row product (matmul_nt): partial
// sums are striped over four accumulators acc[j] (j = k mod 4, k ascending),
// combined as (acc0 + acc1) + (acc2 + acc3), then the remainder elements are
// added in ascending order. All other reductions accumulate in ascending
// index order.

enum class Backend { scalar, avx2 };

struct KernelTable {
    // out[r,c] = sum_i a[r,i] * b[c,i]; a: rows x inner, b: cols x inner.
    void (*matmul_nt)(const double* a, const double* b, double* out,
                      std::size_t rows, std::size_t inner, std::size_t cols);
    // out[r,c] = sum_k a[r,k] * b[k,c]; a: rows x inner, b: inner x cols.
    void (*matmul_nn)(const double* a, const double* b, double* out,
                      std::size_t rows, std::size_t inner, std::size_t cols);
    // out[r,c] += sum_k a[k,r] * b[k,c]; a: inner x rows, b: inner x cols.
    void (*matmul_tn_acc)(const double* a, const double* b, double* out,
                          std::size_t rows, std::size_t inner, std::size_t cols);
    // m[r,:] += bias
    void (*add_bias)(double* m, const double* bias, std::size_t rows, std::size_t cols);
    // out[c] += sum_r m[r,c]
    void (*colsum_acc)(const double* m, double* out, std::size_t rows, std::size_t cols);
    // y += alpha * x
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    // x *= alpha
    void (*scale)(double* x, double alpha, std::size_t n);
    // y += a * b elementwise
    void (*mul_acc)(const double* a, const double* b, double* y, std::size_t n);
    // Bias-corrected Adam:
    //   m = beta1*m + (1-beta1)*g;  v = beta2*v + (1-beta2)*g*g
    //   p -= lr * (m*bias1_corr) / (sqrt(v*bias2_corr) + eps_hat)
    void (*adam_update)(double* p, const double* g, double* m, double* v, std::size_t n,
                        double beta1, double beta2, double eps_hat, double lr,
                        double bias1_corr, double bias2_corr);
};

const KernelTable& scalar_table();
// Null when this build carries no AVX2 translation unit (non-x86 targets).
const KernelTable* avx2_table();

// Runtime CPU support for a backend. The scalar backend is always supported.
bool backend_supported(Backend b);
const char* backend_name(Backend b);

// Active backend: resolved once on first use (AVX2 when the CPU has it,
// overridable via the MVAE_KERNELS env var: "scalar" or "avx2").
Backend active_backend();
void set_backend(Backend b);  // throws ConfigError when unsupported

const KernelTable& active();

inline void matmul_nt(const double* a, const double* b, double* out,
                      std::size_t rows, std::size_t inner, std::size_t cols) {
    active().matmul_nt(a, b, out, rows, inner, cols);
}
inline void matmul_nn(const double* a, const double* b, double* out,
                      std::size_t rows, std::size_t inner, std::size_t cols) {
    active().matmul_nn(a, b, out, rows, inner, cols);
}
inline void matmul_tn_acc(const double* a, const double* b, double* out,
                          std::size_t rows, std::size_t inner, std::size_t cols) {
    active().matmul_tn_acc(a, b, out, rows, inner, cols);
}
inline void add_bias(double* m, const double* bias, std::size_t rows, std::size_t cols) {
    active().add_bias(m, bias, rows, cols);
}
inline void colsum_acc(const double* m, double* out, std::size_t rows, std::size_t cols) {
    active().colsum_acc(m, out, rows, cols);
}
inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
    active().axpy(alpha, x, y, n);
}
inline void scale(double* x, double alpha, std::size_t n) {
    active().scale(x, alpha, n);
}
inline void mul_acc(const double* a, const double* b, double* y, std::size_t n) {
    active().mul_acc(a, b, y, n);
}
inline void adam_update(double* p, const double* g, double* m, double* v, std::size_t n,
                        double beta1, double beta2, double eps_hat, double lr,
                        double bias1_corr, double bias2_corr) {
    active().adam_update(p, g, m, v, n, beta1, beta2, eps_hat, lr, bias1_corr, bias2_corr);
}

}  // namespace mvae::kernels
