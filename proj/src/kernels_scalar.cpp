#include "mvae/kernels.hpp"

#include <cmath>

// Scalar reference backend. Defines the evaluation-order semantics the AVX2
// backend must reproduce bit for bit.

namespace mvae::kernels {
namespace {
namespace impl {

// Striped dot product, the shared reduction-order contract (see kernels.hpp).
inline double dot_striped(const double* a, const double* b, std::size_t n) {
    double acc0 = 0.0, acc1 = 0.0, acc2 = 0.0, acc3 = 0.0;
    std::size_t n4 = n & ~std::size_t{3};
    for (std::size_t k = 0; k < n4; k += 4) {
        acc0 += a[k] * b[k];
        acc1 += a[k + 1] * b[k + 1];
        acc2 += a[k + 2] * b[k + 2];
        acc3 += a[k + 3] * b[k + 3];
    }
    double s = (acc0 + acc1) + (acc2 + acc3);
    for (std::size_t k = n4; k < n; ++k) s += a[k] * b[k];
    return s;
}

void matmul_nt(const double* a, const double* b, double* out,
               std::size_t rows, std::size_t inner, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c)
            out[r * cols + c] = dot_striped(a + r * inner, b + c * inner, inner);
}

void matmul_nn(const double* a, const double* b, double* out,
               std::size_t rows, std::size_t inner, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        double* out_row = out + r * cols;
        for (std::size_t c = 0; c < cols; ++c) out_row[c] = 0.0;
        for (std::size_t k = 0; k < inner; ++k) {
            double av = a[r * inner + k];
            const double* b_row = b + k * cols;
            for (std::size_t c = 0; c < cols; ++c) out_row[c] += av * b_row[c];
        }
    }
}

void matmul_tn_acc(const double* a, const double* b, double* out,
                   std::size_t rows, std::size_t inner, std::size_t cols) {
    for (std::size_t k = 0; k < inner; ++k) {
        const double* b_row = b + k * cols;
        for (std::size_t r = 0; r < rows; ++r) {
            double av = a[k * rows + r];
            double* out_row = out + r * cols;
            for (std::size_t c = 0; c < cols; ++c) out_row[c] += av * b_row[c];
        }
    }
}

void add_bias(double* m, const double* bias, std::size_t rows, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        double* row = m + r * cols;
        for (std::size_t c = 0; c < cols; ++c) row[c] += bias[c];
    }
}

void colsum_acc(const double* m, double* out, std::size_t rows, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = m + r * cols;
        for (std::size_t c = 0; c < cols; ++c) out[c] += row[c];
    }
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale(double* x, double alpha, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

void mul_acc(const double* a, const double* b, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a[i] * b[i];
}

void adam_update(double* p, const double* g, double* m, double* v, std::size_t n,
                 double beta1, double beta2, double eps_hat, double lr,
                 double bias1_corr, double bias2_corr) {
    for (std::size_t i = 0; i < n; ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * (g[i] * g[i]);
        p[i] -= lr * (m[i] * bias1_corr) / (std::sqrt(v[i] * bias2_corr) + eps_hat);
    }
}

}  // namespace impl
}  // namespace

const KernelTable& scalar_table() {
    static const KernelTable table = {
        impl::matmul_nt, impl::matmul_nn, impl::matmul_tn_acc,
        impl::add_bias,  impl::colsum_acc,
        impl::axpy,      impl::scale,     impl::mul_acc,
        impl::adam_update,
    };
    return table;
}

}  // namespace mvae::kernels
