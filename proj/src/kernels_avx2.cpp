#include "mvae/kernels.hpp"

// AVX2 backend. This translation unit is compiled with -mavx2 on x86-64 and
// is otherwise empty. Every loop mirrors the scalar backend's evaluation
// order exactly (explicit mul + add, never FMA), so results are bit-identical.

#if defined(__AVX2__)

#include <immintrin.h>

#include <cmath>

namespace mvae::kernels {
namespace {
namespace impl {

inline double reduce_striped(__m256d acc) {
    // ((acc0 + acc1) + (acc2 + acc3)), matching the scalar combine order.
    __m128d low = _mm256_castpd256_pd128(acc);
    __m128d high = _mm256_extractf128_pd(acc, 1);
    __m128d s01 = _mm_add_sd(low, _mm_unpackhi_pd(low, low));
    __m128d s23 = _mm_add_sd(high, _mm_unpackhi_pd(high, high));
    return _mm_cvtsd_f64(_mm_add_sd(s01, s23));
}

inline double dot_striped(const double* a, const double* b, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t n4 = n & ~std::size_t{3};
    for (std::size_t k = 0; k < n4; k += 4) {
        __m256d av = _mm256_loadu_pd(a + k);
        __m256d bv = _mm256_loadu_pd(b + k);
        acc = _mm256_add_pd(acc, _mm256_mul_pd(av, bv));
    }
    double s = reduce_striped(acc);
    for (std::size_t k = n4; k < n; ++k) s += a[k] * b[k];
    return s;
}

void matmul_nt(const double* a, const double* b, double* out,
               std::size_t rows, std::size_t inner, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c)
            out[r * cols + c] = dot_striped(a + r * inner, b + c * inner, inner);
}

// out_row[c] += av * b_row[c] for all c; shared by matmul_nn / matmul_tn_acc.
inline void row_axpy(double av, const double* b_row, double* out_row, std::size_t cols) {
    __m256d avv = _mm256_set1_pd(av);
    std::size_t c4 = cols & ~std::size_t{3};
    for (std::size_t c = 0; c < c4; c += 4) {
        __m256d o = _mm256_loadu_pd(out_row + c);
        __m256d bv = _mm256_loadu_pd(b_row + c);
        _mm256_storeu_pd(out_row + c, _mm256_add_pd(o, _mm256_mul_pd(avv, bv)));
    }
    for (std::size_t c = c4; c < cols; ++c) out_row[c] += av * b_row[c];
}

void matmul_nn(const double* a, const double* b, double* out,
               std::size_t rows, std::size_t inner, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        double* out_row = out + r * cols;
        for (std::size_t c = 0; c < cols; ++c) out_row[c] = 0.0;
        for (std::size_t k = 0; k < inner; ++k)
            row_axpy(a[r * inner + k], b + k * cols, out_row, cols);
    }
}

void matmul_tn_acc(const double* a, const double* b, double* out,
                   std::size_t rows, std::size_t inner, std::size_t cols) {
    for (std::size_t k = 0; k < inner; ++k) {
        const double* b_row = b + k * cols;
        for (std::size_t r = 0; r < rows; ++r)
            row_axpy(a[k * rows + r], b_row, out + r * cols, cols);
    }
}

void add_bias(double* m, const double* bias, std::size_t rows, std::size_t cols) {
    std::size_t c4 = cols & ~std::size_t{3};
    for (std::size_t r = 0; r < rows; ++r) {
        double* row = m + r * cols;
        for (std::size_t c = 0; c < c4; c += 4) {
            __m256d mv = _mm256_loadu_pd(row + c);
            __m256d bv = _mm256_loadu_pd(bias + c);
            _mm256_storeu_pd(row + c, _mm256_add_pd(mv, bv));
        }
        for (std::size_t c = c4; c < cols; ++c) row[c] += bias[c];
    }
}

void colsum_acc(const double* m, double* out, std::size_t rows, std::size_t cols) {
    std::size_t c4 = cols & ~std::size_t{3};
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = m + r * cols;
        for (std::size_t c = 0; c < c4; c += 4) {
            __m256d ov = _mm256_loadu_pd(out + c);
            __m256d rv = _mm256_loadu_pd(row + c);
            _mm256_storeu_pd(out + c, _mm256_add_pd(ov, rv));
        }
        for (std::size_t c = c4; c < cols; ++c) out[c] += row[c];
    }
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
    row_axpy(alpha, x, y, n);
}

void scale(double* x, double alpha, std::size_t n) {
    __m256d av = _mm256_set1_pd(alpha);
    std::size_t n4 = n & ~std::size_t{3};
    for (std::size_t i = 0; i < n4; i += 4)
        _mm256_storeu_pd(x + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), av));
    for (std::size_t i = n4; i < n; ++i) x[i] *= alpha;
}

void mul_acc(const double* a, const double* b, double* y, std::size_t n) {
    std::size_t n4 = n & ~std::size_t{3};
    for (std::size_t i = 0; i < n4; i += 4) {
        __m256d yv = _mm256_loadu_pd(y + i);
        __m256d prod = _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
        _mm256_storeu_pd(y + i, _mm256_add_pd(yv, prod));
    }
    for (std::size_t i = n4; i < n; ++i) y[i] += a[i] * b[i];
}

void adam_update(double* p, const double* g, double* m, double* v, std::size_t n,
                 double beta1, double beta2, double eps_hat, double lr,
                 double bias1_corr, double bias2_corr) {
    __m256d b1 = _mm256_set1_pd(beta1);
    __m256d b2 = _mm256_set1_pd(beta2);
    __m256d omb1 = _mm256_set1_pd(1.0 - beta1);
    __m256d omb2 = _mm256_set1_pd(1.0 - beta2);
    __m256d epsv = _mm256_set1_pd(eps_hat);
    __m256d lrv = _mm256_set1_pd(lr);
    __m256d c1 = _mm256_set1_pd(bias1_corr);
    __m256d c2 = _mm256_set1_pd(bias2_corr);
    std::size_t n4 = n & ~std::size_t{3};
    for (std::size_t i = 0; i < n4; i += 4) {
        __m256d gv = _mm256_loadu_pd(g + i);
        __m256d mv = _mm256_add_pd(_mm256_mul_pd(b1, _mm256_loadu_pd(m + i)),
                                   _mm256_mul_pd(omb1, gv));
        __m256d vv = _mm256_add_pd(_mm256_mul_pd(b2, _mm256_loadu_pd(v + i)),
                                   _mm256_mul_pd(omb2, _mm256_mul_pd(gv, gv)));
        _mm256_storeu_pd(m + i, mv);
        _mm256_storeu_pd(v + i, vv);
        __m256d num = _mm256_mul_pd(lrv, _mm256_mul_pd(mv, c1));
        __m256d den = _mm256_add_pd(_mm256_sqrt_pd(_mm256_mul_pd(vv, c2)), epsv);
        __m256d pv = _mm256_sub_pd(_mm256_loadu_pd(p + i), _mm256_div_pd(num, den));
        _mm256_storeu_pd(p + i, pv);
    }
    for (std::size_t i = n4; i < n; ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * (g[i] * g[i]);
        p[i] -= lr * (m[i] * bias1_corr) / (std::sqrt(v[i] * bias2_corr) + eps_hat);
    }
}

}  // namespace impl
}  // namespace

const KernelTable* avx2_table() {
    static const KernelTable table = {
        impl::matmul_nt, impl::matmul_nn, impl::matmul_tn_acc,
        impl::add_bias,  impl::colsum_acc,
        impl::axpy,      impl::scale,     impl::mul_acc,
        impl::adam_update,
    };
    return &table;
}

}  // namespace mvae::kernels

#else

namespace mvae::kernels {
const KernelTable* avx2_table() { return nullptr; }
}  // namespace mvae::kernels

#endif
