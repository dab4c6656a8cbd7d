#include "madp/kernels.hpp"

#include <atomic>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace madp::nd::kernels {

namespace {

std::atomic<bool> g_parallel{true};

// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::size_t kGrain = 16 * 1024;

inline bool use_parallel(std::size_t work) {
#ifdef _OPENMP
    return g_parallel.load(std::memory_order_relaxed) && work >= kGrain;
#else
    (void)work;
    return false;
#endif
}

// Row i of C is owned by one iteration; the k-loop accumulates in a fixed
// order, so the parallel and serial paths produce identical bits.
template <bool Acc>
inline void nn_row(double* c, const double* a, const double* b, std::size_t i, std::size_t k,
                   std::size_t n) {
    double* ci = c + i * n;
    if (!Acc)
        for (std::size_t j = 0; j < n; ++j) ci[j] = 0.0;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
        const double aip = ai[p];
        const double* bp = b + p * n;
        for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
}

template <bool Acc>
inline void nt_row(double* c, const double* a, const double* b, std::size_t i, std::size_t k,
                   std::size_t n) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
        const double* bj = b + j * k;
        double s = 0.0;
        for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
        if (Acc)
            ci[j] += s;
        else
            ci[j] = s;
    }
}

} // namespace

void set_parallel(bool on) { g_parallel.store(on, std::memory_order_relaxed); }

bool parallel_enabled() { return g_parallel.load(std::memory_order_relaxed); }

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

void matmul_nn_serial(double* c, const double* a, const double* b, std::size_t m, std::size_t k,
                      std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) nn_row<false>(c, a, b, i, k, n);
}

void matmul_nn_acc_serial(double* c, const double* a, const double* b, std::size_t m,
                          std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) nn_row<true>(c, a, b, i, k, n);
}

void matmul_nt_serial(double* c, const double* a, const double* b, std::size_t m, std::size_t k,
                      std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) nt_row<false>(c, a, b, i, k, n);
}

void matmul_nt_acc_serial(double* c, const double* a, const double* b, std::size_t m,
                          std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) nt_row<true>(c, a, b, i, k, n);
}

namespace {

// C[m,n] = A[k,m]^T * B[k,n]; output row i reads column i of A.
template <bool Acc>
inline void tn_out_row(double* c, const double* a, const double* b, std::size_t i, std::size_t m,
                       std::size_t k, std::size_t n) {
    double* ci = c + i * n;
    if (!Acc)
        for (std::size_t j = 0; j < n; ++j) ci[j] = 0.0;
    for (std::size_t p = 0; p < k; ++p) {
        const double api = a[p * m + i];
        const double* bp = b + p * n;
        for (std::size_t j = 0; j < n; ++j) ci[j] += api * bp[j];
    }
}

} // namespace

void matmul_tn_serial(double* c, const double* a, const double* b, std::size_t m, std::size_t k,
                      std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) tn_out_row<false>(c, a, b, i, m, k, n);
}

void matmul_tn_acc_serial(double* c, const double* a, const double* b, std::size_t m,
                          std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) tn_out_row<true>(c, a, b, i, m, k, n);
}

void matmul_nn(double* c, const double* a, const double* b, std::size_t m, std::size_t k,
               std::size_t n) {
    if (use_parallel(m * k * n)) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
        for (long long i = 0; i < static_cast<long long>(m); ++i)
            nn_row<false>(c, a, b, static_cast<std::size_t>(i), k, n);
        return;
#endif
    }
    matmul_nn_serial(c, a, b, m, k, n);
}

void matmul_nn_acc(double* c, const double* a, const double* b, std::size_t m, std::size_t k,
                   std::size_t n) {
    if (use_parallel(m * k * n)) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
        for (long long i = 0; i < static_cast<long long>(m); ++i)
            nn_row<true>(c, a, b, static_cast<std::size_t>(i), k, n);
        return;
#endif
    }
    matmul_nn_acc_serial(c, a, b, m, k, n);
}

void matmul_nt(double* c, const double* a, const double* b, std::size_t m, std::size_t k,
               std::size_t n) {
    if (use_parallel(m * k * n)) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
        for (long long i = 0; i < static_cast<long long>(m); ++i)
            nt_row<false>(c, a, b, static_cast<std::size_t>(i), k, n);
        return;
#endif
    }
    matmul_nt_serial(c, a, b, m, k, n);
}

void matmul_nt_acc(double* c, const double* a, const double* b, std::size_t m, std::size_t k,
                   std::size_t n) {
    if (use_parallel(m * k * n)) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
        for (long long i = 0; i < static_cast<long long>(m); ++i)
            nt_row<true>(c, a, b, static_cast<std::size_t>(i), k, n);
        return;
#endif
    }
    matmul_nt_acc_serial(c, a, b, m, k, n);
}

void matmul_tn(double* c, const double* a, const double* b, std::size_t m, std::size_t k,
               std::size_t n) {
    if (use_parallel(m * k * n)) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
        for (long long i = 0; i < static_cast<long long>(m); ++i)
            tn_out_row<false>(c, a, b, static_cast<std::size_t>(i), m, k, n);
        return;
#endif
    }
    matmul_tn_serial(c, a, b, m, k, n);
}

void matmul_tn_acc(double* c, const double* a, const double* b, std::size_t m, std::size_t k,
                   std::size_t n) {
    if (use_parallel(m * k * n)) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
        for (long long i = 0; i < static_cast<long long>(m); ++i)
            tn_out_row<true>(c, a, b, static_cast<std::size_t>(i), m, k, n);
        return;
#endif
    }
    matmul_tn_acc_serial(c, a, b, m, k, n);
}

void col_mean_var_serial(const double* x, std::size_t b, std::size_t f, double* mean,
                         double* var) {
    for (std::size_t j = 0; j < f; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < b; ++i) s += x[i * f + j];
        const double mu = s / static_cast<double>(b);
        double sq = 0.0;
        for (std::size_t i = 0; i < b; ++i) {
            const double d = x[i * f + j] - mu;
            sq += d * d;
        }
        mean[j] = mu;
        var[j] = sq / static_cast<double>(b);
    }
}

void col_mean_var(const double* x, std::size_t b, std::size_t f, double* mean, double* var) {
    if (use_parallel(b * f)) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
        for (long long j = 0; j < static_cast<long long>(f); ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < b; ++i) s += x[i * f + j];
            const double mu = s / static_cast<double>(b);
            double sq = 0.0;
            for (std::size_t i = 0; i < b; ++i) {
                const double d = x[i * f + j] - mu;
                sq += d * d;
            }
            mean[j] = mu;
            var[j] = sq / static_cast<double>(b);
        }
        return;
#endif
    }
    col_mean_var_serial(x, b, f, mean, var);
}

namespace {

inline void log_softmax_row(double* y, const double* x, std::size_t cols) {
    double mx = x[0];
    for (std::size_t j = 1; j < cols; ++j)
        if (x[j] > mx) mx = x[j];
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) s += std::exp(x[j] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < cols; ++j) y[j] = x[j] - lse;
}

} // namespace

void log_softmax_rows_serial(double* y, const double* x, std::size_t rows, std::size_t cols) {
    for (std::size_t i = 0; i < rows; ++i) log_softmax_row(y + i * cols, x + i * cols, cols);
}

void log_softmax_rows(double* y, const double* x, std::size_t rows, std::size_t cols) {
    if (use_parallel(rows * cols * 8)) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
        for (long long i = 0; i < static_cast<long long>(rows); ++i)
            log_softmax_row(y + i * cols, x + i * cols, cols);
        return;
#endif
    }
    log_softmax_rows_serial(y, x, rows, cols);
}

double gelu_scalar(double x) {
    const double c = 0.7978845608028653558798921198687; // sqrt(2/pi)
    const double u = c * (x + 0.044715 * x * x * x);
    return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_grad_scalar(double x) {
    const double c = 0.7978845608028653558798921198687;
    const double u = c * (x + 0.044715 * x * x * x);
    const double t = std::tanh(u);
    const double du = c * (1.0 + 3.0 * 0.044715 * x * x);
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

void gelu_serial(double* y, const double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = gelu_scalar(x[i]);
}

void gelu(double* y, const double* x, std::size_t n) {
    if (use_parallel(n * 16)) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
        for (long long i = 0; i < static_cast<long long>(n); ++i) y[i] = gelu_scalar(x[i]);
        return;
#endif
    }
    gelu_serial(y, x, n);
}

} // namespace madp::nd::kernels
