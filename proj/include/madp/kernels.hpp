#pragma once

#include <cstddef>

namespace madp::nd::kernels {

// Process-wide switch between the OpenMP kernels and the serial reference
// implementations. Both paths assign each output element to exactly one
// iteration and accumulate in the same order, so results are bitwise
// identical either way; the tests assert this.
void set_parallel(bool on);
bool parallel_enabled();
int max_threads();

// C[m,n] = A[m,k] * B[k,n]
void matmul_nn(double* c, const double* a, const double* b, std::size_t m, std::size_t k, std::size_t n);
// C[m,n] = A[m,k] * B[n,k]^T
void matmul_nt(double* c, const double* a, const double* b, std::size_t m, std::size_t k, std::size_t n);
// C[m,n] = A[k,m]^T * B[k,n]
void matmul_tn(double* c, const double* a, const double* b, std::size_t m, std::size_t k, std::size_t n);

// Accumulating variants (C += ...), used by gradient propagation.
void matmul_nn_acc(double* c, const double* a, const double* b, std::size_t m, std::size_t k, std::size_t n);
void matmul_nt_acc(double* c, const double* a, const double* b, std::size_t m, std::size_t k, std::size_t n);
void matmul_tn_acc(double* c, const double* a, const double* b, std::size_t m, std::size_t k, std::size_t n);

// Serial reference implementations, always available for equivalence tests
// and benchmarks regardless of the parallel switch.
void matmul_nn_serial(double* c, const double* a, const double* b, std::size_t m, std::size_t k, std::size_t n);
void matmul_nt_serial(double* c, const double* a, const double* b, std::size_t m, std::size_t k, std::size_t n);
void matmul_tn_serial(double* c, const double* a, const double* b, std::size_t m, std::size_t k, std::size_t n);
void matmul_nn_acc_serial(double* c, const double* a, const double* b, std::size_t m, std::size_t k, std::size_t n);
void matmul_nt_acc_serial(double* c, const double* a, const double* b, std::size_t m, std::size_t k, std::size_t n);
void matmul_tn_acc_serial(double* c, const double* a, const double* b, std::size_t m, std::size_t k, std::size_t n);

// Per-column mean and biased variance of x[b, f]; one reduction per feature.
void col_mean_var(const double* x, std::size_t b, std::size_t f, double* mean, double* var);
void col_mean_var_serial(const double* x, std::size_t b, std::size_t f, double* mean, double* var);

// Row-wise log-softmax of x[rows, cols].
void log_softmax_rows(double* y, const double* x, std::size_t rows, std::size_t cols);
void log_softmax_rows_serial(double* y, const double* x, std::size_t rows, std::size_t cols);

// y = gelu(x) elementwise (tanh approximation) and its derivative.
void gelu(double* y, const double* x, std::size_t n);
void gelu_serial(double* y, const double* x, std::size_t n);
double gelu_scalar(double x);
double gelu_grad_scalar(double x);

} // namespace madp::nd::kernels
