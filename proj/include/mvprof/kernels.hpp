#pragma once

#include <cstddef>

namespace mvprof {

// OpenMP-parallel kernels. Every output element is produced by exactly one
// thread with a fixed serial inner-loop order, so results are bit-identical
// for any thread count.
namespace kernels {

// c[m,n] (+)= a[m,k] * b[k,n]
void matmul_nn(const double* a, const double* b, double* c, int m, int k,
               int n, bool accumulate);
// c[m,n] (+)= a[m,k] * b[n,k]^T
void matmul_nt(const double* a, const double* b, double* c, int m, int k,
               int n, bool accumulate);
// c[m,n] (+)= a[k,m]^T * b[k,n]
void matmul_tn(const double* a, const double* b, double* c, int m, int k,
               int n, bool accumulate);

// Row-wise softmax with max subtraction; x and y are rows*n.
void softmax_rows(const double* x, double* y, int rows, int n);

// Row-wise standardization + affine. Writes y, the standardized values xhat
// and the per-row 1/sqrt(var+eps) needed by the backward rule.
void layernorm_rows(const double* x, const double* gain, const double* bias,
                    double eps, double* y, double* xhat, double* inv_std,
                    int rows, int d);

void map_sigmoid(const double* x, double* y, std::size_t n);
void map_relu(const double* x, double* y, std::size_t n);
void map_gelu(const double* x, double* y, std::size_t n);
void map_softplus(const double* x, double* y, std::size_t n);

} // namespace kernels

// Serial reference implementations, deliberately naive. They are the
// independent oracle for the parallel kernels in the test suite and the
// baseline side of the benchmark; nothing in the library calls them.
namespace ref {

void matmul_nn(const double* a, const double* b, double* c, int m, int k,
               int n);
void softmax_rows(const double* x, double* y, int rows, int n);
void layernorm_rows(const double* x, const double* gain, const double* bias,
                    double eps, double* y, int rows, int d);
void map_gelu(const double* x, double* y, std::size_t n);
void map_sigmoid(const double* x, double* y, std::size_t n);

} // namespace ref

// GELU tanh-approximation constants, shared by both implementations.
inline constexpr double kGeluC0 = 0.7978845608028654;
inline constexpr double kGeluC1 = 0.044715;

} // namespace mvprof
