#pragma once

// Dense GEMM kernels used by the network. Every kernel accumulates into C
// (C += ...). The OpenMP versions split work over rows of C only, so each
// output element sees the same summation order as the serial reference.

#include <cstddef>

namespace trailmap::kernels {

// C[M x N] += A[M x K] * B[K x N]
void gemm_nn_reference(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);

// C[M x N] += A[M x K] * B[N x K]^T
void gemm_nt_reference(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);

// C[M x N] += A[K x M]^T * B[K x N]
void gemm_tn_reference(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);

}  // namespace trailmap::kernels
