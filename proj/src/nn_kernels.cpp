#include "trailmap/nn_kernels.hpp"

namespace trailmap::kernels {

namespace {

inline void nn_row(const double* a, const double* b, double* c, std::size_t i, std::size_t k, std::size_t n) {
  double* crow = c + i * n;
  const double* arow = a + i * k;
  for (std::size_t p = 0; p < k; ++p) {
    const double av = arow[p];
    if (av == 0.0) continue;
    const double* brow = b + p * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
  }
}

inline void nt_row(const double* a, const double* b, double* c, std::size_t i, std::size_t k, std::size_t n) {
  const double* arow = a + i * k;
  for (std::size_t j = 0; j < n; ++j) {
    const double* brow = b + j * k;
    double acc = 0.0;
    for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
    c[i * n + j] += acc;
  }
}

inline void tn_row(const double* a, const double* b, double* c, std::size_t i, std::size_t m, std::size_t k,
                   std::size_t n) {
  double* crow = c + i * n;
  for (std::size_t p = 0; p < k; ++p) {
    const double av = a[p * m + i];
    if (av == 0.0) continue;
    const double* brow = b + p * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
  }
}

}  // namespace

void gemm_nn_reference(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) nn_row(a, b, c, i, k, n);
}

void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
#pragma omp parallel for schedule(static) if (m * k * n > 32768)
  for (std::size_t i = 0; i < m; ++i) nn_row(a, b, c, i, k, n);
}

void gemm_nt_reference(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) nt_row(a, b, c, i, k, n);
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
#pragma omp parallel for schedule(static) if (m * k * n > 32768)
  for (std::size_t i = 0; i < m; ++i) nt_row(a, b, c, i, k, n);
}

void gemm_tn_reference(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) tn_row(a, b, c, i, m, k, n);
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
#pragma omp parallel for schedule(static) if (m * k * n > 32768)
  for (std::size_t i = 0; i < m; ++i) tn_row(a, b, c, i, m, k, n);
}

}  // namespace trailmap::kernels
