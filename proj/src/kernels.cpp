#include "balm/kernels.hpp"

#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace balm::kernels {

namespace {

inline void matmul_row(const float* a, const float* b, float* c, int i, int n, int p,
                       bool accumulate) {
  float* crow = c + static_cast<long>(i) * p;
  if (!accumulate) {
    for (int j = 0; j < p; ++j) crow[j] = 0.0f;
  }
  const float* arow = a + static_cast<long>(i) * n;
  for (int k = 0; k < n; ++k) {
    const float aik = arow[k];
    if (aik == 0.0f) continue;
    const float* brow = b + static_cast<long>(k) * p;
    for (int j = 0; j < p; ++j) crow[j] += aik * brow[j];
  }
}

inline void matmul_nt_row(const float* a, const float* b, float* c, int i, int n, int p,
                          bool accumulate) {
  const float* arow = a + static_cast<long>(i) * n;
  float* crow = c + static_cast<long>(i) * p;
  for (int j = 0; j < p; ++j) {
    const float* brow = b + static_cast<long>(j) * n;
    float acc = 0.0f;
    for (int k = 0; k < n; ++k) acc += arow[k] * brow[k];
    crow[j] = accumulate ? crow[j] + acc : acc;
  }
}

inline void matmul_tn_row(const float* a, const float* b, float* c, int i, int m, int n,
                          int p, bool accumulate) {
  float* crow = c + static_cast<long>(i) * p;
  if (!accumulate) {
    for (int j = 0; j < p; ++j) crow[j] = 0.0f;
  }
  for (int k = 0; k < m; ++k) {
    const float aki = a[static_cast<long>(k) * n + i];
    if (aki == 0.0f) continue;
    const float* brow = b + static_cast<long>(k) * p;
    for (int j = 0; j < p; ++j) crow[j] += aki * brow[j];
  }
}

}  // namespace

void matmul_serial(const float* a, const float* b, float* c, int m, int n, int p,
                   bool accumulate) {
  for (int i = 0; i < m; ++i) matmul_row(a, b, c, i, n, p, accumulate);
}

void matmul(const float* a, const float* b, float* c, int m, int n, int p,
            bool accumulate) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (m > 1)
#endif
  for (int i = 0; i < m; ++i) matmul_row(a, b, c, i, n, p, accumulate);
}

void matmul_nt_serial(const float* a, const float* b, float* c, int m, int n, int p,
                      bool accumulate) {
  for (int i = 0; i < m; ++i) matmul_nt_row(a, b, c, i, n, p, accumulate);
}

void matmul_nt(const float* a, const float* b, float* c, int m, int n, int p,
               bool accumulate) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (m > 1)
#endif
  for (int i = 0; i < m; ++i) matmul_nt_row(a, b, c, i, n, p, accumulate);
}

void matmul_tn_serial(const float* a, const float* b, float* c, int m, int n, int p,
                      bool accumulate) {
  for (int i = 0; i < n; ++i) matmul_tn_row(a, b, c, i, m, n, p, accumulate);
}

void matmul_tn(const float* a, const float* b, float* c, int m, int n, int p,
               bool accumulate) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (n > 1)
#endif
  for (int i = 0; i < n; ++i) matmul_tn_row(a, b, c, i, m, n, p, accumulate);
}

bool openmp_enabled() {
#ifdef _OPENMP
  return true;
#else
  return false;
#endif
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace balm::kernels
