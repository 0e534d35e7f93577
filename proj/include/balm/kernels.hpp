#pragma once

// Dense float kernels behind the tensor ops. Each kernel has a serial
// reference implementation and an OpenMP variant parallelized over output
// rows. Every output element is computed by exactly one thread with a fixed
// inner summation order, so the two variants are bit-identical and results do
// not depend on the thread count.

namespace balm::kernels {

// c[m x p] = a[m x n] * b[n x p]; accumulate adds into c instead of overwriting.
void matmul_serial(const float* a, const float* b, float* c, int m, int n, int p,
                   bool accumulate = false);
void matmul(const float* a, const float* b, float* c, int m, int n, int p,
            bool accumulate = false);

// c[m x p] = a[m x n] * b[p x n]^T
void matmul_nt_serial(const float* a, const float* b, float* c, int m, int n, int p,
                      bool accumulate = false);
void matmul_nt(const float* a, const float* b, float* c, int m, int n, int p,
               bool accumulate = false);

// c[n x p] = a[m x n]^T * b[m x p]
void matmul_tn_serial(const float* a, const float* b, float* c, int m, int n, int p,
                      bool accumulate = false);
void matmul_tn(const float* a, const float* b, float* c, int m, int n, int p,
               bool accumulate = false);

bool openmp_enabled();
int max_threads();

}  // namespace balm::kernels
