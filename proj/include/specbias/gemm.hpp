#pragma once

#include <cstddef>

namespace specbias::gemm {

// Row-major blocked matrix products. All accumulate into C (C += ...), and
// every output element is reduced in a fixed order so results are
// reproducible bit-for-bit.

/// C[M,N] += A[M,K] * B[K,N]
template <typename T>
void nn(int m, int n, int k, const T* a, const T* b, T* c);

/// C[M,N] += A^T * B with A stored as [K,M] and B as [K,N]
template <typename T>
void tn(int m, int n, int k, const T* a, const T* b, T* c);

/// C[M,N] += A * B^T with A stored as [M,K] and B as [N,K]
template <typename T>
void nt(int m, int n, int k, const T* a, const T* b, T* c);

}  // namespace specbias::gemm
