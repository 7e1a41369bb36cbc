#include "specbias/gemm.hpp"

#include <algorithm>

namespace specbias::gemm {

namespace {

constexpr int kColBlock = 256;

// Four rows of C updated per pass over a column block of B so each loaded
// B row feeds four accumulations.
template <typename T, typename AIndex>
void panel(int m, int n, int k, AIndex a_at, const T* __restrict b, T* __restrict c) {
  for (int j0 = 0; j0 < n; j0 += kColBlock) {
    const int jn = std::min(kColBlock, n - j0);
    int i = 0;
    for (; i + 4 <= m; i += 4) {
      T* __restrict c0 = c + static_cast<std::size_t>(i) * n + j0;
      T* __restrict c1 = c0 + n;
      T* __restrict c2 = c1 + n;
      T* __restrict c3 = c2 + n;
      for (int kk = 0; kk < k; ++kk) {
        const T* __restrict br = b + static_cast<std::size_t>(kk) * n + j0;
        const T a0 = a_at(i, kk);
        const T a1 = a_at(i + 1, kk);
        const T a2 = a_at(i + 2, kk);
        const T a3 = a_at(i + 3, kk);
        for (int j = 0; j < jn; ++j) {
          const T bv = br[j];
          c0[j] += a0 * bv;
          c1[j] += a1 * bv;
          c2[j] += a2 * bv;
          c3[j] += a3 * bv;
        }
      }
    }
    for (; i < m; ++i) {
      T* __restrict c0 = c + static_cast<std::size_t>(i) * n + j0;
      for (int kk = 0; kk < k; ++kk) {
        const T* __restrict br = b + static_cast<std::size_t>(kk) * n + j0;
        const T a0 = a_at(i, kk);
        for (int j = 0; j < jn; ++j) c0[j] += a0 * br[j];
      }
    }
  }
}

template <typename T>
T dot(const T* __restrict x, const T* __restrict y, int len) {
  T acc[8] = {};
  int t = 0;
  for (; t + 8 <= len; t += 8) {
    for (int l = 0; l < 8; ++l) acc[l] += x[t + l] * y[t + l];
  }
  T s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
  for (; t < len; ++t) s += x[t] * y[t];
  return s;
}

}  // namespace

template <typename T>
void nn(int m, int n, int k, const T* a, const T* b, T* c) {
  panel<T>(m, n, k, [a, k](int i, int kk) { return a[static_cast<std::size_t>(i) * k + kk]; },
           b, c);
}

template <typename T>
void tn(int m, int n, int k, const T* a, const T* b, T* c) {
  panel<T>(m, n, k, [a, m](int i, int kk) { return a[static_cast<std::size_t>(kk) * m + i]; },
           b, c);
}

template <typename T>
void nt(int m, int n, int k, const T* a, const T* b, T* c) {
  for (int i = 0; i < m; ++i) {
    const T* ar = a + static_cast<std::size_t>(i) * k;
    T* cr = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) cr[j] += dot(ar, b + static_cast<std::size_t>(j) * k, k);
  }
}

template void nn<float>(int, int, int, const float*, const float*, float*);
template void nn<double>(int, int, int, const double*, const double*, double*);
template void tn<float>(int, int, int, const float*, const float*, float*);
template void tn<double>(int, int, int, const double*, const double*, double*);
template void nt<float>(int, int, int, const float*, const float*, float*);
template void nt<double>(int, int, int, const double*, const double*, double*);

}  // namespace specbias::gemm
