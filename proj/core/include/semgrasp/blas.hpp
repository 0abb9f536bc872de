#pragma once

#include <cstdint>

namespace semgrasp {

// Row-major matrix kernels. C is accumulated into (callers pre-fill with the
// bias or zero). Shapes: A is MxK, B is KxN, C is MxN unless transposed as
// named. These carry the bulk of conv/dense compute, so they are written to
// autovectorize well rather than for generality.

template <typename T>
void gemm(int M, int N, int K, const T* A, const T* B, T* C);

// C += A^T * B with A KxM, B KxN, C MxN.
template <typename T>
void gemm_tn(int M, int N, int K, const T* A, const T* B, T* C);

// C += A * B^T with A MxK, B NxK, C MxN.
template <typename T>
void gemm_nt(int M, int N, int K, const T* A, const T* B, T* C);

extern template void gemm<float>(int, int, int, const float*, const float*, float*);
extern template void gemm<double>(int, int, int, const double*, const double*, double*);
extern template void gemm_tn<float>(int, int, int, const float*, const float*, float*);
extern template void gemm_tn<double>(int, int, int, const double*, const double*, double*);
extern template void gemm_nt<float>(int, int, int, const float*, const float*, float*);
extern template void gemm_nt<double>(int, int, int, const double*, const double*, double*);

}  // namespace semgrasp
