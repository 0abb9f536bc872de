#include "semgrasp/blas.hpp"

#include <algorithm>
#include <vector>

namespace semgrasp {

namespace {
constexpr int kColBlock = 512;  // C-row chunk that stays in L1 across the k loop

// Scratch for the gemm_nt transpose; reused across calls on the same thread.
template <typename T>
std::vector<T>& nt_scratch() {
    thread_local std::vector<T> buf;
    return buf;
}
}  // namespace

template <typename T>
void gemm(int M, int N, int K, const T* A, const T* B, T* C) {
    for (int j0 = 0; j0 < N; j0 += kColBlock) {
        const int j1 = std::min(N, j0 + kColBlock);
        const int w = j1 - j0;
        for (int i = 0; i < M; ++i) {
            const T* a = A + size_t(i) * K;
            T* c = C + size_t(i) * N + j0;
            int k = 0;
            for (; k + 4 <= K; k += 4) {
                const T a0 = a[k], a1 = a[k + 1], a2 = a[k + 2], a3 = a[k + 3];
                const T* b0 = B + size_t(k) * N + j0;
                const T* b1 = b0 + N;
                const T* b2 = b1 + N;
                const T* b3 = b2 + N;
                for (int j = 0; j < w; ++j) c[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
            }
            for (; k < K; ++k) {
                const T ak = a[k];
                const T* b = B + size_t(k) * N + j0;
                for (int j = 0; j < w; ++j) c[j] += ak * b[j];
            }
        }
    }
}

template <typename T>
void gemm_tn(int M, int N, int K, const T* A, const T* B, T* C) {
    for (int j0 = 0; j0 < N; j0 += kColBlock) {
        const int j1 = std::min(N, j0 + kColBlock);
        const int w = j1 - j0;
        for (int i = 0; i < M; ++i) {
            T* c = C + size_t(i) * N + j0;
            for (int k = 0; k < K; ++k) {
                const T ak = A[size_t(k) * M + i];
                const T* b = B + size_t(k) * N + j0;
                for (int j = 0; j < w; ++j) c[j] += ak * b[j];
            }
        }
    }
}

template <typename T>
void gemm_nt(int M, int N, int K, const T* A, const T* B, T* C) {
    // Row dot products do not autovectorize under strict FP semantics, so
    // transpose B once and fall back to the streaming kernel.
    auto& bt = nt_scratch<T>();
    bt.resize(size_t(K) * size_t(N));
    for (int j = 0; j < N; ++j) {
        const T* src = B + size_t(j) * K;
        for (int k = 0; k < K; ++k) bt[size_t(k) * N + j] = src[k];
    }
    gemm(M, N, K, A, bt.data(), C);
}

template void gemm<float>(int, int, int, const float*, const float*, float*);
template void gemm<double>(int, int, int, const double*, const double*, double*);
template void gemm_tn<float>(int, int, int, const float*, const float*, float*);
template void gemm_tn<double>(int, int, int, const double*, const double*, double*);
template void gemm_nt<float>(int, int, int, const float*, const float*, float*);
template void gemm_nt<double>(int, int, int, const double*, const double*, double*);

}  // namespace semgrasp
