#pragma once

#include <cstdint>

namespace sslseg {

// Small row-major GEMM kernels, written so the inner loops run at unit
// stride and autovectorize. Accumulation order is fixed, so results are
// reproducible run to run for a given binary.

/// C[m,n] += A[m,k] * B[k,n]
template <typename T>
void gemm_nn(int m, int n, int k, const T* A, const T* B, T* C) {
    for (int i = 0; i < m; ++i) {
        const T* a_row = A + static_cast<int64_t>(i) * k;
        T* c_row = C + static_cast<int64_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const T a = a_row[p];
            if (a == T(0)) continue;
            const T* b_row = B + static_cast<int64_t>(p) * n;
            for (int j = 0; j < n; ++j) c_row[j] += a * b_row[j];
        }
    }
}

/// C[m,n] += A[m,k] * B[n,k]^T
/// The dot product runs in 16 independent lanes so the FP reduction
/// vectorizes; lane count is fixed, so results do not depend on k.
template <typename T>
void gemm_nt(int m, int n, int k, const T* A, const T* B, T* C) {
    constexpr int kLanes = 16;
    for (int i = 0; i < m; ++i) {
        const T* a_row = A + static_cast<int64_t>(i) * k;
        T* c_row = C + static_cast<int64_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const T* b_row = B + static_cast<int64_t>(j) * k;
            T lanes[kLanes] = {};
            int p = 0;
            for (; p + kLanes <= k; p += kLanes)
                for (int l = 0; l < kLanes; ++l) lanes[l] += a_row[p + l] * b_row[p + l];
            for (; p < k; ++p) lanes[p % kLanes] += a_row[p] * b_row[p];
            T acc = T(0);
            for (int l = 0; l < kLanes; ++l) acc += lanes[l];
            c_row[j] += acc;
        }
    }
}

/// C[m,n] += A[k,m]^T * B[k,n]
template <typename T>
void gemm_tn(int m, int n, int k, const T* A, const T* B, T* C) {
    for (int p = 0; p < k; ++p) {
        const T* a_row = A + static_cast<int64_t>(p) * m;
        const T* b_row = B + static_cast<int64_t>(p) * n;
        for (int i = 0; i < m; ++i) {
            const T a = a_row[i];
            if (a == T(0)) continue;
            T* c_row = C + static_cast<int64_t>(i) * n;
            for (int j = 0; j < n; ++j) c_row[j] += a * b_row[j];
        }
    }
}

}  // namespace sslseg
