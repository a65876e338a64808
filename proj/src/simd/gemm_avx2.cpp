// Compiled with -mavx2 -mfma. Only reached through the runtime dispatcher.

#include <immintrin.h>

#include "pman/simd/gemm.hpp"

namespace pman::simd::detail {
namespace {

struct F32 {
    using Scalar = float;
    using Reg = __m256;
    static constexpr std::size_t kLanes = 8;
    static Reg zero() { return _mm256_setzero_ps(); }
    static Reg load(const float* p) { return _mm256_loadu_ps(p); }
    static void store(float* p, Reg v) { _mm256_storeu_ps(p, v); }
    static Reg broadcast(float v) { return _mm256_set1_ps(v); }
    static Reg fma(Reg a, Reg b, Reg c) { return _mm256_fmadd_ps(a, b, c); }
    static Reg add(Reg a, Reg b) { return _mm256_add_ps(a, b); }
};

struct F64 {
    using Scalar = double;
    using Reg = __m256d;
    static constexpr std::size_t kLanes = 4;
    static Reg zero() { return _mm256_setzero_pd(); }
    static Reg load(const double* p) { return _mm256_loadu_pd(p); }
    static void store(double* p, Reg v) { _mm256_storeu_pd(p, v); }
    static Reg broadcast(double v) { return _mm256_set1_pd(v); }
    static Reg fma(Reg a, Reg b, Reg c) { return _mm256_fmadd_pd(a, b, c); }
    static Reg add(Reg a, Reg b) { return _mm256_add_pd(a, b); }
};

// 4 x (2 * lanes) register tile, full K sweep per tile.
template <typename V>
void tile_4x2(std::size_t K, const typename V::Scalar* A, std::size_t lda,
              const typename V::Scalar* B, std::size_t ldb, typename V::Scalar* C,
              std::size_t ldc, bool accumulate) {
    using R = typename V::Reg;
    constexpr std::size_t L = V::kLanes;
    R c00 = V::zero(), c01 = V::zero(), c10 = V::zero(), c11 = V::zero();
    R c20 = V::zero(), c21 = V::zero(), c30 = V::zero(), c31 = V::zero();
    const auto* a0 = A;
    const auto* a1 = A + lda;
    const auto* a2 = A + 2 * lda;
    const auto* a3 = A + 3 * lda;
    for (std::size_t k = 0; k < K; ++k) {
        const auto* b = B + k * ldb;
        const R b0 = V::load(b);
        const R b1 = V::load(b + L);
        R a = V::broadcast(a0[k]);
        c00 = V::fma(a, b0, c00);
        c01 = V::fma(a, b1, c01);
        a = V::broadcast(a1[k]);
        c10 = V::fma(a, b0, c10);
        c11 = V::fma(a, b1, c11);
        a = V::broadcast(a2[k]);
        c20 = V::fma(a, b0, c20);
        c21 = V::fma(a, b1, c21);
        a = V::broadcast(a3[k]);
        c30 = V::fma(a, b0, c30);
        c31 = V::fma(a, b1, c31);
    }
    auto put = [&](std::size_t r, R lo, R hi) {
        auto* c = C + r * ldc;
        if (accumulate) {
            lo = V::add(lo, V::load(c));
            hi = V::add(hi, V::load(c + L));
        }
        V::store(c, lo);
        V::store(c + L, hi);
    };
    put(0, c00, c01);
    put(1, c10, c11);
    put(2, c20, c21);
    put(3, c30, c31);
}

// One row, one register wide.
template <typename V>
void tile_1x1(std::size_t K, const typename V::Scalar* A, const typename V::Scalar* B,
              std::size_t ldb, typename V::Scalar* C, bool accumulate) {
    typename V::Reg acc = V::zero();
    for (std::size_t k = 0; k < K; ++k) acc = V::fma(V::broadcast(A[k]), V::load(B + k * ldb), acc);
    if (accumulate) acc = V::add(acc, V::load(C));
    V::store(C, acc);
}

template <typename V>
void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const typename V::Scalar* A,
             std::size_t lda, const typename V::Scalar* B, std::size_t ldb,
             typename V::Scalar* C, std::size_t ldc, bool accumulate) {
    using T = typename V::Scalar;
    constexpr std::size_t L = V::kLanes;
    const std::size_t n_wide = N - N % (2 * L);
    const std::size_t m_quad = M - M % 4;

    for (std::size_t i = 0; i < m_quad; i += 4) {
        for (std::size_t j = 0; j < n_wide; j += 2 * L) {
            tile_4x2<V>(K, A + i * lda, lda, B + j, ldb, C + i * ldc + j, ldc, accumulate);
        }
    }
    for (std::size_t i = m_quad; i < M; ++i) {
        for (std::size_t j = 0; j < n_wide; j += L) {
            tile_1x1<V>(K, A + i * lda, B + j, ldb, C + i * ldc + j, accumulate);
        }
    }
    // Column tail.
    if (n_wide < N) {
        for (std::size_t i = 0; i < M; ++i) {
            T* c = C + i * ldc;
            const T* a = A + i * lda;
            for (std::size_t j = n_wide; j < N; ++j) {
                T acc{0};
                for (std::size_t k = 0; k < K; ++k) acc += a[k] * B[k * ldb + j];
                c[j] = accumulate ? c[j] + acc : acc;
            }
        }
    }
}

}  // namespace

template <>
void gemm_nn_avx2<float>(std::size_t M, std::size_t N, std::size_t K, const float* A,
                         std::size_t lda, const float* B, std::size_t ldb, float* C,
                         std::size_t ldc, bool accumulate) {
    gemm_nn<F32>(M, N, K, A, lda, B, ldb, C, ldc, accumulate);
}

template <>
void gemm_nn_avx2<double>(std::size_t M, std::size_t N, std::size_t K, const double* A,
                          std::size_t lda, const double* B, std::size_t ldb, double* C,
                          std::size_t ldc, bool accumulate) {
    gemm_nn<F64>(M, N, K, A, lda, B, ldb, C, ldc, accumulate);
}

}  // namespace pman::simd::detail
