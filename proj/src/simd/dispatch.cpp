#include <atomic>
#include <cstdlib>
#include <cstring>
#include <vector>

#include "pman/simd/gemm.hpp"

namespace pman::simd {
namespace {

bool cpu_has_avx2() {
#if defined(PMAN_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

Isa initial_isa() {
    const char* env = std::getenv("PMAN_ISA");
    if (env != nullptr && std::strcmp(env, "scalar") == 0) return Isa::Scalar;
    return detected_isa();
}

std::atomic<Isa>& active() {
    static std::atomic<Isa> isa{initial_isa()};
    return isa;
}

template <typename T>
void run_nn(Isa isa, std::size_t M, std::size_t N, std::size_t K, const T* A, std::size_t lda,
            const T* B, std::size_t ldb, T* C, std::size_t ldc, bool accumulate) {
#if defined(PMAN_HAVE_AVX2)
    if (isa == Isa::Avx2) {
        detail::gemm_nn_avx2<T>(M, N, K, A, lda, B, ldb, C, ldc, accumulate);
        return;
    }
#else
    (void)isa;
#endif
    detail::gemm_nn_scalar<T>(M, N, K, A, lda, B, ldb, C, ldc, accumulate);
}

}  // namespace

std::string_view isa_name(Isa isa) {
    switch (isa) {
        case Isa::Scalar: return "scalar";
        case Isa::Avx2: return "avx2";
    }
    return "unknown";
}

Isa detected_isa() {
    static const bool avx2 = cpu_has_avx2();
    return avx2 ? Isa::Avx2 : Isa::Scalar;
}

Isa active_isa() { return active().load(std::memory_order_relaxed); }

Isa set_active_isa(Isa isa) {
    if (isa == Isa::Avx2 && detected_isa() != Isa::Avx2) isa = Isa::Scalar;
    active().store(isa, std::memory_order_relaxed);
    return isa;
}

template <typename T>
void gemm_with(Isa isa, bool trans_a, bool trans_b, std::size_t M, std::size_t N, std::size_t K,
               const T* A, std::size_t lda, const T* B, std::size_t ldb, T* C, std::size_t ldc,
               bool accumulate) {
    if (M == 0 || N == 0) return;
    if (K == 0) {
        if (!accumulate) {
            for (std::size_t i = 0; i < M; ++i) std::memset(C + i * ldc, 0, N * sizeof(T));
        }
        return;
    }
    // Transposed operands are packed into plain row-major scratch first.
    std::vector<T> a_pack;
    std::vector<T> b_pack;
    if (trans_a) {
        a_pack.resize(M * K);
        for (std::size_t k = 0; k < K; ++k)
            for (std::size_t i = 0; i < M; ++i) a_pack[i * K + k] = A[k * lda + i];
        A = a_pack.data();
        lda = K;
    }
    if (trans_b) {
        b_pack.resize(K * N);
        for (std::size_t j = 0; j < N; ++j)
            for (std::size_t k = 0; k < K; ++k) b_pack[k * N + j] = B[j * ldb + k];
        B = b_pack.data();
        ldb = N;
    }
    run_nn<T>(isa, M, N, K, A, lda, B, ldb, C, ldc, accumulate);
}

template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t M, std::size_t N, std::size_t K, const T* A,
          std::size_t lda, const T* B, std::size_t ldb, T* C, std::size_t ldc, bool accumulate) {
    gemm_with<T>(active_isa(), trans_a, trans_b, M, N, K, A, lda, B, ldb, C, ldc, accumulate);
}

template void gemm<float>(bool, bool, std::size_t, std::size_t, std::size_t, const float*,
                          std::size_t, const float*, std::size_t, float*, std::size_t, bool);
template void gemm<double>(bool, bool, std::size_t, std::size_t, std::size_t, const double*,
                           std::size_t, const double*, std::size_t, double*, std::size_t, bool);
template void gemm_with<float>(Isa, bool, bool, std::size_t, std::size_t, std::size_t,
                               const float*, std::size_t, const float*, std::size_t, float*,
                               std::size_t, bool);
template void gemm_with<double>(Isa, bool, bool, std::size_t, std::size_t, std::size_t,
                                const double*, std::size_t, const double*, std::size_t, double*,
                                std::size_t, bool);

}  // namespace pman::simd
