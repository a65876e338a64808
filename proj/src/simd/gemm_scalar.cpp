#include "pman/simd/gemm.hpp"

namespace pman::simd::detail {

template <typename T>
void gemm_nn_scalar(std::size_t M, std::size_t N, std::size_t K, const T* A, std::size_t lda,
                    const T* B, std::size_t ldb, T* C, std::size_t ldc, bool accumulate) {
    for (std::size_t i = 0; i < M; ++i) {
        T* c = C + i * ldc;
        if (!accumulate) {
            for (std::size_t j = 0; j < N; ++j) c[j] = T{0};
        }
        const T* a = A + i * lda;
        for (std::size_t k = 0; k < K; ++k) {
            const T aik = a[k];
            const T* b = B + k * ldb;
            for (std::size_t j = 0; j < N; ++j) c[j] += aik * b[j];
        }
    }
}

template void gemm_nn_scalar<float>(std::size_t, std::size_t, std::size_t, const float*,
                                    std::size_t, const float*, std::size_t, float*, std::size_t,
                                    bool);
template void gemm_nn_scalar<double>(std::size_t, std::size_t, std::size_t, const double*,
                                     std::size_t, const double*, std::size_t, double*,
                                     std::size_t, bool);

}  // namespace pman::simd::detail
