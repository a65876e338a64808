#pragma once

// Dense matrix product kernels. Every convolution, transposed convolution,
// matrix multiply and fully-connected layer in the autodiff engine lowers to
// these. A scalar reference kernel is always built; an AVX2/FMA variant is
// compiled separately and chosen at runtime when the CPU supports it.

#include <cstddef>
#include <string_view>

namespace pman::simd {

enum class Isa { Scalar, Avx2 };

std::string_view isa_name(Isa isa);

/// Best ISA supported by both the build and the running CPU.
Isa detected_isa();

/// ISA currently used by gemm(). Defaults to detected_isa(), unless the
/// PMAN_ISA environment variable is set to "scalar".
Isa active_isa();

/// Overrides the kernel choice process-wide. Requesting an ISA the CPU
/// lacks falls back to Scalar. Returns the ISA actually selected.
Isa set_active_isa(Isa isa);

/// C = op(A) * op(B)  (accumulate == false)
/// C += op(A) * op(B) (accumulate == true)
/// Row-major. op(A) is M x K, op(B) is K x N, C is M x N with leading
/// dimension ldc. lda/ldb are the leading dimensions of A and B as stored.
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t M, std::size_t N, std::size_t K,
          const T* A, std::size_t lda, const T* B, std::size_t ldb, T* C, std::size_t ldc,
          bool accumulate);

/// Same contract, pinned to one ISA. Used by equivalence tests.
template <typename T>
void gemm_with(Isa isa, bool trans_a, bool trans_b, std::size_t M, std::size_t N, std::size_t K,
               const T* A, std::size_t lda, const T* B, std::size_t ldb, T* C, std::size_t ldc,
               bool accumulate);

namespace detail {
// Kernels operate on the plain layout C (+)= A * B with A (M x K), B (K x N).
template <typename T>
void gemm_nn_scalar(std::size_t M, std::size_t N, std::size_t K, const T* A, std::size_t lda,
                    const T* B, std::size_t ldb, T* C, std::size_t ldc, bool accumulate);
template <typename T>
void gemm_nn_avx2(std::size_t M, std::size_t N, std::size_t K, const T* A, std::size_t lda,
                  const T* B, std::size_t ldb, T* C, std::size_t ldc, bool accumulate);
}  // namespace detail

}  // namespace pman::simd
