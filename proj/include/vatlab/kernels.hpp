#pragma once

// Dense matrix-product kernels used by the network layers.
//
// Every kernel exists twice: `serial` is the plain triple loop kept as the
// reference, `omp` is the OpenMP version the library runs. Both accumulate
// each output element over the inner index in increasing order, so on a
// given machine they agree bit for bit. All matrices are row-major.

#include <cstddef>
#include <span>

namespace vatlab::kernels {

struct GemmDims {
  std::size_t m;  // rows of C
  std::size_t k;  // inner dimension
  std::size_t n;  // columns of C
};

namespace serial {

/// C = A·B with A m×k, B k×n.
void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c, GemmDims d);
/// C = A·Bᵀ with A m×k, B n×k.
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, GemmDims d);
/// C = Aᵀ·B with A k×m, B k×n.
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, GemmDims d);

}  // namespace serial

namespace omp {

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c, GemmDims d);
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, GemmDims d);
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, GemmDims d);

}  // namespace omp

/// Work (m·k·n) below which the OpenMP kernels stay on the calling thread.
inline constexpr std::size_t kParallelThreshold = std::size_t{1} << 18;

}  // namespace vatlab::kernels
