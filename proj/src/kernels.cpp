#include "vatlab/kernels.hpp"

#include <algorithm>
#include <vector>

#include "vatlab/errors.hpp"

namespace vatlab::kernels {
namespace {

void check(std::size_t a, std::size_t b, std::size_t c, GemmDims d, std::size_t want_a,
           std::size_t want_b) {
  if (a < want_a || b < want_b || c < d.m * d.n) {
    throw DimensionError("gemm: operand buffers smaller than the declared dimensions");
  }
}

bool go_parallel(GemmDims d) { return d.m > 1 && d.m * d.k * d.n >= kParallelThreshold; }

}  // namespace

namespace serial {

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c, GemmDims d) {
  check(a.size(), b.size(), c.size(), d, d.m * d.k, d.k * d.n);
  for (std::size_t i = 0; i < d.m; ++i) {
    for (std::size_t j = 0; j < d.n; ++j) {
      double sum = 0.0;
      for (std::size_t p = 0; p < d.k; ++p) sum += a[i * d.k + p] * b[p * d.n + j];
      c[i * d.n + j] = sum;
    }
  }
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, GemmDims d) {
  check(a.size(), b.size(), c.size(), d, d.m * d.k, d.n * d.k);
  for (std::size_t i = 0; i < d.m; ++i) {
    for (std::size_t j = 0; j < d.n; ++j) {
      double sum = 0.0;
      for (std::size_t p = 0; p < d.k; ++p) sum += a[i * d.k + p] * b[j * d.k + p];
      c[i * d.n + j] = sum;
    }
  }
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, GemmDims d) {
  check(a.size(), b.size(), c.size(), d, d.k * d.m, d.k * d.n);
  for (std::size_t i = 0; i < d.m; ++i) {
    for (std::size_t j = 0; j < d.n; ++j) {
      double sum = 0.0;
      for (std::size_t p = 0; p < d.k; ++p) sum += a[p * d.m + i] * b[p * d.n + j];
      c[i * d.n + j] = sum;
    }
  }
}

}  // namespace serial

namespace omp {
namespace {

constexpr std::size_t kRowBlock = 4;

// Accumulates rows [i0, i0 + rows) of C = op(A)·B, where a_at(i, p) reads
// op(A). Each C entry is summed over p in increasing order, as in the serial
// kernels; blocking only shares the loads of B between rows.
template <typename AAt>
void row_block(AAt a_at, const double* __restrict b, double* __restrict c, std::size_t i0,
               std::size_t rows, GemmDims d) {
  std::fill(c + i0 * d.n, c + (i0 + rows) * d.n, 0.0);
  if (rows == kRowBlock) {
    double* __restrict c0 = c + i0 * d.n;
    double* __restrict c1 = c0 + d.n;
    double* __restrict c2 = c1 + d.n;
    double* __restrict c3 = c2 + d.n;
    for (std::size_t p = 0; p < d.k; ++p) {
      const double a0 = a_at(i0, p), a1 = a_at(i0 + 1, p), a2 = a_at(i0 + 2, p), a3 = a_at(i0 + 3, p);
      if (a0 == 0.0 && a1 == 0.0 && a2 == 0.0 && a3 == 0.0) continue;
      const double* __restrict brow = b + p * d.n;
      for (std::size_t j = 0; j < d.n; ++j) {
        const double bj = brow[j];
        c0[j] += a0 * bj;
        c1[j] += a1 * bj;
        c2[j] += a2 * bj;
        c3[j] += a3 * bj;
      }
    }
    return;
  }
  for (std::size_t i = i0; i < i0 + rows; ++i) {
    double* __restrict crow = c + i * d.n;
    for (std::size_t p = 0; p < d.k; ++p) {
      const double aip = a_at(i, p);
      if (aip == 0.0) continue;
      const double* __restrict brow = b + p * d.n;
      for (std::size_t j = 0; j < d.n; ++j) crow[j] += aip * brow[j];
    }
  }
}

template <typename AAt>
void blocked_gemm(AAt a_at, const double* b, double* c, GemmDims d) {
  const auto blocks = static_cast<long long>((d.m + kRowBlock - 1) / kRowBlock);
#pragma omp parallel for schedule(static) if (go_parallel(d))
  for (long long blk = 0; blk < blocks; ++blk) {
    const std::size_t i0 = static_cast<std::size_t>(blk) * kRowBlock;
    row_block(a_at, b, c, i0, std::min(kRowBlock, d.m - i0), d);
  }
}

}  // namespace

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c, GemmDims d) {
  check(a.size(), b.size(), c.size(), d, d.m * d.k, d.k * d.n);
  const double* pa = a.data();
  blocked_gemm([pa, k = d.k](std::size_t i, std::size_t p) { return pa[i * k + p]; }, b.data(), c.data(), d);
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, GemmDims d) {
  check(a.size(), b.size(), c.size(), d, d.m * d.k, d.n * d.k);
  // Bᵀ is materialized so the inner loop streams contiguous memory.
  std::vector<double> bt(d.k * d.n);
  for (std::size_t j = 0; j < d.n; ++j)
    for (std::size_t p = 0; p < d.k; ++p) bt[p * d.n + j] = b[j * d.k + p];
  const double* pa = a.data();
  blocked_gemm([pa, k = d.k](std::size_t i, std::size_t p) { return pa[i * k + p]; }, bt.data(), c.data(), d);
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, GemmDims d) {
  check(a.size(), b.size(), c.size(), d, d.k * d.m, d.k * d.n);
  const double* pa = a.data();
  blocked_gemm([pa, m = d.m](std::size_t i, std::size_t p) { return pa[p * m + i]; }, b.data(), c.data(), d);
}

}  // namespace omp
}  // namespace vatlab::kernels
