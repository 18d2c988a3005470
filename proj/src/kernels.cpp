#include "ctd/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <vector>

namespace ctd::kernels {
namespace {

std::atomic<Backend> g_backend{Backend::kParallel};

// element (r, c) of op(X) where op(X) has `cols` columns
inline double Elem(const double* x, bool trans, std::size_t rows,
                   std::size_t cols, std::size_t r, std::size_t c) {
  return trans ? x[c * rows + r] : x[r * cols + c];
}

// dst[c, r] = src[r, c]; src is [rows, cols]
void Transpose(const double* src, std::size_t rows, std::size_t cols,
               double* dst) {
  constexpr std::size_t kTile = 32;
  for (std::size_t r0 = 0; r0 < rows; r0 += kTile) {
    const std::size_t r1 = std::min(rows, r0 + kTile);
    for (std::size_t c0 = 0; c0 < cols; c0 += kTile) {
      const std::size_t c1 = std::min(cols, c0 + kTile);
      for (std::size_t r = r0; r < r1; ++r)
        for (std::size_t c = c0; c < c1; ++c) dst[c * rows + r] = src[r * cols + c];
    }
  }
}

constexpr std::size_t kRowBlock = 4;
constexpr std::size_t kColBlock = 16;

// 4x16 register tile: c[i..i+4, j..j+16] += a[i..i+4, :] * b[:, j..j+16]
inline void MicroTile(std::size_t k, std::size_t n, const double* a,
                      std::size_t lda, const double* b, double* c) {
  double acc[kRowBlock][kColBlock] = {};
  for (std::size_t p = 0; p < k; ++p) {
    const double* brow = b + p * n;
#pragma GCC unroll 4
    for (std::size_t r = 0; r < kRowBlock; ++r) {
      const double av = a[r * lda + p];
#pragma omp simd
      for (std::size_t j = 0; j < kColBlock; ++j) acc[r][j] += av * brow[j];
    }
  }
  for (std::size_t r = 0; r < kRowBlock; ++r)
#pragma omp simd
    for (std::size_t j = 0; j < kColBlock; ++j) c[r * n + j] += acc[r][j];
}

// c[i, j0..n) += a[i, :] * b[:, j0..n) for a single row, generic width
inline void RowTail(std::size_t k, std::size_t n, std::size_t j0,
                    const double* arow, const double* b, double* crow) {
  for (std::size_t p = 0; p < k; ++p) {
    const double av = arow[p];
    const double* brow = b + p * n;
#pragma omp simd
    for (std::size_t j = j0; j < n; ++j) crow[j] += av * brow[j];
  }
}

// NN product on contiguous row-major operands, c already initialized.
void GemmNN(std::size_t m, std::size_t k, std::size_t n, const double* a,
            const double* b, double* c) {
  const std::size_t full_cols = n - n % kColBlock;
  const std::size_t row_blocks = m / kRowBlock;
  const bool big = m * n * k > (1u << 16);
#pragma omp parallel for schedule(static) if (big)
  for (std::size_t blk = 0; blk < row_blocks; ++blk) {
    const std::size_t i = blk * kRowBlock;
    for (std::size_t j = 0; j < full_cols; j += kColBlock)
      MicroTile(k, n, a + i * k, k, b + j, c + i * n + j);
    if (full_cols < n) {
      for (std::size_t r = 0; r < kRowBlock; ++r)
        RowTail(k, n, full_cols, a + (i + r) * k, b, c + (i + r) * n);
    }
  }
  for (std::size_t i = row_blocks * kRowBlock; i < m; ++i)
    RowTail(k, n, 0, a + i * k, b, c + i * n);
}

}  // namespace

void SetBackend(Backend backend) { g_backend.store(backend); }
Backend GetBackend() { return g_backend.load(); }

void Gemm(std::size_t m, std::size_t k, std::size_t n, const double* a,
          bool trans_a, const double* b, bool trans_b, double* c,
          bool accumulate) {
  if (GetBackend() == Backend::kSerial)
    GemmSerial(m, k, n, a, trans_a, b, trans_b, c, accumulate);
  else
    GemmParallel(m, k, n, a, trans_a, b, trans_b, c, accumulate);
}

void GemmSerial(std::size_t m, std::size_t k, std::size_t n, const double* a,
                bool trans_a, const double* b, bool trans_b, double* c,
                bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double sum = 0.0;
      for (std::size_t p = 0; p < k; ++p)
        sum += Elem(a, trans_a, m, k, i, p) * Elem(b, trans_b, k, n, p, j);
      c[i * n + j] = accumulate ? c[i * n + j] + sum : sum;
    }
  }
}

void GemmParallel(std::size_t m, std::size_t k, std::size_t n,
                  const double* a, bool trans_a, const double* b,
                  bool trans_b, double* c, bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, 0.0);
  if (m == 0 || n == 0 || k == 0) return;
  // op(X) materialized row-major so the tile kernel sees contiguous rows
  thread_local std::vector<double> a_buf, b_buf;
  const double* a_rm = a;
  const double* b_rm = b;
  if (trans_a) {
    a_buf.resize(m * k);
    Transpose(a, k, m, a_buf.data());
    a_rm = a_buf.data();
  }
  if (trans_b) {
    b_buf.resize(k * n);
    Transpose(b, n, k, b_buf.data());
    b_rm = b_buf.data();
  }
  GemmNN(m, k, n, a_rm, b_rm, c);
}

void BatchedGemm(std::size_t batch, std::size_t m, std::size_t k,
                 std::size_t n, const double* a, bool trans_a,
                 const double* b, bool trans_b, double* c, bool accumulate) {
  const std::size_t sa = m * k, sb = k * n, sc = m * n;
  if (GetBackend() == Backend::kSerial) {
    for (std::size_t i = 0; i < batch; ++i)
      GemmSerial(m, k, n, a + i * sa, trans_a, b + i * sb, trans_b,
                 c + i * sc, accumulate);
    return;
  }
  const bool big = batch * sa * n > (1u << 16);
#pragma omp parallel for schedule(static) if (big)
  for (std::size_t i = 0; i < batch; ++i)
    GemmParallel(m, k, n, a + i * sa, trans_a, b + i * sb, trans_b,
                 c + i * sc, accumulate);
}

void SoftmaxRows(std::size_t rows, std::size_t cols, const double* x,
                 double* y) {
  if (GetBackend() == Backend::kSerial) {
    SoftmaxRowsSerial(rows, cols, x, y);
    return;
  }
  const bool big = rows * cols > (1u << 14);
#pragma omp parallel for schedule(static) if (big)
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x + r * cols;
    double* yr = y + r * cols;
    double mx = xr[0];
    for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, xr[c]);
    double sum = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      yr[c] = std::exp(xr[c] - mx);
      sum += yr[c];
    }
    const double inv = 1.0 / sum;
    for (std::size_t c = 0; c < cols; ++c) yr[c] *= inv;
  }
}

void SoftmaxRowsSerial(std::size_t rows, std::size_t cols, const double* x,
                       double* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x + r * cols;
    double* yr = y + r * cols;
    double mx = xr[0];
    for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, xr[c]);
    double sum = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      yr[c] = std::exp(xr[c] - mx);
      sum += yr[c];
    }
    const double inv = 1.0 / sum;
    for (std::size_t c = 0; c < cols; ++c) yr[c] *= inv;
  }
}

}  // namespace ctd::kernels
