#pragma once

#include <cstddef>

// Dense kernels used by the autodiff engine. Every kernel has a plain serial
// reference and an OpenMP/register-blocked implementation; the reference is
// kept for tests and benchmarks.
namespace ctd::kernels {

enum class Backend { kSerial, kParallel };

/// Process-wide backend selection (default kParallel).
void SetBackend(Backend backend);
Backend GetBackend();

/// RAII override of the backend, restores the previous one on exit.
class ScopedBackend {
 public:
  explicit ScopedBackend(Backend backend) : saved_(GetBackend()) {
    SetBackend(backend);
  }
  ~ScopedBackend() { SetBackend(saved_); }
  ScopedBackend(const ScopedBackend&) = delete;
  ScopedBackend& operator=(const ScopedBackend&) = delete;

 private:
  Backend saved_;
};

// C[M,N] (+)= op(A) * op(B), row-major. op(A) is [M,K], op(B) is [K,N].
// trans_a: A is stored [K,M]; trans_b: B is stored [N,K].
void Gemm(std::size_t m, std::size_t k, std::size_t n, const double* a,
          bool trans_a, const double* b, bool trans_b, double* c,
          bool accumulate);

void GemmSerial(std::size_t m, std::size_t k, std::size_t n, const double* a,
                bool trans_a, const double* b, bool trans_b, double* c,
                bool accumulate);
void GemmParallel(std::size_t m, std::size_t k, std::size_t n,
                  const double* a, bool trans_a, const double* b,
                  bool trans_b, double* c, bool accumulate);

/// Batched Gemm over `batch` independent [M,K]x[K,N] products.
void BatchedGemm(std::size_t batch, std::size_t m, std::size_t k,
                 std::size_t n, const double* a, bool trans_a,
                 const double* b, bool trans_b, double* c, bool accumulate);

/// Row-wise softmax of a [rows, cols] block.
void SoftmaxRows(std::size_t rows, std::size_t cols, const double* x,
                 double* y);
void SoftmaxRowsSerial(std::size_t rows, std::size_t cols, const double* x,
                       double* y);

}  // namespace ctd::kernels
