#include <cmath>
#include <vector>

#include "ctd/kernels.hpp"
#include "ctd/rng.hpp"
#include "doctest.h"

using namespace ctd;

namespace {

std::vector<double> Random(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = Uniform(rng, -1, 1);
  return v;
}

double MaxAbsDiff(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

}  // namespace

TEST_SUITE("kernels") {

TEST_CASE("parallel gemm matches the serial reference") {
  Rng rng = MakeRng(21);
  const std::size_t shapes[][3] = {{1, 1, 1}, {3, 5, 7}, {4, 16, 16}, {17, 33, 19},
                                   {64, 64, 64}, {130, 70, 90}, {5, 200, 3}};
  for (const auto& s : shapes) {
    const std::size_t m = s[0], k = s[1], n = s[2];
    for (int ta = 0; ta < 2; ++ta)
      for (int tb = 0; tb < 2; ++tb)
        for (int acc = 0; acc < 2; ++acc) {
          const auto a = Random(m * k, rng), b = Random(k * n, rng), c0 = Random(m * n, rng);
          auto c_ser = c0, c_par = c0;
          kernels::GemmSerial(m, k, n, a.data(), ta, b.data(), tb, c_ser.data(), acc);
          kernels::GemmParallel(m, k, n, a.data(), ta, b.data(), tb, c_par.data(), acc);
          INFO(m << "x" << k << "x" << n << " ta=" << ta << " tb=" << tb << " acc=" << acc);
          CHECK(MaxAbsDiff(c_ser, c_par) < 1e-12 * static_cast<double>(k));
        }
  }
}

TEST_CASE("gemm dispatch honors the backend") {
  Rng rng = MakeRng(22);
  const auto a = Random(6 * 4, rng), b = Random(4 * 5, rng);
  std::vector<double> ref(30), got(30);
  kernels::GemmSerial(6, 4, 5, a.data(), false, b.data(), false, ref.data(), false);
  {
    kernels::ScopedBackend scoped(kernels::Backend::kSerial);
    CHECK(kernels::GetBackend() == kernels::Backend::kSerial);
    kernels::Gemm(6, 4, 5, a.data(), false, b.data(), false, got.data(), false);
    CHECK(got == ref);
  }
  CHECK(kernels::GetBackend() == kernels::Backend::kParallel);
}

TEST_CASE("batched gemm equals per-batch gemm") {
  Rng rng = MakeRng(23);
  const std::size_t batch = 3, m = 5, k = 4, n = 6;
  const auto a = Random(batch * m * k, rng), b = Random(batch * k * n, rng);
  std::vector<double> c(batch * m * n), ref(batch * m * n);
  kernels::BatchedGemm(batch, m, k, n, a.data(), false, b.data(), true, c.data(), false);
  for (std::size_t i = 0; i < batch; ++i)
    kernels::GemmSerial(m, k, n, a.data() + i * m * k, false, b.data() + i * k * n, true,
                        ref.data() + i * m * n, false);
  CHECK(MaxAbsDiff(c, ref) < 1e-12);
}

TEST_CASE("softmax rows match the serial reference and sum to one") {
  Rng rng = MakeRng(24);
  const std::size_t rows = 300, cols = 13;
  auto x = Random(rows * cols, rng);
  x[0] = 800;  // stable under large inputs
  std::vector<double> y(rows * cols), ref(rows * cols);
  kernels::SoftmaxRows(rows, cols, x.data(), y.data());
  kernels::SoftmaxRowsSerial(rows, cols, x.data(), ref.data());
  CHECK(MaxAbsDiff(y, ref) < 1e-15);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < cols; ++c) s += y[r * cols + c];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-14));
  }
}

}  // TEST_SUITE
