#include <doctest.h>

#include <cmath>
#include <vector>

#include "glosslm/common.hpp"
#include "glosslm/kernels.hpp"
#include "glosslm/tensor.hpp"

using namespace glosslm;

namespace {

Tensor random_tensor(int rows, int cols, std::uint64_t seed) {
  Tensor t(rows, cols);
  Rng rng(seed);
  for (float& v : t.data) v = rng.next_uniform(-2.0f, 2.0f);
  return t;
}

// independent triple-loop reference in double
std::vector<double> naive_nn(const Tensor& a, const Tensor& b) {
  std::vector<double> c(static_cast<std::size_t>(a.rows) * b.cols, 0.0);
  for (int i = 0; i < a.rows; ++i)
    for (int p = 0; p < a.cols; ++p)
      for (int j = 0; j < b.cols; ++j)
        c[static_cast<std::size_t>(i) * b.cols + j] +=
            static_cast<double>(a.at(i, p)) * static_cast<double>(b.at(p, j));
  return c;
}

void check_close(const float* got, const std::vector<double>& want, double tol) {
  for (std::size_t i = 0; i < want.size(); ++i) {
    const double rel = std::abs(got[i] - want[i]) / std::max(1.0, std::abs(want[i]));
    REQUIRE(rel < tol);
  }
}

struct BackendGuard {
  ~BackendGuard() { kernels::set_backend("auto"); }
};

}  // namespace

TEST_SUITE("kernels") {

TEST_CASE("matmul_nn matches a hand-computed fixture") {
  const Tensor a = Tensor::from_rows(2, 3, {1, 2, 3, 4, 5, 6});
  const Tensor b = Tensor::from_rows(3, 1, {7, 8, 9});
  Tensor c(2, 1);
  kernels::active().matmul_nn(c.ptr(), a.ptr(), b.ptr(), 2, 3, 1);
  CHECK(c.at(0, 0) == doctest::Approx(50.0));
  CHECK(c.at(1, 0) == doctest::Approx(122.0));
}

TEST_CASE("matmul variants match the naive double reference") {
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    const Tensor a = random_tensor(5, 7, seed);
    const Tensor b = random_tensor(7, 9, seed + 10);
    Tensor c(5, 9);
    kernels::active().matmul_nn(c.ptr(), a.ptr(), b.ptr(), 5, 7, 9);
    check_close(c.ptr(), naive_nn(a, b), 1e-5);

    // a * b^T via matmul_nt equals naive a * transpose(b)
    const Tensor bt = random_tensor(9, 7, seed + 20);
    Tensor bt_t(7, 9);
    for (int r = 0; r < 9; ++r)
      for (int col = 0; col < 7; ++col) bt_t.at(col, r) = bt.at(r, col);
    Tensor c2(5, 9);
    kernels::active().matmul_nt(c2.ptr(), a.ptr(), bt.ptr(), 5, 7, 9);
    check_close(c2.ptr(), naive_nn(a, bt_t), 1e-5);

    // a^T * b via matmul_tn
    const Tensor b3 = random_tensor(5, 4, seed + 30);
    Tensor a_t(7, 5);
    for (int r = 0; r < 5; ++r)
      for (int col = 0; col < 7; ++col) a_t.at(col, r) = a.at(r, col);
    Tensor c3(7, 4);
    kernels::active().matmul_tn(c3.ptr(), a.ptr(), b3.ptr(), 5, 7, 4);
    check_close(c3.ptr(), naive_nn(a_t, b3), 1e-5);
  }
}

TEST_CASE("sum_sq matches a hand value") {
  const Tensor t = Tensor::from_rows(1, 4, {1, -2, 3, -4});
  CHECK(kernels::active().sum_sq(t.ptr(), 4) == doctest::Approx(30.0));
}

TEST_CASE("avx2 and scalar backends agree on every kernel") {
  if (kernels::avx2_backend() == nullptr || !kernels::cpu_has_avx2()) {
    MESSAGE("avx2 unavailable on this host; equivalence covered by the scalar path only");
    return;
  }
  const kernels::Backend& scalar = kernels::scalar_backend();
  const kernels::Backend& avx2 = *kernels::avx2_backend();

  // shapes straddling SIMD width boundaries, including tails
  const int dims[] = {1, 2, 3, 7, 8, 9, 16, 17};
  std::uint64_t seed = 99;
  for (int m : dims) {
    for (int k : dims) {
      for (int n : {3, 8, 13}) {
        const Tensor a = random_tensor(m, k, ++seed);
        const Tensor b_nn = random_tensor(k, n, ++seed);
        const Tensor b_nt = random_tensor(n, k, ++seed);
        const Tensor b_tn = random_tensor(m, n, ++seed);

        Tensor cs(m, n), cv(m, n);
        scalar.matmul_nn(cs.ptr(), a.ptr(), b_nn.ptr(), m, k, n);
        avx2.matmul_nn(cv.ptr(), a.ptr(), b_nn.ptr(), m, k, n);
        for (std::size_t i = 0; i < cs.size(); ++i)
          CHECK(cv.data[i] == doctest::Approx(cs.data[i]).epsilon(1e-6));

        scalar.matmul_nt(cs.ptr(), a.ptr(), b_nt.ptr(), m, k, n);
        avx2.matmul_nt(cv.ptr(), a.ptr(), b_nt.ptr(), m, k, n);
        for (std::size_t i = 0; i < cs.size(); ++i)
          CHECK(cv.data[i] == doctest::Approx(cs.data[i]).epsilon(1e-6));

        Tensor ts(k, n), tv(k, n);
        scalar.matmul_tn(ts.ptr(), a.ptr(), b_tn.ptr(), m, k, n);
        avx2.matmul_tn(tv.ptr(), a.ptr(), b_tn.ptr(), m, k, n);
        for (std::size_t i = 0; i < ts.size(); ++i)
          CHECK(tv.data[i] == doctest::Approx(ts.data[i]).epsilon(1e-6));
      }
    }
  }

  // elementwise kernels over an odd length
  const std::size_t n = 1003;
  const Tensor x = random_tensor(1, static_cast<int>(n), 7);
  const Tensor y = random_tensor(1, static_cast<int>(n), 8);
  Tensor outs(1, static_cast<int>(n)), outv(1, static_cast<int>(n));
  scalar.add(outs.ptr(), x.ptr(), y.ptr(), n);
  avx2.add(outv.ptr(), x.ptr(), y.ptr(), n);
  CHECK(outs.data == outv.data);
  scalar.mul(outs.ptr(), x.ptr(), y.ptr(), n);
  avx2.mul(outv.ptr(), x.ptr(), y.ptr(), n);
  CHECK(outs.data == outv.data);

  Tensor ys = y, yv = y;
  scalar.axpy(ys.ptr(), 0.37f, x.ptr(), n);
  avx2.axpy(yv.ptr(), 0.37f, x.ptr(), n);
  for (std::size_t i = 0; i < n; ++i)
    CHECK(yv.data[i] == doctest::Approx(ys.data[i]).epsilon(1e-6));

  Tensor xs = x, xv = x;
  scalar.scale(xs.ptr(), -1.7f, n);
  avx2.scale(xv.ptr(), -1.7f, n);
  CHECK(xs.data == xv.data);

  CHECK(avx2.sum_sq(x.ptr(), n) == doctest::Approx(scalar.sum_sq(x.ptr(), n)).epsilon(1e-12));
}

TEST_CASE("backend selection is explicit and validated") {
  BackendGuard guard;
  kernels::set_backend("scalar");
  CHECK(std::string(kernels::active().name) == "scalar");
  CHECK_THROWS_AS(kernels::set_backend("sse9"), DomainError);
  if (kernels::cpu_has_avx2() && kernels::avx2_backend() != nullptr) {
    kernels::set_backend("avx2");
    CHECK(std::string(kernels::active().name) == "avx2");
  }
  kernels::set_backend("auto");
}

}  // TEST_SUITE
