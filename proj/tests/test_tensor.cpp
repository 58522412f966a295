#include "doctest.h"

#include <cmath>
#include <limits>

#include "mga/kernels.hpp"
#include "mga/tensor.hpp"
#include "support.hpp"

using namespace mga;

TEST_CASE("tensor shapes and accessors") {
  const Tensor m = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  CHECK(m.rows() == 2);
  CHECK(m.cols() == 3);
  CHECK(m(1, 2) == 6);
  CHECK(shape_string(m.shape()) == "[2x3]");

  const Tensor v(Shape{4}, 1.5);
  CHECK(v.rows() == 1);
  CHECK(v.cols() == 4);

  const Tensor s(Shape{}, 2.0);
  CHECK(s.size() == 1);
  CHECK(s.rows() == 1);
  CHECK(s.cols() == 1);

  const Tensor eye = Tensor::identity(3);
  CHECK(eye(0, 0) == 1);
  CHECK(eye(0, 1) == 0);
}

TEST_CASE("tensor rejects mismatched data and flags non-finite values") {
  CHECK_THROWS_AS(Tensor(Shape{2, 2}, std::vector<double>{1, 2, 3}), InvalidInput);
  CHECK_THROWS_AS(Tensor::matrix(2, 2, {1, 2, 3}), InvalidInput);
  Tensor t(Shape{3}, 0.0);
  CHECK(t.all_finite());
  t[1] = std::numeric_limits<double>::quiet_NaN();
  CHECK_FALSE(t.all_finite());
}

TEST_CASE("gemm matches a hand product") {
  const double a[] = {1, 2, 3, 4, 5, 6};       // 2x3
  const double b[] = {7, 8, 9, 10, 11, 12};    // 3x2
  double c[4] = {};
  kernels::gemm(a, b, c, 2, 3, 2, false);
  CHECK(c[0] == 58);
  CHECK(c[1] == 64);
  CHECK(c[2] == 139);
  CHECK(c[3] == 154);
  kernels::gemm(a, b, c, 2, 3, 2, true);
  CHECK(c[0] == 116);
}

TEST_CASE("transposed gemm variants agree with explicit transposes") {
  const Tensor a = test::random_tensor({5, 4}, 1);
  const Tensor b = test::random_tensor({5, 3}, 2);
  const Tensor d = test::random_tensor({3, 4}, 3);

  Tensor at(Shape{4, 5});
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 4; ++j) at(j, i) = a(i, j);
  Tensor dt(Shape{4, 3});
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) dt(j, i) = d(i, j);

  Tensor x(Shape{4, 3}), y(Shape{4, 3});
  kernels::serial::gemm_at_b(a.data().data(), b.data().data(), x.data().data(), 4, 5, 3, false);
  kernels::serial::gemm(at.data().data(), b.data().data(), y.data().data(), 4, 5, 3, false);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(x[i] == doctest::Approx(y[i]).epsilon(1e-12));

  Tensor p(Shape{5, 3}), q(Shape{5, 3});
  kernels::serial::gemm_a_bt(a.data().data(), d.data().data(), p.data().data(), 5, 4, 3, false);
  kernels::serial::gemm(a.data().data(), dt.data().data(), q.data().data(), 5, 4, 3, false);
  for (std::size_t i = 0; i < p.size(); ++i) CHECK(p[i] == doctest::Approx(q[i]).epsilon(1e-12));
}

TEST_CASE("parallel kernels are bitwise identical to the serial reference") {
  // Large enough to cross the parallel threshold.
  const std::size_t m = 67, k = 45, n = 53;
  const Tensor a = test::random_tensor({m, k}, 11);
  const Tensor b = test::random_tensor({k, n}, 12);
  const Tensor at = test::random_tensor({k, m}, 13);
  const Tensor bt = test::random_tensor({n, k}, 14);
  REQUIRE(m * k * n > kernels::kParallelThreshold);

  Tensor c0(Shape{m, n}, 0.5), c1(Shape{m, n}, 0.5);
  kernels::serial::gemm(a.data().data(), b.data().data(), c0.data().data(), m, k, n, true);
  kernels::gemm(a.data().data(), b.data().data(), c1.data().data(), m, k, n, true);
  CHECK(c0 == c1);

  kernels::serial::gemm_at_b(at.data().data(), b.data().data(), c0.data().data(), m, k, n, false);
  kernels::gemm_at_b(at.data().data(), b.data().data(), c1.data().data(), m, k, n, false);
  CHECK(c0 == c1);

  kernels::serial::gemm_a_bt(a.data().data(), bt.data().data(), c0.data().data(), m, k, n, false);
  kernels::gemm_a_bt(a.data().data(), bt.data().data(), c1.data().data(), m, k, n, false);
  CHECK(c0 == c1);

  Tensor s0(Shape{m, k}), s1(Shape{m, k});
  kernels::serial::softmax_rows(a.data().data(), s0.data().data(), m, k);
  kernels::softmax_rows(a.data().data(), s1.data().data(), m, k);
  CHECK(s0 == s1);
}

TEST_CASE("softmax rows sum to one and survive large logits") {
  const double in[] = {1000.0, 1001.0, 999.0, -5.0, 0.0, 5.0};
  double out[6];
  kernels::softmax_rows(in, out, 2, 3);
  for (int r = 0; r < 2; ++r) {
    double s = 0.0;
    for (int c = 0; c < 3; ++c) {
      CHECK(std::isfinite(out[r * 3 + c]));
      s += out[r * 3 + c];
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-14));
  }
  CHECK(out[1] > out[0]);
}
