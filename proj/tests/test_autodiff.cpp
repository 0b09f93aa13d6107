#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "stdiff/autodiff.hpp"
#include "test_util.hpp"

using namespace stdiff;
using namespace stdiff::ad;

namespace {

// Finite-difference check for a graph builder that consumes one parameter.
void check_op(const std::function<Var(const Var&)>& build, Eigen::Index rows,
              Eigen::Index cols, Scalar tol = 1e-6) {
  Rng rng(7);
  Var p = param(rand_uniform(rows, cols, rng, 0.2, 1.5));
  auto loss = [&] {
    NoGradGuard g;
    return sum_all(square(build(p)))->value(0, 0);
  };
  p->grad.setZero(rows, cols);
  backward(sum_all(square(build(p))));
  Matrix fd = testutil::fd_grad(p, loss, 1e-5);
  CHECK(testutil::rel_error(p->grad, fd) < tol);
}

}  // namespace

TEST_CASE("elementwise ops match finite differences") {
  Rng rng(3);
  Matrix other = rand_uniform(4, 3, rng, 0.3, 1.2);
  check_op([&](const Var& p) { return add(p, constant(other)); }, 4, 3);
  check_op([&](const Var& p) { return sub(constant(other), p); }, 4, 3);
  check_op([&](const Var& p) { return mul(p, constant(other)); }, 4, 3);
  check_op([&](const Var& p) { return div(constant(other), p); }, 4, 3);
  check_op([&](const Var& p) { return div(p, constant(other)); }, 4, 3);
  check_op([&](const Var& p) { return tanh_(p); }, 4, 3);
  check_op([&](const Var& p) { return sigmoid(p); }, 4, 3);
  check_op([&](const Var& p) { return silu(p); }, 4, 3);
  check_op([&](const Var& p) { return exp_(p); }, 4, 3);
  check_op([&](const Var& p) { return sqrt_(p); }, 4, 3);
  check_op([&](const Var& p) { return abs_(p); }, 4, 3);
  check_op([&](const Var& p) { return add_scalar(scale(p, 1.7), -0.3); }, 4, 3);
}

TEST_CASE("matmul and transpose match finite differences") {
  Rng rng(5);
  Matrix other = rand_uniform(3, 5, rng);
  check_op([&](const Var& p) { return matmul(p, constant(other)); }, 4, 3);
  check_op([&](const Var& p) { return matmul(constant(other.transpose()), p); },
           3, 4);
  check_op([&](const Var& p) { return transpose(p); }, 4, 3);
}

TEST_CASE("broadcast and reduction ops match finite differences") {
  Rng rng(11);
  Matrix big = rand_uniform(6, 3, rng, 0.5, 1.5);
  Matrix row = rand_uniform(1, 3, rng, 0.5, 1.5);
  check_op([&](const Var& p) { return add_rowvec(constant(big), p); }, 1, 3);
  check_op([&](const Var& p) { return mul_rowvec(constant(big), p); }, 1, 3);
  check_op([&](const Var& p) { return div_rowvec(constant(big), p); }, 1, 3);
  check_op([&](const Var& p) { return mul_rowvec(p, constant(row)); }, 6, 3);
  check_op([&](const Var& p) { return div_rowvec(p, constant(row)); }, 6, 3);
  check_op([&](const Var& p) { return col_mean(p); }, 6, 3);
  check_op([&](const Var& p) { return mean_all(p); }, 6, 3);
  check_op([&](const Var& p) { return repeat_rows(p, 5); }, 1, 3);
}

TEST_CASE("structural ops match finite differences") {
  check_op([&](const Var& p) { return slice_cols(p, 1, 2); }, 4, 4);
  check_op([&](const Var& p) { return slice_rows(p, 0, 2); }, 4, 4);
  check_op([&](const Var& p) { return concat_cols(p, slice_cols(p, 0, 1)); },
           4, 3);
  check_op(
      [&](const Var& p) {
        return stack_flatten({p, scale(p, 2.0)});
      },
      3, 2);
  check_op([&](const Var& p) { return col_as_matrix(p, 1, 2, 3); }, 6, 2);
}

TEST_CASE("softmax rows: distribution property and gradient") {
  Rng rng(13);
  Var p = param(rand_uniform(5, 4, rng, -2.0, 2.0));
  Var sm = softmax_rows(p);
  for (Eigen::Index i = 0; i < 5; ++i)
    CHECK(sm->value.row(i).sum() == doctest::Approx(1.0).epsilon(1e-9));
  check_op([&](const Var& q) { return softmax_rows(q); }, 5, 4);
}

TEST_CASE("shared subexpressions accumulate gradients once per use") {
  Var p = param(Matrix::Constant(1, 1, 2.0));
  Var y = mul(p, p);              // p^2
  Var z = add(y, y);              // 2 p^2
  backward(sum_all(z));
  CHECK(p->grad(0, 0) == doctest::Approx(8.0));  // d/dp 2p^2 = 4p
}

TEST_CASE("NoGradGuard suppresses graph recording") {
  Var p = param(Matrix::Constant(2, 2, 1.0));
  NoGradGuard guard;
  Var y = mul(p, p);
  CHECK_FALSE(y->requires_grad);
}

TEST_CASE("backward requires a scalar root") {
  Var p = param(Matrix::Ones(2, 2));
  CHECK_THROWS_AS(backward(mul(p, p)), SpecError);
}
