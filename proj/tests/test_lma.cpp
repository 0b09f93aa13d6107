#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "stdiff/lma.hpp"
#include "test_util.hpp"

using namespace stdiff;

namespace {

// Zero the weight net so the softmax is uniform, or pin it to one kernel.
void zero_weight_net(ParamStore& store) {
  store.get("lma.weight_net.w1")->value.setZero();
  store.get("lma.weight_net.b1")->value.setZero();
  store.get("lma.weight_net.w2")->value.setZero();
  store.get("lma.weight_net.b2")->value.setZero();
}

void force_kernel(ParamStore& store, int index) {
  zero_weight_net(store);
  store.get("lma.weight_net.b2")->value(0, index) = 200.0;
}

}  // namespace

TEST_CASE("moving_average: identity, constants, hand example") {
  Matrix x(4, 1);
  x << 1, 2, 3, 4;
  CHECK((moving_average(x, 1) - x).cwiseAbs().maxCoeff() < 1e-14);

  Matrix c = Matrix::Constant(10, 2, 5.0);
  for (int l : {1, 2, 4, 6})
    CHECK((moving_average(c, l).array() - 5.0).abs().maxCoeff() < 1e-14);

  Matrix ma2 = moving_average(x, 2);
  Matrix expected(4, 1);
  expected << 1.0, 1.5, 2.5, 3.5;  // left edge replicated
  CHECK((ma2 - expected).cwiseAbs().maxCoeff() < 1e-14);

  CHECK_THROWS_AS(moving_average(x, 5), SpecError);
}

TEST_CASE("moving_average shift-equivariance away from the padded edge") {
  Rng rng(4);
  Matrix x = randn(30, 1, rng);
  Matrix shifted(30, 1);
  shifted(0, 0) = x(0, 0);
  shifted.bottomRows(29) = x.topRows(29);
  for (int l : {2, 4, 6}) {
    Matrix ma = moving_average(x, l);
    Matrix ma_s = moving_average(shifted, l);
    for (Eigen::Index t = l; t < 30; ++t)
      CHECK(ma_s(t, 0) == doctest::Approx(ma(t - 1, 0)).epsilon(1e-12));
  }
}

TEST_CASE("decompose: one-hot kernel-1 gives trend = input") {
  ParamStore store;
  Rng rng(1);
  LmaConfig cfg;
  Lma lma(cfg, 24, 2, store, rng);
  force_kernel(store, 0);
  lma.set_affine(RowVector::Ones(2), RowVector::Zero(2));
  Matrix x = randn(24, 2, rng);
  auto r = lma.decompose(ad::constant(x));
  CHECK((r.trend->value - x).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(r.seasonal->value.cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("decompose: constant input has zero seasonal") {
  ParamStore store;
  Rng rng(2);
  LmaConfig cfg;
  Lma lma(cfg, 24, 1, store, rng);
  lma.set_affine(RowVector::Constant(1, 2.0), RowVector::Constant(1, 0.5));
  Matrix c = Matrix::Constant(24, 1, 3.0);
  auto r = lma.decompose(ad::constant(c));
  CHECK(r.seasonal->value.cwiseAbs().maxCoeff() < 1e-9);
  CHECK((r.trend->value.array() - (2.0 * 3.0 + 0.5)).abs().maxCoeff() < 1e-9);
}

TEST_CASE("decompose: hand example, uniform weights over kernels {1,2}") {
  ParamStore store;
  Rng rng(3);
  LmaConfig cfg;
  cfg.kernels = {1, 2};
  Lma lma(cfg, 4, 1, store, rng);
  zero_weight_net(store);
  lma.set_affine(RowVector::Ones(1), RowVector::Zero(1));
  Matrix x(4, 1);
  x << 1, 2, 3, 4;
  auto r = lma.decompose(ad::constant(x));
  Matrix raw(4, 1), seas(4, 1);
  raw << 1.0, 1.75, 2.75, 3.75;
  seas << 0.0, 0.25, 0.25, 0.25;
  CHECK((r.raw_trend->value - raw).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((r.seasonal->value - seas).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("kernel weights form a distribution at every position") {
  ParamStore store;
  Rng rng(5);
  LmaConfig cfg;
  Lma lma(cfg, 24, 3, store, rng);
  Matrix x = randn(24, 3, rng);
  auto r = lma.decompose(ad::constant(x));
  const Matrix& w = r.weights->value;
  CHECK(w.rows() == 24 * 3);
  CHECK(w.cols() == 5);
  CHECK(w.minCoeff() >= 0.0);
  for (Eigen::Index i = 0; i < w.rows(); ++i)
    CHECK(w.row(i).sum() == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("restore inverts decompose for random parameters") {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    ParamStore store;
    LmaConfig cfg;
    cfg.global_weights = trial % 2 == 1;
    Lma lma(cfg, 24, 2, store, rng);
    // Random but valid affine and weight net.
    lma.set_affine(RowVector::Constant(2, 0.3 + trial * 0.2),
                   rand_uniform(1, 2, rng));
    Matrix x = randn(24, 2, rng);
    auto r = lma.decompose(ad::constant(x));
    ad::Var rec = lma.restore(r.trend, r.seasonal);
    CHECK((rec->value - x).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("restore: arithmetic example and gamma floor") {
  ParamStore store;
  Rng rng(7);
  Lma lma(LmaConfig{}, 4, 1, store, rng);
  lma.set_affine(RowVector::Constant(1, 2.0), RowVector::Constant(1, 1.0));
  ad::Var t = ad::constant(Matrix::Constant(4, 1, 3.0));
  ad::Var s = ad::constant(Matrix::Constant(4, 1, 0.5));
  CHECK(lma.restore(t, s)->value(0, 0) == doctest::Approx(1.5));

  // Affine at the parameterization floor stays finite.
  store.get("lma.log_gamma")->value.setConstant(-1e4);
  Matrix out = lma.restore(t, s)->value;
  CHECK(out.allFinite());
  CHECK_THROWS_AS(lma.set_affine(RowVector::Constant(1, 1e-5), RowVector::Zero(1)),
                  SpecError);
}

TEST_CASE("kernels larger than L are dropped") {
  ParamStore store;
  Rng rng(8);
  Lma lma(LmaConfig{}, 8, 1, store, rng);  // 12 > 8 dropped
  CHECK(lma.kernels() == std::vector<int>{1, 2, 4, 6});
}

TEST_CASE("disabled LMA uses a fixed kernel-3 average") {
  ParamStore store;
  Rng rng(9);
  LmaConfig cfg;
  cfg.enabled = false;
  Lma lma(cfg, 12, 2, store, rng);
  CHECK(store.items.empty());
  Matrix x = randn(12, 2, rng);
  auto r = lma.decompose(ad::constant(x));
  CHECK((r.raw_trend->value - moving_average(x, 3)).cwiseAbs().maxCoeff() < 1e-12);
  ad::Var rec = lma.restore(r.trend, r.seasonal);
  CHECK((rec->value - x).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("decompose/restore gradients match finite differences") {
  ParamStore store;
  Rng rng(10);
  Lma lma(LmaConfig{}, 8, 2, store, rng);
  Matrix x = randn(8, 2, rng);
  auto build = [&] {
    auto r = lma.decompose(ad::constant(x));
    // A loss touching both components and the affine path.
    return ad::sum_all(ad::square(
        ad::add(lma.restore(r.trend, r.seasonal), ad::mul(r.trend, r.seasonal))));
  };
  for (const auto& [name, p] : store.items) {
    store.zero_grad();
    ad::backward(build());
    Matrix analytic = p->grad;
    Matrix fd = testutil::fd_grad(p, [&] {
      ad::NoGradGuard guard;
      return build()->value(0, 0);
    });
    INFO(name);
    CHECK(testutil::rel_error(analytic, fd) < 1e-4);
  }
}
