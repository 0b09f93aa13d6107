#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "stdiff/denoiser.hpp"
#include "stdiff/seasonal_block.hpp"
#include "test_util.hpp"

using namespace stdiff;

namespace {

// Pin every per-level attention to the identity: value projection becomes the
// identity matrix and the step-conditioning path is silenced. On length-1
// coefficient sequences the softmax is then a no-op and the block reduces to
// analysis followed by synthesis.
void make_attention_identity(ParamStore& store, int levels, Eigen::Index d) {
  for (int i = 0; i <= levels; ++i) {
    std::string p = "seasonal.level" + std::to_string(i) + ".";
    store.get(p + "wv")->value = Matrix::Identity(d, d);
    store.get(p + "cond_w")->value.setZero();
    store.get(p + "cond_b")->value.setZero();
  }
}

}  // namespace

TEST_CASE("auto level selection") {
  CHECK(auto_wavelet_levels(24) == 2);   // 24 -> 12 -> 6
  CHECK(auto_wavelet_levels(48) == 3);   // 48 -> 24 -> 12 -> 6
  CHECK(auto_wavelet_levels(8) == 0);    // 8/2 = 4 < filter length
  CHECK(auto_wavelet_levels(10) == 0);
}

TEST_CASE("freq attention: length-1 sequence returns its value projection") {
  ParamStore store;
  Rng rng(1);
  SeasonalConfig cfg;
  cfg.levels = 1;
  SeasonalBlock block(cfg, 2, 3, store, rng);  // L=2 -> level lengths 1,1
  make_attention_identity(store, 1, 3);
  Matrix x = randn(2, 3, rng);
  ad::Var out = block.forward(ad::constant(x), ad::constant(step_embedding(1, 3)));
  // analysis + identity + synthesis = perfect reconstruction
  CHECK((out->value - x).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("attention rows sum to one") {
  Rng rng(2);
  ad::Var q = ad::constant(randn(5, 4, rng));
  ad::Var k = ad::constant(randn(5, 4, rng));
  ad::Var scores =
      ad::scale(ad::matmul(q, ad::transpose(k)), 1.0 / std::sqrt(4.0));
  Matrix a = ad::softmax_rows(scores)->value;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    CHECK(a.row(i).sum() == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("attention matches a brute-force reference") {
  // 3 tokens, 2 channels, identity projections.
  Matrix x(3, 2);
  x << 0.2, -0.4, 1.0, 0.3, -0.7, 0.5;
  ad::Var xv = ad::constant(x);
  Matrix out = scaled_dot_attention(xv, xv, xv)->value;

  Matrix scores = x * x.transpose() / std::sqrt(2.0);
  Matrix ref(3, 2);
  for (int i = 0; i < 3; ++i) {
    Eigen::RowVector3d w = scores.row(i).array().exp();
    w /= w.sum();
    ref.row(i) = w * x;
  }
  CHECK((out - ref).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("multi-head attention preserves shape and differs from single head") {
  Rng rng(3);
  ad::Var q = ad::constant(randn(6, 4, rng));
  ad::Var k = ad::constant(randn(6, 4, rng));
  ad::Var v = ad::constant(randn(6, 4, rng));
  Matrix one = scaled_dot_attention(q, k, v, 1)->value;
  Matrix two = scaled_dot_attention(q, k, v, 2)->value;
  CHECK(one.rows() == 6);
  CHECK(two.rows() == 6);
  CHECK(two.cols() == 4);
  CHECK((one - two).cwiseAbs().maxCoeff() > 1e-8);
  CHECK_THROWS_AS(scaled_dot_attention(q, k, v, 3), SpecError);
}

TEST_CASE("slblock identity composition at db3 with identity attention") {
  ParamStore store;
  Rng rng(4);
  SeasonalConfig cfg;
  cfg.levels = 1;
  SeasonalBlock block(cfg, 2, 4, store, rng);
  make_attention_identity(store, 1, 4);
  Matrix x = randn(2, 4, rng);
  ad::Var out = block.forward(ad::constant(x), ad::constant(step_embedding(9, 4)));
  CHECK((out->value - x).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("slblock output shape equals input shape for valid level counts") {
  Rng rng(5);
  for (int J : {0, 1, 2}) {
    ParamStore store;
    SeasonalConfig cfg;
    cfg.levels = J;
    SeasonalBlock block(cfg, 24, 4, store, rng);
    Matrix x = randn(24, 4, rng);
    ad::Var out =
        block.forward(ad::constant(x), ad::constant(step_embedding(2, 4)));
    CHECK(out->value.rows() == 24);
    CHECK(out->value.cols() == 4);
  }
}

TEST_CASE("frozen filter is not trainable and matches db3") {
  ParamStore store;
  Rng rng(6);
  SeasonalConfig cfg;
  cfg.levels = 1;
  cfg.learnable = false;
  SeasonalBlock block(cfg, 24, 4, store, rng);
  CHECK_FALSE(block.lowpass()->requires_grad);
  CHECK((block.lowpass()->value - Matrix(db3_lowpass())).cwiseAbs().maxCoeff() <
        1e-15);
  for (const auto& [name, p] : store.items) CHECK(name != "seasonal.h");
}

TEST_CASE("shared filter: analysis and synthesis use one parameter object") {
  ParamStore store;
  Rng rng(7);
  SeasonalConfig cfg;
  cfg.levels = 2;
  SeasonalBlock block(cfg, 24, 4, store, rng);
  CHECK(block.lowpass().get() == store.get("seasonal.h").get());
  // Perturbing the shared filter changes reconstruction (both stages see it).
  Matrix x = randn(24, 4, rng);
  ad::Var cond = ad::constant(step_embedding(1, 4));
  Matrix before = block.forward(ad::constant(x), cond)->value;
  store.get("seasonal.h")->value(0, 0) += 0.05;
  Matrix after = block.forward(ad::constant(x), cond)->value;
  CHECK((before - after).cwiseAbs().maxCoeff() > 1e-8);
}

TEST_CASE("slblock gradients match finite differences on a tiny instance") {
  ParamStore store;
  Rng rng(8);
  SeasonalConfig cfg;
  cfg.levels = 1;
  SeasonalBlock block(cfg, 8, 3, store, rng);
  Matrix x = randn(8, 3, rng);
  Matrix target = randn(8, 3, rng);
  auto build = [&] {
    ad::Var out =
        block.forward(ad::constant(x), ad::constant(step_embedding(4, 3)));
    return ad::add(ad::mse(out, ad::constant(target)),
                   ad::scale(block.regularizer(), 0.1));
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
