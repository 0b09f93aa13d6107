#pragma once

#include <cmath>
#include <vector>

#include "stdiff/autodiff.hpp"
#include "stdiff/core.hpp"
#include "stdiff/params.hpp"

// TLBlock: reversible instance normalization wrapped around a stack of
// residual perceptron layers, with the diffusion step injected as a per-layer
// additive bias.

namespace stdiff {

inline constexpr Scalar kRevinEps = 1e-5;

struct RevinState {
  RowVector mean;
  RowVector std;       // epsilon-floored
  RowVector scale;     // learnable affine applied after standardization
  RowVector shift;
};

// Plain (non-differentiable) RevIN pair; the model path composes the same
// computation from autodiff primitives.
inline Matrix revin_normalize(const Matrix& x, RevinState& state,
                              const RowVector& scale, const RowVector& shift) {
  state.mean = x.colwise().mean();
  Matrix xc = x.rowwise() - Eigen::RowVectorXd(state.mean);
  RowVector var = xc.array().square().colwise().mean();
  state.std = (var.array() + kRevinEps).sqrt();
  state.scale = scale;
  state.shift = shift;
  Matrix xn = xc.array().rowwise() /
              Eigen::Array<Scalar, 1, Eigen::Dynamic>(state.std.array());
  return (xn.array().rowwise() *
          Eigen::Array<Scalar, 1, Eigen::Dynamic>(scale.array()))
             .matrix()
             .rowwise() +
         Eigen::RowVectorXd(shift);
}

inline Matrix revin_normalize(const Matrix& x, RevinState& state) {
  return revin_normalize(x, state, RowVector::Ones(x.cols()),
                         RowVector::Zero(x.cols()));
}

inline Matrix revin_denormalize(const Matrix& y, const RevinState& state) {
  if (y.cols() != state.mean.size())
    throw SpecError("revin_denormalize: shape mismatch with captured state");
  Matrix xn = (y.rowwise() - Eigen::RowVectorXd(state.shift)).array().rowwise() /
              Eigen::Array<Scalar, 1, Eigen::Dynamic>(state.scale.array());
  return (xn.array().rowwise() *
          Eigen::Array<Scalar, 1, Eigen::Dynamic>(state.std.array()))
             .matrix()
             .rowwise() +
         Eigen::RowVectorXd(state.mean);
}

struct TrendConfig {
  int layers = 2;
  int hidden_mult = 2;
};

class TrendBlock {
 public:
  TrendBlock(const TrendConfig& cfg, Eigen::Index d, ParamStore& store,
             Rng& rng)
      : cfg_(cfg), d_(d) {
    revin_scale_ = store.add("trend.revin.scale", Matrix::Ones(1, d));
    revin_shift_ = store.add("trend.revin.shift", Matrix::Zero(1, d));
    const Eigen::Index h = d * cfg.hidden_mult;
    Scalar s1 = 1.0 / std::sqrt(static_cast<Scalar>(d));
    Scalar s2 = 1.0 / std::sqrt(static_cast<Scalar>(h));
    for (int l = 0; l < cfg.layers; ++l) {
      std::string p = "trend.layer" + std::to_string(l) + ".";
      Layer layer;
      layer.w1 = store.add(p + "w1", rand_uniform(d, h, rng) * s1);
      layer.b1 = store.add(p + "b1", Matrix::Zero(1, h));
      // Zero-initialized branch output: the block starts as the identity.
      layer.w2 = store.add(p + "w2", Matrix::Zero(h, d));
      layer.b2 = store.add(p + "b2", Matrix::Zero(1, d));
      layer.wc = store.add(p + "cond_w", rand_uniform(d, d, rng) * s1 * 0.1);
      layer.bc = store.add(p + "cond_b", Matrix::Zero(1, d));
      layers_.push_back(layer);
    }
  }

  // trend: L x d, cond: 1 x d step embedding.
  ad::Var forward(const ad::Var& trend, const ad::Var& cond) const {
    using namespace ad;
    if (trend->value.cols() != d_) throw SpecError("TrendBlock: width mismatch");
    Var mu = col_mean(trend);
    Var xc = add_rowvec(trend, scale(mu, -1.0));
    Var stdv = sqrt_(add_scalar(col_mean(square(xc)), kRevinEps));
    Var y = add_rowvec(mul_rowvec(div_rowvec(xc, stdv), revin_scale_),
                       revin_shift_);
    for (const auto& layer : layers_) {
      Var bias = add_rowvec(matmul(cond, layer.wc), layer.bc);
      Var in = add(y, repeat_rows(bias, y->value.rows()));
      Var hid = silu(add_rowvec(matmul(in, layer.w1), layer.b1));
      Var branch = add_rowvec(matmul(hid, layer.w2), layer.b2);
      y = add(y, branch);
    }
    Var xn = div_rowvec(add_rowvec(y, scale(revin_shift_, -1.0)), revin_scale_);
    return add_rowvec(mul_rowvec(xn, stdv), mu);
  }

 private:
  struct Layer {
    ad::Var w1, b1, w2, b2, wc, bc;
  };
  TrendConfig cfg_;
  Eigen::Index d_;
  ad::Var revin_scale_, revin_shift_;
  std::vector<Layer> layers_;
};

}  // namespace stdiff
