#pragma once

#include <cmath>
#include <iostream>
#include <vector>

#include "stdiff/autodiff.hpp"
#include "stdiff/core.hpp"
#include "stdiff/params.hpp"

// Learnable Moving Average: a softmax-weighted mixture of causal moving
// averages with a learnable per-channel affine on the trend. The seasonal
// component is the input minus the pre-affine weighted average, which makes
// decompose/restore an exact algebraic roundtrip.

namespace stdiff {

// Causal moving-average operator as an L x L matrix; positions before the
// kernel fills use left-edge replication padding.
inline Matrix moving_average_matrix(Eigen::Index L, int l) {
  if (l < 1 || l > L) throw SpecError("moving_average: kernel exceeds length");
  Matrix m = Matrix::Zero(L, L);
  Scalar inv = 1.0 / static_cast<Scalar>(l);
  for (Eigen::Index t = 0; t < L; ++t)
    for (int i = 0; i < l; ++i) m(t, std::max<Eigen::Index>(t - i, 0)) += inv;
  return m;
}

inline Matrix moving_average(const Matrix& x, int l) {
  return moving_average_matrix(x.rows(), l) * x;
}

struct LmaConfig {
  std::vector<int> kernels{1, 2, 4, 6, 12};
  int hidden = 16;
  bool global_weights = false;
  bool enabled = true;  // ablation: false -> fixed single kernel of size 3
};

struct LmaDecomposition {
  ad::Var trend;      // post-affine
  ad::Var seasonal;   // input minus pre-affine weighted average
  ad::Var raw_trend;  // pre-affine weighted average
  ad::Var weights;    // (L*K or 1) x n_kernels, rows sum to 1
};

class Lma {
 public:
  Lma(const LmaConfig& cfg, Eigen::Index L, Eigen::Index K, ParamStore& store,
      Rng& rng)
      : cfg_(cfg), L_(L), K_(K) {
    if (cfg_.enabled) {
      for (int l : cfg_.kernels) {
        if (l > L) {
          std::cerr << "warning: dropping LMA kernel " << l
                    << " larger than window length " << L << "\n";
          continue;
        }
        kernels_.push_back(l);
        ma_mats_.push_back(ad::constant(moving_average_matrix(L, l)));
      }
      if (kernels_.empty()) throw SpecError("Lma: no usable kernels");
      const int n = static_cast<int>(kernels_.size());
      const int h = cfg_.hidden;
      Scalar s1 = 1.0 / std::sqrt(static_cast<Scalar>(n));
      Scalar s2 = 1.0 / std::sqrt(static_cast<Scalar>(h));
      w1_ = store.add("lma.weight_net.w1", rand_uniform(n, h, rng) * s1);
      b1_ = store.add("lma.weight_net.b1", Matrix::Zero(1, h));
      w2_ = store.add("lma.weight_net.w2", rand_uniform(h, n, rng) * s2);
      b2_ = store.add("lma.weight_net.b2", Matrix::Zero(1, n));
      // gamma = gamma_floor + exp(g); g = log(1 - floor) gives gamma = 1.
      log_gamma_ = store.add("lma.log_gamma",
                             Matrix::Constant(1, K, std::log(1.0 - kGammaFloor)));
      beta_ = store.add("lma.beta", Matrix::Zero(1, K));
    } else {
      kernels_ = {3};
      ma_mats_.push_back(ad::constant(
          moving_average_matrix(L, std::min<Eigen::Index>(3, L))));
    }
  }

  static constexpr Scalar kGammaFloor = 1e-4;

  const std::vector<int>& kernels() const { return kernels_; }

  ad::Var gamma() const {
    return ad::add_scalar(ad::exp_(log_gamma_), kGammaFloor);
  }
  ad::Var beta() const { return beta_; }

  // Force the affine to exact (gamma, beta); used by tests and inspection.
  void set_affine(const RowVector& gamma, const RowVector& beta) {
    for (Eigen::Index k = 0; k < K_; ++k) {
      if (gamma(k) <= kGammaFloor)
        throw SpecError("Lma: gamma below parameterization floor");
      log_gamma_->value(0, k) = std::log(gamma(k) - kGammaFloor);
    }
    beta_->value.row(0) = beta;
  }

  LmaDecomposition decompose(const ad::Var& x) const {
    using namespace ad;
    if (!cfg_.enabled) {
      // Fixed kernel-3 moving average, identity affine.
      Var raw = matmul(ma_mats_[0], x);
      LmaDecomposition r;
      r.raw_trend = raw;
      r.trend = raw;
      r.seasonal = sub(x, raw);
      r.weights = constant(Matrix::Ones(1, 1));
      return r;
    }
    const int n = static_cast<int>(kernels_.size());
    std::vector<Var> mas;
    mas.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
      mas.push_back(matmul(ma_mats_[static_cast<std::size_t>(i)], x));
    Var stacked = stack_flatten(mas);  // (L*K) x n
    Var net_in = cfg_.global_weights ? col_mean(stacked) : stacked;
    Var hidden = silu(add_rowvec(matmul(net_in, w1_), b1_));
    Var logits = add_rowvec(matmul(hidden, w2_), b2_);
    Var weights = softmax_rows(logits);
    Var broadcast = cfg_.global_weights
                        ? repeat_rows(weights, stacked->value.rows())
                        : weights;
    Var raw = constant(Matrix::Zero(L_, K_));
    for (int i = 0; i < n; ++i)
      raw = add(raw, mul(col_as_matrix(broadcast, i, L_, K_),
                         mas[static_cast<std::size_t>(i)]));
    LmaDecomposition r;
    r.raw_trend = raw;
    r.trend = add_rowvec(mul_rowvec(raw, gamma()), beta_);
    r.seasonal = sub(x, raw);
    r.weights = weights;
    return r;
  }

  ad::Var restore(const ad::Var& trend_cr, const ad::Var& seasonal_cr) const {
    using namespace ad;
    if (!cfg_.enabled) return add(trend_cr, seasonal_cr);
    Var unbiased = add_rowvec(trend_cr, scale(beta_, -1.0));
    return add(div_rowvec(unbiased, gamma()), seasonal_cr);
  }

 private:
  LmaConfig cfg_;
  Eigen::Index L_, K_;
  std::vector<int> kernels_;
  std::vector<ad::Var> ma_mats_;
  ad::Var w1_, b1_, w2_, b2_;
  ad::Var log_gamma_, beta_;
};

}  // namespace stdiff
