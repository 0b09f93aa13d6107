#pragma once

#include <cmath>
#include <utility>

#include "stdiff/attention.hpp"
#include "stdiff/autodiff.hpp"
#include "stdiff/core.hpp"
#include "stdiff/params.hpp"

// Seasonal-Trend Correction: each component is projected to double width and
// chunked into an input stream and a conditional stream; the trend input
// attends over the seasonal conditional and vice versa. Also owns the output
// projections decoding width d back to the K data channels.

namespace stdiff {

struct CorrectionConfig {
  int dk = 0;  // 0: model width
  bool residual = false;
  bool enabled = true;
};

class Correction {
 public:
  Correction(const CorrectionConfig& cfg, Eigen::Index d, Eigen::Index K,
             ParamStore& store, Rng& rng)
      : cfg_(cfg), d_(d) {
    Scalar sd = 1.0 / std::sqrt(static_cast<Scalar>(d));
    if (cfg.enabled) {
      const Eigen::Index dk = cfg.dk > 0 ? cfg.dk : d;
      chunk_trend_w_ = store.add("correction.chunk_t.w", rand_uniform(d, 2 * d, rng) * sd);
      chunk_trend_b_ = store.add("correction.chunk_t.b", Matrix::Zero(1, 2 * d));
      chunk_seasonal_w_ = store.add("correction.chunk_s.w", rand_uniform(d, 2 * d, rng) * sd);
      chunk_seasonal_b_ = store.add("correction.chunk_s.b", Matrix::Zero(1, 2 * d));
      for (int dir = 0; dir < 2; ++dir) {
        std::string p = dir == 0 ? "correction.trend_query." : "correction.seasonal_query.";
        dirs_[dir].wq = store.add(p + "wq", rand_uniform(d, dk, rng) * sd);
        dirs_[dir].wk = store.add(p + "wk", rand_uniform(d, dk, rng) * sd);
        dirs_[dir].wv = store.add(p + "wv", rand_uniform(d, d, rng) * sd);
      }
    }
    decode_trend_w_ = store.add("decode.trend.w", rand_uniform(d, K, rng) * sd);
    decode_trend_b_ = store.add("decode.trend.b", Matrix::Zero(1, K));
    decode_seasonal_w_ = store.add("decode.seasonal.w", rand_uniform(d, K, rng) * sd);
    decode_seasonal_b_ = store.add("decode.seasonal.b", Matrix::Zero(1, K));
  }

  std::pair<ad::Var, ad::Var> chunk_project(const ad::Var& component,
                                            const ad::Var& w,
                                            const ad::Var& b) const {
    using namespace ad;
    Var proj = add_rowvec(matmul(component, w), b);
    return {slice_cols(proj, 0, d_), slice_cols(proj, d_, d_)};
  }

  // Returns (trend_cr, seasonal_cr), both L x d.
  std::pair<ad::Var, ad::Var> cross_correct(const ad::Var& trend_pred,
                                            const ad::Var& seasonal_pred) const {
    using namespace ad;
    if (!cfg_.enabled) return {trend_pred, seasonal_pred};
    auto [t_in, t_cnd] = chunk_project(trend_pred, chunk_trend_w_, chunk_trend_b_);
    auto [s_in, s_cnd] = chunk_project(seasonal_pred, chunk_seasonal_w_, chunk_seasonal_b_);
    Var t_cr = scaled_dot_attention(matmul(t_in, dirs_[0].wq),
                                    matmul(s_cnd, dirs_[0].wk),
                                    matmul(s_cnd, dirs_[0].wv));
    Var s_cr = scaled_dot_attention(matmul(s_in, dirs_[1].wq),
                                    matmul(t_cnd, dirs_[1].wk),
                                    matmul(t_cnd, dirs_[1].wv));
    if (cfg_.residual) {
      t_cr = add(t_cr, t_in);
      s_cr = add(s_cr, s_in);
    }
    return {t_cr, s_cr};
  }

  ad::Var decode_trend(const ad::Var& x) const {
    return ad::add_rowvec(ad::matmul(x, decode_trend_w_), decode_trend_b_);
  }
  ad::Var decode_seasonal(const ad::Var& x) const {
    return ad::add_rowvec(ad::matmul(x, decode_seasonal_w_), decode_seasonal_b_);
  }

  bool enabled() const { return cfg_.enabled; }

 private:
  struct Direction {
    ad::Var wq, wk, wv;
  };
  CorrectionConfig cfg_;
  Eigen::Index d_;
  ad::Var chunk_trend_w_, chunk_trend_b_, chunk_seasonal_w_, chunk_seasonal_b_;
  Direction dirs_[2];
  ad::Var decode_trend_w_, decode_trend_b_, decode_seasonal_w_, decode_seasonal_b_;
};

}  // namespace stdiff
