#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "stdiff/attention.hpp"
#include "stdiff/autodiff.hpp"
#include "stdiff/core.hpp"
#include "stdiff/params.hpp"
#include "stdiff/wavelet.hpp"

// SLBlock: learnable wavelet analysis of the seasonal encoding, independent
// self-attention over the coefficients of each level, and synthesis with the
// same low-pass filter. The high-pass filter is re-derived from the low-pass
// one on every forward pass.

namespace stdiff {

struct SeasonalConfig {
  int levels = -1;  // -1: auto (largest J with L/2^J divisible and >= filter)
  bool learnable = true;  // ablation: false freezes the filter at db3
  int heads = 1;
  int dk = 0;  // 0: model width / heads
  Scalar reg_weight = 0.1;
};

inline int auto_wavelet_levels(Eigen::Index L, Eigen::Index filter_len = 6) {
  int J = 0;
  while (L % 2 == 0 && L / 2 >= filter_len) {
    L /= 2;
    ++J;
  }
  return J;
}

class SeasonalBlock {
 public:
  SeasonalBlock(const SeasonalConfig& cfg, Eigen::Index L, Eigen::Index d,
                ParamStore& store, Rng& rng)
      : cfg_(cfg), L_(L), d_(d) {
    levels_ = cfg.levels >= 0 ? cfg.levels : auto_wavelet_levels(L);
    Eigen::Index len = L;
    for (int j = 0; j < levels_; ++j) {
      if (len % 2 != 0)
        throw SpecError("SeasonalBlock: L not divisible by 2^levels");
      len /= 2;
    }
    Matrix db3 = db3_lowpass();
    h_ = cfg.learnable ? store.add("seasonal.h", db3) : ad::constant(db3);
    const Eigen::Index dk = cfg.dk > 0 ? cfg.dk : d / cfg.heads;
    Scalar sd = 1.0 / std::sqrt(static_cast<Scalar>(d));
    for (int i = 0; i <= levels_; ++i) {
      std::string p = "seasonal.level" + std::to_string(i) + ".";
      Level lvl;
      lvl.wq = store.add(p + "wq", rand_uniform(d, dk * cfg.heads, rng) * sd);
      lvl.wk = store.add(p + "wk", rand_uniform(d, dk * cfg.heads, rng) * sd);
      lvl.wv = store.add(p + "wv", rand_uniform(d, d, rng) * sd);
      lvl.wc = store.add(p + "cond_w", rand_uniform(d, d, rng) * sd * 0.1);
      lvl.bc = store.add(p + "cond_b", Matrix::Zero(1, d));
      levels_params_.push_back(lvl);
    }
  }

  int levels() const { return levels_; }
  ad::Var lowpass() const { return h_; }
  bool learnable() const { return cfg_.learnable; }

  ad::Var regularizer() const { return wavelet_ad::regularizer(h_); }

  // seasonal: L x d, cond: 1 x d step embedding.
  ad::Var forward(const ad::Var& seasonal, const ad::Var& cond) const {
    using namespace ad;
    if (seasonal->value.cols() != d_)
      throw SpecError("SeasonalBlock: width mismatch");
    Var g = wavelet_ad::qmf_highpass(h_);

    // Analysis: details d_1..d_J plus final approximation.
    std::vector<Var> details;
    Var approx = seasonal;
    for (int j = 0; j < levels_; ++j) {
      details.push_back(wavelet_ad::dwt_filter(approx, g));
      approx = wavelet_ad::dwt_filter(approx, h_);
    }

    // Frequency learning: per-level self-attention, step bias on the input.
    auto learn = [&](const Var& coeff, const Level& lvl) {
      Var bias = add_rowvec(matmul(cond, lvl.wc), lvl.bc);
      Var x = add(coeff, repeat_rows(bias, coeff->value.rows()));
      return scaled_dot_attention(matmul(x, lvl.wq), matmul(x, lvl.wk),
                                  matmul(x, lvl.wv), cfg_.heads);
    };
    for (int j = 0; j < levels_; ++j)
      details[static_cast<std::size_t>(j)] =
          learn(details[static_cast<std::size_t>(j)],
                levels_params_[static_cast<std::size_t>(j)]);
    approx = learn(approx, levels_params_[static_cast<std::size_t>(levels_)]);

    // Synthesis with the shared low-pass filter.
    for (int j = levels_ - 1; j >= 0; --j)
      approx = add(wavelet_ad::idwt_filter(approx, h_),
                   wavelet_ad::idwt_filter(details[static_cast<std::size_t>(j)], g));
    return approx;
  }

 private:
  struct Level {
    ad::Var wq, wk, wv, wc, bc;
  };
  SeasonalConfig cfg_;
  Eigen::Index L_, d_;
  int levels_ = 0;
  ad::Var h_;
  std::vector<Level> levels_params_;
};

}  // namespace stdiff
