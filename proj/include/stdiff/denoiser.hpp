#pragma once

#include <cmath>
#include <memory>
#include <vector>

#include "stdiff/autodiff.hpp"
#include "stdiff/core.hpp"
#include "stdiff/correction.hpp"
#include "stdiff/data.hpp"
#include "stdiff/lma.hpp"
#include "stdiff/params.hpp"
#include "stdiff/schedule.hpp"
#include "stdiff/seasonal_block.hpp"
#include "stdiff/trend_block.hpp"

// The trainable network: LMA decomposition, parallel trend/seasonal blocks,
// cross-component correction, and LMA restoration, producing a denoised
// estimate of the clean window. Training minimizes either the x0 or the
// noise-matching form of the objective plus the wavelet orthonormality
// penalty.

namespace stdiff {

enum class Parameterization { predict_x0, predict_eps };

struct DenoiserConfig {
  Eigen::Index L = 24;
  Eigen::Index K = 1;
  Eigen::Index width = 16;  // model width d
  Parameterization parameterization = Parameterization::predict_x0;
  LmaConfig lma;
  TrendConfig trend;
  SeasonalConfig seasonal;
  CorrectionConfig correction;
};

struct TrainState {
  long step = 0;
  std::vector<Scalar> denoise_loss;
  std::vector<Scalar> reg_loss;
  std::uint64_t seed = 0;
};

// Sinusoidal embedding of the diffusion step, base 10000.
inline Matrix step_embedding(int s, Eigen::Index dim) {
  Matrix e(1, dim);
  for (Eigen::Index i = 0; i < dim; ++i) {
    Scalar freq = std::pow(10000.0, -static_cast<Scalar>(2 * (i / 2)) /
                                        static_cast<Scalar>(dim));
    e(0, i) = (i % 2 == 0) ? std::sin(s * freq) : std::cos(s * freq);
  }
  return e;
}

class Denoiser {
 public:
  Denoiser(const DenoiserConfig& cfg, std::uint64_t init_seed)
      : cfg_(cfg), rng_(init_seed) {
    const Eigen::Index d = cfg.width, K = cfg.K;
    Scalar sk = 1.0 / std::sqrt(static_cast<Scalar>(K));
    enc_trend_w_ = store_.add("encode.trend.w", rand_uniform(K, d, rng_) * sk);
    enc_trend_b_ = store_.add("encode.trend.b", Matrix::Zero(1, d));
    enc_seasonal_w_ = store_.add("encode.seasonal.w", rand_uniform(K, d, rng_) * sk);
    enc_seasonal_b_ = store_.add("encode.seasonal.b", Matrix::Zero(1, d));
    lma_ = std::make_unique<Lma>(cfg.lma, cfg.L, K, store_, rng_);
    trend_ = std::make_unique<TrendBlock>(cfg.trend, d, store_, rng_);
    seasonal_ = std::make_unique<SeasonalBlock>(cfg.seasonal, cfg.L, d, store_, rng_);
    correction_ = std::make_unique<Correction>(cfg.correction, d, K, store_, rng_);
  }

  const DenoiserConfig& config() const { return cfg_; }
  ParamStore& store() { return store_; }
  const ParamStore& store() const { return store_; }
  Lma& lma() { return *lma_; }
  SeasonalBlock& seasonal() { return *seasonal_; }

  ad::Var forward(const Matrix& x_s, int s) const {
    using namespace ad;
    if (x_s.rows() != cfg_.L || x_s.cols() != cfg_.K)
      throw SpecError("Denoiser: input shape mismatch");
    Var x = constant(x_s);
    auto dec = lma_->decompose(x);
    Var cond = constant(step_embedding(s, cfg_.width));
    Var t_enc = add_rowvec(matmul(dec.trend, enc_trend_w_), enc_trend_b_);
    Var s_enc = add_rowvec(matmul(dec.seasonal, enc_seasonal_w_), enc_seasonal_b_);
    Var t_hat = trend_->forward(t_enc, cond);
    Var s_hat = seasonal_->forward(s_enc, cond);
    auto [t_cr, s_cr] = correction_->cross_correct(t_hat, s_hat);
    Var t_dec = correction_->decode_trend(t_cr);
    Var s_dec = correction_->decode_seasonal(s_cr);
    return lma_->restore(t_dec, s_dec);
  }

  Matrix forward_value(const Matrix& x_s, int s) const {
    ad::NoGradGuard guard;
    return forward(x_s, s)->value;
  }

  // Algebraic inverse of the forward-diffusion line.
  static Matrix eps_from_x0(const Matrix& x0_hat, const Matrix& x_s, int s,
                            const NoiseSchedule& sch) {
    if (s < 1 || s > sch.steps) throw SpecError("eps_from_x0: step out of range");
    Scalar ab = sch.abar(s);
    return (x_s - std::sqrt(ab) * x0_hat) / std::sqrt(1.0 - ab);
  }

  static ad::Var eps_from_x0(const ad::Var& x0_hat, const Matrix& x_s, int s,
                             const NoiseSchedule& sch) {
    using namespace ad;
    if (s < 1 || s > sch.steps) throw SpecError("eps_from_x0: step out of range");
    Scalar ab = sch.abar(s);
    Var num = sub(constant(x_s), scale(x0_hat, std::sqrt(ab)));
    return scale(num, 1.0 / std::sqrt(1.0 - ab));
  }

  // Noise-prediction closure for the reverse sampler.
  DenoiseFn as_denoise_fn(const NoiseSchedule& sch) const {
    return [this, &sch](const Matrix& x, int s) {
      return eps_from_x0(forward_value(x, s), x, s, sch);
    };
  }

  // One stochastic training objective evaluation over a batch of windows.
  // Exposed with explicit (s, eps) draws so gradient checks can fix them.
  ad::Var loss_for(const std::vector<const Matrix*>& windows,
                   const std::vector<int>& steps,
                   const std::vector<Matrix>& noises,
                   const NoiseSchedule& sch) const {
    using namespace ad;
    if (windows.empty()) throw SpecError("training_loss: empty batch");
    Var total = constant(0.0);
    for (std::size_t i = 0; i < windows.size(); ++i) {
      const Matrix& x0 = *windows[i];
      const int s = steps[i];
      Matrix x_s = forward_diffuse(x0, s, noises[i], sch).x;
      Var x0_hat = forward(x_s, s);
      Var term;
      if (cfg_.parameterization == Parameterization::predict_x0) {
        term = mse(x0_hat, constant(x0));
      } else {
        Var eps_hat = eps_from_x0(x0_hat, x_s, s, sch);
        term = mse(eps_hat, constant(noises[i]));
      }
      total = add(total, term);
    }
    total = scale(total, 1.0 / static_cast<Scalar>(windows.size()));
    if (seasonal_->learnable() && cfg_.seasonal.reg_weight > 0.0)
      total = add(total, scale(seasonal_->regularizer(), cfg_.seasonal.reg_weight));
    return total;
  }

  ad::Var training_loss(const std::vector<const Matrix*>& windows,
                        const NoiseSchedule& sch, Rng& rng) const {
    std::uniform_int_distribution<int> step_dist(1, sch.steps);
    std::vector<int> steps;
    std::vector<Matrix> noises;
    for (std::size_t i = 0; i < windows.size(); ++i) {
      steps.push_back(step_dist(rng));
      noises.push_back(randn(cfg_.L, cfg_.K, rng));
    }
    return loss_for(windows, steps, noises, sch);
  }

  TrainState train(const SeriesBatch& dataset, const NoiseSchedule& sch,
                   int epochs, int batch_size, Scalar lr, std::uint64_t seed,
                   const std::function<void(int, Scalar)>& on_epoch = {}) {
    if (dataset.windows.empty()) throw SpecError("train: empty dataset");
    TrainState state;
    state.seed = seed;
    Rng rng(seed);
    Adam opt(store_, lr);
    std::vector<std::size_t> order(dataset.windows.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (int epoch = 0; epoch < epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), rng);
      Scalar epoch_loss = 0.0;
      int batches = 0;
      for (std::size_t start = 0; start < order.size();
           start += static_cast<std::size_t>(batch_size)) {
        std::vector<const Matrix*> batch;
        for (std::size_t i = start;
             i < std::min(order.size(), start + static_cast<std::size_t>(batch_size));
             ++i)
          batch.push_back(&dataset.windows[order[i]]);
        store_.zero_grad();
        ad::Var loss = training_loss(batch, sch, rng);
        Scalar lv = loss->value(0, 0);
        if (!std::isfinite(lv))
          throw SpecError("train: divergence detected (non-finite loss)");
        ad::backward(loss);
        opt.step();
        epoch_loss += lv;
        ++batches;
        ++state.step;
      }
      epoch_loss /= std::max(batches, 1);
      state.denoise_loss.push_back(epoch_loss);
      if (seasonal_->learnable()) {
        ad::NoGradGuard guard;
        state.reg_loss.push_back(seasonal_->regularizer()->value(0, 0));
      }
      if (on_epoch) on_epoch(epoch, epoch_loss);
    }
    return state;
  }

 private:
  DenoiserConfig cfg_;
  Rng rng_;
  ParamStore store_;
  ad::Var enc_trend_w_, enc_trend_b_, enc_seasonal_w_, enc_seasonal_b_;
  std::unique_ptr<Lma> lma_;
  std::unique_ptr<TrendBlock> trend_;
  std::unique_ptr<SeasonalBlock> seasonal_;
  std::unique_ptr<Correction> correction_;
};

}  // namespace stdiff
