#pragma once

#include <algorithm>
#include <cmath>
#include <iostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stdiff/autodiff.hpp"
#include "stdiff/core.hpp"
#include "stdiff/gru.hpp"
#include "stdiff/params.hpp"

// Generation-quality metrics: a recurrent real-vs-synthetic classifier, a
// train-on-synthetic next-step predictor, a Frechet distance in a learned
// embedding space, and a pooled feature-correlation gap. Each stochastic
// metric reports mean and a 95% confidence interval over independently
// seeded trials.

namespace stdiff {

struct MetricsConfig {
  int iterations = 2000;  // classifier/predictor training iterations
  int batch = 128;
  Scalar lr = 1e-3;
  int trials = 5;
  Eigen::Index encoder_hidden = 16;
  Eigen::Index embed_dim = 8;
  int encoder_iterations = 300;
  int encoder_batch = 32;
};

struct MetricEntry {
  std::string name;
  Scalar mean = 0.0;
  Scalar ci95 = 0.0;
  int trials = 0;
  std::vector<Scalar> values;
};

inline MetricEntry summarize_trials(std::string name, std::vector<Scalar> values) {
  MetricEntry e;
  e.name = std::move(name);
  e.values = std::move(values);
  e.trials = static_cast<int>(e.values.size());
  for (Scalar v : e.values) e.mean += v;
  e.mean /= std::max(e.trials, 1);
  if (e.trials >= 2) {
    Scalar ss = 0.0;
    for (Scalar v : e.values) ss += (v - e.mean) * (v - e.mean);
    Scalar sd = std::sqrt(ss / (e.trials - 1));
    e.ci95 = 1.96 * sd / std::sqrt(static_cast<Scalar>(e.trials));
  }
  return e;
}

struct EvaluationReport {
  std::vector<MetricEntry> entries;
  nlohmann::json config;

  const MetricEntry& entry(const std::string& name) const {
    for (const auto& e : entries)
      if (e.name == name) return e;
    throw SpecError("EvaluationReport: unknown metric " + name);
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    for (const auto& e : entries)
      j[e.name] = {{"mean", e.mean}, {"ci95", e.ci95}, {"trials", e.trials}};
    if (!config.is_null()) j["config"] = config;
    return j;
  }

  std::string to_text() const {
    std::size_t width = 6;
    for (const auto& e : entries) width = std::max(width, e.name.size());
    std::string out;
    for (const auto& e : entries) {
      char buf[96];
      std::snprintf(buf, sizeof(buf), "%-*s  %.6f +- %.6f  (%d trials)\n",
                    static_cast<int>(width), e.name.c_str(), e.mean, e.ci95,
                    e.trials);
      out += buf;
    }
    return out;
  }
};

// ---- Frechet distance ----

// Sample covariance (n-1 denominator), zero for a single row.
inline Matrix sample_covariance(const Matrix& x) {
  const Eigen::Index n = x.rows();
  if (n < 2) return Matrix::Zero(x.cols(), x.cols());
  Matrix centered = x.rowwise() - x.colwise().mean();
  return centered.transpose() * centered / static_cast<Scalar>(n - 1);
}

// Symmetric square root of a positive-semidefinite matrix; negative
// eigenvalues from numerical noise are clamped at zero.
inline Matrix sqrtm_psd(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (a + a.transpose()));
  Vector d = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

inline Scalar frechet_distance(const Matrix& emb_a, const Matrix& emb_b) {
  if (emb_a.cols() != emb_b.cols())
    throw SpecError("frechet_distance: embedding width mismatch");
  if (emb_a.rows() < 2 || emb_b.rows() < 2)
    throw SpecError("frechet_distance: need at least 2 embeddings per set");
  RowVector mu_a = emb_a.colwise().mean();
  RowVector mu_b = emb_b.colwise().mean();
  Matrix ca = sample_covariance(emb_a);
  Matrix cb = sample_covariance(emb_b);
  Matrix root_a = sqrtm_psd(ca);
  Matrix inner = sqrtm_psd(root_a * cb * root_a);
  Scalar fid =
      (mu_a - mu_b).squaredNorm() + ca.trace() + cb.trace() - 2.0 * inner.trace();
  return std::max(fid, 0.0);
}

// ---- correlation score ----

// Pearson correlations of one window; a zero-variance feature contributes
// zeros (flagged once via warned).
inline Matrix window_correlation(const Matrix& w, bool& warned) {
  const Eigen::Index K = w.cols();
  Matrix centered = w.rowwise() - w.colwise().mean();
  RowVector sd = (centered.array().square().colwise().mean()).sqrt();
  Matrix corr = Matrix::Zero(K, K);
  for (Eigen::Index i = 0; i < K; ++i) {
    if (sd(i) < 1e-12) {
      if (!warned) {
        std::cerr << "warning: zero-variance feature in correlation score\n";
        warned = true;
      }
      continue;
    }
    for (Eigen::Index j = 0; j < K; ++j) {
      if (sd(j) < 1e-12) continue;
      corr(i, j) = centered.col(i).dot(centered.col(j)) /
                   (w.rows() * sd(i) * sd(j));
    }
  }
  return corr;
}

inline Matrix mean_correlation(const std::vector<Matrix>& windows) {
  if (windows.empty()) throw SpecError("correlation_score: empty corpus");
  bool warned = false;
  Matrix acc = Matrix::Zero(windows[0].cols(), windows[0].cols());
  for (const Matrix& w : windows) acc += window_correlation(w, warned);
  return acc / static_cast<Scalar>(windows.size());
}

inline Scalar correlation_score(const std::vector<Matrix>& real,
                                const std::vector<Matrix>& synth) {
  Matrix cr = mean_correlation(real);
  Matrix cs = mean_correlation(synth);
  if (cr.rows() != cs.rows())
    throw SpecError("correlation_score: channel count mismatch");
  return (cr - cs).cwiseAbs().sum() / static_cast<Scalar>(cr.size());
}

// ---- recurrent evaluators ----

namespace detail {

inline ad::Var softplus(const ad::Var& x) {
  using namespace ad;
  // max(x,0) + log(1 + exp(-|x|)), stable for large |x|.
  Var a = abs_(x);
  return add(scale(add(x, a), 0.5), log_(add_scalar(exp_(neg(a)), 1.0)));
}

inline void check_corpora(const std::vector<Matrix>& real,
                          const std::vector<Matrix>& synth,
                          std::size_t min_each) {
  if (real.size() < min_each || synth.size() < min_each)
    throw SpecError("metrics: too few windows");
  if (real[0].rows() != synth[0].rows() || real[0].cols() != synth[0].cols())
    throw SpecError("metrics: window shape mismatch");
}

}  // namespace detail

// One classifier trial: label real 1 / synthetic 0, 80/20 split, train a
// one-layer recurrent classifier with hidden size K, score |accuracy - 0.5|.
inline Scalar discriminative_score_once(const std::vector<Matrix>& real,
                                        const std::vector<Matrix>& synth,
                                        const MetricsConfig& cfg,
                                        std::uint64_t seed) {
  detail::check_corpora(real, synth, 32);
  const Eigen::Index K = real[0].cols();
  Rng rng(seed);

  // Balance the classes: with unequal corpus sizes a majority-class
  // classifier would pin the score at |share - 0.5| regardless of quality.
  const std::size_t m = std::min(real.size(), synth.size());
  std::vector<const Matrix*> r_sub, s_sub;
  for (const Matrix& w : real) r_sub.push_back(&w);
  for (const Matrix& w : synth) s_sub.push_back(&w);
  std::shuffle(r_sub.begin(), r_sub.end(), rng);
  std::shuffle(s_sub.begin(), s_sub.end(), rng);

  std::vector<std::pair<const Matrix*, Scalar>> items;
  for (std::size_t i = 0; i < m; ++i) items.emplace_back(r_sub[i], 1.0);
  for (std::size_t i = 0; i < m; ++i) items.emplace_back(s_sub[i], 0.0);
  std::shuffle(items.begin(), items.end(), rng);
  const std::size_t n_train = items.size() * 8 / 10;
  const std::size_t n_test = items.size() - n_train;

  ParamStore store;
  GruCell cell("disc", K, K, store, rng);
  ad::Var w_out = store.add("disc.head.w",
                            rand_uniform(K, 1, rng) / std::sqrt(Scalar(K)));
  ad::Var b_out = store.add("disc.head.b", Matrix::Zero(1, 1));
  Adam opt(store, cfg.lr);

  std::uniform_int_distribution<std::size_t> pick(0, n_train - 1);
  const int batch = std::min<int>(cfg.batch, static_cast<int>(n_train));
  for (int iter = 0; iter < cfg.iterations; ++iter) {
    std::vector<const Matrix*> windows;
    Matrix y(batch, 1);
    for (int b = 0; b < batch; ++b) {
      const auto& [w, label] = items[pick(rng)];
      windows.push_back(w);
      y(b, 0) = label;
    }
    using namespace ad;
    Var h = cell.last_hidden(timestep_slices(windows));
    Var logit = add_rowvec(matmul(h, w_out), b_out);
    Var yv = constant(y);
    Var loss = mean_all(sub(detail::softplus(logit), mul(yv, logit)));
    store.zero_grad();
    backward(loss);
    opt.step();
  }

  ad::NoGradGuard guard;
  std::vector<const Matrix*> test;
  for (std::size_t i = n_train; i < items.size(); ++i)
    test.push_back(items[i].first);
  Matrix logit =
      ad::add_rowvec(ad::matmul(cell.last_hidden(timestep_slices(test)), w_out),
                     b_out)
          ->value;
  int correct = 0;
  for (std::size_t i = 0; i < n_test; ++i) {
    bool pred_real = logit(static_cast<Eigen::Index>(i), 0) > 0.0;
    if (pred_real == (items[n_train + i].second > 0.5)) ++correct;
  }
  Scalar acc = static_cast<Scalar>(correct) / static_cast<Scalar>(n_test);
  return std::abs(acc - 0.5);
}

// One predictor trial: train a next-step predictor on synthetic windows
// (features 1..K-1 predicting the last feature; single feature autoregressed
// when K = 1), report mean absolute error on the real windows.
inline Scalar predictive_score_once(const std::vector<Matrix>& real,
                                    const std::vector<Matrix>& synth,
                                    const MetricsConfig& cfg,
                                    std::uint64_t seed) {
  detail::check_corpora(real, synth, 2);
  const Eigen::Index L = real[0].rows();
  const Eigen::Index K = real[0].cols();
  if (L < 2) throw SpecError("predictive_score: window length < 2");
  const Eigen::Index in_dim = K > 1 ? K - 1 : 1;
  const Eigen::Index target = K > 1 ? K - 1 : 0;
  const Eigen::Index hidden = std::max<Eigen::Index>(1, K - 1);
  Rng rng(seed);

  ParamStore store;
  GruCell cell("pred", in_dim, hidden, store, rng);
  ad::Var w_out = store.add(
      "pred.head.w", rand_uniform(hidden, 1, rng) / std::sqrt(Scalar(hidden)));
  ad::Var b_out = store.add("pred.head.b", Matrix::Zero(1, 1));
  Adam opt(store, cfg.lr);

  auto run_mae = [&](const std::vector<const Matrix*>& windows) {
    using namespace ad;
    const Eigen::Index B = static_cast<Eigen::Index>(windows.size());
    Var h = constant(Matrix::Zero(B, hidden));
    Var total = constant(0.0);
    for (Eigen::Index t = 0; t + 1 < L; ++t) {
      Matrix x_t(B, in_dim);
      Matrix y_t(B, 1);
      for (Eigen::Index b = 0; b < B; ++b) {
        x_t.row(b) = windows[b]->row(t).head(in_dim);
        y_t(b, 0) = (*windows[b])(t + 1, target);
      }
      h = cell.step(constant(x_t), h);
      Var pred = sigmoid(add_rowvec(matmul(h, w_out), b_out));
      total = add(total, sum_all(abs_(sub(pred, constant(y_t)))));
    }
    return scale(total, 1.0 / static_cast<Scalar>(B * (L - 1)));
  };

  std::uniform_int_distribution<std::size_t> pick(0, synth.size() - 1);
  const int batch = std::min<int>(cfg.batch, static_cast<int>(synth.size()));
  for (int iter = 0; iter < cfg.iterations; ++iter) {
    std::vector<const Matrix*> windows;
    for (int b = 0; b < batch; ++b) windows.push_back(&synth[pick(rng)]);
    ad::Var loss = run_mae(windows);
    store.zero_grad();
    ad::backward(loss);
    opt.step();
  }

  ad::NoGradGuard guard;
  std::vector<const Matrix*> eval;
  for (const Matrix& w : real) eval.push_back(&w);
  return run_mae(eval)->value(0, 0);
}

// ---- context embedding ----

class ContextEncoder {
 public:
  ContextEncoder(Eigen::Index K, const MetricsConfig& cfg, std::uint64_t seed)
      : rng_(seed), cell_("enc", K, cfg.encoder_hidden, store_, rng_) {
    w_ = store_.add("enc.head.w",
                    rand_uniform(cfg.encoder_hidden, cfg.embed_dim, rng_) /
                        std::sqrt(Scalar(cfg.encoder_hidden)));
    b_ = store_.add("enc.head.b", Matrix::Zero(1, cfg.embed_dim));
  }

  Eigen::Index embed_dim() const { return w_->value.cols(); }
  ParamStore& store() { return store_; }

  ad::Var embed_batch(const std::vector<const Matrix*>& windows) const {
    return ad::add_rowvec(
        ad::matmul(cell_.last_hidden(timestep_slices(windows)), w_), b_);
  }

  Matrix embed(const std::vector<Matrix>& windows) const {
    ad::NoGradGuard guard;
    std::vector<const Matrix*> ptrs;
    for (const Matrix& w : windows) ptrs.push_back(&w);
    return embed_batch(ptrs)->value;
  }

 private:
  Rng rng_;
  ParamStore store_;
  GruCell cell_;
  ad::Var w_, b_;
};

// Contrastive training: two random crops of the same window are a positive
// pair, the rest of the batch are negatives.
inline ContextEncoder train_context_encoder(const std::vector<Matrix>& real,
                                            const MetricsConfig& cfg,
                                            std::uint64_t seed) {
  if (real.size() < 64)
    throw SpecError("train_context_encoder: corpus too small (need >= 64)");
  const Eigen::Index L = real[0].rows();
  const Eigen::Index K = real[0].cols();
  const Eigen::Index crop = std::max<Eigen::Index>(2, 3 * L / 4);
  ContextEncoder enc(K, cfg, seed);
  Rng rng(seed + 1);
  Adam opt(enc.store(), cfg.lr);

  std::uniform_int_distribution<std::size_t> pick(0, real.size() - 1);
  std::uniform_int_distribution<Eigen::Index> start(0, L - crop);
  const Eigen::Index B = std::min<Eigen::Index>(
      cfg.encoder_batch, static_cast<Eigen::Index>(real.size()));
  for (int iter = 0; iter < cfg.encoder_iterations; ++iter) {
    std::vector<Matrix> crops_a, crops_b;
    for (Eigen::Index i = 0; i < B; ++i) {
      const Matrix& w = real[pick(rng)];
      crops_a.push_back(w.middleRows(start(rng), crop));
      crops_b.push_back(w.middleRows(start(rng), crop));
    }
    std::vector<const Matrix*> pa, pb;
    for (const Matrix& m : crops_a) pa.push_back(&m);
    for (const Matrix& m : crops_b) pb.push_back(&m);

    using namespace ad;
    Var ea = enc.embed_batch(pa);
    Var eb = enc.embed_batch(pb);
    Var sim = scale(matmul(ea, transpose(eb)),
                    1.0 / std::sqrt(Scalar(enc.embed_dim())));
    // InfoNCE with the matched crop on the diagonal; row max is a constant
    // shift, so the gradient is still the softmax residual.
    Matrix shift = sim->value.rowwise().maxCoeff();
    Var shifted = sub(sim, constant(Matrix(shift.replicate(1, B))));
    Var lse = add(log_(matmul(exp_(shifted), constant(Matrix::Ones(B, 1)))),
                  constant(shift));
    Var diag = sum_all(mul(sim, constant(Matrix::Identity(B, B))));
    Var loss = scale(sub(sum_all(lse), diag), 1.0 / static_cast<Scalar>(B));
    enc.store().zero_grad();
    backward(loss);
    opt.step();
  }
  return enc;
}

inline Scalar context_fid(const std::vector<Matrix>& real,
                          const std::vector<Matrix>& synth,
                          const ContextEncoder& encoder) {
  detail::check_corpora(real, synth, 2);
  return frechet_distance(encoder.embed(real), encoder.embed(synth));
}

// ---- trial orchestration ----

inline MetricEntry discriminative_score(const std::vector<Matrix>& real,
                                        const std::vector<Matrix>& synth,
                                        int trials, const MetricsConfig& cfg,
                                        std::uint64_t seed) {
  std::vector<Scalar> values;
  for (int t = 0; t < trials; ++t)
    values.push_back(discriminative_score_once(real, synth, cfg, seed + t));
  return summarize_trials("discriminative", std::move(values));
}

inline MetricEntry predictive_score(const std::vector<Matrix>& real,
                                    const std::vector<Matrix>& synth,
                                    int trials, const MetricsConfig& cfg,
                                    std::uint64_t seed) {
  std::vector<Scalar> values;
  for (int t = 0; t < trials; ++t)
    values.push_back(predictive_score_once(real, synth, cfg, seed + t));
  return summarize_trials("predictive", std::move(values));
}

// Runs all four metrics. The embedding and correlation scores are
// deterministic given the encoder, so they carry a single trial and a zero
// interval; the recurrent metrics are retrained per trial.
inline EvaluationReport evaluate_all(const std::vector<Matrix>& real,
                                     const std::vector<Matrix>& synth,
                                     const MetricsConfig& cfg,
                                     std::uint64_t seed,
                                     const ContextEncoder* encoder = nullptr) {
  EvaluationReport report;
  report.entries.push_back(
      discriminative_score(real, synth, cfg.trials, cfg, seed));
  report.entries.push_back(
      predictive_score(real, synth, cfg.trials, cfg, seed + 1000));
  Scalar fid;
  if (encoder) {
    fid = context_fid(real, synth, *encoder);
  } else {
    ContextEncoder trained = train_context_encoder(real, cfg, seed + 2000);
    fid = context_fid(real, synth, trained);
  }
  report.entries.push_back(summarize_trials("context_fid", {fid}));
  report.entries.push_back(
      summarize_trials("correlational", {correlation_score(real, synth)}));
  report.config = {{"trials", cfg.trials},
                   {"iterations", cfg.iterations},
                   {"batch", cfg.batch},
                   {"lr", cfg.lr},
                   {"seed", seed}};
  return report;
}

}  // namespace stdiff
