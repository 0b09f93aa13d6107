#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "stdiff/core.hpp"

// Noise schedule, closed-form forward process, and the iterative reverse
// sampler. Steps are 1-based: s in [1, S], with alpha_bar(0) defined as 1.

namespace stdiff {

enum class ScheduleKind { linear, cosine };
enum class SigmaMode { posterior, beta_sqrt };

struct NoiseSchedule {
  int steps = 0;
  Vector beta;       // beta_s, index s-1
  Vector alpha;      // 1 - beta_s
  Vector alpha_bar;  // prod_{u<=s} alpha_u
  Vector sigma;

  Scalar abar(int s) const {  // alpha_bar with abar(0) == 1
    return s == 0 ? 1.0 : alpha_bar(s - 1);
  }
};

inline NoiseSchedule build_schedule(int S, ScheduleKind kind = ScheduleKind::linear,
                                    Scalar beta_start = 1e-4,
                                    Scalar beta_end = 0.02,
                                    SigmaMode sigma_mode = SigmaMode::posterior) {
  if (S < 1) throw SpecError("build_schedule: S must be >= 1");
  NoiseSchedule sch;
  sch.steps = S;
  sch.beta.resize(S);
  if (kind == ScheduleKind::linear) {
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
      throw SpecError("build_schedule: require 0 < beta_start <= beta_end < 1");
    for (int s = 0; s < S; ++s)
      sch.beta(s) = S == 1 ? beta_start
                           : beta_start + (beta_end - beta_start) * s / (S - 1);
  } else {
    // Cosine schedule of Nichol & Dhariwal, expressed through alpha_bar.
    auto f = [S](Scalar s) {
      Scalar v = std::cos((s / S + 0.008) / 1.008 * M_PI / 2.0);
      return v * v;
    };
    for (int s = 1; s <= S; ++s) {
      Scalar b = 1.0 - f(static_cast<Scalar>(s)) / f(static_cast<Scalar>(s - 1));
      sch.beta(s - 1) = std::min(std::max(b, 1e-8), 0.999);
    }
  }
  sch.alpha = 1.0 - sch.beta.array();
  sch.alpha_bar.resize(S);
  Scalar prod = 1.0;
  for (int s = 0; s < S; ++s) {
    prod *= sch.alpha(s);
    sch.alpha_bar(s) = prod;
  }
  sch.sigma.resize(S);
  for (int s = 1; s <= S; ++s) {
    if (sigma_mode == SigmaMode::posterior) {
      Scalar var = sch.beta(s - 1) * (1.0 - sch.abar(s - 1)) /
                   (1.0 - sch.abar(s));
      sch.sigma(s - 1) = std::sqrt(var);
    } else {
      sch.sigma(s - 1) = std::sqrt(sch.beta(s - 1));
    }
  }
  return sch;
}

struct LatentState {
  Matrix x;  // L x K (one window)
  int step = 0;
};

inline LatentState forward_diffuse(const Matrix& x0, int s, const Matrix& eps,
                                   const NoiseSchedule& sch) {
  if (s < 1 || s > sch.steps) throw SpecError("forward_diffuse: step out of range");
  if (eps.rows() != x0.rows() || eps.cols() != x0.cols())
    throw SpecError("forward_diffuse: noise shape mismatch");
  Scalar ab = sch.abar(s);
  return {std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps, s};
}

inline LatentState reverse_step(const LatentState& state, const Matrix& eps_hat,
                                const Matrix& z, const NoiseSchedule& sch) {
  const int s = state.step;
  if (s < 1 || s > sch.steps) throw SpecError("reverse_step: step out of range");
  if (eps_hat.rows() != state.x.rows() || eps_hat.cols() != state.x.cols())
    throw SpecError("reverse_step: predicted-noise shape mismatch");
  Scalar a = sch.alpha(s - 1);
  Scalar b = sch.beta(s - 1);
  Scalar ab = sch.abar(s);
  Matrix mean = (state.x - (b / std::sqrt(1.0 - ab)) * eps_hat) / std::sqrt(a);
  if (s == 1) return {std::move(mean), 0};
  if (z.rows() != state.x.rows() || z.cols() != state.x.cols())
    throw SpecError("reverse_step: z shape mismatch");
  return {mean + sch.sigma(s - 1) * z, s - 1};
}

// Runs the full reverse loop for n windows of shape L x K. The denoiser maps
// (x_s, s) to predicted noise of the same shape.
using DenoiseFn = std::function<Matrix(const Matrix&, int)>;

inline std::vector<Matrix> sample(const DenoiseFn& denoiser, int n,
                                  Eigen::Index L, Eigen::Index K,
                                  const NoiseSchedule& sch, std::uint64_t seed) {
  std::vector<Matrix> out;
  out.reserve(static_cast<std::size_t>(std::max(n, 0)));
  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    LatentState state{randn(L, K, rng), sch.steps};
    for (int s = sch.steps; s >= 1; --s) {
      Matrix eps_hat = denoiser(state.x, s);
      if (eps_hat.rows() != L || eps_hat.cols() != K)
        throw SpecError("sample: denoiser output shape mismatch");
      Matrix z = s > 1 ? randn(L, K, rng) : Matrix::Zero(L, K);
      state = reverse_step(state, eps_hat, z, sch);
    }
    out.push_back(std::move(state.x));
  }
  return out;
}

}  // namespace stdiff
