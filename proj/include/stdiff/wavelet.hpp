#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "stdiff/autodiff.hpp"
#include "stdiff/core.hpp"

// Strided filter-bank wavelet analysis/synthesis with periodic boundaries.
// Filters run along the row (time) axis; each column is an independent
// channel. The high-pass filter is always derived from the low-pass one by
// the quadrature-mirror rule so the pair stays complementary as the low-pass
// filter drifts during training.

namespace stdiff {

// Order-3 Daubechies scaling filter in closed form (normalized to sum
// sqrt(2), unit energy), so the orthonormality identities hold to rounding.
inline RowVector db3_lowpass() {
  const Scalar s10 = std::sqrt(10.0);
  const Scalar q = std::sqrt(5.0 + 2.0 * s10);
  RowVector h(6);
  h << 1.0 + s10 + q, 5.0 + s10 + 3.0 * q, 10.0 - 2.0 * s10 + 2.0 * q,
      10.0 - 2.0 * s10 - 2.0 * q, 5.0 + s10 - 3.0 * q, 1.0 + s10 - q;
  h /= 16.0 * std::sqrt(2.0);
  return h;
}

inline RowVector qmf_highpass(const RowVector& h) {
  if (h.size() % 2 != 0) throw SpecError("qmf_highpass: filter length must be even");
  RowVector g(h.size());
  for (Eigen::Index n = 0; n < h.size(); ++n)
    g(n) = ((n % 2 == 0) ? 1.0 : -1.0) * h(h.size() - 1 - n);
  return g;
}

// out[p] = sum_m f[m] * a[(2p+m) mod N], per channel.
inline Matrix dwt_filter(const Matrix& a, const RowVector& f) {
  const Eigen::Index N = a.rows();
  if (N % 2 != 0) throw SpecError("dwt_filter: input length must be even");
  Matrix out = Matrix::Zero(N / 2, a.cols());
  for (Eigen::Index p = 0; p < N / 2; ++p)
    for (Eigen::Index m = 0; m < f.size(); ++m)
      out.row(p) += f(m) * a.row((2 * p + m) % N);
  return out;
}

// out[(2n+m) mod 2N] += f[m] * x[n]; the adjoint of dwt_filter.
inline Matrix idwt_filter(const Matrix& x, const RowVector& f) {
  const Eigen::Index N = x.rows();
  Matrix out = Matrix::Zero(2 * N, x.cols());
  for (Eigen::Index n = 0; n < N; ++n)
    for (Eigen::Index m = 0; m < f.size(); ++m)
      out.row((2 * n + m) % (2 * N)) += f(m) * x.row(n);
  return out;
}

inline std::pair<Matrix, Matrix> dwt_step(const Matrix& a, const RowVector& h) {
  RowVector g = qmf_highpass(h);
  return {dwt_filter(a, h), dwt_filter(a, g)};
}

inline Matrix idwt_step(const Matrix& a_next, const Matrix& d_next,
                        const RowVector& h) {
  if (a_next.rows() != d_next.rows())
    throw SpecError("idwt_step: coefficient length mismatch");
  RowVector g = qmf_highpass(h);
  return idwt_filter(a_next, h) + idwt_filter(d_next, g);
}

struct WaveletPyramid {
  std::vector<Matrix> details;  // d_1 .. d_J, lengths L/2 .. L/2^J
  Matrix approx;                // a_J, length L/2^J
  int levels = 0;
};

inline WaveletPyramid dwt(const Matrix& seasonal, int levels,
                          const RowVector& h) {
  Eigen::Index len = seasonal.rows();
  for (int j = 0; j < levels; ++j) {
    if (len % 2 != 0)
      throw SpecError("dwt: length not divisible by 2^levels");
    len /= 2;
  }
  WaveletPyramid pyr;
  pyr.levels = levels;
  pyr.approx = seasonal;
  for (int j = 0; j < levels; ++j) {
    auto [a, d] = dwt_step(pyr.approx, h);
    pyr.details.push_back(std::move(d));
    pyr.approx = std::move(a);
  }
  return pyr;
}

inline Matrix idwt(const WaveletPyramid& pyr, const RowVector& h) {
  Matrix a = pyr.approx;
  for (int j = pyr.levels - 1; j >= 0; --j)
    a = idwt_step(a, pyr.details[static_cast<std::size_t>(j)], h);
  return a;
}

// Soft orthonormality penalty: even-shift orthogonality, unit energy, and
// low-pass normalization. Zero (to rounding) exactly at orthonormal filters
// such as db3.
inline Scalar wavelet_regularizer(const RowVector& h) {
  const Eigen::Index F = h.size();
  Scalar total = 0.0;
  for (Eigen::Index k = 1; 2 * k < F; ++k) {
    Scalar dot = 0.0;
    for (Eigen::Index n = 0; n + 2 * k < F; ++n) dot += h(n) * h(n + 2 * k);
    total += dot * dot;
  }
  Scalar energy = h.squaredNorm() - 1.0;
  Scalar dc = h.sum() - std::sqrt(2.0);
  return total + energy * energy + dc * dc;
}

// Dyadic cascade refinement: approximates the scaling function phi and
// wavelet function psi on the grid k/2^iters over the filter support.
struct WaveletFunctionTable {
  std::vector<Scalar> t;
  std::vector<Scalar> phi;
  std::vector<Scalar> psi;
};

inline WaveletFunctionTable cascade(const RowVector& h, int iters = 8) {
  const Scalar rt2 = std::sqrt(2.0);
  std::vector<Scalar> phi{1.0};
  for (int it = 0; it < iters; ++it) {
    std::vector<Scalar> up(2 * phi.size() - 1, 0.0);
    for (std::size_t i = 0; i < phi.size(); ++i) up[2 * i] = phi[i];
    std::vector<Scalar> next(up.size() + static_cast<std::size_t>(h.size()) - 1,
                             0.0);
    for (std::size_t i = 0; i < up.size(); ++i)
      for (Eigen::Index m = 0; m < h.size(); ++m)
        next[i + static_cast<std::size_t>(m)] += rt2 * h(m) * up[i];
    phi = std::move(next);
  }
  RowVector g = qmf_highpass(h);
  // One further refinement with h and with g lands phi and psi on a common
  // grid over the filter support.
  std::vector<Scalar> up(2 * phi.size() - 1, 0.0);
  for (std::size_t i = 0; i < phi.size(); ++i) up[2 * i] = phi[i];
  std::size_t out_len = up.size() + static_cast<std::size_t>(h.size()) - 1;
  std::vector<Scalar> psi(out_len, 0.0);
  std::vector<Scalar> phi_fine(out_len, 0.0);
  for (std::size_t i = 0; i < up.size(); ++i)
    for (Eigen::Index m = 0; m < g.size(); ++m) {
      psi[i + static_cast<std::size_t>(m)] += rt2 * g(m) * up[i];
      phi_fine[i + static_cast<std::size_t>(m)] += rt2 * h(m) * up[i];
    }
  phi = std::move(phi_fine);

  WaveletFunctionTable tab;
  Scalar dt =
      static_cast<Scalar>(h.size() - 1) / static_cast<Scalar>(psi.size() - 1);
  for (std::size_t i = 0; i < psi.size(); ++i) {
    tab.t.push_back(static_cast<Scalar>(i) * dt);
    tab.phi.push_back(phi[i]);
    tab.psi.push_back(psi[i]);
  }
  return tab;
}

// ---- differentiable counterparts ----

namespace wavelet_ad {

inline ad::Var qmf_highpass(const ad::Var& h) {
  const Eigen::Index F = h->value.cols();
  if (F % 2 != 0) throw SpecError("qmf_highpass: filter length must be even");
  Matrix g(1, F);
  for (Eigen::Index n = 0; n < F; ++n)
    g(0, n) = ((n % 2 == 0) ? 1.0 : -1.0) * h->value(0, F - 1 - n);
  return ad::make(std::move(g), {h}, [F](ad::Node& n) {
    if (!n.parents[0]->requires_grad) return;
    n.parents[0]->ensure_grad();
    for (Eigen::Index i = 0; i < F; ++i)
      n.parents[0]->grad(0, F - 1 - i) +=
          ((i % 2 == 0) ? 1.0 : -1.0) * n.grad(0, i);
  });
}

inline ad::Var dwt_filter(const ad::Var& a, const ad::Var& f) {
  Matrix out = stdiff::dwt_filter(a->value, RowVector(f->value.row(0)));
  return ad::make(std::move(out), {a, f}, [](ad::Node& n) {
    const Matrix& av = n.parents[0]->value;
    const Matrix& fv = n.parents[1]->value;
    const Eigen::Index N = av.rows(), F = fv.cols();
    if (n.parents[0]->requires_grad) {
      n.parents[0]->ensure_grad();
      for (Eigen::Index p = 0; p < N / 2; ++p)
        for (Eigen::Index m = 0; m < F; ++m)
          n.parents[0]->grad.row((2 * p + m) % N) += fv(0, m) * n.grad.row(p);
    }
    if (n.parents[1]->requires_grad) {
      n.parents[1]->ensure_grad();
      for (Eigen::Index p = 0; p < N / 2; ++p)
        for (Eigen::Index m = 0; m < F; ++m)
          n.parents[1]->grad(0, m) +=
              n.grad.row(p).dot(av.row((2 * p + m) % N));
    }
  });
}

inline ad::Var idwt_filter(const ad::Var& x, const ad::Var& f) {
  Matrix out = stdiff::idwt_filter(x->value, RowVector(f->value.row(0)));
  return ad::make(std::move(out), {x, f}, [](ad::Node& n) {
    const Matrix& xv = n.parents[0]->value;
    const Matrix& fv = n.parents[1]->value;
    const Eigen::Index N = xv.rows(), F = fv.cols();
    if (n.parents[0]->requires_grad) {
      n.parents[0]->ensure_grad();
      for (Eigen::Index i = 0; i < N; ++i)
        for (Eigen::Index m = 0; m < F; ++m)
          n.parents[0]->grad.row(i) +=
              fv(0, m) * n.grad.row((2 * i + m) % (2 * N));
    }
    if (n.parents[1]->requires_grad) {
      n.parents[1]->ensure_grad();
      for (Eigen::Index i = 0; i < N; ++i)
        for (Eigen::Index m = 0; m < F; ++m)
          n.parents[1]->grad(0, m) +=
              xv.row(i).dot(n.grad.row((2 * i + m) % (2 * N)));
    }
  });
}

inline ad::Var regularizer(const ad::Var& h) {
  using namespace ad;
  const Eigen::Index F = h->value.cols();
  Var total = constant(0.0);
  for (Eigen::Index k = 1; 2 * k < F; ++k) {
    Var dot = sum_all(
        mul(slice_cols(h, 0, F - 2 * k), slice_cols(h, 2 * k, F - 2 * k)));
    total = add(total, square(dot));
  }
  total = add(total, square(add_scalar(sum_all(mul(h, h)), -1.0)));
  total = add(total, square(add_scalar(sum_all(h), -std::sqrt(2.0))));
  return total;
}

}  // namespace wavelet_ad
}  // namespace stdiff
