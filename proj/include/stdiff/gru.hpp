#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "stdiff/autodiff.hpp"
#include "stdiff/core.hpp"
#include "stdiff/params.hpp"

// Gated recurrent cell used by the evaluation networks. Windows are processed
// batch-first: the hidden state is a B x H matrix updated once per timestep.

namespace stdiff {

// Row t of each window, stacked into one B x K matrix per timestep.
inline std::vector<Matrix> timestep_slices(
    const std::vector<const Matrix*>& windows) {
  if (windows.empty()) throw SpecError("timestep_slices: empty batch");
  const Eigen::Index L = windows[0]->rows();
  const Eigen::Index K = windows[0]->cols();
  const Eigen::Index B = static_cast<Eigen::Index>(windows.size());
  std::vector<Matrix> slices(static_cast<std::size_t>(L));
  for (Eigen::Index t = 0; t < L; ++t) {
    Matrix s(B, K);
    for (Eigen::Index b = 0; b < B; ++b) {
      if (windows[b]->rows() != L || windows[b]->cols() != K)
        throw SpecError("timestep_slices: inconsistent window shapes");
      s.row(b) = windows[b]->row(t);
    }
    slices[static_cast<std::size_t>(t)] = std::move(s);
  }
  return slices;
}

class GruCell {
 public:
  GruCell(const std::string& prefix, Eigen::Index in, Eigen::Index hidden,
          ParamStore& store, Rng& rng)
      : hidden_(hidden) {
    Scalar si = 1.0 / std::sqrt(static_cast<Scalar>(in));
    Scalar sh = 1.0 / std::sqrt(static_cast<Scalar>(hidden));
    auto gate = [&](const std::string& g, ad::Var& w, ad::Var& u, ad::Var& b) {
      w = store.add(prefix + ".w" + g, rand_uniform(in, hidden, rng) * si);
      u = store.add(prefix + ".u" + g, rand_uniform(hidden, hidden, rng) * sh);
      b = store.add(prefix + ".b" + g, Matrix::Zero(1, hidden));
    };
    gate("z", wz_, uz_, bz_);
    gate("r", wr_, ur_, br_);
    gate("h", wh_, uh_, bh_);
  }

  Eigen::Index hidden() const { return hidden_; }

  ad::Var step(const ad::Var& x, const ad::Var& h) const {
    using namespace ad;
    Var z = sigmoid(add_rowvec(add(matmul(x, wz_), matmul(h, uz_)), bz_));
    Var r = sigmoid(add_rowvec(add(matmul(x, wr_), matmul(h, ur_)), br_));
    Var hh =
        tanh_(add_rowvec(add(matmul(x, wh_), matmul(mul(r, h), uh_)), bh_));
    return add(h, mul(z, sub(hh, h)));  // (1-z)h + z h~
  }

  // Final hidden state after consuming the whole sequence.
  ad::Var last_hidden(const std::vector<Matrix>& slices) const {
    if (slices.empty()) throw SpecError("GruCell: empty sequence");
    ad::Var h = ad::constant(Matrix::Zero(slices[0].rows(), hidden_));
    for (const Matrix& x : slices) h = step(ad::constant(x), h);
    return h;
  }

 private:
  Eigen::Index hidden_;
  ad::Var wz_, uz_, bz_, wr_, ur_, br_, wh_, uh_, bh_;
};

}  // namespace stdiff
