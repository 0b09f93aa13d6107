#pragma once

#include <cmath>

#include "stdiff/autodiff.hpp"
#include "stdiff/core.hpp"

namespace stdiff {

// Scaled dot-product attention over the row (sequence) axis. Q and K carry
// heads * dk columns; V is split evenly across heads.
inline ad::Var scaled_dot_attention(const ad::Var& q, const ad::Var& k,
                                    const ad::Var& v, int heads = 1) {
  using namespace ad;
  if (q->value.cols() != k->value.cols())
    throw SpecError("attention: query/key width mismatch");
  if (q->value.cols() % heads != 0 || v->value.cols() % heads != 0)
    throw SpecError("attention: widths not divisible by head count");
  const Eigen::Index dk = q->value.cols() / heads;
  const Eigen::Index dv = v->value.cols() / heads;
  const Scalar inv = 1.0 / std::sqrt(static_cast<Scalar>(dk));
  Var out;
  for (int h = 0; h < heads; ++h) {
    Var qh = heads == 1 ? q : slice_cols(q, h * dk, dk);
    Var kh = heads == 1 ? k : slice_cols(k, h * dk, dk);
    Var vh = heads == 1 ? v : slice_cols(v, h * dv, dv);
    Var scores = scale(matmul(qh, transpose(kh)), inv);
    Var head = matmul(softmax_rows(scores), vh);
    out = h == 0 ? head : concat_cols(out, head);
  }
  return out;
}

}  // namespace stdiff
