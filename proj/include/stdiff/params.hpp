#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "stdiff/autodiff.hpp"
#include "stdiff/core.hpp"

namespace stdiff {

// Named, ordered collection of trainable tensors. The order defines the
// checkpoint layout.
struct ParamStore {
  std::vector<std::pair<std::string, ad::Var>> items;

  ad::Var add(const std::string& name, Matrix init) {
    for (const auto& [n, v] : items)
      if (n == name) throw SpecError("ParamStore: duplicate name " + name);
    auto v = ad::param(std::move(init));
    items.emplace_back(name, v);
    return v;
  }

  ad::Var get(const std::string& name) const {
    for (const auto& [n, v] : items)
      if (n == name) return v;
    throw SpecError("ParamStore: unknown name " + name);
  }

  void zero_grad() {
    for (auto& [n, v] : items) v->grad.setZero(v->value.rows(), v->value.cols());
  }

  std::size_t scalar_count() const {
    std::size_t total = 0;
    for (const auto& [n, v] : items)
      total += static_cast<std::size_t>(v->value.size());
    return total;
  }
};

// Adaptive moment estimation over a ParamStore.
class Adam {
 public:
  explicit Adam(ParamStore& store, Scalar lr = 1e-3, Scalar beta1 = 0.9,
                Scalar beta2 = 0.999, Scalar eps = 1e-8)
      : store_(store), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& [n, v] : store.items) {
      m_.push_back(Matrix::Zero(v->value.rows(), v->value.cols()));
      v_.push_back(Matrix::Zero(v->value.rows(), v->value.cols()));
    }
  }

  void set_lr(Scalar lr) { lr_ = lr; }

  void step() {
    ++t_;
    Scalar bc1 = 1.0 - std::pow(beta1_, t_);
    Scalar bc2 = 1.0 - std::pow(beta2_, t_);
    for (std::size_t i = 0; i < store_.items.size(); ++i) {
      auto& p = store_.items[i].second;
      if (p->grad.size() != p->value.size()) continue;  // never touched
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * p->grad;
      v_[i] = beta2_ * v_[i].array() +
              (1.0 - beta2_) * p->grad.array().square();
      p->value.array() -=
          lr_ * (m_[i].array() / bc1) /
          ((v_[i].array() / bc2).sqrt() + eps_);
    }
  }

 private:
  ParamStore& store_;
  Scalar lr_, beta1_, beta2_, eps_;
  std::vector<Matrix> m_, v_;
  long t_ = 0;
};

}  // namespace stdiff
