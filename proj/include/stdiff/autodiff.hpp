#pragma once

#include <algorithm>
#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "stdiff/core.hpp"

// Reverse-mode automatic differentiation over dense matrices. Nodes form a
// DAG; creation order doubles as a topological order for the backward sweep.

namespace stdiff::ad {

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
  Matrix value;
  Matrix grad;  // lazily sized
  std::vector<Var> parents;
  std::function<void(Node&)> backprop;
  bool requires_grad = false;
  std::uint64_t id = 0;

  void ensure_grad() {
    if (grad.rows() != value.rows() || grad.cols() != value.cols())
      grad = Matrix::Zero(value.rows(), value.cols());
  }
};

inline std::uint64_t next_id() {
  static thread_local std::uint64_t counter = 0;
  return ++counter;
}

inline bool& grad_enabled() {
  static thread_local bool enabled = true;
  return enabled;
}

// Scoped guard that disables graph recording (inference-only forward passes).
struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(grad_enabled()) { grad_enabled() = false; }
  ~NoGradGuard() { grad_enabled() = prev; }
};

inline Var constant(Matrix v) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  n->id = next_id();
  return n;
}

inline Var constant(Scalar v) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return constant(std::move(m));
}

inline Var param(Matrix v) {
  auto n = constant(std::move(v));
  n->requires_grad = true;
  return n;
}

inline Var make(Matrix v, std::vector<Var> parents,
                std::function<void(Node&)> bp) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  n->id = next_id();
  bool need = false;
  if (grad_enabled())
    for (const auto& p : parents) need = need || p->requires_grad;
  if (need) {
    n->parents = std::move(parents);
    n->backprop = std::move(bp);
    n->requires_grad = true;
  }
  return n;
}

inline void backward(const Var& root) {
  if (root->value.size() != 1)
    throw SpecError("backward: root must be scalar");
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{root.get()};
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    if (!n->requires_grad || !seen.insert(n).second) continue;
    order.push_back(n);
    for (const auto& p : n->parents) stack.push_back(p.get());
  }
  // Creation ids are a topological order of the DAG.
  std::sort(order.begin(), order.end(),
            [](Node* a, Node* b) { return a->id > b->id; });
  root->ensure_grad();
  root->grad(0, 0) = 1.0;
  for (Node* n : order) {
    if (n->backprop) n->backprop(*n);
    // Interior activations are not reused after their backprop runs.
    if (n->backprop) n->grad.resize(0, 0);
  }
}

// ---- elementwise and linear-algebra primitives ----

inline Var add(const Var& a, const Var& b) {
  return make(a->value + b->value, {a, b}, [](Node& n) {
    for (int i = 0; i < 2; ++i)
      if (n.parents[i]->requires_grad) {
        n.parents[i]->ensure_grad();
        n.parents[i]->grad += n.grad;
      }
  });
}

inline Var sub(const Var& a, const Var& b) {
  return make(a->value - b->value, {a, b}, [](Node& n) {
    if (n.parents[0]->requires_grad) {
      n.parents[0]->ensure_grad();
      n.parents[0]->grad += n.grad;
    }
    if (n.parents[1]->requires_grad) {
      n.parents[1]->ensure_grad();
      n.parents[1]->grad -= n.grad;
    }
  });
}

inline Var mul(const Var& a, const Var& b) {
  return make(a->value.cwiseProduct(b->value), {a, b}, [](Node& n) {
    if (n.parents[0]->requires_grad) {
      n.parents[0]->ensure_grad();
      n.parents[0]->grad += n.grad.cwiseProduct(n.parents[1]->value);
    }
    if (n.parents[1]->requires_grad) {
      n.parents[1]->ensure_grad();
      n.parents[1]->grad += n.grad.cwiseProduct(n.parents[0]->value);
    }
  });
}

inline Var div(const Var& a, const Var& b) {
  return make(a->value.cwiseQuotient(b->value), {a, b}, [](Node& n) {
    const Matrix& bv = n.parents[1]->value;
    if (n.parents[0]->requires_grad) {
      n.parents[0]->ensure_grad();
      n.parents[0]->grad += n.grad.cwiseQuotient(bv);
    }
    if (n.parents[1]->requires_grad) {
      n.parents[1]->ensure_grad();
      n.parents[1]->grad -= n.grad.cwiseProduct(n.value).cwiseQuotient(bv);
    }
  });
}

inline Var scale(const Var& a, Scalar s) {
  return make(a->value * s, {a}, [s](Node& n) {
    if (n.parents[0]->requires_grad) {
      n.parents[0]->ensure_grad();
      n.parents[0]->grad += n.grad * s;
    }
  });
}

inline Var add_scalar(const Var& a, Scalar s) {
  return make(a->value.array() + s, {a}, [](Node& n) {
    if (n.parents[0]->requires_grad) {
      n.parents[0]->ensure_grad();
      n.parents[0]->grad += n.grad;
    }
  });
}

inline Var neg(const Var& a) { return scale(a, -1.0); }

inline Var matmul(const Var& a, const Var& b) {
  return make(a->value * b->value, {a, b}, [](Node& n) {
    if (n.parents[0]->requires_grad) {
      n.parents[0]->ensure_grad();
      n.parents[0]->grad.noalias() += n.grad * n.parents[1]->value.transpose();
    }
    if (n.parents[1]->requires_grad) {
      n.parents[1]->ensure_grad();
      n.parents[1]->grad.noalias() += n.parents[0]->value.transpose() * n.grad;
    }
  });
}

inline Var transpose(const Var& a) {
  return make(a->value.transpose(), {a}, [](Node& n) {
    if (n.parents[0]->requires_grad) {
      n.parents[0]->ensure_grad();
      n.parents[0]->grad += n.grad.transpose();
    }
  });
}

// ---- nonlinearities ----

inline Var tanh_(const Var& a) {
  return make(a->value.array().tanh(), {a}, [](Node& n) {
    if (n.parents[0]->requires_grad) {
      n.parents[0]->ensure_grad();
      n.parents[0]->grad.array() +=
          n.grad.array() * (1.0 - n.value.array().square());
    }
  });
}

inline Var sigmoid(const Var& a) {
  Matrix v = (1.0 / (1.0 + (-a->value.array()).exp())).matrix();
  return make(std::move(v), {a}, [](Node& n) {
    if (n.parents[0]->requires_grad) {
      n.parents[0]->ensure_grad();
      n.parents[0]->grad.array() +=
          n.grad.array() * n.value.array() * (1.0 - n.value.array());
    }
  });
}

inline Var silu(const Var& a) {
  Matrix sig = (1.0 / (1.0 + (-a->value.array()).exp())).matrix();
  Matrix v = a->value.cwiseProduct(sig);
  return make(std::move(v), {a}, [sig](Node& n) {
    if (n.parents[0]->requires_grad) {
      n.parents[0]->ensure_grad();
      const auto& x = n.parents[0]->value.array();
      n.parents[0]->grad.array() +=
          n.grad.array() *
          (sig.array() * (1.0 + x * (1.0 - sig.array())));
    }
  });
}

inline Var exp_(const Var& a) {
  return make(a->value.array().exp(), {a}, [](Node& n) {
    if (n.parents[0]->requires_grad) {
      n.parents[0]->ensure_grad();
      n.parents[0]->grad.array() += n.grad.array() * n.value.array();
    }
  });
}

inline Var log_(const Var& a) {
  return make(a->value.array().log(), {a}, [](Node& n) {
    if (n.parents[0]->requires_grad) {
      n.parents[0]->ensure_grad();
      n.parents[0]->grad.array() += n.grad.array() / n.parents[0]->value.array();
    }
  });
}

inline Var sqrt_(const Var& a) {
  return make(a->value.array().sqrt(), {a}, [](Node& n) {
    if (n.parents[0]->requires_grad) {
      n.parents[0]->ensure_grad();
      n.parents[0]->grad.array() += n.grad.array() * 0.5 / n.value.array();
    }
  });
}

inline Var square(const Var& a) { return mul(a, a); }

inline Var abs_(const Var& a) {
  return make(a->value.array().abs(), {a}, [](Node& n) {
    if (n.parents[0]->requires_grad) {
      n.parents[0]->ensure_grad();
      n.parents[0]->grad.array() +=
          n.grad.array() * n.parents[0]->value.array().sign();
    }
  });
}

// ---- reductions and broadcasts ----

inline Var sum_all(const Var& a) {
  Matrix v(1, 1);
  v(0, 0) = a->value.sum();
  return make(std::move(v), {a}, [](Node& n) {
    if (n.parents[0]->requires_grad) {
      n.parents[0]->ensure_grad();
      n.parents[0]->grad.array() += n.grad(0, 0);
    }
  });
}

inline Var mean_all(const Var& a) {
  return scale(sum_all(a), 1.0 / static_cast<Scalar>(a->value.size()));
}

inline Var col_mean(const Var& a) {
  Matrix v = a->value.colwise().mean();
  Scalar inv = 1.0 / static_cast<Scalar>(a->value.rows());
  return make(std::move(v), {a}, [inv](Node& n) {
    if (n.parents[0]->requires_grad) {
      n.parents[0]->ensure_grad();
      n.parents[0]->grad.rowwise() += (n.grad.row(0) * inv);
    }
  });
}

inline Var add_rowvec(const Var& a, const Var& r) {
  Matrix v = a->value.rowwise() + Eigen::RowVectorXd(r->value.row(0));
  return make(std::move(v), {a, r}, [](Node& n) {
    if (n.parents[0]->requires_grad) {
      n.parents[0]->ensure_grad();
      n.parents[0]->grad += n.grad;
    }
    if (n.parents[1]->requires_grad) {
      n.parents[1]->ensure_grad();
      n.parents[1]->grad.row(0) += n.grad.colwise().sum();
    }
  });
}

inline Var mul_rowvec(const Var& a, const Var& r) {
  Matrix v = a->value.array().rowwise() *
             Eigen::Array<Scalar, 1, Eigen::Dynamic>(r->value.row(0).array());
  return make(std::move(v), {a, r}, [](Node& n) {
    if (n.parents[0]->requires_grad) {
      n.parents[0]->ensure_grad();
      n.parents[0]->grad.array() +=
          n.grad.array().rowwise() *
          Eigen::Array<Scalar, 1, Eigen::Dynamic>(
              n.parents[1]->value.row(0).array());
    }
    if (n.parents[1]->requires_grad) {
      n.parents[1]->ensure_grad();
      n.parents[1]->grad.row(0) +=
          n.grad.cwiseProduct(n.parents[0]->value).colwise().sum();
    }
  });
}

inline Var div_rowvec(const Var& a, const Var& r) {
  Matrix v = a->value.array().rowwise() /
             Eigen::Array<Scalar, 1, Eigen::Dynamic>(r->value.row(0).array());
  return make(std::move(v), {a, r}, [](Node& n) {
    Eigen::Array<Scalar, 1, Eigen::Dynamic> rv =
        n.parents[1]->value.row(0).array();
    if (n.parents[0]->requires_grad) {
      n.parents[0]->ensure_grad();
      n.parents[0]->grad.array() += n.grad.array().rowwise() / rv;
    }
    if (n.parents[1]->requires_grad) {
      n.parents[1]->ensure_grad();
      Matrix num = n.grad.cwiseProduct(n.value);
      n.parents[1]->grad.row(0).array() -=
          num.colwise().sum().array() / rv;
    }
  });
}

// ---- structural ops ----

inline Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  Matrix v = a->value.middleCols(start, count);
  return make(std::move(v), {a}, [start, count](Node& n) {
    if (n.parents[0]->requires_grad) {
      n.parents[0]->ensure_grad();
      n.parents[0]->grad.middleCols(start, count) += n.grad;
    }
  });
}

inline Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count) {
  Matrix v = a->value.middleRows(start, count);
  return make(std::move(v), {a}, [start, count](Node& n) {
    if (n.parents[0]->requires_grad) {
      n.parents[0]->ensure_grad();
      n.parents[0]->grad.middleRows(start, count) += n.grad;
    }
  });
}

inline Var concat_cols(const Var& a, const Var& b) {
  Matrix v(a->value.rows(), a->value.cols() + b->value.cols());
  v << a->value, b->value;
  Eigen::Index ca = a->value.cols();
  return make(std::move(v), {a, b}, [ca](Node& n) {
    if (n.parents[0]->requires_grad) {
      n.parents[0]->ensure_grad();
      n.parents[0]->grad += n.grad.leftCols(ca);
    }
    if (n.parents[1]->requires_grad) {
      n.parents[1]->ensure_grad();
      n.parents[1]->grad += n.grad.rightCols(n.grad.cols() - ca);
    }
  });
}

// Flattens each input (column-major) into one column of the result.
inline Var stack_flatten(const std::vector<Var>& vars) {
  Eigen::Index rows = vars[0]->value.size();
  Matrix v(rows, static_cast<Eigen::Index>(vars.size()));
  for (std::size_t i = 0; i < vars.size(); ++i)
    v.col(static_cast<Eigen::Index>(i)) =
        Eigen::Map<const Vector>(vars[i]->value.data(), rows);
  return make(std::move(v), vars, [](Node& n) {
    for (std::size_t i = 0; i < n.parents.size(); ++i) {
      auto& p = n.parents[i];
      if (!p->requires_grad) continue;
      p->ensure_grad();
      Eigen::Map<Vector>(p->grad.data(), p->grad.size()) +=
          n.grad.col(static_cast<Eigen::Index>(i));
    }
  });
}

// Inverse of stack_flatten for a single column.
inline Var col_as_matrix(const Var& a, Eigen::Index col, Eigen::Index rows,
                         Eigen::Index cols) {
  Matrix v = Eigen::Map<const Matrix>(a->value.col(col).data(), rows, cols);
  return make(std::move(v), {a}, [col](Node& n) {
    if (n.parents[0]->requires_grad) {
      n.parents[0]->ensure_grad();
      n.parents[0]->grad.col(col) +=
          Eigen::Map<const Vector>(n.grad.data(), n.grad.size());
    }
  });
}

inline Var softmax_rows(const Var& a) {
  Matrix v = a->value;
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    Scalar mx = v.row(i).maxCoeff();
    v.row(i) = (v.row(i).array() - mx).exp();
    v.row(i) /= v.row(i).sum();
  }
  return make(std::move(v), {a}, [](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    n.parents[0]->ensure_grad();
    for (Eigen::Index i = 0; i < n.value.rows(); ++i) {
      Scalar dot = n.grad.row(i).dot(n.value.row(i));
      n.parents[0]->grad.row(i).array() +=
          n.value.row(i).array() * (n.grad.row(i).array() - dot);
    }
  });
}

inline Var repeat_rows(const Var& r, Eigen::Index count) {
  Matrix v = r->value.replicate(count, 1);
  return make(std::move(v), {r}, [](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    n.parents[0]->ensure_grad();
    Eigen::Index rr = n.parents[0]->value.rows();
    for (Eigen::Index i = 0; i < n.grad.rows(); ++i)
      n.parents[0]->grad.row(i % rr) += n.grad.row(i);
  });
}

inline Var mse(const Var& pred, const Var& target) {
  return mean_all(square(sub(pred, target)));
}

}  // namespace stdiff::ad
