#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "stdiff/core.hpp"

// Figure-data backends: 2-D PCA, exact t-SNE, Gaussian kernel density
// estimates, and minimal SVG renderings of scatter plots and curves.

namespace stdiff {

// One row per window, features flattened row-major (time-major).
inline Matrix flatten_windows(const std::vector<Matrix>& windows) {
  if (windows.empty()) throw SpecError("flatten_windows: empty corpus");
  const Eigen::Index L = windows[0].rows(), K = windows[0].cols();
  Matrix out(static_cast<Eigen::Index>(windows.size()), L * K);
  for (std::size_t i = 0; i < windows.size(); ++i) {
    if (windows[i].rows() != L || windows[i].cols() != K)
      throw SpecError("flatten_windows: inconsistent shapes");
    for (Eigen::Index t = 0; t < L; ++t)
      out.row(static_cast<Eigen::Index>(i)).segment(t * K, K) =
          windows[i].row(t);
  }
  return out;
}

// ---- PCA via covariance eigendecomposition ----

struct Pca2 {
  RowVector mean;
  Matrix components;  // D x 2

  Matrix project(const Matrix& x) const {
    if (x.cols() != mean.cols()) throw SpecError("pca: width mismatch");
    return (x.rowwise() - mean) * components;
  }
};

inline Pca2 fit_pca2(const Matrix& x) {
  if (x.rows() < 2 || x.cols() < 2)
    throw SpecError("pca: need at least 2 points and 2 dimensions");
  Pca2 p;
  p.mean = x.colwise().mean();
  Matrix centered = x.rowwise() - p.mean;
  Matrix cov = centered.transpose() * centered / Scalar(x.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
  const Eigen::Index D = x.cols();
  p.components.resize(D, 2);
  // eigenvalues are ascending; take the two largest
  p.components.col(0) = es.eigenvectors().col(D - 1);
  p.components.col(1) = es.eigenvectors().col(D - 2);
  return p;
}

// ---- exact t-SNE ----

namespace detail {

// Row-stochastic affinities at the requested perplexity via bisection on the
// per-point bandwidth.
inline Matrix tsne_affinities(const Matrix& d2, Scalar perplexity) {
  const Eigen::Index n = d2.rows();
  const Scalar target = std::log(perplexity);
  Matrix p = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Scalar lo = 1e-20, hi = 1e20, beta = 1.0;
    Vector row = d2.row(i);
    for (int it = 0; it < 64; ++it) {
      Scalar sum = 0.0, sumd = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (j == i) continue;
        Scalar e = std::exp(-row(j) * beta);
        sum += e;
        sumd += row(j) * e;
      }
      Scalar entropy = std::log(std::max(sum, 1e-300)) + beta * sumd / std::max(sum, 1e-300);
      if (std::abs(entropy - target) < 1e-5) break;
      if (entropy > target) {
        lo = beta;
        beta = hi > 1e19 ? beta * 2.0 : (beta + hi) / 2.0;
      } else {
        hi = beta;
        beta = lo < 1e-19 ? beta / 2.0 : (beta + lo) / 2.0;
      }
    }
    Scalar sum = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      p(i, j) = std::exp(-row(j) * beta);
      sum += p(i, j);
    }
    if (sum > 0) p.row(i) /= sum;
  }
  return p;
}

}  // namespace detail

// Standard exact t-SNE with early exaggeration; deterministic given seed.
inline Matrix tsne2(const Matrix& x, Scalar perplexity, std::uint64_t seed,
                    int iterations = 500) {
  const Eigen::Index n = x.rows();
  if (n < 4) throw SpecError("tsne: need at least 4 points");
  perplexity = std::min(perplexity, Scalar(n - 1) / 3.0);
  perplexity = std::max(perplexity, Scalar(2.0));

  Matrix sq = x.rowwise().squaredNorm().replicate(1, n);
  Matrix d2 = sq + sq.transpose() - 2.0 * x * x.transpose();
  Matrix p = detail::tsne_affinities(d2, perplexity);
  p = (p + p.transpose()) / (2.0 * n);
  p = p.cwiseMax(1e-12);

  Rng rng(seed);
  Matrix y = randn(n, 2, rng) * 1e-4;
  Matrix inc = Matrix::Zero(n, 2);
  const Scalar lr = 200.0;
  for (int iter = 0; iter < iterations; ++iter) {
    Scalar exaggeration = iter < 100 ? 4.0 : 1.0;
    Scalar momentum = iter < 250 ? 0.5 : 0.8;
    Matrix ysq = y.rowwise().squaredNorm().replicate(1, n);
    Matrix num =
        (1.0 + (ysq + ysq.transpose() - 2.0 * y * y.transpose()).array())
            .inverse()
            .matrix();
    num.diagonal().setZero();
    Scalar qsum = std::max(num.sum(), 1e-300);
    Matrix grad = Matrix::Zero(n, 2);
    Matrix w = ((exaggeration * p.array() - num.array() / qsum) * num.array())
                   .matrix();
    Vector wsum = w.rowwise().sum();
    grad = 4.0 * (wsum.asDiagonal() * y - w * y);
    inc = momentum * inc - lr * grad;
    y += inc;
    y.rowwise() -= y.colwise().mean();
  }
  return y;
}

// ---- Gaussian kernel density ----

inline Vector linspace(Scalar lo, Scalar hi, int n) {
  Vector g(n);
  for (int i = 0; i < n; ++i)
    g(i) = lo + (hi - lo) * i / std::max(n - 1, 1);
  return g;
}

inline Vector pooled_values(const std::vector<Matrix>& windows,
                            std::size_t cap = 20000) {
  std::size_t total = 0;
  for (const Matrix& w : windows) total += static_cast<std::size_t>(w.size());
  if (total == 0) throw SpecError("kde: empty corpus");
  const std::size_t step = std::max<std::size_t>(1, total / cap);
  std::vector<Scalar> vals;
  std::size_t idx = 0;
  for (const Matrix& w : windows)
    for (Eigen::Index i = 0; i < w.size(); ++i, ++idx)
      if (idx % step == 0) vals.push_back(w.data()[i]);
  return Eigen::Map<const Vector>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

// Silverman-bandwidth Gaussian kernel density, evaluated on an explicit grid
// so two corpora can be compared pointwise.
inline Vector kde_on_grid(const Vector& values, const Vector& grid) {
  const Eigen::Index n = values.size();
  if (n < 2) throw SpecError("kde: need at least 2 values");
  Scalar mean = values.mean();
  Scalar sd = std::sqrt((values.array() - mean).square().sum() / (n - 1));
  Scalar bw = 1.06 * std::max(sd, 1e-6) * std::pow(Scalar(n), -0.2);
  Vector out(grid.size());
  const Scalar norm = 1.0 / (n * bw * std::sqrt(2.0 * M_PI));
  for (Eigen::Index g = 0; g < grid.size(); ++g) {
    Scalar acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      Scalar u = (grid(g) - values(i)) / bw;
      acc += std::exp(-0.5 * u * u);
    }
    out(g) = acc * norm;
  }
  return out;
}

// ---- text and SVG emission ----

inline void write_table(const std::string& path, const Matrix& m,
                        const std::vector<std::string>& header = {}) {
  std::ofstream out(path);
  if (!out) throw SpecError("viz: cannot write " + path);
  if (!header.empty()) {
    for (std::size_t i = 0; i < header.size(); ++i)
      out << (i ? "\t" : "") << header[i];
    out << "\n";
  }
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      out << (j ? "\t" : "") << m(i, j);
    out << "\n";
  }
}

namespace detail {

struct SvgFrame {
  Scalar xlo, xhi, ylo, yhi;
  static constexpr int width = 640, height = 480, margin = 40;

  Scalar px(Scalar x) const {
    return margin + (x - xlo) / std::max(xhi - xlo, 1e-12) * (width - 2 * margin);
  }
  Scalar py(Scalar y) const {
    return height - margin -
           (y - ylo) / std::max(yhi - ylo, 1e-12) * (height - 2 * margin);
  }
};

inline SvgFrame frame_for(const std::vector<const Matrix*>& sets) {
  SvgFrame f{1e300, -1e300, 1e300, -1e300};
  for (const Matrix* m : sets) {
    if (m->rows() == 0) continue;
    f.xlo = std::min(f.xlo, m->col(0).minCoeff());
    f.xhi = std::max(f.xhi, m->col(0).maxCoeff());
    f.ylo = std::min(f.ylo, m->col(1).minCoeff());
    f.yhi = std::max(f.yhi, m->col(1).maxCoeff());
  }
  return f;
}

}  // namespace detail

// Two-class scatter plot (first set red, second blue).
inline void write_scatter_svg(const std::string& path, const Matrix& a,
                              const Matrix& b, const std::string& title) {
  if (a.cols() != 2 || b.cols() != 2)
    throw SpecError("svg: scatter inputs must have 2 columns");
  detail::SvgFrame f = detail::frame_for({&a, &b});
  std::ofstream out(path);
  if (!out) throw SpecError("viz: cannot write " + path);
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << f.width
      << "' height='" << f.height << "'>\n"
      << "<rect width='100%' height='100%' fill='white'/>\n"
      << "<text x='" << f.width / 2 << "' y='20' text-anchor='middle'>"
      << title << "</text>\n";
  auto dots = [&](const Matrix& m, const char* color) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      out << "<circle cx='" << f.px(m(i, 0)) << "' cy='" << f.py(m(i, 1))
          << "' r='2.5' fill='" << color << "' fill-opacity='0.5'/>\n";
  };
  dots(a, "#d62728");
  dots(b, "#1f77b4");
  out << "</svg>\n";
}

// Overlaid curves on a shared grid (first red, second blue).
inline void write_curves_svg(const std::string& path, const Vector& grid,
                             const Vector& ya, const Vector& yb,
                             const std::string& title) {
  if (grid.size() != ya.size() || grid.size() != yb.size())
    throw SpecError("svg: curve length mismatch");
  detail::SvgFrame f;
  f.xlo = grid.minCoeff();
  f.xhi = grid.maxCoeff();
  f.ylo = 0.0;
  f.yhi = std::max(ya.maxCoeff(), yb.maxCoeff());
  std::ofstream out(path);
  if (!out) throw SpecError("viz: cannot write " + path);
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << f.width
      << "' height='" << f.height << "'>\n"
      << "<rect width='100%' height='100%' fill='white'/>\n"
      << "<text x='" << f.width / 2 << "' y='20' text-anchor='middle'>"
      << title << "</text>\n";
  auto line = [&](const Vector& y, const char* color) {
    out << "<polyline fill='none' stroke='" << color << "' points='";
    for (Eigen::Index i = 0; i < grid.size(); ++i)
      out << f.px(grid(i)) << "," << f.py(y(i)) << " ";
    out << "'/>\n";
  };
  line(ya, "#d62728");
  line(yb, "#1f77b4");
  out << "</svg>\n";
}

}  // namespace stdiff
