#pragma once

#include <algorithm>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "stdiff/core.hpp"

// CSV ingestion, fixed-length windowing, and min-max scaling. Scaling is
// computed per feature over the whole series before windowing and maps into
// [0, 1]; generated samples are mapped back with the stored metadata.

namespace stdiff {

struct RawSeries {
  Matrix values;  // timestamps x features
  std::vector<std::string> feature_names;
  std::string interval;
  std::size_t dropped_rows = 0;
};

struct SeriesBatch {
  std::vector<Matrix> windows;  // each L x K
  RowVector scale_min;
  RowVector scale_max;
  std::vector<std::string> feature_names;
  std::string source_id;

  Eigen::Index length() const {
    return windows.empty() ? 0 : windows.front().rows();
  }
  Eigen::Index channels() const {
    return windows.empty() ? 0 : windows.front().cols();
  }
};

namespace detail {

inline std::optional<Scalar> parse_number(const std::string& tok) {
  if (tok.empty()) return std::nullopt;
  char* end = nullptr;
  Scalar v = std::strtod(tok.c_str(), &end);
  if (end != tok.c_str() + tok.size()) return std::nullopt;
  return v;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  for (auto& s : out) {
    auto b = s.find_first_not_of(" \t");
    auto e = s.find_last_not_of(" \t");
    s = (b == std::string::npos) ? "" : s.substr(b, e - b + 1);
  }
  return out;
}

}  // namespace detail

inline RawSeries load_csv(const std::string& path,
                          const std::vector<std::string>& feature_columns = {}) {
  std::ifstream in(path);
  if (!in) throw SpecError("load_csv: cannot open file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw SpecError("load_csv: empty file: " + path);
  std::vector<std::string> header = detail::split_csv_line(line);

  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    rows.push_back(detail::split_csv_line(line));
  }

  // A non-numeric first column is treated as a date/index column.
  bool skip_first = false;
  if (!rows.empty() && !header.empty() &&
      !detail::parse_number(rows.front()[0]).has_value())
    skip_first = true;

  std::vector<std::size_t> cols;
  if (!feature_columns.empty()) {
    for (const auto& name : feature_columns) {
      auto it = std::find(header.begin(), header.end(), name);
      if (it == header.end())
        throw SpecError("load_csv: requested column absent: " + name);
      cols.push_back(static_cast<std::size_t>(it - header.begin()));
    }
  } else {
    for (std::size_t j = skip_first ? 1 : 0; j < header.size(); ++j)
      cols.push_back(j);
  }
  if (cols.empty()) throw SpecError("load_csv: no numeric columns");

  RawSeries out;
  std::vector<Vector> kept;
  for (const auto& row : rows) {
    Vector v(static_cast<Eigen::Index>(cols.size()));
    bool ok = row.size() >= header.size();
    for (std::size_t j = 0; ok && j < cols.size(); ++j) {
      auto num = detail::parse_number(row[cols[j]]);
      if (!num) ok = false;
      else v(static_cast<Eigen::Index>(j)) = *num;
    }
    if (ok) kept.push_back(std::move(v));
    else ++out.dropped_rows;
  }
  if (kept.empty()) throw SpecError("load_csv: no numeric columns");

  out.values.resize(static_cast<Eigen::Index>(kept.size()),
                    static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < kept.size(); ++i)
    out.values.row(static_cast<Eigen::Index>(i)) = kept[i].transpose();
  for (std::size_t j : cols) out.feature_names.push_back(header[j]);
  return out;
}

inline SeriesBatch make_windows(const RawSeries& series, Eigen::Index L,
                                Eigen::Index stride = 1) {
  if (L <= 0 || stride <= 0)
    throw SpecError("make_windows: L and stride must be positive");
  const Eigen::Index T = series.values.rows();
  const Eigen::Index K = series.values.cols();
  if (T < L) throw SpecError("make_windows: series shorter than window length");

  SeriesBatch batch;
  batch.feature_names = series.feature_names;
  batch.scale_min = series.values.colwise().minCoeff();
  batch.scale_max = series.values.colwise().maxCoeff();
  for (Eigen::Index k = 0; k < K; ++k) {
    if (batch.scale_max(k) <= batch.scale_min(k)) {
      std::cerr << "warning: constant feature '"
                << (k < static_cast<Eigen::Index>(batch.feature_names.size())
                        ? batch.feature_names[static_cast<std::size_t>(k)]
                        : std::to_string(k))
                << "' scaled with widened denominator\n";
      batch.scale_max(k) = batch.scale_min(k) + 1.0;
    }
  }

  const Eigen::Index N = (T - L) / stride + 1;
  RowVector range = batch.scale_max - batch.scale_min;
  for (Eigen::Index n = 0; n < N; ++n) {
    Matrix w = series.values.middleRows(n * stride, L);
    w = (w.rowwise() - Eigen::RowVectorXd(batch.scale_min)).array().rowwise() /
        Eigen::Array<Scalar, 1, Eigen::Dynamic>(range.array());
    batch.windows.push_back(std::move(w));
  }
  return batch;
}

inline Matrix unscale_window(const Matrix& w, const SeriesBatch& batch) {
  if (batch.scale_min.size() != w.cols())
    throw SpecError("unscale: missing or mismatched scale metadata");
  RowVector range = batch.scale_max - batch.scale_min;
  return (w.array().rowwise() *
          Eigen::Array<Scalar, 1, Eigen::Dynamic>(range.array()))
             .matrix()
             .rowwise() +
         Eigen::RowVectorXd(batch.scale_min);
}

inline std::vector<Matrix> unscale(const SeriesBatch& batch) {
  if (batch.scale_min.size() == 0)
    throw SpecError("unscale: missing scale metadata");
  std::vector<Matrix> out;
  out.reserve(batch.windows.size());
  for (const auto& w : batch.windows) out.push_back(unscale_window(w, batch));
  return out;
}

inline Matrix scale_window(const Matrix& w, const SeriesBatch& batch) {
  RowVector range = batch.scale_max - batch.scale_min;
  return ((w.rowwise() - Eigen::RowVectorXd(batch.scale_min)).array().rowwise() /
          Eigen::Array<Scalar, 1, Eigen::Dynamic>(range.array()))
      .matrix();
}

}  // namespace stdiff
