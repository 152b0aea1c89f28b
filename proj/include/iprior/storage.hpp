#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cstdint>
#include <variant>
#include <vector>

#include "iprior/errors.hpp"

namespace iprior {

using Eigen::Index;

/// Symmetric sparse matrix as per-row adjacency, columns ordered within each
/// row. Both (i,j) and (j,i) are stored, so row iteration sees full rows.
struct SparseRows {
  Index n = 0;
  std::vector<std::size_t> row_ptr;  // size n+1
  std::vector<Index> col;
  std::vector<double> val;

  std::size_t nnz() const { return val.size(); }

  double* find(Index i, Index j) {
    auto first = col.begin() + row_ptr[i], last = col.begin() + row_ptr[i + 1];
    auto it = std::lower_bound(first, last, j);
    if (it == last || *it != j) return nullptr;
    return &val[std::size_t(it - col.begin())];
  }
  const double* find(Index i, Index j) const { return const_cast<SparseRows*>(this)->find(i, j); }

  Eigen::VectorXd multiply(const Eigen::VectorXd& x) const {
    Eigen::VectorXd y = Eigen::VectorXd::Zero(n);
    for (Index i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k) acc += val[k] * x[col[k]];
      y[i] = acc;
    }
    return y;
  }

  Eigen::VectorXd row_sums() const {
    Eigen::VectorXd s = Eigen::VectorXd::Zero(n);
    for (Index i = 0; i < n; ++i)
      for (std::size_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k) s[i] += val[k];
    return s;
  }

  Eigen::MatrixXd to_dense() const {
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
    for (Index i = 0; i < n; ++i)
      for (std::size_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k) d(i, col[k]) = val[k];
    return d;
  }
};

/// Storage shared by kernel matrices and smoothing filters: dense for full
/// search, per-row adjacency for windowed search.
using MatrixStore = std::variant<Eigen::MatrixXd, SparseRows>;

inline bool store_is_dense(const MatrixStore& s) { return std::holds_alternative<Eigen::MatrixXd>(s); }

inline Index store_dim(const MatrixStore& s) {
  if (store_is_dense(s)) return std::get<Eigen::MatrixXd>(s).rows();
  return std::get<SparseRows>(s).n;
}

inline Eigen::VectorXd store_multiply(const MatrixStore& s, const Eigen::VectorXd& x) {
  if (store_is_dense(s)) return std::get<Eigen::MatrixXd>(s) * x;
  return std::get<SparseRows>(s).multiply(x);
}

inline Eigen::VectorXd store_row_sums(const MatrixStore& s) {
  if (store_is_dense(s)) return std::get<Eigen::MatrixXd>(s).rowwise().sum();
  return std::get<SparseRows>(s).row_sums();
}

inline Eigen::MatrixXd store_to_dense(const MatrixStore& s) {
  if (store_is_dense(s)) return std::get<Eigen::MatrixXd>(s);
  return std::get<SparseRows>(s).to_dense();
}

}  // namespace iprior
