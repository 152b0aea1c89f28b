#pragma once

#include <Eigen/Core>
#include <cmath>

#include "iprior/errors.hpp"
#include "iprior/image.hpp"
#include "iprior/kernel.hpp"
#include "iprior/storage.hpp"

namespace iprior {

/// Symmetric doubly stochastic smoothing filter W, applied as a denoiser by
/// matrix-vector product. balance_residual is the achieved max deviation of
/// any row or column sum from 1.
struct SmoothingFilter {
  Index n = 0;
  MatrixStore weights;
  double balance_residual = 0.0;
  int iterations = 0;
  bool converged = true;
  KernelParams params;

  bool dense() const { return store_is_dense(weights); }
};

/// Balances a symmetric nonnegative kernel to doubly stochastic form with
/// the symmetric fixed-point iteration d <- sqrt(d ./ (K d)), started from
/// d = 1, giving W = D K D. A single diagonal keeps W symmetric, which the
/// spectral machinery downstream requires; a final (W + W^T)/2 removes the
/// remaining floating-point drift. Non-convergence within max_iters is
/// recorded on the result, not fatal.
inline SmoothingFilter sinkhorn_balance(const KernelMatrix& K, double tol = 1e-8,
                                        int max_iters = 10000) {
  if (!(tol > 0.0)) throw ContractError("sinkhorn_balance: tol must be > 0");
  if (max_iters < 1) throw ContractError("sinkhorn_balance: max_iters must be >= 1");
  const Index n = K.n;
  if (n == 0) throw ContractError("sinkhorn_balance: empty kernel");

  {
    const Eigen::VectorXd rs = store_row_sums(K.entries);
    for (Index i = 0; i < n; ++i)
      if (!(rs[i] > 0.0))
        throw ContractError("sinkhorn_balance: row " + std::to_string(i) + " has no positive entry");
  }

  Eigen::VectorXd d = Eigen::VectorXd::Ones(n);
  int iters = 0;
  bool converged = false;
  for (; iters < max_iters; ++iters) {
    const Eigen::VectorXd kd = store_multiply(K.entries, d);
    const double residual = (d.array() * kd.array() - 1.0).abs().maxCoeff();
    if (residual <= tol) {
      converged = true;
      break;
    }
    d = (d.array() / kd.array()).sqrt().matrix();
  }

  SmoothingFilter W;
  W.n = n;
  W.iterations = iters;

  if (K.dense()) {
    const Eigen::MatrixXd& Kd = std::get<Eigen::MatrixXd>(K.entries);
    Eigen::MatrixXd M = d.asDiagonal() * Kd * d.asDiagonal();
    M = (0.5 * (M + M.transpose())).eval();
    W.weights = std::move(M);
  } else {
    const SparseRows& Ks = std::get<SparseRows>(K.entries);
    SparseRows S = Ks;
    for (Index i = 0; i < n; ++i)
      for (std::size_t k = S.row_ptr[i]; k < S.row_ptr[i + 1]; ++k)
        S.val[k] = d[i] * Ks.val[k] * d[S.col[k]];
    // Pairwise average (i,j)/(j,i); iterating j > i touches each pair once.
    for (Index i = 0; i < n; ++i) {
      for (std::size_t k = S.row_ptr[i]; k < S.row_ptr[i + 1]; ++k) {
        const Index j = S.col[k];
        if (j <= i) continue;
        double* mirror = S.find(j, i);
        const double avg = 0.5 * (S.val[k] + *mirror);
        S.val[k] = avg;
        *mirror = avg;
      }
    }
    W.weights = std::move(S);
  }

  W.balance_residual = (store_row_sums(W.weights).array() - 1.0).abs().maxCoeff();
  W.converged = converged && W.balance_residual <= tol;
  return W;
}

/// Exact matrix-vector product in the filter's storage format.
inline Eigen::VectorXd apply(const SmoothingFilter& W, const Eigen::VectorXd& v) {
  if (v.size() != W.n) throw ContractError("apply: filter/vector dimension mismatch");
  return store_multiply(W.weights, v);
}

inline Image apply(const SmoothingFilter& W, const Image& v) {
  if (Index(v.size()) != W.n) throw ContractError("apply: filter/image dimension mismatch");
  const Eigen::VectorXd out = store_multiply(W.weights, v.vec());
  return from_vector(v.width, v.height, out);
}

}  // namespace iprior
