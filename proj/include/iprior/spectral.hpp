#pragma once

#include <Eigen/Core>
#include <cmath>
#include <string>

#include <lapacke.h>

#include "iprior/errors.hpp"
#include "iprior/image.hpp"
#include "iprior/sinkhorn.hpp"

namespace iprior {

/// Relative truncation default: eigenvalues at or below 1e-6 * s_1 are dropped.
inline constexpr double kDefaultTruncRel = 1e-6;

/// The two quadratic priors derived from a smoothing filter W:
/// kConventional penalizes v^T (I - W) v, kInduced penalizes
/// v^T (I - W) W^+ v, the prior the denoising step of the splitting
/// algorithm implicitly minimizes.
enum class PriorKind { kConventional, kInduced };

inline const char* prior_name(PriorKind k) {
  return k == PriorKind::kConventional ? "laplacian" : "induced";
}

/// Truncated eigendecomposition W ~= U diag(s) U^T with s_1 >= ... >= s_m >
/// trunc_tol. Everything spectral downstream (priors, proximal map, the
/// closed-form solver) runs off this object.
struct SpectralFilter {
  Index n = 0;
  Index m = 0;
  Eigen::VectorXd eigvals;   // descending, all > trunc_tol
  Eigen::MatrixXd eigvecs;   // n x m, orthonormal columns
  double trunc_tol = 0.0;    // absolute threshold applied
  double min_eigenvalue = 0.0;   // of the full spectrum, before truncation
  Index negative_discarded = 0;  // discarded eigenvalues that were < 0
  bool spectrum_in_unit = true;  // full spectrum inside [0 - eps, 1 + eps]
};

namespace detail {

/// Full symmetric eigendecomposition via LAPACK dsyevd (Householder
/// tridiagonalization + divide and conquer; backward stable to machine
/// precision). Ascending on return.
inline void symmetric_eig(const Eigen::MatrixXd& A, Eigen::VectorXd& evals,
                          Eigen::MatrixXd& evecs) {
  const Index n = A.rows();
  evecs = A;
  evals.resize(n);
  const lapack_int info =
      LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'V', 'L', static_cast<lapack_int>(n), evecs.data(),
                     static_cast<lapack_int>(n), evals.data());
  if (info < 0)
    throw NumericError("symmetric_eig: illegal argument " + std::to_string(-info));
  if (info > 0)
    throw NumericError("symmetric_eig: eigensolver failed to converge (info=" +
                       std::to_string(info) + " of n=" + std::to_string(n) + ")");
}

/// Truncates an ascending full spectrum at the absolute threshold tol:
/// eigenpairs with s_i <= tol are dropped, which removes the near-null and
/// any negative part before a pseudo-inverse is formed downstream.
inline SpectralFilter truncate_spectrum(Index n, const Eigen::VectorXd& evals,
                                        const Eigen::MatrixXd& evecs, double tol) {
  SpectralFilter F;
  F.n = n;
  F.trunc_tol = tol;
  F.min_eigenvalue = evals[0];
  F.spectrum_in_unit = evals[0] >= -1e-10 && evals[n - 1] <= 1.0 + 1e-10;

  Index keep = 0;
  for (Index i = 0; i < n; ++i) {
    if (evals[i] > tol)
      ++keep;
    else if (evals[i] < 0.0)
      ++F.negative_discarded;
  }
  F.m = keep;
  F.eigvals.resize(keep);
  F.eigvecs.resize(n, keep);
  for (Index i = 0; i < keep; ++i) {
    F.eigvals[i] = evals[n - 1 - i];  // descending
    F.eigvecs.col(i) = evecs.col(n - 1 - i);
  }
  return F;
}

}  // namespace detail

namespace detail {
inline void decompose_checks(const SmoothingFilter& W) {
  if (W.n > 16384) throw ContractError("decompose: n too large for a dense eigensolve");
  if (W.n == 0) throw ContractError("decompose: empty filter");
}
}  // namespace detail

/// Decomposes W and truncates at the given absolute threshold.
/// Windowed-sparse filters are densified first; n is capped at desk scale.
inline SpectralFilter decompose(const SmoothingFilter& W, double trunc_tol) {
  if (!(trunc_tol >= 0.0)) throw ContractError("decompose: trunc_tol must be >= 0");
  detail::decompose_checks(W);
  Eigen::VectorXd evals;
  Eigen::MatrixXd evecs;
  detail::symmetric_eig(store_to_dense(W.weights), evals, evecs);
  return detail::truncate_spectrum(W.n, evals, evecs, trunc_tol);
}

/// Relative-threshold overload: trunc_tol = kDefaultTruncRel * s_1.
inline SpectralFilter decompose(const SmoothingFilter& W) {
  detail::decompose_checks(W);
  Eigen::VectorXd evals;
  Eigen::MatrixXd evecs;
  detail::symmetric_eig(store_to_dense(W.weights), evals, evecs);
  const double tol = kDefaultTruncRel * std::max(evals[W.n - 1], 0.0);
  return detail::truncate_spectrum(W.n, evals, evecs, tol);
}

/// v^T M v for M = I - W (conventional) or (I - W) W^+ (induced), evaluated
/// spectrally. Callers apply their own rho/2 weighting.
inline double prior_quadratic(const SpectralFilter& F, PriorKind kind, const Image& v) {
  if (Index(v.size()) != F.n) throw ContractError("prior_quadratic: dimension mismatch");
  const Eigen::VectorXd t = F.eigvecs.transpose() * v.vec();
  if (kind == PriorKind::kConventional)
    return v.vec().squaredNorm() - (F.eigvals.array() * t.array().square()).sum();
  return (((1.0 - F.eigvals.array()) / F.eigvals.array()) * t.array().square()).sum();
}

/// Gradient 2 M v of the selected quadratic form.
inline Image prior_gradient(const SpectralFilter& F, PriorKind kind, const Image& v) {
  if (Index(v.size()) != F.n) throw ContractError("prior_gradient: dimension mismatch");
  const Eigen::VectorXd t = F.eigvecs.transpose() * v.vec();
  Eigen::VectorXd g;
  if (kind == PriorKind::kConventional) {
    g = 2.0 * (v.vec() - F.eigvecs * (F.eigvals.asDiagonal() * t));
  } else {
    const Eigen::VectorXd scaled =
        (((1.0 - F.eigvals.array()) / F.eigvals.array()) * t.array()).matrix();
    g = 2.0 * (F.eigvecs * scaled);
  }
  return from_vector(v.width, v.height, g);
}

/// Exact minimizer of (1/2) v^T C v + (1/2)||v - vtilde||^2 with
/// C = (I - W) W^+: shrinks each retained mode by its eigenvalue and keeps
/// the component outside range(W) untouched, i.e. U S U^T vt + (I - U U^T) vt.
/// Coincides with W vtilde at full rank.
inline Image prox_induced(const SpectralFilter& F, const Image& vtilde) {
  if (Index(vtilde.size()) != F.n) throw ContractError("prox_induced: dimension mismatch");
  const Eigen::VectorXd t = F.eigvecs.transpose() * vtilde.vec();
  const Eigen::VectorXd out =
      vtilde.vec() + F.eigvecs * ((F.eigvals.array() - 1.0) * t.array()).matrix();
  return from_vector(vtilde.width, vtilde.height, out);
}

}  // namespace iprior
