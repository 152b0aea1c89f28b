#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "iprior/errors.hpp"
#include "iprior/image.hpp"
#include "iprior/kernel.hpp"
#include "iprior/operators.hpp"
#include "iprior/sinkhorn.hpp"
#include "iprior/spectral.hpp"

namespace iprior {

struct SolveConfig {
  double rho = 1.0;     // penalty / prior weight
  double lambda = 1.0;  // raw-ADMM regularization weight; the modular path needs none
  int max_iters = 500;
  double tol = 1e-6;
  enum class WMode { kFixed, kAdaptive } w_mode = WMode::kFixed;
};

struct SolveReport {
  Image solution;
  int iterations = 0;
  std::vector<double> residual_history;  // relative; meaning depends on solver
  double objective_value = std::numeric_limits<double>::quiet_NaN();
  double wall_time = 0.0;  // seconds
  std::string solver;
  bool converged = true;
  std::vector<std::string> warnings;
};

/// 1/2 ||Ax - y||^2 + (rho/2) x^T M x with M selected by kind.
inline double objective(const ForwardOperator& A, const Image& y, const SpectralFilter& F,
                        PriorKind kind, double rho, const Image& x) {
  if (y.width != x.width || y.height != x.height)
    throw ContractError("objective: dimension mismatch between x and y");
  const double data = 0.5 * (apply(A, Eigen::VectorXd(x.vec())) - y.vec()).squaredNorm();
  return data + 0.5 * rho * prior_quadratic(F, kind, x);
}

namespace detail {

struct Stopwatch {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

struct CgOutcome {
  Eigen::VectorXd x;
  int iterations = 0;
  bool converged = false;
  std::vector<double> residuals;  // ||r|| / ||b|| after each iteration
};

/// Plain conjugate gradient for SPD systems, matrix-free. Stops at
/// ||r|| <= tol * ||b||. Nonpositive curvature means the operator violated
/// the SPD contract; that is reported, not papered over.
inline CgOutcome cg(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& matvec,
                    const Eigen::VectorXd& b, double tol, int max_iters,
                    const Eigen::VectorXd* x0 = nullptr) {
  CgOutcome out;
  const double bnorm = b.norm();
  if (bnorm == 0.0) {
    out.x = Eigen::VectorXd::Zero(b.size());
    out.converged = true;
    return out;
  }
  out.x = x0 ? *x0 : Eigen::VectorXd::Zero(b.size());
  Eigen::VectorXd r = b - matvec(out.x);
  if (r.norm() <= tol * bnorm) {
    out.converged = true;
    return out;
  }
  Eigen::VectorXd p = r;
  double rs = r.squaredNorm();
  for (int k = 1; k <= max_iters; ++k) {
    const Eigen::VectorXd Ap = matvec(p);
    const double curvature = p.dot(Ap);
    if (curvature <= 1e-14 * p.squaredNorm())
      throw NumericError("cg: nonpositive curvature at iteration " + std::to_string(k) +
                         "; system operator is not positive definite");
    const double alpha = rs / curvature;
    out.x += alpha * p;
    r -= alpha * Ap;
    const double rs_next = r.squaredNorm();
    out.iterations = k;
    out.residuals.push_back(std::sqrt(rs_next) / bnorm);
    if (std::sqrt(rs_next) <= tol * bnorm) {
      out.converged = true;
      return out;
    }
    p = r + (rs_next / rs) * p;
    rs = rs_next;
  }
  return out;
}

/// Applies I - U S U^T (conventional Laplacian) or (I - W) W^+ = U diag((1-s)/s) U^T
/// (induced) through the truncated spectral representation.
inline Eigen::VectorXd apply_prior_matrix(const SpectralFilter& F, PriorKind kind,
                                          const Eigen::VectorXd& v) {
  const Eigen::VectorXd t = F.eigvecs.transpose() * v;
  if (kind == PriorKind::kConventional)
    return v - F.eigvecs * (F.eigvals.asDiagonal() * t);
  return F.eigvecs * (((1.0 - F.eigvals.array()) / F.eigvals.array()) * t.array()).matrix();
}

/// Gram matrix B = (AV)^T (AV) of the forward operator restricted to the
/// retained eigenbasis; rho-independent, so a rho sweep builds it once.
inline Eigen::MatrixXd restricted_gram(const ForwardOperator& A, const SpectralFilter& F) {
  Eigen::MatrixXd AV(F.n, F.m);
  for (Index j = 0; j < F.m; ++j) AV.col(j) = apply(A, Eigen::VectorXd(F.eigvecs.col(j)));
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(F.m, F.m);
  B.selfadjointView<Eigen::Lower>().rankUpdate(AV.transpose());
  B.triangularView<Eigen::StrictlyUpper>() = B.transpose();
  return B;
}

struct ClosedFormSolve {
  Eigen::VectorXd q;
  double rel_res = 0.0;
  bool used_pinv = false;
};

/// Assembles M = S B S + rho S(I - S) and solves M q = rhs by LDLT, falling
/// back to a spectral pseudo-inverse when the factorization residual exceeds
/// 1e-8 (singular or near-singular system).
inline ClosedFormSolve closed_form_core(const Eigen::MatrixXd& B, const Eigen::VectorXd& s,
                                        const Eigen::VectorXd& rhs, double rho) {
  const Index m = s.size();
  Eigen::MatrixXd M = s.asDiagonal() * B * s.asDiagonal();
  for (Index i = 0; i < m; ++i) M(i, i) += rho * s[i] * (1.0 - s[i]);

  ClosedFormSolve out;
  const double rhs_norm = std::max(rhs.norm(), std::numeric_limits<double>::min());
  Eigen::LDLT<Eigen::MatrixXd> ldlt(M);
  out.rel_res = std::numeric_limits<double>::infinity();
  if (ldlt.info() == Eigen::Success) {
    out.q = ldlt.solve(rhs);
    out.rel_res = (M * out.q - rhs).norm() / rhs_norm;
  }
  if (!(out.rel_res <= 1e-8)) {
    Eigen::VectorXd evals;
    Eigen::MatrixXd evecs;
    symmetric_eig(M, evals, evecs);
    const double cutoff = 1e-12 * std::max(std::abs(evals[0]), std::abs(evals[m - 1]));
    const Eigen::VectorXd proj = evecs.transpose() * rhs;
    Eigen::VectorXd scaled = Eigen::VectorXd::Zero(m);
    for (Index i = 0; i < m; ++i)
      if (std::abs(evals[i]) > cutoff) scaled[i] = proj[i] / evals[i];
    out.q = evecs * scaled;
    out.used_pinv = true;
    out.rel_res = (M * out.q - rhs).norm() / rhs_norm;
  }
  return out;
}

}  // namespace detail

/// Rank-truncated closed form: with x = V S q restricted to range(W), the
/// minimizer of 1/2||Ax-y||^2 + (rho/2) x^T (I-W)W^+ x solves the m x m system
///   (S V^T A^T A V S + rho S(I - S)) q = S V^T A^T y.
/// Solved by LDLT; if the factorization's relative residual exceeds 1e-8 the
/// system is re-solved through a spectral pseudo-inverse and a warning is
/// recorded.
inline SolveReport solve_closed_form(const ForwardOperator& A, const Image& y,
                                     const SpectralFilter& F, const SolveConfig& cfg) {
  if (F.m == 0) throw ContractError("solve_closed_form: spectral filter has rank 0");
  if (Index(y.size()) != F.n || A.size() != F.n)
    throw ContractError("solve_closed_form: dimension mismatch");
  if (!(cfg.rho >= 0.0)) throw ContractError("solve_closed_form: rho must be >= 0");

  detail::Stopwatch timer;
  SolveReport rep;
  rep.solver = "closed_form";

  const Eigen::MatrixXd B = detail::restricted_gram(A, F);
  const Eigen::VectorXd aty = apply_adjoint(A, Eigen::VectorXd(y.vec()));
  const Eigen::VectorXd rhs = F.eigvals.asDiagonal() * (F.eigvecs.transpose() * aty);

  const detail::ClosedFormSolve sol = detail::closed_form_core(B, F.eigvals, rhs, cfg.rho);
  if (sol.used_pinv) {
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "closed_form: factorization residual above 1e-8, used spectral "
                  "pseudo-inverse (final residual %.3e)",
                  sol.rel_res);
    rep.warnings.push_back(buf);
  }

  const Eigen::VectorXd x = F.eigvecs * (F.eigvals.asDiagonal() * sol.q);
  rep.solution = from_vector(y.width, y.height, x);
  rep.iterations = 1;
  rep.residual_history.push_back(sol.rel_res);
  rep.objective_value = objective(A, y, F, PriorKind::kInduced, cfg.rho, rep.solution);
  rep.wall_time = timer.seconds();
  return rep;
}

/// Matrix-free conjugate gradient on the normal equation
/// (A^T A + rho M) x = A^T y with M the selected prior matrix, applied
/// spectrally. Unrestricted (no range(W) projection). An optional init warm
/// starts the iteration.
inline SolveReport solve_cg(const ForwardOperator& A, const Image& y, const SpectralFilter& F,
                            PriorKind kind, const SolveConfig& cfg,
                            const Image* init = nullptr) {
  if (Index(y.size()) != F.n || A.size() != F.n)
    throw ContractError("solve_cg: dimension mismatch");
  if (!(cfg.rho >= 0.0)) throw ContractError("solve_cg: rho must be >= 0");
  if (!(cfg.tol > 0.0)) throw ContractError("solve_cg: tol must be > 0");
  if (init && Index(init->size()) != F.n)
    throw ContractError("solve_cg: init dimension mismatch");

  detail::Stopwatch timer;
  SolveReport rep;
  rep.solver = "cg";

  const double rho = cfg.rho;
  auto matvec = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
    Eigen::VectorXd out = apply_gram(A, v);
    if (rho != 0.0) out += rho * detail::apply_prior_matrix(F, kind, v);
    return out;
  };
  const Eigen::VectorXd b = apply_adjoint(A, Eigen::VectorXd(y.vec()));
  std::optional<Eigen::VectorXd> x0;
  if (init) x0 = init->vec();

  const detail::CgOutcome out =
      detail::cg(matvec, b, cfg.tol, cfg.max_iters, x0 ? &*x0 : nullptr);
  rep.solution = from_vector(y.width, y.height, out.x);
  rep.iterations = out.iterations;
  rep.residual_history = out.residuals;
  rep.converged = out.converged;
  if (!out.converged) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "cg: stopped at max_iters=%d with residual %.3e",
                  cfg.max_iters, out.residuals.empty() ? 1.0 : out.residuals.back());
    rep.warnings.push_back(buf);
  }
  rep.objective_value = objective(A, y, F, kind, cfg.rho, rep.solution);
  rep.wall_time = timer.seconds();
  return rep;
}

/// Rebuild recipe for ADAPTIVE Plug-and-Play: the filter is reconstructed
/// from the current iterate before every denoising step.
struct RebuildRecipe {
  KernelParams kernel{};
  double sinkhorn_tol = 1e-8;
  int sinkhorn_max_iters = 10000;
};

/// Either a fixed balanced filter or the recipe to rebuild one per iteration.
using DenoiserHandle = std::variant<const SmoothingFilter*, RebuildRecipe>;

/// Iterate triple exposed to observers after every ADMM step.
struct AdmmState {
  int k = 0;
  Eigen::VectorXd x, v, u_bar;  // u_bar is the scaled multiplier u/rho
  std::vector<double> primal_residual;  // ||x - v|| history, relative
};

using AdmmObserver = std::function<void(const AdmmState&)>;

namespace detail {

/// x-update shared by both ADMM forms:
/// argmin 1/2||Ax - y||^2 + (rho/2)||x - xt||^2. Elementwise for MASK,
/// inner CG (tol 1e-10, warm started from the previous x) for CONV2D.
inline void admm_x_update(const ForwardOperator& A, const Eigen::VectorXd& y,
                          const Eigen::VectorXd& aty, double rho, const Eigen::VectorXd& xt,
                          Eigen::VectorXd& x) {
  if (A.kind == ForwardOperator::Kind::kMask) {
    for (Index i = 0; i < x.size(); ++i) {
      const double a = A.keep[i] ? 1.0 : 0.0;
      x[i] = (a * y[i] + rho * xt[i]) / (a + rho);
    }
    return;
  }
  auto matvec = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
    return apply_gram(A, v) + rho * v;
  };
  const Eigen::VectorXd b = aty + rho * xt;
  const CgOutcome out = cg(matvec, b, 1e-10, static_cast<int>(x.size()), &x);
  x = out.x;
}

inline double admm_residual(const Eigen::VectorXd& x, const Eigen::VectorXd& v) {
  const double num = (x - v).norm();
  if (num == 0.0) return 0.0;
  return num / std::max(x.norm(), std::numeric_limits<double>::min());
}

}  // namespace detail

/// Plug-and-Play ADMM: the v-update is one pass of the smoothing filter,
///   x^(k+1) = argmin 1/2||Ax-y||^2 + (rho/2)||x - (v-u)||^2
///   v^(k+1) = W (x^(k+1) + u^(k))
///   u^(k+1) = u^(k) + x^(k+1) - v^(k+1)          (scaled multiplier)
/// starting from x = v = init, u = 0, stopping at ||x-v||/||x|| <= tol.
/// For invertible W this fixed point minimizes
/// 1/2||Ax-y||^2 + (rho/2) x^T (I-W) W^{-1} x.
inline SolveReport admm_pnp(const ForwardOperator& A, const Image& y,
                            const DenoiserHandle& denoiser, const SolveConfig& cfg,
                            const Image& init, const AdmmObserver& observer = {}) {
  const Index n = A.size();
  if (Index(y.size()) != n || Index(init.size()) != n)
    throw ContractError("admm_pnp: dimension mismatch");
  if (!(cfg.rho > 0.0)) throw ContractError("admm_pnp: rho must be > 0");
  if (!(cfg.tol > 0.0)) throw ContractError("admm_pnp: tol must be > 0");
  if (cfg.max_iters < 1) throw ContractError("admm_pnp: max_iters must be >= 1");

  const SmoothingFilter* fixed = nullptr;
  const RebuildRecipe* recipe = nullptr;
  if (cfg.w_mode == SolveConfig::WMode::kFixed) {
    const auto* p = std::get_if<const SmoothingFilter*>(&denoiser);
    if (!p || !*p) throw ContractError("admm_pnp: FIXED mode needs a smoothing filter");
    fixed = *p;
    if (fixed->n != n) throw ContractError("admm_pnp: filter dimension mismatch");
  } else {
    recipe = std::get_if<RebuildRecipe>(&denoiser);
    if (!recipe) throw ContractError("admm_pnp: ADAPTIVE mode needs a rebuild recipe");
  }

  detail::Stopwatch timer;
  SolveReport rep;
  rep.solver = "admm_pnp";

  AdmmState st;
  st.x = init.vec();
  st.v = st.x;
  st.u_bar = Eigen::VectorXd::Zero(n);
  const Eigen::VectorXd yv = y.vec();
  const Eigen::VectorXd aty = apply_adjoint(A, yv);

  bool converged = false;
  int warned_sinkhorn = 0;
  while (st.k < cfg.max_iters) {
    const Eigen::VectorXd xt = st.v - st.u_bar;
    detail::admm_x_update(A, yv, aty, cfg.rho, xt, st.x);
    const Eigen::VectorXd vt = st.x + st.u_bar;
    if (fixed) {
      st.v = apply(*fixed, vt);
    } else {
      KernelParams kp = recipe->kernel;
      kp.guide_tag = "iterate";
      const Image guide = from_vector(y.width, y.height, st.v);
      const KernelMatrix K = build_kernel(guide, kp);
      const SmoothingFilter W =
          sinkhorn_balance(K, recipe->sinkhorn_tol, recipe->sinkhorn_max_iters);
      if (!W.converged && warned_sinkhorn++ == 0)
        rep.warnings.push_back("admm_pnp: adaptive filter balancing hit its iteration cap");
      st.v = apply(W, vt);
    }
    st.u_bar += st.x - st.v;
    ++st.k;
    const double res = detail::admm_residual(st.x, st.v);
    st.primal_residual.push_back(res);
    if (observer) observer(st);
    if (res <= cfg.tol) {
      converged = true;
      break;
    }
  }

  rep.solution = from_vector(y.width, y.height, st.x);
  rep.iterations = st.k;
  rep.residual_history = st.primal_residual;
  rep.converged = converged;
  if (!converged) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "admm_pnp: stopped at max_iters=%d with residual %.3e",
                  cfg.max_iters,
                  st.primal_residual.empty() ? 1.0 : st.primal_residual.back());
    rep.warnings.push_back(buf);
  }
  if (cfg.w_mode == SolveConfig::WMode::kAdaptive)
    rep.warnings.push_back("admm_pnp: ADAPTIVE mode carries no convergence guarantee");
  rep.wall_time = timer.seconds();
  return rep;
}

/// Textbook ADMM on f(x) = 1/2||Ax-y||^2, s(v) = 1/2 v^T C v with explicit
/// regularization weight lambda and UNSCALED multiplier u <- u + rho(x - v):
///   v^(k+1) solves ((lambda/rho) C + I) v = x^(k+1) + u^(k)/rho,
/// done exactly through the spectral representation (modes outside range(W)
/// pass through, C vanishes there). With lambda = rho the v-update equals one
/// pass of full-rank W, which is the modular form's denoiser. Exists as the
/// equivalence reference for admm_pnp.
inline SolveReport admm_raw(const ForwardOperator& A, const Image& y, const SpectralFilter& F,
                            const SolveConfig& cfg, const Image& init,
                            const AdmmObserver& observer = {}) {
  const Index n = A.size();
  if (Index(y.size()) != n || Index(init.size()) != n || F.n != n)
    throw ContractError("admm_raw: dimension mismatch");
  if (!(cfg.rho > 0.0)) throw ContractError("admm_raw: rho must be > 0");
  if (!(cfg.lambda > 0.0)) throw ContractError("admm_raw: lambda must be > 0");
  if (!(cfg.tol > 0.0)) throw ContractError("admm_raw: tol must be > 0");

  detail::Stopwatch timer;
  SolveReport rep;
  rep.solver = "admm_raw";

  // Per-mode shrink factors s_i / (s_i + c (1 - s_i)) for c = lambda/rho.
  const double c = cfg.lambda / cfg.rho;
  const Eigen::ArrayXd shrink =
      F.eigvals.array() / (F.eigvals.array() + c * (1.0 - F.eigvals.array()));

  Eigen::VectorXd x = init.vec();
  Eigen::VectorXd v = x;
  Eigen::VectorXd u = Eigen::VectorXd::Zero(n);  // unscaled
  const Eigen::VectorXd yv = y.vec();
  const Eigen::VectorXd aty = apply_adjoint(A, yv);

  AdmmState st;
  bool converged = false;
  while (st.k < cfg.max_iters) {
    const Eigen::VectorXd xt = v - u / cfg.rho;
    detail::admm_x_update(A, yv, aty, cfg.rho, xt, x);
    const Eigen::VectorXd vt = x + u / cfg.rho;
    const Eigen::VectorXd t = F.eigvecs.transpose() * vt;
    v = vt + F.eigvecs * ((shrink - 1.0) * t.array()).matrix();
    u += cfg.rho * (x - v);
    ++st.k;
    const double res = detail::admm_residual(x, v);
    st.primal_residual.push_back(res);
    if (observer) {
      st.x = x;
      st.v = v;
      st.u_bar = u / cfg.rho;
      observer(st);
    }
    if (res <= cfg.tol) {
      converged = true;
      break;
    }
  }

  rep.solution = from_vector(y.width, y.height, x);
  rep.iterations = st.k;
  rep.residual_history = st.primal_residual;
  rep.converged = converged;
  if (!converged)
    rep.warnings.push_back("admm_raw: stopped at max_iters without meeting tol");
  rep.objective_value = objective(A, y, F, PriorKind::kInduced, cfg.rho, rep.solution);
  rep.wall_time = timer.seconds();
  return rep;
}

/// Line-oriented key=value record; values round-trip exactly via %.17g.
inline void save_report(const SolveReport& rep, const std::string& path,
                        const std::string& residual_csv_path = "") {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  char buf[64];
  out << "solver=" << rep.solver << "\n";
  out << "iterations=" << rep.iterations << "\n";
  out << "converged=" << (rep.converged ? 1 : 0) << "\n";
  std::snprintf(buf, sizeof buf, "%.17g", rep.objective_value);
  out << "objective=" << buf << "\n";
  std::snprintf(buf, sizeof buf, "%.17g", rep.wall_time);
  out << "wall_time_seconds=" << buf << "\n";
  if (!rep.residual_history.empty()) {
    std::snprintf(buf, sizeof buf, "%.17g", rep.residual_history.back());
    out << "residual_final=" << buf << "\n";
  }
  for (const auto& w : rep.warnings) out << "warning=" << w << "\n";
  if (!out) throw IoError("write failed for " + path);

  if (!residual_csv_path.empty()) {
    std::ofstream csv(residual_csv_path, std::ios::trunc);
    if (!csv) throw IoError("cannot open " + residual_csv_path + " for writing");
    csv << "iteration,residual\n";
    for (std::size_t i = 0; i < rep.residual_history.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", rep.residual_history[i]);
      csv << (i + 1) << "," << buf << "\n";
    }
    if (!csv) throw IoError("write failed for " + residual_csv_path);
  }
}

}  // namespace iprior
