#include <Eigen/Dense>
#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <random>
#include <vector>

#include "iprior/errors.hpp"
#include "iprior/image.hpp"
#include "iprior/kernel.hpp"
#include "iprior/operators.hpp"
#include "iprior/sampling.hpp"
#include "iprior/shepard.hpp"
#include "iprior/sinkhorn.hpp"
#include "iprior/solvers.hpp"
#include "iprior/spectral.hpp"
#include "support/test_oracles.hpp"

using namespace iprior;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd dense_operator(const ForwardOperator& op) {
  const Index n = op.size();
  MatrixXd A(n, n);
  VectorXd e = VectorXd::Zero(n);
  for (Index j = 0; j < n; ++j) {
    e[j] = 1.0;
    A.col(j) = apply(op, e);
    e[j] = 0.0;
  }
  return A;
}

struct Triple {
  VectorXd x, v, u_bar;
};

/// Textbook ADMM executed with dense linear algebra only: exact x-update via
/// a factored normal matrix, exact v-update via the dense proximal system,
/// unscaled multiplier. Records the first `iters` triples.
std::vector<Triple> dense_raw_admm(const MatrixXd& A, const VectorXd& y, const MatrixXd& C,
                                   double rho, double lambda, const VectorXd& init, int iters) {
  const Index n = A.rows();
  const MatrixXd xfac = A.transpose() * A + rho * MatrixXd::Identity(n, n);
  const MatrixXd vfac = (lambda / rho) * C + MatrixXd::Identity(n, n);
  const Eigen::LDLT<MatrixXd> xsolve(xfac);
  const Eigen::LDLT<MatrixXd> vsolve(vfac);

  VectorXd x = init, v = init, u = VectorXd::Zero(n);
  std::vector<Triple> out;
  for (int k = 0; k < iters; ++k) {
    x = xsolve.solve(A.transpose() * y + rho * (v - u / rho));
    v = vsolve.solve(x + u / rho);
    u += rho * (x - v);
    out.push_back({x, v, u / rho});
  }
  return out;
}

}  // namespace

TEST_CASE("admm_pnp: constant data under a balanced filter converges immediately",
          "[admm]") {
  std::mt19937_64 gen(1);
  const Image guide = oracle::random_image(gen, 4, 4);
  KernelParams params;
  params.patch_radius = 1;
  params.h = 0.5;
  const SmoothingFilter W = sinkhorn_balance(build_kernel(guide, params), 1e-12, 100000);

  const Image y = Image::constant(4, 4, 0.6);
  const ForwardOperator A = make_mask_operator(bernoulli_mask(4, 4, 1.0, 0));
  SolveConfig cfg;
  cfg.rho = 1.0;
  cfg.tol = 1e-8;
  const SolveReport rep = admm_pnp(A, y, &W, cfg, y);
  REQUIRE(rep.converged);
  REQUIRE(rep.iterations == 1);  // constants are fixed points of W
  for (double v : rep.solution.data) REQUIRE(v == Catch::Approx(0.6).margin(1e-10));
}

TEST_CASE("admm_pnp: zero data from a zero start stays zero", "[admm]") {
  std::mt19937_64 gen(2);
  const SmoothingFilter W = oracle::wrap_filter(oracle::random_ds_matrix(gen, 16));
  const ForwardOperator A = make_mask_operator(bernoulli_mask(4, 4, 0.5, 3));
  SolveConfig cfg;
  cfg.rho = 0.7;
  const SolveReport rep = admm_pnp(A, Image::zeros(4, 4), &W, cfg, Image::zeros(4, 4));
  REQUIRE(rep.converged);
  REQUIRE(rep.iterations == 1);
  REQUIRE(rep.solution.vec().norm() == 0.0);
}

TEST_CASE("admm_pnp: fixed point solves the induced-prior problem", "[admm]") {
  std::mt19937_64 gen(3);
  for (int trial = 0; trial < 3; ++trial) {
    const Index n = 12;
    const MatrixXd Wm = oracle::random_ds_matrix(gen, n);
    const SmoothingFilter W = oracle::wrap_filter(Wm);
    const SpectralFilter F = decompose(W, 0.0);
    const ForwardOperator A = make_mask_operator(bernoulli_mask(4, 3, 0.5, 40 + trial));
    const VectorXd yv = oracle::random_vector(gen, n);
    const Image y = from_vector(4, 3, yv);

    SolveConfig cfg;
    cfg.rho = 0.5 + 0.5 * trial;
    cfg.tol = 1e-11;
    cfg.max_iters = 50000;
    const SolveReport pnp = admm_pnp(A, y, &W, cfg, Image::zeros(4, 3));
    REQUIRE(pnp.converged);

    const SolveReport cf = solve_closed_form(A, y, F, cfg);
    REQUIRE((pnp.solution.vec() - cf.solution.vec()).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("admm: raw and modular forms walk identical iterates when lambda equals rho",
          "[admm][equivalence]") {
  std::mt19937_64 gen(4);
  for (int trial = 0; trial < 5; ++trial) {
    const Index n = 6;
    const MatrixXd Wm = oracle::random_ds_matrix(gen, n);
    const SmoothingFilter W = oracle::wrap_filter(Wm);
    const SpectralFilter F = decompose(W, 0.0);
    REQUIRE(F.m == n);

    const ForwardOperator A = make_mask_operator(bernoulli_mask(3, 2, 0.5, 50 + trial));
    const VectorXd yv = oracle::random_vector(gen, n);
    const VectorXd initv = oracle::random_vector(gen, n);
    const Image y = from_vector(3, 2, yv);
    const Image init = from_vector(3, 2, initv);

    SolveConfig cfg;
    cfg.rho = 0.4 + 0.3 * trial;
    cfg.lambda = cfg.rho;
    cfg.max_iters = 20;
    cfg.tol = 1e-300;  // never reached: we want all 20 iterations

    std::vector<Triple> modular, raw;
    const auto capture = [](std::vector<Triple>& into) {
      return [&into](const AdmmState& st) { into.push_back({st.x, st.v, st.u_bar}); };
    };
    admm_pnp(A, y, &W, cfg, init, capture(modular));
    admm_raw(A, y, F, cfg, init, capture(raw));
    const std::vector<Triple> dense =
        dense_raw_admm(dense_operator(A), yv, oracle::induced_C(Wm), cfg.rho, cfg.lambda,
                       initv, 20);

    REQUIRE(modular.size() == 20);
    REQUIRE(raw.size() == 20);
    for (int k = 0; k < 20; ++k) {
      REQUIRE((modular[k].x - raw[k].x).cwiseAbs().maxCoeff() < 1e-12);
      REQUIRE((modular[k].v - raw[k].v).cwiseAbs().maxCoeff() < 1e-12);
      REQUIRE((modular[k].u_bar - raw[k].u_bar).cwiseAbs().maxCoeff() < 1e-12);
      REQUIRE((modular[k].x - dense[k].x).cwiseAbs().maxCoeff() < 1e-10);
      REQUIRE((modular[k].v - dense[k].v).cwiseAbs().maxCoeff() < 1e-10);
      REQUIRE((modular[k].u_bar - dense[k].u_bar).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
}

TEST_CASE("admm_raw: lambda different from rho shifts the effective shrinkage",
          "[admm]") {
  std::mt19937_64 gen(5);
  const Index n = 6;
  const MatrixXd Wm = oracle::random_ds_matrix(gen, n);
  const SpectralFilter F = decompose(oracle::wrap_filter(Wm), 0.0);
  const ForwardOperator A = make_mask_operator(bernoulli_mask(3, 2, 0.5, 60));
  const VectorXd yv = oracle::random_vector(gen, n);
  const VectorXd initv = oracle::random_vector(gen, n);
  const Image y = from_vector(3, 2, yv);
  const Image init = from_vector(3, 2, initv);

  SolveConfig cfg;
  cfg.rho = 1.0;
  cfg.lambda = 3.5;
  cfg.max_iters = 15;
  cfg.tol = 1e-300;

  std::vector<Triple> raw;
  admm_raw(A, y, F, cfg, init,
           [&raw](const AdmmState& st) { raw.push_back({st.x, st.v, st.u_bar}); });
  const std::vector<Triple> dense = dense_raw_admm(
      dense_operator(A), yv, oracle::induced_C(Wm), cfg.rho, cfg.lambda, initv, 15);
  REQUIRE(raw.size() == 15);
  for (int k = 0; k < 15; ++k) {
    REQUIRE((raw[k].x - dense[k].x).cwiseAbs().maxCoeff() < 1e-10);
    REQUIRE((raw[k].v - dense[k].v).cwiseAbs().maxCoeff() < 1e-10);
    REQUIRE((raw[k].u_bar - dense[k].u_bar).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("admm x-update: convolution path solves its subproblem exactly", "[admm]") {
  std::mt19937_64 gen(6);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::vector<double> stencil(9);
  for (double& v : stencil) v = u(gen);
  const ForwardOperator A = make_conv_operator(4, 4, 3, 3, stencil);
  const VectorXd yv = oracle::random_vector(gen, 16);
  const VectorXd xt = oracle::random_vector(gen, 16);
  const VectorXd aty = apply_adjoint(A, yv);
  const double rho = 0.8;

  VectorXd x = VectorXd::Zero(16);
  detail::admm_x_update(A, yv, aty, rho, xt, x);

  const MatrixXd Ad = dense_operator(A);
  const MatrixXd H = Ad.transpose() * Ad + rho * MatrixXd::Identity(16, 16);
  const VectorXd ref = H.ldlt().solve(aty + rho * xt);
  REQUIRE((x - ref).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("admm x-update: mask path is the elementwise blend", "[admm]") {
  std::mt19937_64 gen(7);
  const SamplingMask mask = bernoulli_mask(4, 2, 0.5, 8);
  const ForwardOperator A = make_mask_operator(mask);
  const VectorXd yv = oracle::random_vector(gen, 8);
  const VectorXd xt = oracle::random_vector(gen, 8);
  const VectorXd aty = apply_adjoint(A, yv);
  const double rho = 1.7;

  VectorXd x = VectorXd::Zero(8);
  detail::admm_x_update(A, yv, aty, rho, xt, x);
  for (Index i = 0; i < 8; ++i) {
    const double a = mask.keep[std::size_t(i)] ? 1.0 : 0.0;
    REQUIRE(x[i] == (a * yv[i] + rho * xt[i]) / (a + rho));
  }
}

TEST_CASE("admm_pnp: adaptive mode rebuilds from the iterate and warns", "[admm][adaptive]") {
  std::mt19937_64 gen(8);
  const Image truth = oracle::random_image(gen, 4, 4);
  const SamplingMask mask = bernoulli_mask(4, 4, 0.6, 9);
  const Image y = degrade(truth, mask, NoiseSpec{0.0, 0});
  const ForwardOperator A = make_mask_operator(mask);
  const Image init = shepard_interpolate(y, mask);

  RebuildRecipe recipe;
  recipe.kernel.patch_radius = 1;
  recipe.kernel.h = 0.5;
  SolveConfig cfg;
  cfg.rho = 1.0;
  cfg.tol = 1e-5;
  cfg.max_iters = 300;
  cfg.w_mode = SolveConfig::WMode::kAdaptive;

  const SolveReport rep = admm_pnp(A, y, recipe, cfg, init);
  REQUIRE(rep.solution.all_finite());
  bool warned = false;
  for (const auto& w : rep.warnings)
    if (w.find("no convergence guarantee") != std::string::npos) warned = true;
  REQUIRE(warned);
}

TEST_CASE("admm_pnp: handle and mode must agree", "[admm]") {
  std::mt19937_64 gen(9);
  const SmoothingFilter W = oracle::wrap_filter(oracle::random_ds_matrix(gen, 16));
  const ForwardOperator A = make_mask_operator(bernoulli_mask(4, 4, 0.5, 10));
  const Image y = Image::zeros(4, 4);
  SolveConfig fixed_cfg;

  REQUIRE_THROWS_AS(admm_pnp(A, y, RebuildRecipe{}, fixed_cfg, y), ContractError);
  REQUIRE_THROWS_AS(
      admm_pnp(A, y, static_cast<const SmoothingFilter*>(nullptr), fixed_cfg, y),
      ContractError);

  SolveConfig adaptive_cfg;
  adaptive_cfg.w_mode = SolveConfig::WMode::kAdaptive;
  REQUIRE_THROWS_AS(admm_pnp(A, y, &W, adaptive_cfg, y), ContractError);
}

TEST_CASE("admm: configuration contracts", "[admm]") {
  std::mt19937_64 gen(10);
  const SmoothingFilter W = oracle::wrap_filter(oracle::random_ds_matrix(gen, 16));
  const SpectralFilter F = decompose(W, 0.0);
  const ForwardOperator A = make_mask_operator(bernoulli_mask(4, 4, 0.5, 11));
  const Image y = Image::zeros(4, 4);

  SolveConfig cfg;
  cfg.rho = 0.0;
  REQUIRE_THROWS_AS(admm_pnp(A, y, &W, cfg, y), ContractError);
  REQUIRE_THROWS_AS(admm_raw(A, y, F, cfg, y), ContractError);
  cfg.rho = 1.0;
  cfg.tol = 0.0;
  REQUIRE_THROWS_AS(admm_pnp(A, y, &W, cfg, y), ContractError);
  cfg.tol = 1e-6;
  cfg.lambda = 0.0;
  REQUIRE_THROWS_AS(admm_raw(A, y, F, cfg, y), ContractError);
  cfg.lambda = 1.0;
  REQUIRE_THROWS_AS(admm_pnp(A, Image::zeros(3, 3), &W, cfg, y), ContractError);
}

TEST_CASE("admm: iteration cap reports non-convergence with history", "[admm]") {
  std::mt19937_64 gen(11);
  const MatrixXd Wm = oracle::random_ds_matrix(gen, 16);
  const SmoothingFilter W = oracle::wrap_filter(Wm);
  const ForwardOperator A = make_mask_operator(bernoulli_mask(4, 4, 0.5, 12));
  const Image y = from_vector(4, 4, oracle::random_vector(gen, 16));

  SolveConfig cfg;
  cfg.rho = 1.0;
  cfg.tol = 1e-300;
  cfg.max_iters = 3;
  const SolveReport rep = admm_pnp(A, y, &W, cfg, Image::zeros(4, 4));
  REQUIRE_FALSE(rep.converged);
  REQUIRE(rep.iterations == 3);
  REQUIRE(rep.residual_history.size() == 3);
  REQUIRE_FALSE(rep.warnings.empty());
  REQUIRE(std::isnan(rep.objective_value));  // no spectral form to evaluate against
  REQUIRE(rep.solver == "admm_pnp");
}
