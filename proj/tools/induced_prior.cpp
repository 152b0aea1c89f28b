// Command-line surface: filter construction, inpainting solves, and the
// benchmark sweep. Exit codes: 0 success, 1 runtime/I-O/numeric failure,
// 2 usage or input-validation failure.

#include <cstdint>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "iprior/iprior.hpp"

extern "C" void openblas_set_num_threads(int);

namespace {

using namespace iprior;

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct GlobalOpts {
  std::uint64_t seed = 0;
  int threads = 1;
  bool verbose = false;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* threads_opt = nullptr;
};

/// Usage failure with a message that has already been fully formatted.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string shape(const Image& img) {
  return std::to_string(img.width) + "x" + std::to_string(img.height);
}

int parse_search_radius(const std::string& s) {
  if (s == "full") return kFullSearch;
  try {
    std::size_t pos = 0;
    const int r = std::stoi(s, &pos);
    if (pos != s.size() || r < 1) throw std::invalid_argument("");
    return r;
  } catch (const std::exception&) {
    throw UsageError("--search-radius must be 'full' or a positive integer, got '" + s + "'");
  }
}

int cmd_mask(const GlobalOpts& g, int width, int height, double ratio,
             const std::string& out) {
  std::cerr << "config: cmd=mask width=" << width << " height=" << height
            << " ratio=" << ratio << " seed=" << g.seed << " out=" << out << "\n";
  if (width < 1 || height < 1)
    throw UsageError("--width and --height must be positive, got " + std::to_string(width) +
                     "x" + std::to_string(height));
  if (!(ratio >= 0.0 && ratio <= 1.0))
    throw UsageError("--ratio must be within [0,1], got " + std::to_string(ratio));
  const SamplingMask mask = bernoulli_mask(width, height, ratio, g.seed);
  save_mask_pgm(mask, out);
  std::cout << "mask " << width << "x" << height << " kept=" << mask.kept_count() << "/"
            << std::size_t(width) * height << " seed=" << g.seed << "\n";
  return kExitOk;
}

int cmd_filter(const GlobalOpts& g, const std::string& guide_path, int patch_radius,
               const std::string& search_radius, double h, double tol, int max_iters,
               int crop, const std::string& out) {
  KernelParams kp;
  kp.patch_radius = patch_radius;
  kp.search_radius = parse_search_radius(search_radius);
  kp.h = h;
  std::cerr << "config: cmd=filter guide=" << guide_path << " patch_radius=" << patch_radius
            << " search_radius=" << search_radius << " h=" << h << " tol=" << tol
            << " max_iters=" << max_iters << " crop=" << crop << " out=" << out
            << " threads=" << g.threads << "\n";
  if (kp.patch_radius < 0) throw UsageError("--patch-radius must be >= 0");
  if (!(kp.h > 0.0)) throw UsageError("--h must be > 0");

  const Image guide = center_crop(load_pgm(guide_path), crop, crop);
  const Index n = Index(guide.width) * guide.height;
  if (kp.search_radius == kFullSearch && n > 16384)
    throw UsageError("full search on " + shape(guide) + " (n=" + std::to_string(n) +
                     ") needs a dense n x n kernel; pass --search-radius or --crop");

  const KernelMatrix K = build_kernel(guide, kp);
  const SmoothingFilter W = sinkhorn_balance(K, tol, max_iters);
  save_filter(W, out);
  std::cout << "filter n=" << W.n << " balance_residual=" << W.balance_residual
            << " sinkhorn_iterations=" << W.iterations
            << " storage=" << (W.dense() ? "dense" : "sparse") << "\n";
  if (!W.converged)
    std::cout << "WARN sinkhorn residual=" << W.balance_residual << "\n";
  return kExitOk;
}

int cmd_solve(const GlobalOpts& g, const std::string& y_path, const std::string& mask_path,
              const std::string& filter_path, const std::string& prior_name,
              const std::string& solver_choice, double rho, double tol, int max_iters,
              double trunc_tol, const std::string& out, const std::string& report_path) {
  std::cerr << "config: cmd=solve y=" << y_path << " mask=" << mask_path
            << " filter=" << filter_path << " prior=" << prior_name
            << " solver=" << solver_choice << " rho=" << rho << " tol=" << tol
            << " max_iters=" << max_iters << " trunc_tol=" << trunc_tol << " out=" << out
            << " report=" << (report_path.empty() ? "(none)" : report_path)
            << " threads=" << g.threads << "\n";
  if (!(rho > 0.0)) throw UsageError("--rho must be > 0, got " + std::to_string(rho));
  PriorKind prior;
  if (prior_name == "laplacian")
    prior = PriorKind::kConventional;
  else if (prior_name == "induced")
    prior = PriorKind::kInduced;
  else
    throw UsageError("--prior must be laplacian or induced, got '" + prior_name + "'");
  if (solver_choice != "closed" && solver_choice != "cg" && solver_choice != "admm")
    throw UsageError("--solver must be closed, cg, or admm, got '" + solver_choice + "'");

  const Image y = load_pgm(y_path);
  const SamplingMask mask = load_mask_pgm(mask_path);
  if (y.width != mask.width || y.height != mask.height)
    throw UsageError("image/mask dimension mismatch: --y is " + shape(y) + ", --mask is " +
                     std::to_string(mask.width) + "x" + std::to_string(mask.height));

  char magic[4] = {};
  {
    std::ifstream probe(filter_path, std::ios::binary);
    if (!probe) throw IoError("cannot open " + filter_path);
    probe.read(magic, 4);
  }
  const bool is_spectral = std::string(magic, 4) == "AIPS";

  SmoothingFilter W;
  SpectralFilter F;
  bool have_w = false, have_f = false;
  if (is_spectral) {
    F = load_spectral(filter_path);
    have_f = true;
  } else {
    W = load_filter(filter_path);
    have_w = true;
  }
  const Index n_filter = have_w ? W.n : F.n;
  if (n_filter != Index(y.size()))
    throw UsageError("filter/image dimension mismatch: filter n=" + std::to_string(n_filter) +
                     ", --y is " + shape(y) + " (n=" + std::to_string(y.size()) + ")");

  if (solver_choice == "closed" && have_w && !W.dense())
    throw UsageError(
        "--solver closed needs a dense (spectral) filter; this cache is windowed sparse, "
        "use --solver admm");
  if (solver_choice == "closed" && prior == PriorKind::kConventional)
    throw UsageError("--solver closed solves the induced prior only; use --solver cg");
  if (solver_choice == "admm" && !have_w)
    throw UsageError("--solver admm needs a filter cache (AIPW), not a spectral cache");
  if (solver_choice == "admm" && prior == PriorKind::kConventional)
    throw UsageError("--solver admm runs the induced (Plug-and-Play) prior only; use --solver cg");

  if ((solver_choice == "closed" || solver_choice == "cg") && !have_f) {
    F = trunc_tol >= 0.0 ? decompose(W, trunc_tol) : decompose(W);
    have_f = true;
    if (g.verbose)
      std::cerr << "decomposed filter: m=" << F.m << " of n=" << F.n
                << " negative_discarded=" << F.negative_discarded << "\n";
  }

  const ForwardOperator A = make_mask_operator(mask);
  SolveConfig cfg;
  cfg.rho = rho;
  cfg.tol = tol;
  cfg.max_iters = max_iters;

  SolveReport rep;
  if (solver_choice == "closed") {
    rep = solve_closed_form(A, y, F, cfg);
  } else if (solver_choice == "cg") {
    rep = solve_cg(A, y, F, prior, cfg);
  } else {
    const Image init = shepard_interpolate(y, mask);
    DenoiserHandle handle = &W;
    rep = admm_pnp(A, y, handle, cfg, init);
  }

  save_pgm(clamp01(rep.solution), out);
  if (!report_path.empty()) save_report(rep, report_path);
  std::cout << "solve solver=" << rep.solver << " iterations=" << rep.iterations
            << " converged=" << (rep.converged ? 1 : 0)
            << " objective=" << rep.objective_value << "\n";
  for (const auto& warn : rep.warnings) std::cout << "WARN " << warn << "\n";
  return kExitOk;
}

int cmd_experiment(GlobalOpts& g, const std::string& spec_path, const std::string& out_csv) {
  SpecParseResult parsed;
  try {
    parsed = parse_experiment_spec_file(spec_path);
  } catch (const ParseError& e) {
    throw UsageError(e.what());
  }
  ExperimentSpec& spec = parsed.spec;
  for (const auto& warn : parsed.warnings) std::cerr << "WARN " << warn << "\n";
  if (g.seed_opt->count() > 0) spec.seed = g.seed;
  if (g.threads_opt->count() > 0) spec.threads = g.threads;
  openblas_set_num_threads(spec.threads);

  std::cerr << "config: cmd=experiment spec=" << spec_path << " out_csv=" << out_csv
            << " image=" << spec.image_path << " crop=" << spec.crop_width << "x"
            << spec.crop_height << " sigma=" << spec.sigma << " seed=" << spec.seed
            << " solver=" << solver_name(spec.solver)
            << " fractions=" << spec.missing_fractions.size()
            << " rhos=" << spec.rho_grid.size() << " threads=" << spec.threads << "\n";

  const ExperimentReport rep =
      spec.priors.size() > 1 ? compare_priors(spec) : run_experiment(spec);
  for (const auto& warn : rep.warnings) std::cerr << "WARN " << warn << "\n";
  emit_csv(rep, out_csv);
  std::cout << "experiment rows=" << rep.rows.size() << " best_rows=" << rep.best.size()
            << " csv=" << out_csv << "\n";
  for (const auto& b : rep.best) {
    std::ostringstream os;
    os << "best missing=" << b.missing << " w_source=" << w_source_name(b.w_source)
       << " prior=" << prior_name(b.prior) << " psnr_db=" << b.best_psnr
       << " rho=" << b.best_rho;
    std::cout << os.str() << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Symmetric smoothing filters, their induced quadratic prior, and inpainting "
               "solvers built on them"};
  app.require_subcommand(1);

  GlobalOpts g;
  g.seed_opt = app.add_option("--seed", g.seed, "RNG seed for randomized commands")
                   ->capture_default_str();
  g.threads_opt = app.add_option("--threads", g.threads, "BLAS/worker thread budget")
                      ->envname("INDUCED_PRIOR_THREADS")
                      ->capture_default_str();
  app.add_flag("--verbose", g.verbose, "extra progress output on stderr");

  auto* mask_cmd = app.add_subcommand("mask", "generate a Bernoulli sampling mask PGM");
  mask_cmd->fallthrough();
  int m_width = 0, m_height = 0;
  double m_ratio = -1.0;
  std::string m_out;
  mask_cmd->add_option("--width", m_width, "mask width in pixels")->required();
  mask_cmd->add_option("--height", m_height, "mask height in pixels")->required();
  mask_cmd->add_option("--ratio", m_ratio, "keep probability in [0,1]")->required();
  mask_cmd->add_option("--out", m_out, "output mask PGM path")->required();

  auto* filter_cmd =
      app.add_subcommand("filter", "build a balanced smoothing filter from a guide image");
  filter_cmd->fallthrough();
  // --h (kernel bandwidth) would collide with the default -h help short name.
  filter_cmd->set_help_flag("--help", "print this help message and exit");
  std::string f_guide, f_search = "full", f_out;
  int f_patch = 2, f_max_iters = 10000, f_crop = 0;
  double f_h = 0.5, f_tol = 1e-8;
  filter_cmd->add_option("--guide", f_guide, "guide image (PGM)")->required();
  filter_cmd->add_option("--patch-radius", f_patch, "patch radius for the similarity kernel")
      ->capture_default_str();
  filter_cmd->add_option("--search-radius", f_search, "'full' or a window radius")
      ->capture_default_str();
  filter_cmd->add_option("--h", f_h, "kernel bandwidth")->capture_default_str();
  filter_cmd->add_option("--tol", f_tol, "balancing tolerance")->capture_default_str();
  filter_cmd->add_option("--max-iters", f_max_iters, "balancing iteration cap")
      ->capture_default_str();
  filter_cmd->add_option("--crop", f_crop, "center-crop the guide to NxN first (0 = off)")
      ->capture_default_str();
  filter_cmd->add_option("--out", f_out, "output filter cache path (.aipw)")->required();

  auto* solve_cmd = app.add_subcommand("solve", "inpaint an observed image");
  solve_cmd->fallthrough();
  std::string s_y, s_mask, s_filter, s_prior = "induced", s_solver = "closed", s_out,
              s_report;
  double s_rho = 1.0, s_tol = 1e-6, s_trunc = -1.0;
  int s_max_iters = 500;
  solve_cmd->add_option("--y", s_y, "observed image (PGM)")->required();
  solve_cmd->add_option("--mask", s_mask, "sampling mask PGM (255 = observed)")->required();
  solve_cmd->add_option("--filter", s_filter, "filter cache (.aipw) or spectral cache (.aips)")
      ->required();
  solve_cmd->add_option("--prior", s_prior, "laplacian | induced")->capture_default_str();
  solve_cmd->add_option("--solver", s_solver, "closed | cg | admm")->capture_default_str();
  solve_cmd->add_option("--rho", s_rho, "prior weight / ADMM penalty")->capture_default_str();
  solve_cmd->add_option("--tol", s_tol, "iterative solver tolerance")->capture_default_str();
  solve_cmd->add_option("--max-iters", s_max_iters, "iterative solver cap")
      ->capture_default_str();
  solve_cmd->add_option("--trunc-tol", s_trunc,
                        "absolute spectral truncation threshold (negative = relative default)")
      ->capture_default_str();
  solve_cmd->add_option("--out", s_out, "output reconstruction PGM")->required();
  solve_cmd->add_option("--report", s_report, "solve report text file")->capture_default_str();

  auto* exp_cmd = app.add_subcommand("experiment", "run a benchmark sweep from a spec file");
  exp_cmd->fallthrough();
  std::string e_spec, e_csv;
  exp_cmd->add_option("--spec", e_spec, "key=value experiment spec file")->required();
  exp_cmd->add_option("--out-csv", e_csv, "output CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  openblas_set_num_threads(g.threads < 1 ? 1 : g.threads);

  try {
    if (*mask_cmd) return cmd_mask(g, m_width, m_height, m_ratio, m_out);
    if (*filter_cmd)
      return cmd_filter(g, f_guide, f_patch, f_search, f_h, f_tol, f_max_iters, f_crop, f_out);
    if (*solve_cmd)
      return cmd_solve(g, s_y, s_mask, s_filter, s_prior, s_solver, s_rho, s_tol, s_max_iters,
                       s_trunc, s_out, s_report);
    if (*exp_cmd) return cmd_experiment(g, e_spec, e_csv);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
