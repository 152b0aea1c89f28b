#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "iprior/errors.hpp"
#include "iprior/image.hpp"
#include "iprior/kernel.hpp"
#include "iprior/operators.hpp"
#include "iprior/pgm.hpp"
#include "iprior/rng.hpp"
#include "iprior/sampling.hpp"
#include "iprior/shepard.hpp"
#include "iprior/sinkhorn.hpp"
#include "iprior/solvers.hpp"
#include "iprior/spectral.hpp"
#include "iprior/version.hpp"

namespace iprior {

enum class WSource { kOracle, kEstimated };
enum class SolverChoice { kClosedForm, kCg, kAdmm };

inline const char* w_source_name(WSource s) {
  return s == WSource::kOracle ? "oracle" : "estimated";
}

inline const char* solver_name(SolverChoice s) {
  switch (s) {
    case SolverChoice::kClosedForm: return "closed";
    case SolverChoice::kCg: return "cg";
    default: return "admm";
  }
}

/// 15 log-spaced points in [1e-3, 1e2].
inline std::vector<double> default_rho_grid() {
  std::vector<double> g(15);
  for (int i = 0; i < 15; ++i) g[i] = std::pow(10.0, -3.0 + 5.0 * i / 14.0);
  return g;
}

/// Full description of one inpainting benchmark run. missing_fractions are
/// 1 - (sampling ratio). Sub-seeds for mask and noise derive from seed and
/// the fraction index only, so every (source, prior) arm of one fraction sees
/// bit-identical data.
struct ExperimentSpec {
  std::string image_path;
  std::vector<double> missing_fractions{0.2, 0.4, 0.6, 0.8};
  double sigma = 0.05;
  std::vector<WSource> w_sources{WSource::kOracle};
  std::vector<PriorKind> priors{PriorKind::kInduced};
  SolverChoice solver = SolverChoice::kClosedForm;
  std::vector<double> rho_grid = default_rho_grid();
  KernelParams kernel{};
  std::uint64_t seed = 0;
  int crop_width = 0;   // 0 keeps the full image
  int crop_height = 0;
  double trunc_rel = kDefaultTruncRel;
  double sinkhorn_tol = 1e-8;
  int sinkhorn_max_iters = 10000;
  double solver_tol = 1e-6;
  int solver_max_iters = 2000;
  int threads = 1;
};

struct SweepRow {
  double missing = 0.0;
  WSource w_source = WSource::kOracle;
  PriorKind prior = PriorKind::kInduced;
  double rho = 0.0;
  double psnr_db = std::numeric_limits<double>::quiet_NaN();
  bool failed = false;
  std::string error;
};

struct BestRow {
  double missing = 0.0;
  WSource w_source = WSource::kOracle;
  PriorKind prior = PriorKind::kInduced;
  double best_psnr = std::numeric_limits<double>::quiet_NaN();
  double best_rho = std::numeric_limits<double>::quiet_NaN();
};

struct ExperimentReport {
  std::vector<SweepRow> rows;   // generation order: (fraction, source, prior, rho)
  std::vector<BestRow> best;
  std::vector<std::string> metadata;  // "key=value" strings, emitted as # lines
  std::vector<std::string> warnings;
};

namespace detail {

inline std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void validate_spec(const ExperimentSpec& spec) {
  if (spec.image_path.empty()) throw ContractError("experiment: image path is required");
  if (spec.missing_fractions.empty())
    throw ContractError("experiment: at least one missing fraction is required");
  for (double f : spec.missing_fractions)
    if (!(f >= 0.0 && f < 1.0))
      throw ContractError("experiment: missing fraction " + fmt_g(f) + " outside [0,1)");
  if (spec.rho_grid.empty()) throw ContractError("experiment: rho grid is empty");
  for (double r : spec.rho_grid)
    if (!(r > 0.0)) throw ContractError("experiment: rho " + fmt_g(r) + " must be > 0");
  if (!(spec.sigma >= 0.0)) throw ContractError("experiment: sigma must be >= 0");
  if (spec.w_sources.empty() || spec.priors.empty())
    throw ContractError("experiment: sources and priors must be nonempty");
}

/// One (fraction, source) lane: the filter plus rho-independent solver state.
struct Lane {
  SmoothingFilter W;
  SpectralFilter F;
  bool have_spectral = false;
  Eigen::MatrixXd B;          // restricted gram, closed-form sweeps only
  Eigen::VectorXd rhs;        // S V^T A^T y
  bool have_gram = false;
  std::string build_error;    // nonempty: the whole lane failed
};

}  // namespace detail

/// Runs the sweep described by spec: per missing fraction, build a seeded
/// mask, degrade, build W once per (fraction, source) from the oracle or
/// estimated guide, then solve for every (prior, rho) and score PSNR against
/// the ground truth (solutions clamped to [0,1] first, matching the PGM
/// output path). Solver failures mark rows failed without aborting the sweep.
/// Deterministic for a fixed spec.
inline ExperimentReport run_experiment(const ExperimentSpec& spec) {
  detail::validate_spec(spec);

  const Image truth = center_crop(load_pgm(spec.image_path), spec.crop_width, spec.crop_height);
  const int w = truth.width, h = truth.height;

  ExperimentReport rep;
  auto meta = [&rep](const std::string& k, const std::string& v) {
    rep.metadata.push_back(k + "=" + v);
  };
  meta("version", kVersion);
  meta("image", spec.image_path);
  meta("crop", std::to_string(w) + "x" + std::to_string(h));
  meta("sigma", detail::fmt_g(spec.sigma));
  meta("seed", std::to_string(spec.seed));
  meta("rng", kRngName);
  meta("threads", std::to_string(spec.threads));
  meta("solver", solver_name(spec.solver));
  meta("patch_radius", std::to_string(spec.kernel.patch_radius));
  meta("search_radius", spec.kernel.search_radius == kFullSearch
                            ? std::string("full")
                            : std::to_string(spec.kernel.search_radius));
  meta("h", detail::fmt_g(spec.kernel.h));
  meta("trunc_tol_rel", detail::fmt_g(spec.trunc_rel));
  meta("rho_grid_size", std::to_string(spec.rho_grid.size()));

  std::vector<double> rhos = spec.rho_grid;
  std::sort(rhos.begin(), rhos.end());

  const bool need_spectral = spec.solver != SolverChoice::kAdmm ||
                             std::count(spec.priors.begin(), spec.priors.end(),
                                        PriorKind::kConventional) > 0;

  for (std::size_t fi = 0; fi < spec.missing_fractions.size(); ++fi) {
    const double missing = spec.missing_fractions[fi];
    const std::uint64_t mask_seed = derive_seed(spec.seed, 1, fi);
    const std::uint64_t noise_seed = derive_seed(spec.seed, 2, fi);

    const SamplingMask mask = bernoulli_mask(w, h, 1.0 - missing, mask_seed);
    const Image y = degrade(truth, mask, NoiseSpec{spec.sigma, noise_seed});
    const Image shepard_init = shepard_interpolate(y, mask);
    const ForwardOperator A = make_mask_operator(mask);

    for (WSource source : spec.w_sources) {
      detail::Lane lane;
      try {
        KernelParams kp = spec.kernel;
        kp.guide_tag = w_source_name(source);
        const Image& guide = source == WSource::kOracle ? truth : shepard_init;
        const KernelMatrix K = build_kernel(guide, kp);
        lane.W = sinkhorn_balance(K, spec.sinkhorn_tol, spec.sinkhorn_max_iters);
        {
          std::ostringstream os;
          os << "filter missing=" << detail::fmt_g(missing)
             << " w_source=" << w_source_name(source) << " n=" << lane.W.n
             << " sinkhorn_iters=" << lane.W.iterations
             << " balance_residual=" << detail::fmt_g(lane.W.balance_residual);
          if (!lane.W.converged) {
            os << " converged=0";
            rep.warnings.push_back("sinkhorn did not converge for missing=" +
                                   detail::fmt_g(missing) + " source=" +
                                   w_source_name(source));
          }
          rep.metadata.push_back(os.str());
        }
        if (need_spectral) {
          Eigen::VectorXd evals;
          Eigen::MatrixXd evecs;
          detail::symmetric_eig(store_to_dense(lane.W.weights), evals, evecs);
          const double tol = spec.trunc_rel * std::max(evals[lane.W.n - 1], 0.0);
          lane.F = detail::truncate_spectrum(lane.W.n, evals, evecs, tol);
          lane.have_spectral = true;
          std::ostringstream os;
          os << "spectrum missing=" << detail::fmt_g(missing)
             << " w_source=" << w_source_name(source) << " m=" << lane.F.m
             << " min_eigenvalue=" << detail::fmt_g(lane.F.min_eigenvalue)
             << " negative_discarded=" << lane.F.negative_discarded;
          rep.metadata.push_back(os.str());
        }
        if (lane.have_spectral && spec.solver == SolverChoice::kClosedForm) {
          lane.B = detail::restricted_gram(A, lane.F);
          const Eigen::VectorXd aty = apply_adjoint(A, Eigen::VectorXd(y.vec()));
          lane.rhs = lane.F.eigvals.asDiagonal() * (lane.F.eigvecs.transpose() * aty);
          lane.have_gram = true;
        }
      } catch (const std::exception& e) {
        lane.build_error = e.what();
        rep.warnings.push_back("filter build failed for missing=" + detail::fmt_g(missing) +
                               " source=" + w_source_name(source) + ": " + e.what());
      }

      for (PriorKind prior : spec.priors) {
        BestRow best;
        best.missing = missing;
        best.w_source = source;
        best.prior = prior;
        for (double rho : rhos) {
          SweepRow row;
          row.missing = missing;
          row.w_source = source;
          row.prior = prior;
          row.rho = rho;
          if (!lane.build_error.empty()) {
            row.failed = true;
            row.error = lane.build_error;
            rep.rows.push_back(row);
            continue;
          }
          try {
            SolveConfig cfg;
            cfg.rho = rho;
            cfg.tol = spec.solver_tol;
            cfg.max_iters = spec.solver_max_iters;
            Image solution;
            // The closed form solves the induced prior only; the
            // conventional arm always goes through CG.
            if (prior == PriorKind::kInduced && spec.solver == SolverChoice::kClosedForm) {
              if (lane.F.m == 0)
                throw NumericError("closed form: spectral truncation removed every mode");
              const detail::ClosedFormSolve sol =
                  detail::closed_form_core(lane.B, lane.F.eigvals, lane.rhs, rho);
              const Eigen::VectorXd x =
                  lane.F.eigvecs * (lane.F.eigvals.asDiagonal() * sol.q);
              solution = from_vector(w, h, x);
            } else if (prior == PriorKind::kInduced && spec.solver == SolverChoice::kAdmm) {
              DenoiserHandle handle = &lane.W;
              solution = admm_pnp(A, y, handle, cfg, shepard_init).solution;
            } else {
              solution = solve_cg(A, y, lane.F, prior, cfg).solution;
            }
            row.psnr_db = psnr(truth, clamp01(std::move(solution)));
          } catch (const std::exception& e) {
            row.failed = true;
            row.error = e.what();
            rep.warnings.push_back("solve failed at missing=" + detail::fmt_g(missing) +
                                   " source=" + w_source_name(source) + " prior=" +
                                   prior_name(prior) + " rho=" + detail::fmt_g(rho) + ": " +
                                   e.what());
          }
          // Ascending rho with a strict improvement test makes ties resolve
          // to the smallest rho; the negated form also lets the first
          // success replace the NaN sentinel.
          if (!row.failed && !(row.psnr_db <= best.best_psnr)) {
            best.best_psnr = row.psnr_db;
            best.best_rho = rho;
          }
          rep.rows.push_back(row);
        }
        rep.best.push_back(best);
        std::ostringstream os;
        os << "best missing=" << detail::fmt_g(missing)
           << " w_source=" << w_source_name(source) << " prior=" << prior_name(prior)
           << " psnr_db=" << detail::fmt_g(best.best_psnr)
           << " rho=" << detail::fmt_g(best.best_rho);
        rep.metadata.push_back(os.str());
      }
    }
  }
  return rep;
}

/// Both priors on bit-identical masks, noise, and filters, with a per-cell
/// PSNR gap (induced minus conventional) appended to the metadata.
inline ExperimentReport compare_priors(ExperimentSpec spec) {
  spec.priors = {PriorKind::kConventional, PriorKind::kInduced};
  ExperimentReport rep = run_experiment(spec);
  for (std::size_t i = 0; i < rep.best.size(); ++i) {
    const BestRow& conv = rep.best[i];
    if (conv.prior != PriorKind::kConventional) continue;
    for (std::size_t j = 0; j < rep.best.size(); ++j) {
      const BestRow& ind = rep.best[j];
      if (ind.prior != PriorKind::kInduced || ind.missing != conv.missing ||
          ind.w_source != conv.w_source)
        continue;
      std::ostringstream os;
      os << "gap missing=" << detail::fmt_g(conv.missing)
         << " w_source=" << w_source_name(conv.w_source)
         << " psnr_db=" << detail::fmt_g(ind.best_psnr - conv.best_psnr);
      rep.metadata.push_back(os.str());
    }
  }
  return rep;
}

/// CSV field quoting per RFC 4180; the emitted fields are plain numerics and
/// identifiers, so quoting only ever triggers on hostile metadata.
inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

inline void emit_csv(const ExperimentReport& rep, std::ostream& out) {
  for (const auto& m : rep.metadata) out << "# " << m << "\n";
  out << "missing,w_source,prior,rho,psnr_db\n";
  for (const auto& r : rep.rows) {
    out << csv_field(detail::fmt_g(r.missing)) << ',' << w_source_name(r.w_source) << ','
        << prior_name(r.prior) << ',' << csv_field(detail::fmt_g(r.rho)) << ','
        << csv_field(detail::fmt_g(r.psnr_db)) << "\n";
  }
}

inline void emit_csv(const ExperimentReport& rep, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  emit_csv(rep, out);
  if (!out) throw IoError("write failed for " + path);
}

/// Round-trip parser for the emitted CSV; metadata comments are preserved
/// verbatim (without the leading "# ").
inline ExperimentReport parse_csv(std::istream& in) {
  ExperimentReport rep;
  std::string line;
  std::size_t lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::size_t start = line.size() > 1 && line[1] == ' ' ? 2 : 1;
      rep.metadata.push_back(line.substr(start));
      continue;
    }
    if (!header_seen) {
      if (line != "missing,w_source,prior,rho,psnr_db")
        throw ParseError("csv: unexpected header at line " + std::to_string(lineno));
      header_seen = true;
      continue;
    }
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ls(line);
    while (std::getline(ls, field, ',')) fields.push_back(field);
    if (fields.size() != 5)
      throw ParseError("csv: expected 5 fields at line " + std::to_string(lineno));
    SweepRow row;
    row.missing = std::stod(fields[0]);
    if (fields[1] == "oracle")
      row.w_source = WSource::kOracle;
    else if (fields[1] == "estimated")
      row.w_source = WSource::kEstimated;
    else
      throw ParseError("csv: unknown w_source at line " + std::to_string(lineno));
    if (fields[2] == "laplacian")
      row.prior = PriorKind::kConventional;
    else if (fields[2] == "induced")
      row.prior = PriorKind::kInduced;
    else
      throw ParseError("csv: unknown prior at line " + std::to_string(lineno));
    row.rho = std::stod(fields[3]);
    row.psnr_db = std::stod(fields[4]);
    row.failed = std::isnan(row.psnr_db);
    rep.rows.push_back(row);
  }
  return rep;
}

inline ExperimentReport parse_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return parse_csv(in);
}

struct SpecParseResult {
  ExperimentSpec spec;
  std::vector<std::string> warnings;
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string part;
  while (std::getline(in, part, sep)) out.push_back(trim(part));
  return out;
}

inline double spec_num(const std::string& value, const std::string& key, std::size_t line) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw ParseError("spec: invalid number '" + value + "' for key '" + key + "' at line " +
                     std::to_string(line));
  }
}

inline long long spec_int(const std::string& value, const std::string& key, std::size_t line) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw ParseError("spec: invalid integer '" + value + "' for key '" + key + "' at line " +
                     std::to_string(line));
  }
}

}  // namespace detail

/// Flat key=value experiment description; '#' starts a comment line, blank
/// lines are skipped, later assignments win. Unknown keys are errors so
/// typos cannot silently fall back to defaults. Keys:
///   image, missing, sigma, w_source (oracle|estimated|both),
///   prior (induced|laplacian|both), solver (closed|cg|admm),
///   rho_grid (comma list or log:<lo>:<hi>:<count>), seed, patch_radius,
///   search_radius (full or a radius), h, crop (N or WxH), trunc_tol_rel,
///   sinkhorn_tol, sinkhorn_max_iters, solver_tol, solver_max_iters, threads
inline SpecParseResult parse_experiment_spec(std::istream& in) {
  SpecParseResult out;
  ExperimentSpec& spec = out.spec;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string stripped = detail::trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ParseError("spec: expected key=value at line " + std::to_string(lineno));
    const std::string key = detail::trim(stripped.substr(0, eq));
    const std::string value = detail::trim(stripped.substr(eq + 1));

    if (key == "image") {
      spec.image_path = value;
    } else if (key == "missing") {
      std::vector<double> fractions;
      for (const auto& part : detail::split(value, ',')) {
        const double f = detail::spec_num(part, key, lineno);
        if (std::find(fractions.begin(), fractions.end(), f) != fractions.end()) {
          out.warnings.push_back("spec: duplicate missing fraction " + part + " at line " +
                                 std::to_string(lineno) + " removed");
          continue;
        }
        fractions.push_back(f);
      }
      spec.missing_fractions = fractions;
    } else if (key == "sigma") {
      spec.sigma = detail::spec_num(value, key, lineno);
    } else if (key == "w_source") {
      if (value == "oracle")
        spec.w_sources = {WSource::kOracle};
      else if (value == "estimated")
        spec.w_sources = {WSource::kEstimated};
      else if (value == "both")
        spec.w_sources = {WSource::kOracle, WSource::kEstimated};
      else
        throw ParseError("spec: w_source must be oracle, estimated, or both at line " +
                         std::to_string(lineno));
    } else if (key == "prior") {
      if (value == "induced")
        spec.priors = {PriorKind::kInduced};
      else if (value == "laplacian")
        spec.priors = {PriorKind::kConventional};
      else if (value == "both")
        spec.priors = {PriorKind::kConventional, PriorKind::kInduced};
      else
        throw ParseError("spec: prior must be induced, laplacian, or both at line " +
                         std::to_string(lineno));
    } else if (key == "solver") {
      if (value == "closed")
        spec.solver = SolverChoice::kClosedForm;
      else if (value == "cg")
        spec.solver = SolverChoice::kCg;
      else if (value == "admm")
        spec.solver = SolverChoice::kAdmm;
      else
        throw ParseError("spec: solver must be closed, cg, or admm at line " +
                         std::to_string(lineno));
    } else if (key == "rho_grid") {
      if (value.rfind("log:", 0) == 0) {
        const auto parts = detail::split(value.substr(4), ':');
        if (parts.size() != 3)
          throw ParseError("spec: rho_grid log form is log:<lo>:<hi>:<count> at line " +
                           std::to_string(lineno));
        const double lo = detail::spec_num(parts[0], key, lineno);
        const double hi = detail::spec_num(parts[1], key, lineno);
        const long long count = detail::spec_int(parts[2], key, lineno);
        if (!(lo > 0.0) || !(hi > lo) || count < 2)
          throw ParseError("spec: rho_grid needs 0 < lo < hi and count >= 2 at line " +
                           std::to_string(lineno));
        spec.rho_grid.clear();
        for (long long i = 0; i < count; ++i)
          spec.rho_grid.push_back(std::pow(
              10.0, std::log10(lo) + (std::log10(hi) - std::log10(lo)) * i / (count - 1)));
      } else {
        spec.rho_grid.clear();
        for (const auto& part : detail::split(value, ','))
          spec.rho_grid.push_back(detail::spec_num(part, key, lineno));
      }
    } else if (key == "seed") {
      try {
        spec.seed = std::stoull(value);
      } catch (const std::exception&) {
        throw ParseError("spec: invalid seed at line " + std::to_string(lineno));
      }
    } else if (key == "patch_radius") {
      spec.kernel.patch_radius = static_cast<int>(detail::spec_int(value, key, lineno));
    } else if (key == "search_radius") {
      spec.kernel.search_radius =
          value == "full" ? kFullSearch : static_cast<int>(detail::spec_int(value, key, lineno));
    } else if (key == "h") {
      spec.kernel.h = detail::spec_num(value, key, lineno);
    } else if (key == "crop") {
      const std::size_t x = value.find('x');
      if (x == std::string::npos) {
        spec.crop_width = spec.crop_height =
            static_cast<int>(detail::spec_int(value, key, lineno));
      } else {
        spec.crop_width =
            static_cast<int>(detail::spec_int(value.substr(0, x), key, lineno));
        spec.crop_height =
            static_cast<int>(detail::spec_int(value.substr(x + 1), key, lineno));
      }
    } else if (key == "trunc_tol_rel") {
      spec.trunc_rel = detail::spec_num(value, key, lineno);
    } else if (key == "sinkhorn_tol") {
      spec.sinkhorn_tol = detail::spec_num(value, key, lineno);
    } else if (key == "sinkhorn_max_iters") {
      spec.sinkhorn_max_iters = static_cast<int>(detail::spec_int(value, key, lineno));
    } else if (key == "solver_tol") {
      spec.solver_tol = detail::spec_num(value, key, lineno);
    } else if (key == "solver_max_iters") {
      spec.solver_max_iters = static_cast<int>(detail::spec_int(value, key, lineno));
    } else if (key == "threads") {
      spec.threads = static_cast<int>(detail::spec_int(value, key, lineno));
    } else {
      throw ParseError("spec: unknown key '" + key + "' at line " + std::to_string(lineno));
    }
  }
  if (spec.image_path.empty()) throw ParseError("spec: required key 'image' is missing");
  return out;
}

inline SpecParseResult parse_experiment_spec_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return parse_experiment_spec(in);
}

}  // namespace iprior
