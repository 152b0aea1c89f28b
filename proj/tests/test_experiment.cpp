#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "iprior/errors.hpp"
#include "iprior/experiment.hpp"
#include "support/test_util.hpp"

using namespace iprior;
using testutil::tmp_path;

#ifndef DATA_DIR
#error "DATA_DIR must point at the bundled test images"
#endif

namespace {

ExperimentSpec small_spec() {
  ExperimentSpec spec;
  spec.image_path = std::string(DATA_DIR) + "/camera_32.pgm";
  spec.crop_width = spec.crop_height = 16;
  spec.missing_fractions = {0.3};
  spec.sigma = 0.05;
  spec.rho_grid = {0.5, 1.0};
  spec.kernel.patch_radius = 1;
  spec.kernel.h = 0.5;
  spec.seed = 7;
  return spec;
}

std::string csv_string(const ExperimentReport& rep) {
  std::ostringstream out;
  emit_csv(rep, out);
  return out.str();
}

bool metadata_has_prefix(const ExperimentReport& rep, const std::string& prefix) {
  for (const auto& m : rep.metadata)
    if (m.rfind(prefix, 0) == 0) return true;
  return false;
}

}  // namespace

TEST_CASE("experiment: repeated runs emit byte-identical CSV", "[experiment]") {
  const ExperimentSpec spec = small_spec();
  const std::string a = csv_string(run_experiment(spec));
  const std::string b = csv_string(run_experiment(spec));
  REQUIRE(a == b);
  REQUIRE_FALSE(a.empty());
}

TEST_CASE("experiment: vanishing degradation recovers the image almost exactly",
          "[experiment]") {
  ExperimentSpec spec = small_spec();
  spec.missing_fractions = {0.0};
  spec.sigma = 0.0;
  spec.solver = SolverChoice::kCg;
  spec.priors = {PriorKind::kConventional, PriorKind::kInduced};
  spec.rho_grid = {1e-9};
  spec.solver_tol = 1e-12;
  spec.solver_max_iters = 5000;
  const ExperimentReport rep = run_experiment(spec);
  REQUIRE(rep.rows.size() == 2);
  for (const auto& row : rep.rows) {
    REQUIRE_FALSE(row.failed);
    REQUIRE(row.psnr_db > 55.0);
  }
}

TEST_CASE("experiment: row order and best rows", "[experiment]") {
  ExperimentSpec spec = small_spec();
  spec.missing_fractions = {0.2, 0.5};
  spec.w_sources = {WSource::kOracle, WSource::kEstimated};
  spec.priors = {PriorKind::kConventional, PriorKind::kInduced};
  spec.rho_grid = {2.0, 0.5, 1.0};  // deliberately unsorted
  const ExperimentReport rep = run_experiment(spec);

  REQUIRE(rep.rows.size() == 2 * 2 * 2 * 3);
  REQUIRE(rep.best.size() == 2 * 2 * 2);

  // Generation order: fraction, then source, then prior, then ascending rho.
  std::size_t idx = 0;
  for (double missing : {0.2, 0.5})
    for (WSource source : {WSource::kOracle, WSource::kEstimated})
      for (PriorKind prior : {PriorKind::kConventional, PriorKind::kInduced})
        for (double rho : {0.5, 1.0, 2.0}) {
          const SweepRow& row = rep.rows[idx++];
          REQUIRE(row.missing == missing);
          REQUIRE(row.w_source == source);
          REQUIRE(row.prior == prior);
          REQUIRE(row.rho == rho);
          REQUIRE_FALSE(row.failed);
        }

  // Every best row is the sweep maximum of its cell, ties to the smallest rho.
  for (const BestRow& best : rep.best) {
    double want_psnr = -1.0, want_rho = 0.0;
    for (const SweepRow& row : rep.rows) {
      if (row.missing != best.missing || row.w_source != best.w_source ||
          row.prior != best.prior || row.failed)
        continue;
      if (row.psnr_db > want_psnr) {
        want_psnr = row.psnr_db;
        want_rho = row.rho;
      }
    }
    REQUIRE(best.best_psnr == want_psnr);
    REQUIRE(best.best_rho == want_rho);
  }
}

TEST_CASE("experiment: metadata carries the reproducibility context", "[experiment]") {
  const ExperimentReport rep = run_experiment(small_spec());
  REQUIRE(metadata_has_prefix(rep, "version="));
  REQUIRE(metadata_has_prefix(rep, "image="));
  REQUIRE(metadata_has_prefix(rep, "crop=16x16"));
  REQUIRE(metadata_has_prefix(rep, "sigma="));
  REQUIRE(metadata_has_prefix(rep, "seed=7"));
  REQUIRE(metadata_has_prefix(rep, "rng=mt19937_64/boxmuller"));
  REQUIRE(metadata_has_prefix(rep, "solver=closed"));
  REQUIRE(metadata_has_prefix(rep, "rho_grid_size=2"));
  REQUIRE(metadata_has_prefix(rep, "filter missing="));
  REQUIRE(metadata_has_prefix(rep, "spectrum missing="));
  REQUIRE(metadata_has_prefix(rep, "best missing="));
}

TEST_CASE("experiment: CSV round trip preserves rows bit for bit", "[experiment][csv]") {
  ExperimentSpec spec = small_spec();
  spec.w_sources = {WSource::kOracle, WSource::kEstimated};
  spec.priors = {PriorKind::kConventional, PriorKind::kInduced};
  const ExperimentReport rep = run_experiment(spec);

  const std::string path = tmp_path("sweep.csv");
  emit_csv(rep, path);
  const ExperimentReport back = parse_csv_file(path);

  REQUIRE(back.rows.size() == rep.rows.size());
  for (std::size_t i = 0; i < rep.rows.size(); ++i) {
    REQUIRE(back.rows[i].missing == rep.rows[i].missing);
    REQUIRE(back.rows[i].w_source == rep.rows[i].w_source);
    REQUIRE(back.rows[i].prior == rep.rows[i].prior);
    REQUIRE(back.rows[i].rho == rep.rows[i].rho);
    REQUIRE(back.rows[i].psnr_db == rep.rows[i].psnr_db);  // %.17g round trip
    REQUIRE(back.rows[i].failed == rep.rows[i].failed);
  }
  REQUIRE(back.metadata == rep.metadata);
}

TEST_CASE("experiment: csv parser rejects malformed input", "[experiment][csv]") {
  {
    std::istringstream in("missing,w_source,prior,rho\n");
    REQUIRE_THROWS_AS(parse_csv(in), ParseError);
  }
  {
    std::istringstream in("missing,w_source,prior,rho,psnr_db\n0.2,oracle,induced,1.0\n");
    REQUIRE_THROWS_AS(parse_csv(in), ParseError);
  }
  {
    std::istringstream in(
        "missing,w_source,prior,rho,psnr_db\n0.2,nobody,induced,1.0,30.0\n");
    REQUIRE_THROWS_AS(parse_csv(in), ParseError);
  }
  {
    std::istringstream in(
        "missing,w_source,prior,rho,psnr_db\n0.2,oracle,ridge,1.0,30.0\n");
    REQUIRE_THROWS_AS(parse_csv(in), ParseError);
  }
}

TEST_CASE("experiment: csv_field quotes per RFC 4180", "[experiment][csv]") {
  REQUIRE(csv_field("plain") == "plain");
  REQUIRE(csv_field("a,b") == "\"a,b\"");
  REQUIRE(csv_field("say \"hi\"") == "\"say \"\"hi\"\"\"");
  REQUIRE(csv_field("line\nbreak") == "\"line\nbreak\"");
}

TEST_CASE("experiment: total truncation fails rows without aborting the sweep",
          "[experiment]") {
  ExperimentSpec spec = small_spec();
  spec.trunc_rel = 1.5;  // above every eigenvalue of a stochastic matrix
  const ExperimentReport rep = run_experiment(spec);
  REQUIRE(rep.rows.size() == 2);
  for (const auto& row : rep.rows) {
    REQUIRE(row.failed);
    REQUIRE_FALSE(row.error.empty());
    REQUIRE(std::isnan(row.psnr_db));
  }
  REQUIRE(std::isnan(rep.best[0].best_psnr));
  REQUIRE_FALSE(rep.warnings.empty());

  // Failed rows serialize as nan and parse back as failed.
  const std::string path = tmp_path("failed.csv");
  emit_csv(rep, path);
  const ExperimentReport back = parse_csv_file(path);
  for (const auto& row : back.rows) REQUIRE(row.failed);
}

TEST_CASE("experiment: compare_priors appends one gap per cell", "[experiment]") {
  ExperimentSpec spec = small_spec();
  spec.missing_fractions = {0.3, 0.6};
  spec.w_sources = {WSource::kOracle, WSource::kEstimated};
  const ExperimentReport rep = compare_priors(spec);

  REQUIRE(rep.best.size() == 2 * 2 * 2);  // both priors forced
  int gaps = 0;
  for (const auto& m : rep.metadata) {
    if (m.rfind("gap missing=", 0) != 0) continue;
    ++gaps;
    const auto pos = m.find("psnr_db=");
    REQUIRE(pos != std::string::npos);
    REQUIRE(std::isfinite(std::stod(m.substr(pos + 8))));
  }
  REQUIRE(gaps == 4);  // fractions x sources
}

TEST_CASE("experiment: spec validation", "[experiment]") {
  ExperimentSpec spec = small_spec();
  spec.missing_fractions = {1.0};
  REQUIRE_THROWS_AS(run_experiment(spec), ContractError);
  spec = small_spec();
  spec.rho_grid = {0.0};
  REQUIRE_THROWS_AS(run_experiment(spec), ContractError);
  spec = small_spec();
  spec.sigma = -0.1;
  REQUIRE_THROWS_AS(run_experiment(spec), ContractError);
  spec = small_spec();
  spec.image_path.clear();
  REQUIRE_THROWS_AS(run_experiment(spec), ContractError);
  spec = small_spec();
  spec.missing_fractions.clear();
  REQUIRE_THROWS_AS(run_experiment(spec), ContractError);
}

TEST_CASE("spec parser: minimal file takes the documented defaults", "[experiment][spec]") {
  std::istringstream in("image=photo.pgm\n");
  const SpecParseResult got = parse_experiment_spec(in);
  const ExperimentSpec& spec = got.spec;
  REQUIRE(spec.image_path == "photo.pgm");
  REQUIRE(spec.missing_fractions == std::vector<double>{0.2, 0.4, 0.6, 0.8});
  REQUIRE(spec.sigma == 0.05);
  REQUIRE(spec.w_sources == std::vector<WSource>{WSource::kOracle});
  REQUIRE(spec.priors == std::vector<PriorKind>{PriorKind::kInduced});
  REQUIRE(spec.solver == SolverChoice::kClosedForm);
  REQUIRE(spec.rho_grid.size() == 15);
  REQUIRE(spec.seed == 0);
  REQUIRE(got.warnings.empty());
}

TEST_CASE("spec parser: full round of keys", "[experiment][spec]") {
  std::istringstream in(
      "# benchmark configuration\n"
      "image = img.pgm\n"
      "missing = 0.1, 0.5\n"
      "sigma = 0.02\n"
      "w_source = both\n"
      "prior = both\n"
      "solver = admm\n"
      "rho_grid = 0.5, 1, 2\n"
      "seed = 12345\n"
      "patch_radius = 3\n"
      "search_radius = full\n"
      "h = 0.4\n"
      "crop = 32x16\n"
      "trunc_tol_rel = 1e-5\n"
      "sinkhorn_tol = 1e-9\n"
      "sinkhorn_max_iters = 500\n"
      "solver_tol = 1e-7\n"
      "solver_max_iters = 321\n"
      "threads = 2\n");
  const ExperimentSpec spec = parse_experiment_spec(in).spec;
  REQUIRE(spec.image_path == "img.pgm");
  REQUIRE(spec.missing_fractions == std::vector<double>{0.1, 0.5});
  REQUIRE(spec.sigma == 0.02);
  REQUIRE(spec.w_sources.size() == 2);
  REQUIRE(spec.priors.size() == 2);
  REQUIRE(spec.solver == SolverChoice::kAdmm);
  REQUIRE(spec.rho_grid == std::vector<double>{0.5, 1.0, 2.0});
  REQUIRE(spec.seed == 12345);
  REQUIRE(spec.kernel.patch_radius == 3);
  REQUIRE(spec.kernel.search_radius == kFullSearch);
  REQUIRE(spec.kernel.h == 0.4);
  REQUIRE(spec.crop_width == 32);
  REQUIRE(spec.crop_height == 16);
  REQUIRE(spec.trunc_rel == 1e-5);
  REQUIRE(spec.sinkhorn_tol == 1e-9);
  REQUIRE(spec.sinkhorn_max_iters == 500);
  REQUIRE(spec.solver_tol == 1e-7);
  REQUIRE(spec.solver_max_iters == 321);
  REQUIRE(spec.threads == 2);
}

TEST_CASE("spec parser: log grid expands to the documented endpoints",
          "[experiment][spec]") {
  std::istringstream in("image=a\nrho_grid=log:0.001:100:15\n");
  const ExperimentSpec spec = parse_experiment_spec(in).spec;
  REQUIRE(spec.rho_grid.size() == 15);
  const std::vector<double> want = default_rho_grid();
  for (std::size_t i = 0; i < want.size(); ++i)
    REQUIRE(spec.rho_grid[i] == Catch::Approx(want[i]).epsilon(1e-12));
}

TEST_CASE("spec parser: duplicate missing fractions dedup with a warning",
          "[experiment][spec]") {
  std::istringstream in("image=a\nmissing=0.2,0.4,0.2\n");
  const SpecParseResult got = parse_experiment_spec(in);
  REQUIRE(got.spec.missing_fractions == std::vector<double>{0.2, 0.4});
  REQUIRE(got.warnings.size() == 1);
  REQUIRE(got.warnings[0].find("duplicate") != std::string::npos);
}

TEST_CASE("spec parser: later assignments win", "[experiment][spec]") {
  std::istringstream in("image=a\nsigma=0.1\nsigma=0.2\n");
  REQUIRE(parse_experiment_spec(in).spec.sigma == 0.2);
}

TEST_CASE("spec parser: square crop shorthand", "[experiment][spec]") {
  std::istringstream in("image=a\ncrop=64\n");
  const ExperimentSpec spec = parse_experiment_spec(in).spec;
  REQUIRE(spec.crop_width == 64);
  REQUIRE(spec.crop_height == 64);
}

TEST_CASE("spec parser: errors name the key and line", "[experiment][spec]") {
  SECTION("unknown key") {
    std::istringstream in("image=a\nbogus_key=3\n");
    try {
      parse_experiment_spec(in);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      const std::string msg = e.what();
      REQUIRE(msg.find("bogus_key") != std::string::npos);
      REQUIRE(msg.find("line 2") != std::string::npos);
    }
  }
  SECTION("invalid number") {
    std::istringstream in("image=a\nsigma=abc\n");
    try {
      parse_experiment_spec(in);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      const std::string msg = e.what();
      REQUIRE(msg.find("sigma") != std::string::npos);
      REQUIRE(msg.find("line 2") != std::string::npos);
    }
  }
  SECTION("missing equals sign") {
    std::istringstream in("image=a\njust words\n");
    REQUIRE_THROWS_AS(parse_experiment_spec(in), ParseError);
  }
  SECTION("missing required image") {
    std::istringstream in("sigma=0.05\n");
    REQUIRE_THROWS_AS(parse_experiment_spec(in), ParseError);
  }
  SECTION("bad enum values") {
    std::istringstream in1("image=a\nw_source=sometimes\n");
    REQUIRE_THROWS_AS(parse_experiment_spec(in1), ParseError);
    std::istringstream in2("image=a\nprior=ridge\n");
    REQUIRE_THROWS_AS(parse_experiment_spec(in2), ParseError);
    std::istringstream in3("image=a\nsolver=magic\n");
    REQUIRE_THROWS_AS(parse_experiment_spec(in3), ParseError);
    std::istringstream in4("image=a\nrho_grid=log:1:10\n");
    REQUIRE_THROWS_AS(parse_experiment_spec(in4), ParseError);
  }
}

TEST_CASE("experiment: admm solver arm runs the modular iteration", "[experiment][admm]") {
  ExperimentSpec spec = small_spec();
  spec.solver = SolverChoice::kAdmm;
  spec.rho_grid = {1.0};
  spec.solver_tol = 1e-5;
  spec.solver_max_iters = 400;
  const ExperimentReport rep = run_experiment(spec);
  REQUIRE(rep.rows.size() == 1);
  REQUIRE_FALSE(rep.rows[0].failed);
  REQUIRE(std::isfinite(rep.rows[0].psnr_db));
  REQUIRE(rep.rows[0].psnr_db > 10.0);
}
