#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "commands.hpp"
#include "config.hpp"
#include "dataset_io.hpp"
#include "nqce/estimators.hpp"
#include "nqce/simulation.hpp"

using namespace nqce;
using namespace nqce::cli;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::Argument;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("nqce_cli_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("config resolution and rejection") {
  const auto d = resolve_config(Json(), {});
  CHECK(d == default_config());
  CHECK(kind_of([] { resolve_config(Json{{"sed", 1}}, {}); }) == ErrorKind::Config);
  CHECK(kind_of([] { resolve_config(Json{{"dgp", {{"nn", 1}}}}, {}); }) == ErrorKind::Config);
  CHECK(kind_of([] { resolve_config(Json{{"seed", "one"}}, {}); }) == ErrorKind::Config);
  CHECK(kind_of([] { resolve_config(Json(), {"estimator.folds=2.5"}); }) == ErrorKind::Config);
  CHECK(kind_of([] { resolve_config(Json(), {"nokey"}); }) == ErrorKind::Config);

  // file, then --set
  const auto r = resolve_config(Json{{"seed", 4}, {"dgp", {{"n", 50}}}}, {"dgp.n=60", "dgp.scenario=B"});
  CHECK(r["seed"] == 4);
  CHECK(r["dgp"]["n"] == 60);
  CHECK(r["dgp"]["scenario"] == "B");
  const auto cfg = typed_config(r);
  CHECK(cfg.dgp.n == 60);
  CHECK(cfg.dgp.scenario == Scenario::B);
  CHECK(cfg.dgp.seed == 4);  // falls back to the master seed

  try {
    typed_config(resolve_config(Json(), {"dgp.scenario=C"}));
    FAIL("expected config error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Config);
    CHECK(std::string(e.what()).find("scenario") != std::string::npos);
  }
  CHECK(kind_of([] {
          typed_config(resolve_config(Json(), {"estimands=[{\"policy\":\"XYZ\"}]"}));
        }) == ErrorKind::Config);
  CHECK(kind_of([] { typed_config(resolve_config(Json(), {"estimands=[{\"q\":0.01}]"})); }) ==
        ErrorKind::Config);
  CHECK(kind_of([] { typed_config(resolve_config(Json(), {"estimands=[{\"extra\":1}]"})); }) ==
        ErrorKind::Config);

  const auto dup = typed_config(
      resolve_config(Json(), {"estimands=[{\"t\":\"1\"},{\"t\":\"0\"},{\"t\":\"1\"}]"}));
  CHECK(dup.estimands.size() == 2);
  CHECK(dup.warnings.size() == 1);
}

TEST_CASE("config hash tracks content") {
  const auto a = resolve_config(Json(), {});
  const auto b = resolve_config(Json(), {"seed=2"});
  CHECK(config_hash(a) == config_hash(resolve_config(Json(), {})));
  CHECK(config_hash(a) != config_hash(b));
  CHECK(fnv1a("") == 0xcbf29ce484222325ull);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cull);
}

TEST_CASE("dataset CSV shape and determinism") {
  std::vector<ClusterRecord> clusters(2);
  for (int i = 0; i < 2; ++i) {
    const int m = 3 + i;
    clusters[i].cluster_id = "k" + std::to_string(i);
    clusters[i].covariates = Matrix::Constant(m, 1, 0.5 * i);
    clusters[i].treatments.assign(m, 0);
    clusters[i].treatments[0] = 1;
    clusters[i].outcomes.assign(m, 1.0 / 3.0);
  }
  const auto data = require_valid(clusters, {"X1"});
  std::ostringstream os;
  write_dataset_csv(os, data, {"note"});
  std::istringstream lines(os.str());
  int rows = 0;
  for (std::string l; std::getline(lines, l);)
    if (!l.empty() && l[0] != '#') ++rows;
  CHECK(rows == 1 + 7);

  std::istringstream in(os.str());
  const auto parsed = read_dataset_csv(in);
  REQUIRE(parsed.clusters.size() == 2);
  CHECK(parsed.clusters[1].size() == 4);
  CHECK(parsed.clusters[1].outcomes[2] == 1.0 / 3.0);

  DgpSpec spec;
  spec.n = 30;
  spec.seed = 9;
  std::ostringstream a, b;
  write_dataset_csv(a, generate_study(spec), {});
  write_dataset_csv(b, generate_study(spec), {});
  CHECK(a.str() == b.str());

  std::istringstream broken("cluster_id,unit_id,A,Y,X1\nc1,1,2,0.5,1\n");
  CHECK(kind_of([&] { read_dataset_csv(broken); }) == ErrorKind::Validation);
  std::istringstream short_row("cluster_id,unit_id,A,Y,X1\nc1,1,1,0.5\n");
  CHECK(kind_of([&] { read_dataset_csv(short_row); }) == ErrorKind::Validation);
  std::istringstream header("id,A,Y\n");
  CHECK(kind_of([&] { read_dataset_csv(header); }) == ErrorKind::Validation);
}

TEST_CASE("round trip through the file reproduces estimates bit for bit") {
  const auto dir = scratch("roundtrip");
  auto resolved = resolve_config(
      Json(), {"dgp.n=300", "seed=5", "output_dir=\"" + dir.string() + "\"",
               "estimator.ipw_bootstrap=20"});
  run_command({"simulate", resolved});
  const auto cfg = typed_config(resolved);
  auto file_cfg = cfg;
  file_cfg.input = (dir / "dataset.csv").string();
  const auto from_file = load_dataset(file_cfg);
  const auto in_memory = generate_study(cfg.dgp);
  const CrossFitEstimator a(from_file, cfg.estimator, cfg.seed);
  const CrossFitEstimator b(in_memory, cfg.estimator, cfg.seed);
  const auto ea = a.np(EstimandKind::Fix1, 0.5, PolicySpec::cps(2.0));
  const auto eb = b.np(EstimandKind::Fix1, 0.5, PolicySpec::cps(2.0));
  CHECK(ea.theta_hat == eb.theta_hat);
  CHECK(ea.sigma_hat == eb.sigma_hat);
  CHECK(ea.eif_scores == eb.eif_scores);

  // the estimate command writes the same point into its table
  resolved["input"] = (dir / "dataset.csv").string();
  resolved["output_dir"] = (dir / "est").string();
  resolved["estimands"] = Json::array({{{"policy", "CPS"}, {"parameter", 2.0}, {"t", "1"}, {"q", 0.5}}});
  run_command({"estimate", resolved});
  const auto table = slurp(dir / "est" / "results.csv");
  CHECK(table.find(fmt_double(ea.theta_hat)) != std::string::npos);
  CHECK(table.find("config_hash=" + config_hash(resolved)) != std::string::npos);
  const auto manifest = Json::parse(slurp(dir / "est" / "manifest.json"));
  CHECK(manifest["config_hash"] == config_hash(resolved));
  CHECK(manifest["config"] == resolved);
  std::filesystem::remove_all(dir);
}

TEST_CASE("DAP without a fully treated cluster is an overlap error") {
  const auto dir = scratch("dap");
  auto resolved = resolve_config(
      Json(), {"dgp.n=200", "dgp.treatment_coef=[-5,0,0,0]", "output_dir=\"" + dir.string() + "\"",
               "estimator.ipw=false"});
  run_command({"simulate", resolved});
  resolved["input"] = (dir / "dataset.csv").string();
  resolved["estimands"] = Json::array({{{"policy", "DAP"}, {"parameter", 1.0}, {"t", "star"}, {"q", 0.5}}});
  try {
    run_command({"estimate", resolved});
    FAIL("expected overlap error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Overlap);
    CHECK(exit_code(e.kind()) == 4);
    CHECK(std::string(e.what()).find("DAP") != std::string::npos);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("band output rows and exit codes") {
  const auto dir = scratch("band");
  auto resolved = resolve_config(
      Json(), {"dgp.n=300", "output_dir=\"" + dir.string() + "\"", "inference.draws=200",
               "band.grid=[0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9]"});
  run_command({"simulate", resolved});
  resolved["input"] = (dir / "dataset.csv").string();
  run_command({"band", resolved});
  std::istringstream lines(slurp(dir / "band.csv"));
  int points = 0, meta = 0;
  for (std::string l; std::getline(lines, l);) {
    points += l.rfind("point,", 0) == 0;
    meta += l.rfind("meta,", 0) == 0;
  }
  CHECK(points == 9);
  CHECK(meta == 1);
  std::filesystem::remove_all(dir);

  CHECK(exit_code(ErrorKind::Config) == 2);
  CHECK(exit_code(ErrorKind::Validation) == 3);
  CHECK(exit_code(ErrorKind::Positivity) == 4);
  CHECK(exit_code(ErrorKind::Solver) == 5);
  CHECK(exit_code(ErrorKind::Variance) == 5);
  CHECK(exit_code(ErrorKind::Io) == 6);
  CHECK(exit_code(ErrorKind::Fit) == 1);
  const auto bad = resolve_config(Json(), {"output_dir=\"/proc/nqce/none\""});
  CHECK(kind_of([&] { run_command({"simulate", bad}); }) == ErrorKind::Io);
  CHECK(kind_of([&] { run_command({"estimate", resolve_config(Json(), {})}); }) ==
        ErrorKind::Config);
}
