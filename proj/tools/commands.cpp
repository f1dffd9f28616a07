#include "commands.hpp"

#include <omp.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "dataset_io.hpp"
#include "nqce/estimators.hpp"
#include "nqce/inference.hpp"
#include "nqce/simulation.hpp"

namespace nqce::cli {

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config: return 2;
    case ErrorKind::Validation: return 3;
    case ErrorKind::Overlap:
    case ErrorKind::Positivity: return 4;
    case ErrorKind::Solver:
    case ErrorKind::Variance: return 5;
    case ErrorKind::Io: return 6;
    default: return 1;
  }
}

namespace {

struct Output {
  std::filesystem::path dir;
  std::string stamp;  // "config_hash=... seed=..."
  Json manifest;

  Output(const Invocation& inv, const RunConfig& cfg) {
    dir = cfg.output_dir;
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) fail(ErrorKind::Io, "cannot create output directory '" + cfg.output_dir + "'");
    stamp = "config_hash=" + cfg.hash + " seed=" + std::to_string(cfg.seed);
    manifest["command"] = inv.command;
    manifest["config_hash"] = cfg.hash;
    manifest["seed"] = cfg.seed;
    manifest["config"] = inv.resolved;
    manifest["warnings"] = cfg.warnings;
    manifest["outputs"] = Json::array();
  }

  std::ofstream open(const std::string& name) {
    const auto path = dir / name;
    std::ofstream out(path);
    if (!out) fail(ErrorKind::Io, "cannot open '" + path.string() + "' for writing");
    manifest["outputs"].push_back(path.string());
    return out;
  }

  // CSV with a provenance comment line and a header.
  std::ofstream table(const std::string& name, const std::string& header) {
    auto out = open(name);
    out << "# " << stamp << "\n" << header << "\n";
    return out;
  }

  void warn(const std::string& w) {
    std::cerr << "warning: " << w << "\n";
    manifest["warnings"].push_back(w);
  }

  void finish() {
    const auto path = dir / "manifest.json";
    std::ofstream out(path);
    if (!out) fail(ErrorKind::Io, "cannot open '" + path.string() + "' for writing");
    out << manifest.dump(2) << "\n";
    if (!out) fail(ErrorKind::Io, "write to '" + path.string() + "' failed");
  }
};

std::string num(double x) { return fmt_double(x); }

std::string estimand_label(const EstimandSpec& e) {
  std::ostringstream os;
  os << "Q[" << e.policy.label() << "]^(" << to_string(e.t) << ")(" << e.q << ")";
  return os.str();
}

template <class Fn>
auto labelled(const std::string& label, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.kind(), label + ": " + e.what());
  }
}

void write_estimate_row(std::ostream& out, const EstimandSpec& e, const QuantileEstimate& est,
                        double alpha) {
  const auto ci = pointwise_ci(est, alpha);
  const auto& d = est.diagnostics;
  out << estimand_label(e) << "," << to_string(e.policy.kind) << "," << num(e.policy.parameter)
      << "," << to_string(e.t) << "," << num(e.q) << "," << d.method << "," << num(est.theta_hat)
      << "," << num(est.standard_error()) << "," << num(ci.lo) << "," << num(ci.hi) << ","
      << d.solver_iterations << "," << num(d.ee_residual) << "," << d.bracket_widenings << ","
      << num(d.bandwidth) << "," << d.clip_count << "," << d.truncation_count << ",\"" << d.note
      << "\"\n";
}

Json nuisance_json(const CrossFitEstimator& est) {
  Json folds = Json::array();
  for (const auto& f : est.nuisance().folds)
    folds.push_back({{"rho", f.copula.rho},
                     {"log_likelihood", f.copula.log_likelihood},
                     {"warning", f.copula.warning},
                     {"margin_clips", f.margin_model->clip_count()}});
  return {{"folds", folds},
          {"clip_count", est.nuisance().clip_count()},
          {"summary", est.nuisance().summary()},
          {"bandwidth", est.bandwidth()}};
}

void cmd_simulate(const RunConfig& cfg, Output& out) {
  const auto data = generate_study(cfg.dgp);
  for (const auto& o : cfg.dgp.overrides()) out.warn("dgp field '" + o + "' overrides the default");
  auto file = out.open("dataset.csv");
  write_dataset_csv(file, data, {out.stamp});
  if (!file) fail(ErrorKind::Io, "writing dataset.csv failed");
  out.manifest["dgp_overrides"] = cfg.dgp.overrides();
  out.manifest["clusters"] = data.n();
  out.manifest["individuals"] = data.total_individuals();
}

void cmd_estimate(const RunConfig& cfg, Output& out) {
  const auto data = load_dataset(cfg);
  const CrossFitEstimator est(data, cfg.estimator, cfg.seed);
  out.manifest["nuisance"] = nuisance_json(est);
  auto table = out.table("results.csv",
                         "estimand,policy,parameter,t,q,method,point,se,ci_lo,ci_hi,"
                         "solver_iterations,ee_residual,bracket_widenings,bandwidth,clip_count,"
                         "truncation_count,note");
  for (const auto& e : cfg.estimands) {
    const auto label = estimand_label(e);
    const auto np = labelled(label, [&] { return est.np(e.t, e.q, e.policy); });
    write_estimate_row(table, e, np, cfg.inference.alpha);
    if (cfg.with_ipw) {
      const auto ipw = labelled(label, [&] { return est.ipw(e.t, e.q, e.policy); });
      write_estimate_row(table, e, ipw, cfg.inference.alpha);
    }
  }
  if (cfg.effects.empty()) return;
  auto eff = out.table("effects.csv", "effect,h,h_prime,q,point,se,ci_lo,ci_hi");
  Json identities = Json::array();
  for (const auto& r : cfg.effects) {
    const auto label = "effects(" + r.h.label() + ", " + r.h_prime.label() + ")";
    const auto list = labelled(label, [&] { return effects(est, r.q, r.h, r.h_prime); });
    for (const auto& e : list) {
      const auto ci = pointwise_ci(e, cfg.inference.alpha);
      eff << to_string(e.kind) << "," << r.h.label() << "," << r.h_prime.label() << ","
          << num(r.q) << "," << num(e.value) << "," << num(e.sigma / std::sqrt(double(data.n())))
          << "," << num(ci.lo) << "," << num(ci.hi) << "\n";
    }
    // list order: OQE, DQE(H), DQE(H'), SQE0, SQE1, TQE
    const double tqe = list[5].value;
    identities.push_back({{"h", r.h.label()},
                          {"h_prime", r.h_prime.label()},
                          {"q", r.q},
                          {"tqe_minus_sqe1_dqe_hprime", tqe - (list[4].value + list[2].value)},
                          {"tqe_minus_sqe0_dqe_h", tqe - (list[3].value + list[1].value)}});
  }
  out.manifest["effect_identities"] = identities;
}

EffectKind effect_kind(const std::string& name) {
  for (auto k : {EffectKind::OQE, EffectKind::DQE_H, EffectKind::DQE_H2, EffectKind::SQE0,
                 EffectKind::SQE1, EffectKind::TQE})
    if (name == to_string(k)) return k;
  fail(ErrorKind::Config, "'band.effect' must be one of OQE, DQE(H), DQE(H'), SQE0, SQE1, TQE");
}

void cmd_band(const RunConfig& cfg, Output& out) {
  const auto data = load_dataset(cfg);
  const CrossFitEstimator est(data, cfg.estimator, cfg.seed);
  out.manifest["nuisance"] = nuisance_json(est);
  const auto& b = cfg.band;
  BandResult band;
  if (!b.effect.empty()) {
    const auto kind = effect_kind(b.effect);
    std::vector<EffectEstimate> list;
    for (double q : b.grid) {
      const auto all = labelled("grid point q=" + num(q),
                                [&] { return effects(est, q, b.policy, b.h_prime); });
      for (const auto& e : all)
        if (e.kind == kind) list.push_back(e);
    }
    band = uniform_band(b.grid, std::span<const EffectEstimate>(list), cfg.inference);
    band.axis = "q";
  } else if (b.axis == "q") {
    band = band_over_q(est, b.t, b.policy, b.grid, cfg.inference);
  } else {
    band = band_over_delta(est, b.t, b.q, b.policy.kind, b.grid, cfg.inference, b.range);
  }
  for (const auto& w : band.warnings) out.warn(w);
  auto table = out.table("band.csv",
                         "kind,grid,estimate,se,pointwise_lo,pointwise_hi,uniform_lo,uniform_hi,"
                         "c_alpha,alpha,B,seed");
  for (int g = 0; g < band.size(); ++g)
    table << "point," << num(band.grid[g]) << "," << num(band.estimate[g]) << ","
          << num(band.standard_error(g)) << "," << num(band.pointwise_lo[g]) << ","
          << num(band.pointwise_hi[g]) << "," << num(band.uniform_lo[g]) << ","
          << num(band.uniform_hi[g]) << "," << num(band.c_alpha) << "," << num(band.alpha) << ","
          << band.draws << "," << band.seed << "\n";
  table << "meta,,,,,,,," << num(band.c_alpha) << "," << num(band.alpha) << "," << band.draws
        << "," << band.seed << "\n";
  out.manifest["band"] = {{"axis", band.axis},
                          {"c_alpha", band.c_alpha},
                          {"contains_pointwise", band.contains_pointwise},
                          {"n", band.n}};
}

void cmd_truth(const RunConfig& cfg, Output& out) {
  const auto truths = truths_for(cfg.dgp, cfg.estimands, cfg.truth);
  auto table = out.table("truth.csv", "policy,parameter,t,q,truth,mc_se,n_super,seed");
  for (const auto& e : truths)
    table << to_string(e.policy.kind) << "," << num(e.policy.parameter) << "," << to_string(e.t)
          << "," << num(e.q) << "," << num(e.value) << "," << num(e.mc_se) << "," << e.n_super
          << "," << e.seed << "\n";
}

void cmd_replicate(const RunConfig& cfg, Output& out) {
  ReplicateConfig rc;
  rc.dgp = cfg.dgp;
  rc.replicates = cfg.replicates;
  rc.estimands = cfg.estimands;
  rc.estimator = cfg.estimator;
  rc.with_ipw = cfg.with_ipw;
  rc.alpha = cfg.inference.alpha;
  rc.truth = cfg.truth;
  rc.seed = cfg.seed;
  for (const auto& o : cfg.dgp.overrides()) out.warn("dgp field '" + o + "' overrides the default");
  const auto res = replicate(rc);
  auto table = out.table("replicate.csv",
                         "estimator,policy_kind,parameter,t,q,truth,bias,mcsd,coverage,rmse_ratio,"
                         "failures,seed,valid");
  for (const auto& r : res.rows) {
    table << r.estimator << "," << to_string(r.estimand.policy.kind) << ","
          << num(r.estimand.policy.parameter) << "," << to_string(r.estimand.t) << ","
          << num(r.estimand.q) << "," << num(r.truth) << "," << num(r.bias) << "," << num(r.mcsd)
          << "," << num(r.coverage) << "," << num(r.rmse_ratio) << "," << r.failures << ","
          << r.seed << "," << (r.valid ? 1 : 0) << "\n";
    if (!r.valid)
      out.warn(r.estimator + " " + estimand_label(r.estimand) + ": " + std::to_string(r.failures) +
               " failed replicates; row marked invalid");
  }
  Json truths = Json::array();
  for (const auto& t : res.truths) truths.push_back({{"value", t.value}, {"mc_se", t.mc_se}});
  out.manifest["truths"] = truths;
  if (cfg.with_ipw)
    out.manifest["ipw_interval"] = "cluster bootstrap of the IPW estimate with fixed propensities";
}

}  // namespace

Dataset load_dataset(const RunConfig& cfg) {
  if (cfg.input.empty()) fail(ErrorKind::Config, "'input' must name a dataset file");
  auto parsed = read_dataset_file(cfg.input);
  auto result = validate_dataset(std::move(parsed.clusters), std::move(parsed.covariate_names));
  if (!result.report.ok())
    fail(ErrorKind::Validation, "dataset failed validation:\n" + result.report.to_string());
  auto data = std::move(*result.dataset);
  if (cfg.transformed_features) {
    if (data.dim() != kDgpCovariates)
      fail(ErrorKind::Config, "transformed features need exactly three covariates");
    for (auto& c : data.clusters) c.features = transformed_features(c.covariates);
  }
  return data;
}

void run_command(const Invocation& inv) {
  const auto cfg = typed_config(inv.resolved);
  if (cfg.threads > 0) omp_set_num_threads(cfg.threads);
  Output out(inv, cfg);
  for (const auto& w : cfg.warnings) std::cerr << "warning: " << w << "\n";
  if (inv.command == "simulate")
    cmd_simulate(cfg, out);
  else if (inv.command == "estimate")
    cmd_estimate(cfg, out);
  else if (inv.command == "band")
    cmd_band(cfg, out);
  else if (inv.command == "truth")
    cmd_truth(cfg, out);
  else if (inv.command == "replicate")
    cmd_replicate(cfg, out);
  else
    fail(ErrorKind::Config, "unknown command '" + inv.command + "'");
  out.finish();
}

}  // namespace nqce::cli
