// Command-line front end. Every subcommand reads and writes the formats in
// FORMATS.md and prints one JSON status line on success.

#include "btmap/btmap.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <random>
#include <string>

using namespace btmap;
using nlohmann::json;

namespace {

struct Globals {
  std::uint64_t seed = 1;
  unsigned threads = 0;
  std::string config;
};

Metric parse_metric(const std::string& s) {
  if (s == "euclidean") return Metric::euclidean;
  if (s == "chordal") return Metric::chordal;
  if (s == "precomputed") return Metric::precomputed;
  fail(ErrorKind::usage, "unknown metric '" + s + "'");
}

io::RunConfig load_config(const Globals& g) {
  io::RunConfig rc = g.config.empty() ? io::RunConfig{} : io::read_config(g.config);
  rc.fit.seed = g.seed;
  return rc;
}

// linear, nonlin, s-linear, s-nonlin
void apply_method(const std::string& method, FitConfig& cfg) {
  if (method == "linear" || method == "s-linear") cfg.hyper.linear_only = true;
  else if (method == "nonlin" || method == "s-nonlin") cfg.hyper.linear_only = false;
  else fail(ErrorKind::usage, "unknown map method '" + method + "'");
  cfg.simplified = method.rfind("s-", 0) == 0;
}

Matrix read_fields(const std::string& path, bool log_transform) {
  return io::ingest(path, {log_transform, false}).values;
}

void write_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  require(out.good(), ErrorKind::data, "cannot write " + path);
  out << j.dump(2) << "\n";
}

void write_text(const std::string& path, const std::string& s) {
  std::ofstream out(path);
  require(out.good(), ErrorKind::data, "cannot write " + path);
  out << s;
}

void status(const std::string& command, json extra = json::object()) {
  extra["status"] = "ok";
  extra["command"] = command;
  std::cout << extra.dump() << std::endl;
}

LogpdfProvider provider_for(const std::string& map_path, const std::string& chain_path,
                            std::shared_ptr<FittedMap>& map_keep, std::shared_ptr<DPMChain>& chain_keep) {
  require(map_path.empty() != chain_path.empty(), ErrorKind::usage, "give exactly one of --map or --chain");
  if (!map_path.empty()) {
    map_keep = std::make_shared<FittedMap>(io::load_map(map_path));
    return [m = map_keep](const Matrix& f) { return logpdf_rows(*m, f); };
  }
  chain_keep = std::make_shared<DPMChain>(io::load_chain(chain_path));
  return [c = chain_keep](const Matrix& f) { return dpm_logpdf_rows(*c, f); };
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian transport maps for spatial fields"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "random seed")->capture_default_str();
  app.add_option("--threads", g.threads, "worker threads (0: all cores)");
  app.add_option("--config", g.config, "JSON configuration file")->check(CLI::ExistingFile);

  std::string data, locs, metric = "euclidean", out, map_path, chain_path, method = "nonlin", test, ref, coefs;
  std::string scenario, csv_out;
  bool log_transform = false, sequence = false;
  Index m_max = 30, count = 1, k = 0, n = 100;
  double corr_range = 0.0;

  auto add_locs = [&](CLI::App* c) {
    c->add_option("--locs", locs, "location table")->required()->check(CLI::ExistingFile);
    c->add_option("--metric", metric, "euclidean, chordal or precomputed")->capture_default_str();
  };

  auto* order = app.add_subcommand("order", "maximin ordering and nearest previous neighbors");
  add_locs(order);
  order->add_option("--m-max", m_max, "neighbors per variable")->capture_default_str();
  order->add_option("--data", data, "replicates, for a correlation-distance ordering");
  order->add_option("--corr-range", corr_range, "taper range for correlation distance");
  order->add_option("--out", out, "ordering CSV")->required();

  auto* fit = app.add_subcommand("fit", "empirical-Bayes map fit");
  fit->add_option("--data", data, "training replicates")->required()->check(CLI::ExistingFile);
  add_locs(fit);
  fit->add_option("--method", method, "linear, nonlin, s-linear or s-nonlin")->capture_default_str();
  fit->add_flag("--log", log_transform, "log-transform the data first");
  fit->add_option("--out", out, "map file")->required();

  auto* fit_dpm = app.add_subcommand("fit-dpm", "DPM residual sampler");
  fit_dpm->add_option("--data", data, "training replicates")->required()->check(CLI::ExistingFile);
  add_locs(fit_dpm);
  fit_dpm->add_option("--init-map", map_path, "nonlin map whose hyperparameters start the chain");
  fit_dpm->add_flag("--log", log_transform, "log-transform the data first");
  fit_dpm->add_option("--out", out, "chain file")->required();

  auto* transform = app.add_subcommand("transform", "fields to map coefficients");
  transform->add_option("--map", map_path)->required()->check(CLI::ExistingFile);
  transform->add_option("--data", data, "fields")->required()->check(CLI::ExistingFile);
  transform->add_flag("--log", log_transform, "log-transform the fields first");
  transform->add_option("--out", out, "coefficients")->required();

  auto* invert = app.add_subcommand("invert", "map coefficients to fields");
  invert->add_option("--map", map_path)->required()->check(CLI::ExistingFile);
  invert->add_option("--coefs", coefs)->required()->check(CLI::ExistingFile);
  invert->add_option("--out", out, "fields")->required();

  auto* sample_cmd = app.add_subcommand("sample", "draws from the fitted distribution");
  sample_cmd->add_option("--map", map_path)->check(CLI::ExistingFile);
  sample_cmd->add_option("--chain", chain_path)->check(CLI::ExistingFile);
  sample_cmd->add_option("--count", count)->capture_default_str();
  sample_cmd->add_option("--out", out)->required();

  auto* condsim = app.add_subcommand("condsim", "draws keeping the first k coefficients of a reference field");
  condsim->add_option("--map", map_path)->required()->check(CLI::ExistingFile);
  condsim->add_option("--ref", ref, "reference field (first row is used)")->required()->check(CLI::ExistingFile);
  condsim->add_option("--k", k, "coefficients kept")->required();
  condsim->add_option("--count", count)->capture_default_str();
  condsim->add_option("--out", out)->required();

  auto* score = app.add_subcommand("score", "log-score on test fields");
  score->add_option("--method", method, "linear, nonlin, s-linear, s-nonlin, samp-tap, exp-cov, map or dpm")
      ->capture_default_str();
  score->add_option("--train", data, "training replicates (fitting methods)");
  score->add_option("--locs", locs, "location table (fitting methods)");
  score->add_option("--metric", metric)->capture_default_str();
  score->add_option("--map", map_path, "fitted map (method map)");
  score->add_option("--chain", chain_path, "DPM chain (method dpm)");
  score->add_option("--test", test, "test fields")->required()->check(CLI::ExistingFile);
  score->add_option("--out", out, "JSON report")->required();
  score->add_option("--csv", csv_out, "per-field CSV");

  auto* kl = app.add_subcommand("kl", "KL divergence from a simulation scenario's true law");
  kl->add_option("--scenario", scenario)->required();
  kl->add_option("--map", map_path)->check(CLI::ExistingFile);
  kl->add_option("--chain", chain_path)->check(CLI::ExistingFile);
  kl->add_option("--test", test, "fields drawn from the scenario")->required()->check(CLI::ExistingFile);
  kl->add_option("--out", out, "JSON report")->required();

  auto* simulate = app.add_subcommand("simulate", "draw fields from a simulation scenario");
  simulate->add_option("--scenario", scenario, "LR900, NR900, NI3600 or NR900B")->required();
  simulate->add_option("--n", n, "replicates")->capture_default_str();
  simulate->add_option("--out", out, "fields")->required();
  simulate->add_option("--locs-out", locs, "location table");

  auto* diagnose = app.add_subcommand("diagnose", "map coefficient diagnostics");
  diagnose->add_option("--map", map_path)->required()->check(CLI::ExistingFile);
  diagnose->add_option("--data", data, "held-out fields")->required()->check(CLI::ExistingFile);
  diagnose->add_flag("--sequence", sequence, "rows form a time sequence (adds lag-1 autocorrelation)");
  diagnose->add_option("--out", out, "JSON report")->required();
  diagnose->add_option("--csv", csv_out, "per-coordinate CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (g.threads > 0) set_num_threads(g.threads);
    const io::RunConfig rc = load_config(g);
    std::mt19937_64 rng(g.seed);

    if (*order) {
      const Locations L = io::read_locations(locs, parse_metric(metric));
      Ordering ord;
      if (!data.empty()) {
        require(corr_range > 0.0, ErrorKind::usage, "--data needs --corr-range > 0");
        ord = maximin_order(Locations::precomputed(correlation_distance(io::read_matrix(data), corr_range, L)), m_max);
      } else {
        ord = maximin_order(L, m_max);
      }
      std::ofstream os(out);
      require(os.good(), ErrorKind::data, "cannot write " + out);
      os.precision(17);
      os << "position,index,ell,neighbors\n";
      for (Index i = 0; i < ord.size(); ++i) {
        os << i << "," << ord.perm[static_cast<std::size_t>(i)] << "," << ord.ell[static_cast<std::size_t>(i)] << ",";
        const auto& nb = ord.neighbors[static_cast<std::size_t>(i)];
        for (std::size_t j = 0; j < nb.size(); ++j) os << (j ? " " : "") << nb[j];
        os << "\n";
      }
      status("order", {{"N", ord.size()}, {"out", out}});
    } else if (*fit) {
      FitConfig cfg = rc.fit;
      apply_method(method, cfg);
      const Matrix Y = read_fields(data, log_transform);
      const FittedMap map = fit_map(Y, io::read_locations(locs, parse_metric(metric)), cfg);
      io::save_map(out, map);
      if (!map.warning.empty()) std::cerr << "warning: " << map.warning << "\n";
      const auto th = map.hyper.theta();
      json theta = json::array();
      for (double v : th) theta.push_back(std::isfinite(v) ? json(v) : json(nullptr));
      status("fit", {{"method", method}, {"n", map.n}, {"N", map.N()}, {"loglik", map.loglik}, {"theta", theta},
                     {"out", out}});
    } else if (*fit_dpm) {
      DPMConfig cfg = rc.dpm;
      const Matrix Y = read_fields(data, log_transform);
      const Locations L = io::read_locations(locs, parse_metric(metric));
      Ordering ord;
      if (!map_path.empty()) {
        const FittedMap init = io::load_map(map_path);
        require(init.N() == Y.cols(), ErrorKind::data, "initial map does not match the data");
        cfg.theta0 = dpm_initial_theta(init.hyper, cfg.theta0[6], cfg.theta0[7], cfg.theta0[8], cfg.theta0[9]);
        ord = init.ordering;
      } else {
        ord = maximin_order(L, cfg.m_max);
      }
      const DPMChain chain = dpm_gibbs(Y, std::move(ord), cfg, rng);
      io::save_chain(out, chain);
      status("fit-dpm", {{"states", chain.states.size()}, {"acceptance", chain.acceptance}, {"out", out}});
    } else if (*transform) {
      const FittedMap map = io::load_map(map_path);
      const Matrix Y = read_fields(data, log_transform);
      Matrix Z(Y.rows(), Y.cols());
      Index clamped = 0;
      for (Index r = 0; r < Y.rows(); ++r) {
        const Coefficients c = forward(map, Y.row(r).transpose());
        Z.row(r) = c.z.transpose();
        clamped += c.clamped;
      }
      io::write_matrix(out, Z);
      status("transform", {{"fields", Z.rows()}, {"clamped", clamped}, {"out", out}});
    } else if (*invert) {
      const FittedMap map = io::load_map(map_path);
      const Matrix Y = inverse_rows(map, io::read_matrix(coefs));
      io::write_matrix(out, Y);
      status("invert", {{"fields", Y.rows()}, {"out", out}});
    } else if (*sample_cmd) {
      require(map_path.empty() != chain_path.empty(), ErrorKind::usage, "give exactly one of --map or --chain");
      require(count >= 1, ErrorKind::usage, "--count must be positive");
      const Matrix Y = map_path.empty() ? dpm_sample(io::load_chain(chain_path), rng, count)
                                        : sample(io::load_map(map_path), rng, count);
      io::write_matrix(out, Y);
      status("sample", {{"fields", Y.rows()}, {"out", out}});
    } else if (*condsim) {
      const FittedMap map = io::load_map(map_path);
      const Matrix R = io::read_matrix(ref);
      require(count >= 1, ErrorKind::usage, "--count must be positive");
      Matrix Y(count, map.N());
      for (Index r = 0; r < count; ++r) Y.row(r) = conditional_sample(map, R.row(0).transpose(), k, rng).transpose();
      io::write_matrix(out, Y);
      status("condsim", {{"fields", Y.rows()}, {"k", k}, {"out", out}});
    } else if (*score) {
      const Matrix T = io::read_matrix(test);
      ScoreReport rep;
      std::shared_ptr<FittedMap> mk;
      std::shared_ptr<DPMChain> ck;
      if (method == "map" || method == "dpm") {
        rep = log_score(provider_for(map_path, chain_path, mk, ck), T, method);
      } else {
        require(!data.empty() && !locs.empty(), ErrorKind::usage, "method " + method + " needs --train and --locs");
        const Matrix Y = io::read_matrix(data);
        const Locations L = io::read_locations(locs, parse_metric(metric));
        if (method == "samp-tap") {
          rep = log_score(baseline_samp_tap(Y, L, rc.samp_tap_ridge).provider(), T, method);
        } else if (method == "exp-cov") {
          rep = log_score(baseline_exp_cov(Y, L).provider(), T, method);
        } else {
          FitConfig cfg = rc.fit;
          apply_method(method, cfg);
          const FittedMap map = fit_map(Y, L, cfg);
          rep = log_score(map_provider(map), T, method);
        }
        rep.n = Y.rows();
      }
      rep.seed = g.seed;
      write_json(out, to_json(rep));
      if (!csv_out.empty()) write_text(csv_out, score_csv(rep));
      status("score", {{"method", method}, {"mean", rep.mean}, {"se", rep.se}, {"excluded", rep.excluded}, {"out", out}});
    } else if (*kl) {
      const Scenario sc = make_scenario(scenario, rng);
      const Matrix T = io::read_matrix(test);
      std::shared_ptr<FittedMap> mk;
      std::shared_ptr<DPMChain> ck;
      const LogpdfProvider truth = [&sc](const Matrix& f) { return true_logpdf_rows(sc.truth, f); };
      const KLReport rep = kl_estimate(truth, provider_for(map_path, chain_path, mk, ck), T);
      write_json(out, to_json(rep));
      status("kl", {{"kl", rep.kl}, {"se", rep.se}, {"excluded", rep.excluded}, {"out", out}});
    } else if (*simulate) {
      require(n >= 1, ErrorKind::usage, "--n must be positive");
      const Scenario sc = make_scenario(scenario, rng);
      const Matrix Y = scenario_sample(sc.truth, rng, n);
      io::write_matrix(out, Y);
      if (!locs.empty()) io::write_csv(locs, sc.locs.coords(), {"x", "y"});
      status("simulate", {{"scenario", scenario}, {"n", n}, {"N", Y.cols()}, {"out", out}});
    } else if (*diagnose) {
      const FittedMap map = io::load_map(map_path);
      const CoefDiagnostics d = coef_diagnostics(map, io::read_matrix(data), sequence);
      write_json(out, to_json(d));
      if (!csv_out.empty()) write_text(csv_out, coord_csv(d));
      status("diagnose", {{"mean", d.mean}, {"variance", d.variance}, {"out", out}});
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    switch (e.kind()) {
      case ErrorKind::usage: return 1;
      case ErrorKind::data: return 2;
      case ErrorKind::numerical: return 3;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
