#include "grou/experiments.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

struct Common {
  std::string config;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  unsigned threads = 0;
  std::string data;
};

grou::ExperimentConfig load(const Common& o, std::optional<grou::Index> data_dim = std::nullopt) {
  grou::Json j = grou::load_json_file(o.config);
  if (data_dim && !j.contains("d")) j["d"] = *data_dim;
  // Overrides go through the raw config so that they change the hash.
  if (o.seed) j["master_seed"] = *o.seed;
  if (o.threads > 0) j["threads"] = o.threads;
  if (!o.data.empty()) j["data"] = o.data;
  return grou::parse_config(j);
}

std::string data_file(const grou::ExperimentConfig& c) {
  if (c.data_path.empty()) throw grou::Error(grou::ErrorCode::ConfigError, "no data file: pass --data or set 'data'");
  return c.data_path;
}

void cmd_simulate(const Common& o) {
  const auto c = load(o);
  const grou::NormalizedAdjacency an = grou::row_normalize(grou::build_graph(c.graph, c.d));
  const grou::DynamicsMatrix q = grou::true_dynamics(c, an);
  const auto path = grou::detail::simulate_for(c, q, c.noise, c.n, 0);
  fs::create_directories(o.out);
  grou::write_path_csv_file((fs::path(o.out) / "path.csv").string(), path);
  grou::write_text_file(fs::path(o.out) / "q_true.json", grou::to_json(q.q).dump(2) + "\n");
  grou::write_text_file(fs::path(o.out) / "metadata.json",
                        grou::Json{{"config_hash", grou::config_hash(c.raw)}, {"master_seed", c.master_seed}}.dump(2) +
                            "\n");
}

void cmd_estimate(const Common& o) {
  const auto path = grou::read_path_csv_file(data_file(load(o)));
  const auto c = load(o, path.dim());
  if (c.d != path.dim()) {
    throw grou::Error(grou::ErrorCode::ConfigError, "config d does not match the data");
  }
  const auto opts = c.estimator_options();
  grou::Json out{{"config_hash", grou::config_hash(c.raw)}, {"psi", grou::to_json(grou::psi_mle(path, opts))}};
  if (c.raw.contains("graph")) {
    const auto an = grou::row_normalize(grou::build_graph(c.graph, c.d));
    out["theta"] = grou::to_json(grou::theta_mle(path, an, opts));
  }
  if (path.grid.is_uniform()) out["ls"] = grou::to_json(grou::ls_estimator(path));
  fs::create_directories(o.out);
  grou::write_text_file(fs::path(o.out) / "estimate.json", out.dump(2) + "\n");
}

void cmd_batch(const Common& o, bool sweep) {
  const auto c = load(o);
  const bool is_sweep = c.experiment.size() > 6 && c.experiment.ends_with("_sweep");
  if (is_sweep != sweep) {
    throw grou::Error(grou::ErrorCode::ConfigError, "experiment '" + c.experiment + "' is not run by this command");
  }
  const auto r = grou::run_experiment(c);
  grou::write_experiment(o.out, r, grou::resolve_threads(c.threads));
  std::cerr << r.experiment << ": " << r.succeeded << " succeeded, " << r.excluded << " excluded, "
            << r.runtime_seconds << " s\n";
}

void cmd_fit_data(const Common& o) {
  const std::string file = data_file(load(o));
  const auto c = load(o, grou::read_path_csv_file(file).dim());
  const auto r = grou::run_fit_data(c, file);
  grou::write_fit_data(o.out, r, grou::config_hash(c.raw));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph Ornstein-Uhlenbeck simulation and inference"};
  app.require_subcommand(1);
  Common o;
  auto add = [&](const std::string& name, const std::string& help) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", o.config, "JSON configuration")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--seed", o.seed, "override master_seed");
    sub->add_option("--threads", o.threads, "worker threads (default GROU_THREADS or hardware)");
    sub->add_option("--data", o.data, "CSV path: time column then d value columns");
    return sub;
  };
  auto* simulate = add("simulate", "simulate one path and write path.csv");
  auto* estimate = add("estimate", "fit theta/psi/LS estimators to a CSV path");
  auto* bootstrap = add("bootstrap", "Monte Carlo experiments (bootstrap, normality, topology, ...)");
  auto* sweep = add("sweep", "sigma, beta and mesh sweeps");
  auto* fit = add("fit-data", "real-data pipeline");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitConfig;
  }
  try {
    if (simulate->parsed()) cmd_simulate(o);
    if (estimate->parsed()) cmd_estimate(o);
    if (bootstrap->parsed()) cmd_batch(o, false);
    if (sweep->parsed()) cmd_batch(o, true);
    if (fit->parsed()) cmd_fit_data(o);
  } catch (const grou::Error& e) {
    std::cerr << "error [" << grou::to_string(e.code()) << "]: " << e.what() << '\n';
    return e.is_input_error() ? kExitConfig : kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  return 0;
}
