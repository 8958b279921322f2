// Command line driver for the replicated-store experiments.
//
//   repdecay <simulate|meanfield|decay|compare|figure3|convergence|coupling>
//            [--config PATH] [--seed U64] [--out DIR] [--replicas K] [--check] ...
//
// Exit status: 0 success, 1 runtime or I/O error, 2 invalid input,
// 3 a --check finding failed.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "repdecay/experiments.hpp"
#include "repdecay/io.hpp"

namespace {

struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> replicas;
  std::optional<std::uint32_t> n;
  std::optional<std::uint32_t> d;
  std::optional<double> lambda;
  std::optional<double> mu;
  std::optional<double> horizon;
  std::optional<std::uint64_t> files;
  std::optional<std::size_t> intervals;
  std::optional<double> tolerance;
  std::optional<std::string> process;
  std::optional<std::size_t> particles;
  std::optional<std::size_t> cells;
  std::optional<double> tol;
  std::vector<std::uint32_t> n_list;
  std::vector<double> rho_list;
  std::vector<std::uint32_t> d_list;
  std::vector<double> delta_list;
  std::vector<double> t_list;
  bool check = false;
};

void add_common(CLI::App* sub, Overrides& o) {
  sub->add_option("--config", o.config_path, "JSON config file")->check(CLI::ExistingFile);
  sub->add_option("--seed", o.seed, "master seed");
  sub->add_option("--out", o.out, "output directory");
  sub->add_option("--replicas", o.replicas, "number of replicas");
  sub->add_flag("--check", o.check, "exit with status 3 when a check fails");
  sub->add_option("--n", o.n, "number of servers");
  sub->add_option("--d", o.d, "maximum number of copies per file");
  sub->add_option("--lambda", o.lambda, "duplication rate per server");
  sub->add_option("--mu", o.mu, "failure rate per server");
  sub->add_option("--horizon", o.horizon, "simulated time");
  sub->add_option("--files", o.files, "initial files (fixed total load)");
  sub->add_option("--intervals", o.intervals, "output grid intervals");
  sub->add_option("--tolerance", o.tolerance, "slack for stochastic rate checks");
  sub->add_option("--n-list", o.n_list, "grid of server counts")->delimiter(',');
  sub->add_option("--rho-list", o.rho_list, "grid of lambda/mu values")->delimiter(',');
  sub->add_option("--d-list", o.d_list, "grid of copy limits")->delimiter(',');
  sub->add_option("--delta-list", o.delta_list, "durability loss fractions")->delimiter(',');
  sub->add_option("--t-list", o.t_list, "sample times")->delimiter(',');
}

repdecay::ExperimentConfig build_config(const std::string& kind, const Overrides& o) {
  using namespace repdecay;
  ExperimentConfig c = o.config_path.empty() ? ExperimentConfig{}
                                             : ExperimentConfig::from_json(read_file(o.config_path));
  c.kind = experiment_kind_from_string(kind);
  if (o.seed) c.model.seed = *o.seed;
  if (o.out) c.out_dir = *o.out;
  if (o.replicas) c.replicas = *o.replicas;
  if (o.n) c.model.n_servers = *o.n;
  if (o.d) c.model.d_max = *o.d;
  if (o.lambda) c.model.lambda = *o.lambda;
  if (o.mu) c.model.mu = *o.mu;
  if (o.horizon) c.model.horizon = *o.horizon;
  if (o.files) c.model.initial_load = FixedTotal{*o.files};
  if (o.intervals) c.output_intervals = *o.intervals;
  if (o.tolerance) c.tolerance = *o.tolerance;
  if (o.process) {
    if (*o.process == "policy") {
      c.process = ProcessKind::Policy;
    } else if (*o.process == "dominating") {
      c.process = ProcessKind::Dominating;
    } else {
      throw ValidationError("unknown process " + *o.process);
    }
  }
  if (o.particles) c.mean_field.particles = *o.particles;
  if (o.cells) c.mean_field.cells = *o.cells;
  if (o.tol) c.mean_field.tol = *o.tol;
  if (!o.n_list.empty()) c.grids.n = o.n_list;
  if (!o.rho_list.empty()) c.grids.rho = o.rho_list;
  if (!o.d_list.empty()) c.grids.d = o.d_list;
  if (!o.delta_list.empty()) c.grids.delta = o.delta_list;
  if (!o.t_list.empty()) c.grids.t = o.t_list;
  c.validate();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Durability experiments for a replicated store with failures and duplication"};
  app.require_subcommand(1);
  Overrides o;
  const std::vector<std::pair<const char*, const char*>> commands = {
      {"simulate", "run replicas of the placement policy (or the dominating process)"},
      {"meanfield", "solve the d = 2 forward equation and its particle fixed point"},
      {"decay", "fit decay rates and compare them with the spectral bound"},
      {"compare", "policy and dominating simulations against their large-N curves"},
      {"figure3", "tabulate kappa_bar / kappa_plus over d and rho"},
      {"convergence", "distance to the mean-field law as N grows"},
      {"coupling", "run the coupled policy and dominating processes"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    add_common(sub, o);
    if (std::string(name) == "simulate") {
      sub->add_option("--process", o.process, "policy or dominating");
    }
    if (std::string(name) == "meanfield") {
      sub->add_option("--particles", o.particles, "particles in the fixed-point iteration");
      sub->add_option("--cells", o.cells, "time cells of the p(t) curve");
      sub->add_option("--tol", o.tol, "fixed-point tolerance");
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  const std::string kind = app.get_subcommands().front()->get_name();
  try {
    const repdecay::ExperimentConfig config = build_config(kind, o);
    const repdecay::CommandReport report = repdecay::run_command(config);
    for (const auto& f : report.findings) std::cout << f << '\n';
    std::cout << report.files.size() << " files written under "
              << (config.out_dir / kind).string() << '\n';
    if (o.check && !report.passed) return 3;
    return 0;
  } catch (const repdecay::ValidationError& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
