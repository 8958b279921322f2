#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "repdecay/mean_field.hpp"
#include "repdecay/params.hpp"
#include "repdecay/simulation.hpp"

namespace repdecay {

enum class ExperimentKind { Simulate, MeanField, Decay, Compare, Figure3, Convergence, Coupling };

std::string to_string(ExperimentKind kind);
ExperimentKind experiment_kind_from_string(const std::string& name);

/// Which stochastic system `simulate` drives.
enum class ProcessKind { Policy, Dominating };

struct ExperimentGrids {
  std::vector<std::uint32_t> n = {100, 400, 1600};
  std::vector<double> rho = {0.5, 1.0, 2.0};
  std::vector<std::uint32_t> d = {1, 2, 3, 4, 6, 8, 10, 12};
  std::vector<double> delta = {0.1, 0.5, 0.9};
  std::vector<double> t = {0.5, 1.0, 2.0};
};

struct MeanFieldSettings {
  std::size_t particles = 10000;
  std::size_t cells = 500;
  double tol = 1e-3;
  std::size_t max_iter = 20;
};

/// Everything one command needs. JSON layout:
///
///   {"experiment": {"kind", "replicas", "out", "output_intervals", "process",
///                   "formats", "tolerance"},
///    "model": {"n_servers", "lambda", "mu", "d_max", "horizon", "seed",
///              "collision_mode", "initial_load": {...}},
///    "grids": {"n", "rho", "d", "delta", "t"},
///    "mean_field": {"particles", "cells", "tol", "max_iter"}}
///
/// initial_load is {"type": "fixed_total", "files": F} or {"type":
/// "per_server", "law": "constant" | "poisson", "mean": m} or {"type":
/// "per_server", "law": "discrete", "support": [[value, weight], ...]}.
/// Missing keys keep their defaults; unknown keys are rejected.
struct ExperimentConfig {
  SystemParams model;
  ExperimentKind kind = ExperimentKind::Simulate;
  ProcessKind process = ProcessKind::Policy;
  std::size_t replicas = 1;
  std::filesystem::path out_dir = "out";
  std::size_t output_intervals = 200;
  bool write_csv = true;
  bool write_json = false;
  /// Slack for stochastic rate checks (fitted rate >= bound - tolerance).
  double tolerance = 0.02;
  ExperimentGrids grids;
  MeanFieldSettings mean_field;

  /// Throws ValidationError.
  void validate() const;
  std::string to_json() const;
  static ExperimentConfig from_json(const std::string& text);
};

/// Parameters of replica r: the model with seed derive_seed(model.seed, r).
SystemParams replica_params(const SystemParams& model, std::size_t r);

/// The model resized to n servers. A FixedTotal load keeps its ratio
/// files / n_servers; per-server laws carry over unchanged.
SystemParams params_for_n(const SystemParams& model, std::uint32_t n);

/// Replica-level mean with a normal-approximation 95% interval.
struct Summary {
  std::size_t n = 0;
  double mean = 0.0;
  double std_dev = 0.0;
  double std_err = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

Summary summarize(std::span<const double> values);
/// Linear-interpolation quantile (type 7) of an unsorted sample, q in [0, 1].
double quantile(std::vector<double> values, double q);

/// Large-N law of a server's class-d count at time 0. FixedTotal(F):
/// Poisson(d F / N); per-server law A: A + Poisson((d - 1) E A). Returned as
/// a probability vector cut where the tail mass is below 1e-15.
std::vector<double> initial_class_law(const SystemParams& model);
/// Same law as an FP grid on (singletons, pairs) = (0, y). Requires d_max = 2.
FpGrid initial_fp_grid(const SystemParams& model);

/// Columns t,alive_fraction,mean_<label>1..mean_<label>d.
std::string trajectory_csv(const TrajectoryStats& stats, const std::string& label = "R");
std::string trajectory_json(const TrajectoryStats& stats, const std::string& label = "R");

/// Outcome of one command. A check is a named pass/fail finding; `passed` is
/// false as soon as one of them fails.
struct CommandReport {
  std::vector<std::filesystem::path> files;
  std::vector<std::string> findings;
  bool passed = true;

  void check(bool ok, const std::string& what);
};

CommandReport cmd_simulate(const ExperimentConfig& config);
CommandReport cmd_meanfield(const ExperimentConfig& config);
CommandReport cmd_decay(const ExperimentConfig& config);
CommandReport cmd_compare(const ExperimentConfig& config);
CommandReport cmd_figure3(const ExperimentConfig& config);
CommandReport cmd_convergence(const ExperimentConfig& config);
CommandReport cmd_coupling(const ExperimentConfig& config);

/// Dispatches on config.kind.
CommandReport run_command(const ExperimentConfig& config);

}  // namespace repdecay
