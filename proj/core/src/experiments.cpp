#include "repdecay/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "repdecay/dominating.hpp"
#include "repdecay/io.hpp"
#include "repdecay/reduced_view.hpp"
#include "repdecay/spectral.hpp"

namespace repdecay {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr double kZ95 = 1.959963984540054;
// Finite-N bias allowance, as a fraction of the initial alive fraction, when a
// simulation is compared with an N -> infinity curve.
constexpr double kFiniteNSlack = 0.02;
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

// ---------------------------------------------------------------------------
// config (de)serialization

void reject_unknown(const json& obj, std::initializer_list<const char*> allowed,
                    const std::string& section) {
  if (!obj.is_object()) throw ValidationError("config: " + section + " must be an object");
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || item.key() == a;
    if (!known) throw ValidationError("config: unknown key " + section + "." + item.key());
  }
}

template <class T>
void read_key(const json& obj, const char* key, T& out, const std::string& section) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError("config: bad value for " + section + "." + key + ": " + e.what());
  }
}

json load_to_json(const InitialLoad& load) {
  if (const auto* f = std::get_if<FixedTotal>(&load)) {
    return {{"type", "fixed_total"}, {"files", f->files}};
  }
  const auto& law = std::get<PerServerLaw>(load);
  switch (law.kind) {
    case PerServerLaw::Kind::Constant:
      return {{"type", "per_server"}, {"law", "constant"}, {"mean", law.mean}};
    case PerServerLaw::Kind::Poisson:
      return {{"type", "per_server"}, {"law", "poisson"}, {"mean", law.mean}};
    case PerServerLaw::Kind::Discrete: {
      json support = json::array();
      for (const auto& [v, w] : law.support) support.push_back({v, w});
      return {{"type", "per_server"}, {"law", "discrete"}, {"support", support}};
    }
  }
  return {};
}

InitialLoad load_from_json(const json& j) {
  reject_unknown(j, {"type", "files", "law", "mean", "support"}, "model.initial_load");
  std::string type = "fixed_total";
  read_key(j, "type", type, "model.initial_load");
  if (type == "fixed_total") {
    std::uint64_t files = 0;
    read_key(j, "files", files, "model.initial_load");
    return FixedTotal{files};
  }
  if (type != "per_server") throw ValidationError("config: unknown initial_load type " + type);
  std::string law = "poisson";
  read_key(j, "law", law, "model.initial_load");
  double mean = 0.0;
  read_key(j, "mean", mean, "model.initial_load");
  if (law == "constant") return PerServerLaw::constant(mean);
  if (law == "poisson") return PerServerLaw::poisson(mean);
  if (law == "discrete") {
    std::vector<std::pair<std::int64_t, double>> support;
    read_key(j, "support", support, "model.initial_load");
    return PerServerLaw::discrete(std::move(support));
  }
  throw ValidationError("config: unknown per-server law " + law);
}

json config_json(const ExperimentConfig& c) {
  json formats = json::array();
  if (c.write_csv) formats.push_back("csv");
  if (c.write_json) formats.push_back("json");
  return {
      {"experiment",
       {{"kind", to_string(c.kind)},
        {"replicas", c.replicas},
        {"out", c.out_dir.generic_string()},
        {"output_intervals", c.output_intervals},
        {"process", c.process == ProcessKind::Policy ? "policy" : "dominating"},
        {"formats", formats},
        {"tolerance", c.tolerance}}},
      {"model",
       {{"n_servers", c.model.n_servers},
        {"lambda", c.model.lambda},
        {"mu", c.model.mu},
        {"d_max", c.model.d_max},
        {"horizon", c.model.horizon},
        {"seed", c.model.seed},
        {"collision_mode", to_string(c.model.collision_mode)},
        {"initial_load", load_to_json(c.model.initial_load)}}},
      {"grids",
       {{"n", c.grids.n},
        {"rho", c.grids.rho},
        {"d", c.grids.d},
        {"delta", c.grids.delta},
        {"t", c.grids.t}}},
      {"mean_field",
       {{"particles", c.mean_field.particles},
        {"cells", c.mean_field.cells},
        {"tol", c.mean_field.tol},
        {"max_iter", c.mean_field.max_iter}}},
  };
}

// ---------------------------------------------------------------------------
// output helpers

std::string cell(double v) { return format_number(v); }

class Table {
 public:
  explicit Table(std::vector<std::string> header) : header_(std::move(header)) {}
  void row(std::vector<std::string> r) { rows_.push_back(std::move(r)); }
  std::string str() const {
    std::ostringstream os;
    auto line = [&](const std::vector<std::string>& r) {
      for (std::size_t j = 0; j < r.size(); ++j) os << (j ? "," : "") << r[j];
      os << '\n';
    };
    line(header_);
    for (const auto& r : rows_) line(r);
    return os.str();
  }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

void emit(CommandReport& rep, const fs::path& path, const std::string& contents) {
  write_file(path, contents);
  rep.files.push_back(path);
}

// summary.json next to the tables: effective config, aggregation metadata,
// command results and the check outcomes.
void emit_summary(CommandReport& rep, const fs::path& dir, const ExperimentConfig& c,
                  json results) {
  json outputs = json::array();
  for (const auto& f : rep.files) outputs.push_back(f.filename().generic_string());
  outputs.push_back("summary.json");
  const json doc = {
      {"config", config_json(c)},
      {"metadata",
       {{"replicas", c.replicas},
        {"ci_method", "normal approximation over replica means, 95% (z = 1.959964)"},
        {"seed_derivation", "replica r uses derive_seed(model.seed, r), splitmix64 mixing"}}},
      {"results", std::move(results)},
      {"checks", rep.findings},
      {"passed", rep.passed},
      {"outputs", outputs},
  };
  emit(rep, dir / "summary.json", doc.dump(2) + "\n");
}

TrajectoryOptions sim_options(const ExperimentConfig& c) {
  TrajectoryOptions o;
  o.output_intervals = c.output_intervals;
  o.keep_server_counts = false;
  o.track_shared_pairs = false;
  return o;
}

std::vector<Summary> summarize_columns(const std::vector<std::vector<double>>& per_replica) {
  std::vector<Summary> out;
  if (per_replica.empty()) return out;
  const std::size_t n = per_replica.front().size();
  std::vector<double> column(per_replica.size());
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t r = 0; r < per_replica.size(); ++r) column[r] = per_replica[r][j];
    out.push_back(summarize(column));
  }
  return out;
}

std::vector<double> means_of(const std::vector<Summary>& s) {
  std::vector<double> m;
  for (const auto& x : s) m.push_back(x.mean);
  return m;
}

// Ten sample indices spread evenly over a grid of n points.
std::vector<std::size_t> ten_indices(std::size_t n) {
  std::vector<std::size_t> idx;
  if (n == 0) return idx;
  for (std::size_t i = 0; i < 10; ++i) {
    const std::size_t j = (n - 1) * i / 9;
    if (idx.empty() || idx.back() != j) idx.push_back(j);
  }
  return idx;
}

// Rate fit on the tail of the part of a curve that stays positive.
RateFit fit_positive_tail(const std::vector<double>& t, const std::vector<double>& v,
                          double tail) {
  std::size_t end = v.size();
  while (end > 0 && !(v[end - 1] > 0.0)) --end;
  if (end < 10) return {kNan, kNan, end};
  const auto keep = std::min<std::size_t>(
      end, std::max<std::size_t>(10, static_cast<std::size_t>(std::ceil(tail * end))));
  return fit_decay_rate(std::span(t).subspan(end - keep, keep),
                        std::span(v).subspan(end - keep, keep), 1.0);
}

double initial_files_per_server(const SystemParams& m) {
  if (const auto* f = std::get_if<FixedTotal>(&m.initial_load)) {
    return static_cast<double>(f->files) / m.n_servers;
  }
  return std::get<PerServerLaw>(m.initial_load).expectation();
}

std::vector<double> poisson_pmf(double mean) {
  if (!(mean >= 0.0) || mean >= 700.0) throw ValidationError("initial law mean out of range");
  std::vector<double> pmf{std::exp(-mean)};
  double cdf = pmf[0];
  while (1.0 - cdf > 1e-15 && pmf.size() < 100000) {
    pmf.push_back(pmf.back() * mean / static_cast<double>(pmf.size()));
    cdf += pmf.back();
    if (pmf.back() == 0.0 && static_cast<double>(pmf.size()) > mean) break;
  }
  for (double& p : pmf) p /= cdf;
  return pmf;
}

// Mean class-d count per server at time 0 in the large-N limit.
std::vector<double> limit_V0(const SystemParams& m) {
  std::vector<double> V0(m.d_max, 0.0);
  V0.back() = m.d_max * initial_files_per_server(m);
  return V0;
}

// sum_k V_k(mu t) / k on a time grid: the limit bound on L / N.
std::vector<double> limit_alive(const SystemParams& m, const std::vector<double>& times) {
  std::vector<double> tau(times.size());
  for (std::size_t j = 0; j < times.size(); ++j) tau[j] = m.mu * times[j];
  const auto V = solve_V(m.d_max, m.rho(), limit_V0(m), tau);
  std::vector<double> out(times.size(), 0.0);
  for (std::size_t j = 0; j < times.size(); ++j) {
    for (std::size_t k = 0; k < m.d_max; ++k) out[j] += V[j][k] / static_cast<double>(k + 1);
  }
  return out;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ValidationError(what);
}

}  // namespace

// ---------------------------------------------------------------------------

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::Simulate: return "simulate";
    case ExperimentKind::MeanField: return "meanfield";
    case ExperimentKind::Decay: return "decay";
    case ExperimentKind::Compare: return "compare";
    case ExperimentKind::Figure3: return "figure3";
    case ExperimentKind::Convergence: return "convergence";
    case ExperimentKind::Coupling: return "coupling";
  }
  return "simulate";
}

ExperimentKind experiment_kind_from_string(const std::string& name) {
  for (auto k : {ExperimentKind::Simulate, ExperimentKind::MeanField, ExperimentKind::Decay,
                 ExperimentKind::Compare, ExperimentKind::Figure3, ExperimentKind::Convergence,
                 ExperimentKind::Coupling}) {
    if (to_string(k) == name) return k;
  }
  throw ValidationError("unknown experiment kind: " + name);
}

void ExperimentConfig::validate() const {
  model.validate();
  require(replicas >= 1, "replicas must be >= 1");
  require(output_intervals >= 1, "output_intervals must be >= 1");
  require(!out_dir.empty(), "output directory must be set");
  require(tolerance >= 0.0 && std::isfinite(tolerance), "tolerance must be finite and >= 0");
  for (auto n : grids.n) require(n >= 1, "grids.n entries must be >= 1");
  for (double r : grids.rho) require(r >= 0.0 && std::isfinite(r), "grids.rho entries must be >= 0");
  for (auto d : grids.d) require(d >= 1, "grids.d entries must be >= 1");
  for (double x : grids.delta) require(x > 0.0 && x < 1.0, "grids.delta entries must lie in (0, 1)");
  for (double t : grids.t) require(t >= 0.0 && std::isfinite(t), "grids.t entries must be >= 0");
  require(mean_field.particles >= 1000, "mean_field.particles must be >= 1000");
  require(mean_field.cells >= 1, "mean_field.cells must be >= 1");
  require(mean_field.tol > 0.0, "mean_field.tol must be > 0");
  require(mean_field.max_iter >= 1, "mean_field.max_iter must be >= 1");
}

std::string ExperimentConfig::to_json() const { return config_json(*this).dump(2); }

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: not valid JSON: ") + e.what());
  }
  reject_unknown(j, {"experiment", "model", "grids", "mean_field"}, "config");
  ExperimentConfig c;
  if (j.contains("experiment")) {
    const json& e = j["experiment"];
    reject_unknown(e, {"kind", "replicas", "out", "output_intervals", "process", "formats", "tolerance"},
                   "experiment");
    std::string kind = to_string(c.kind);
    read_key(e, "kind", kind, "experiment");
    c.kind = experiment_kind_from_string(kind);
    read_key(e, "replicas", c.replicas, "experiment");
    std::string out = c.out_dir.string();
    read_key(e, "out", out, "experiment");
    c.out_dir = out;
    read_key(e, "output_intervals", c.output_intervals, "experiment");
    std::string process = "policy";
    read_key(e, "process", process, "experiment");
    if (process == "policy") {
      c.process = ProcessKind::Policy;
    } else if (process == "dominating") {
      c.process = ProcessKind::Dominating;
    } else {
      throw ValidationError("config: unknown process " + process);
    }
    if (e.contains("formats")) {
      std::vector<std::string> formats;
      read_key(e, "formats", formats, "experiment");
      c.write_csv = c.write_json = false;
      for (const auto& f : formats) {
        if (f == "csv") {
          c.write_csv = true;
        } else if (f == "json") {
          c.write_json = true;
        } else {
          throw ValidationError("config: unknown format " + f);
        }
      }
    }
    read_key(e, "tolerance", c.tolerance, "experiment");
  }
  if (j.contains("model")) {
    const json& m = j["model"];
    reject_unknown(m, {"n_servers", "lambda", "mu", "d_max", "horizon", "seed", "collision_mode",
                       "initial_load"},
                   "model");
    read_key(m, "n_servers", c.model.n_servers, "model");
    read_key(m, "lambda", c.model.lambda, "model");
    read_key(m, "mu", c.model.mu, "model");
    read_key(m, "d_max", c.model.d_max, "model");
    read_key(m, "horizon", c.model.horizon, "model");
    read_key(m, "seed", c.model.seed, "model");
    if (m.contains("collision_mode")) {
      std::string mode;
      read_key(m, "collision_mode", mode, "model");
      c.model.collision_mode = collision_mode_from_string(mode);
    }
    if (m.contains("initial_load")) c.model.initial_load = load_from_json(m["initial_load"]);
  }
  if (j.contains("grids")) {
    const json& g = j["grids"];
    reject_unknown(g, {"n", "rho", "d", "delta", "t"}, "grids");
    read_key(g, "n", c.grids.n, "grids");
    read_key(g, "rho", c.grids.rho, "grids");
    read_key(g, "d", c.grids.d, "grids");
    read_key(g, "delta", c.grids.delta, "grids");
    read_key(g, "t", c.grids.t, "grids");
  }
  if (j.contains("mean_field")) {
    const json& mf = j["mean_field"];
    reject_unknown(mf, {"particles", "cells", "tol", "max_iter"}, "mean_field");
    read_key(mf, "particles", c.mean_field.particles, "mean_field");
    read_key(mf, "cells", c.mean_field.cells, "mean_field");
    read_key(mf, "tol", c.mean_field.tol, "mean_field");
    read_key(mf, "max_iter", c.mean_field.max_iter, "mean_field");
  }
  return c;
}

SystemParams replica_params(const SystemParams& model, std::size_t r) {
  SystemParams p = model;
  p.seed = derive_seed(model.seed, r);
  return p;
}

SystemParams params_for_n(const SystemParams& model, std::uint32_t n) {
  SystemParams p = model;
  p.n_servers = n;
  if (const auto* f = std::get_if<FixedTotal>(&model.initial_load)) {
    const double ratio = static_cast<double>(f->files) / model.n_servers;
    p.initial_load = FixedTotal{static_cast<std::uint64_t>(std::llround(ratio * n))};
  }
  return p;
}

Summary summarize(std::span<const double> values) {
  Summary s;
  s.n = values.size();
  if (s.n == 0) return s;
  double acc = 0.0;
  for (double v : values) acc += v;
  s.mean = acc / static_cast<double>(s.n);
  if (s.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std_dev = std::sqrt(ss / static_cast<double>(s.n - 1));
    s.std_err = s.std_dev / std::sqrt(static_cast<double>(s.n));
  }
  s.ci_low = s.mean - kZ95 * s.std_err;
  s.ci_high = s.mean + kZ95 * s.std_err;
  return s;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) return kNan;
  if (!(q >= 0.0 && q <= 1.0)) throw ValidationError("quantile: q must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::vector<double> initial_class_law(const SystemParams& model) {
  model.validate();
  const double d = model.d_max;
  if (const auto* f = std::get_if<FixedTotal>(&model.initial_load)) {
    return poisson_pmf(d * static_cast<double>(f->files) / model.n_servers);
  }
  const auto& law = std::get<PerServerLaw>(model.initial_load);
  const std::vector<double> incoming = poisson_pmf((d - 1.0) * law.expectation());
  std::vector<double> own;
  switch (law.kind) {
    case PerServerLaw::Kind::Constant:
      own.assign(static_cast<std::size_t>(law.mean) + 1, 0.0);
      own.back() = 1.0;
      break;
    case PerServerLaw::Kind::Poisson:
      own = poisson_pmf(law.mean);
      break;
    case PerServerLaw::Kind::Discrete: {
      double total = 0.0;
      for (const auto& [v, w] : law.support) total += w;
      for (const auto& [v, w] : law.support) {
        if (w <= 0.0) continue;
        if (own.size() <= static_cast<std::size_t>(v)) own.resize(static_cast<std::size_t>(v) + 1, 0.0);
        own[static_cast<std::size_t>(v)] += w / total;
      }
      break;
    }
  }
  std::vector<double> out(own.size() + incoming.size() - 1, 0.0);
  for (std::size_t a = 0; a < own.size(); ++a) {
    if (own[a] == 0.0) continue;
    for (std::size_t b = 0; b < incoming.size(); ++b) out[a + b] += own[a] * incoming[b];
  }
  return out;
}

FpGrid initial_fp_grid(const SystemParams& model) {
  if (model.d_max != 2) throw ValidationError("the (singletons, pairs) limit needs d_max = 2");
  const auto pmf = initial_class_law(model);
  FpGrid g(pmf.size() - 1);
  for (std::size_t y = 0; y < pmf.size(); ++y) g.at(0, y) = pmf[y];
  return g;
}

std::string trajectory_csv(const TrajectoryStats& stats, const std::string& label) {
  std::vector<std::string> header = {"t", "alive_fraction"};
  for (std::uint32_t k = 1; k <= stats.d_max; ++k) header.push_back("mean_" + label + std::to_string(k));
  std::vector<std::vector<double>> rows;
  for (std::size_t j = 0; j < stats.times.size(); ++j) {
    std::vector<double> r = {stats.times[j], stats.alive_fraction[j]};
    r.insert(r.end(), stats.mean_class[j].begin(), stats.mean_class[j].end());
    rows.push_back(std::move(r));
  }
  std::ostringstream os;
  write_csv(os, header, rows);
  return os.str();
}

std::string trajectory_json(const TrajectoryStats& stats, const std::string& label) {
  const json j = {
      {"n_servers", stats.n_servers},
      {"d_max", stats.d_max},
      {"initial_files", stats.initial_files},
      {"class_label", label},
      {"t", stats.times},
      {"alive_fraction", stats.alive_fraction},
      {"mean_class", stats.mean_class},
      {"loss_times", stats.loss_times},
      {"failures", stats.failures},
      {"duplications", stats.duplications},
      {"collisions", stats.collisions},
      {"absorbed", stats.absorbed},
      {"absorption_time", stats.absorption_time},
  };
  return j.dump() + "\n";
}

void CommandReport::check(bool ok, const std::string& what) {
  findings.push_back(std::string(ok ? "PASS " : "FAIL ") + what);
  passed = passed && ok;
}

// ---------------------------------------------------------------------------
// commands

CommandReport cmd_simulate(const ExperimentConfig& c) {
  c.validate();
  CommandReport rep;
  const fs::path dir = c.out_dir / "simulate";
  const bool dominating = c.process == ProcessKind::Dominating;
  const std::string label = dominating ? "T" : "R";
  const std::uint32_t d = c.model.d_max;

  std::vector<std::vector<double>> alive;
  std::vector<std::vector<double>> classes;  // [replica][sample * d + k]
  std::vector<std::vector<double>> dur(c.grids.delta.size());
  std::vector<std::size_t> finite(c.grids.delta.size(), 0);
  std::vector<double> times;
  for (std::size_t r = 0; r < c.replicas; ++r) {
    const SystemParams p = replica_params(c.model, r);
    const TrajectoryStats s = dominating ? run_dominating(p, sim_options(c))
                                         : run_trajectory(p, sim_options(c));
    times = s.times;
    alive.push_back(s.alive_fraction);
    std::vector<double> flat;
    for (const auto& m : s.mean_class) flat.insert(flat.end(), m.begin(), m.end());
    classes.push_back(std::move(flat));
    for (std::size_t i = 0; i < c.grids.delta.size(); ++i) {
      if (const auto t = durability(s, c.grids.delta[i])) {
        dur[i].push_back(*t);
        ++finite[i];
      }
    }
    char name[32];
    std::snprintf(name, sizeof name, "replica_%04zu", r);
    if (c.write_csv) emit(rep, dir / (std::string(name) + ".csv"), trajectory_csv(s, label));
    if (c.write_json) emit(rep, dir / (std::string(name) + ".json"), trajectory_json(s, label));
  }

  const auto alive_s = summarize_columns(alive);
  const auto class_s = summarize_columns(classes);
  {
    std::vector<std::string> header = {"t", "alive_mean", "alive_std_err", "alive_ci_low",
                                       "alive_ci_high", "replicas"};
    for (std::uint32_t k = 1; k <= d; ++k) header.push_back("mean_" + label + std::to_string(k));
    Table agg(header);
    for (std::size_t j = 0; j < times.size(); ++j) {
      std::vector<std::string> row = {cell(times[j]), cell(alive_s[j].mean), cell(alive_s[j].std_err),
                                      cell(alive_s[j].ci_low), cell(alive_s[j].ci_high),
                                      std::to_string(c.replicas)};
      for (std::uint32_t k = 0; k < d; ++k) row.push_back(cell(class_s[j * d + k].mean));
      agg.row(std::move(row));
    }
    emit(rep, dir / "aggregate.csv", agg.str());
  }
  json dur_json = json::array();
  {
    Table t({"delta", "finite", "replicas", "mean", "q10", "q50", "q90"});
    for (std::size_t i = 0; i < c.grids.delta.size(); ++i) {
      const Summary s = summarize(dur[i]);
      t.row({cell(c.grids.delta[i]), std::to_string(finite[i]), std::to_string(c.replicas),
             cell(dur[i].empty() ? kNan : s.mean), cell(quantile(dur[i], 0.1)),
             cell(quantile(dur[i], 0.5)), cell(quantile(dur[i], 0.9))});
      dur_json.push_back({{"delta", c.grids.delta[i]}, {"finite", finite[i]}, {"values", dur[i]}});
    }
    emit(rep, dir / "durability.csv", t.str());
  }

  // Without duplication every file dies when its d holders have failed:
  // E[L(t) / N] = (F / N) (1 - (1 - e^{-mu t})^d).
  if (c.model.lambda == 0.0 && c.replicas >= 2) {
    const double per_server = initial_files_per_server(c.model);
    std::size_t bad = 0;
    for (std::size_t j : ten_indices(times.size())) {
      const double expect =
          per_server * (1.0 - std::pow(1.0 - std::exp(-c.model.mu * times[j]), d));
      if (std::fabs(alive_s[j].mean - expect) > 3.0 * alive_s[j].std_err + 1e-12) ++bad;
    }
    rep.check(bad == 0, "alive fraction within 3 standard errors of the no-duplication "
                        "closed form at 10 sample times (" + std::to_string(bad) + " outside)");
  }
  emit_summary(rep, dir, c, {{"durability", dur_json}, {"process", dominating ? "dominating" : "policy"}});
  return rep;
}

CommandReport cmd_meanfield(const ExperimentConfig& c) {
  c.validate();
  require(c.model.d_max == 2, "meanfield needs d_max = 2");
  require(c.model.horizon > 0.0, "meanfield needs horizon > 0");
  CommandReport rep;
  const fs::path dir = c.out_dir / "meanfield";
  const FpGrid start = initial_fp_grid(c.model);

  FpOptions fo;
  fo.lambda = c.model.lambda;
  fo.mu = c.model.mu;
  fo.times = output_grid(c.model.horizon, c.output_intervals);
  const FpHistory h = fp_solve(start, fo);
  emit(rep, dir / "fp.csv", h.to_csv());

  PicardOptions po;
  po.lambda = c.model.lambda;
  po.mu = c.model.mu;
  po.horizon = c.model.horizon;
  po.particles = c.mean_field.particles;
  po.cells = c.mean_field.cells;
  po.tol = c.mean_field.tol;
  po.max_iter = c.mean_field.max_iter;
  po.seed = c.model.seed;
  const PicardResult pic = picard_iterate(start.to_measure(), po);
  double sup = 0.0;
  {
    Table t({"t", "p_picard", "p_fp"});
    for (std::size_t i = 0; i < pic.p.size(); ++i) {
      const double mid = (static_cast<double>(i) + 0.5) * pic.cell_width;
      const double fp = h.p_at(mid);
      sup = std::max(sup, std::fabs(pic.p[i] - fp));
      t.row({cell(mid), cell(pic.p[i]), cell(fp)});
    }
    emit(rep, dir / "picard.csv", t.str());
  }
  {
    Table t({"iteration", "residual"});
    for (std::size_t i = 0; i < pic.residuals.size(); ++i) {
      t.row({std::to_string(i + 1), cell(pic.residuals[i])});
    }
    emit(rep, dir / "picard_residuals.csv", t.str());
  }
  emit(rep, dir / "final_law.json", h.final_state.to_json() + "\n");

  double mass_err = 0.0;
  for (double m : h.mass) mass_err = std::max(mass_err, std::fabs(m - 1.0));
  rep.check(mass_err <= 1e-9, "FP mass conserved within 1e-9 (" + cell(mass_err) + ")");
  rep.check(pic.converged, "fixed-point iteration converged in " + std::to_string(pic.iterations) +
                               " iterations");
  rep.check(sup <= 0.015, "fixed-point p(t) within 0.015 of the FP p(t) (" + cell(sup) + ")");
  emit_summary(rep, dir, c,
               {{"picard_iterations", pic.iterations},
                {"picard_converged", pic.converged},
                {"picard_noise_floor", pic.noise_floor},
                {"sup_p_difference", sup},
                {"fp_final_K", h.final_K},
                {"fp_steps", h.steps},
                {"fp_max_censored_flux", h.max_censored_flux}});
  return rep;
}

CommandReport cmd_decay(const ExperimentConfig& c) {
  c.validate();
  require(!c.grids.rho.empty(), "decay needs a non-empty rho grid");
  require(c.model.horizon > 0.0, "decay needs horizon > 0");
  CommandReport rep;
  const fs::path dir = c.out_dir / "decay";
  const std::uint32_t d = c.model.d_max;
  const auto times = output_grid(c.model.horizon, c.output_intervals);
  constexpr double kTail = 0.4;

  Table table({"source", "d", "rho", "fitted_rate", "r_squared", "bound", "margin", "pass"});
  json results = json::array();
  auto record = [&](const std::string& source, double rho, const RateFit& fit, double bound,
                    double slack) {
    const bool ok = std::isfinite(fit.rate) && fit.rate >= bound - slack;
    table.row({source, std::to_string(d), cell(rho), cell(fit.rate), cell(fit.r_squared),
               cell(bound), cell(fit.rate - bound), ok ? "1" : "0"});
    results.push_back({{"source", source}, {"rho", rho}, {"rate", fit.rate}, {"bound", bound}});
    rep.check(ok, source + " rho=" + cell(rho) + ": fitted rate " + cell(fit.rate) +
                      " >= mu kappa+ - " + cell(slack) + " = " + cell(bound - slack));
  };

  for (double rho : c.grids.rho) {
    SystemParams m = c.model;
    m.lambda = rho * m.mu;
    const double bound = m.mu * spectrum(d, rho).kappa_d_plus;
    if (d == 2) {
      FpOptions fo;
      fo.lambda = m.lambda;
      fo.mu = m.mu;
      fo.times = times;
      const FpHistory h = fp_solve(initial_fp_grid(m), fo);
      std::vector<double> L(times.size());
      for (std::size_t j = 0; j < times.size(); ++j) L[j] = h.m1[j] + 0.5 * h.m2[j];
      record("fp", rho, fit_positive_tail(times, L, kTail), bound, 0.01);
    }
    record("mean_ode", rho, fit_positive_tail(times, limit_alive(m, times), kTail), bound, 0.01);
    std::vector<std::vector<double>> pol, dom;
    for (std::size_t r = 0; r < c.replicas; ++r) {
      const SystemParams p = replica_params(m, r);
      pol.push_back(run_trajectory(p, sim_options(c)).alive_fraction);
      dom.push_back(run_dominating(p, sim_options(c)).alive_fraction);
    }
    record("policy", rho, fit_positive_tail(times, means_of(summarize_columns(pol)), kTail), bound,
           c.tolerance);
    record("dominating", rho, fit_positive_tail(times, means_of(summarize_columns(dom)), kTail),
           bound, c.tolerance);
  }
  emit(rep, dir / "decay.csv", table.str());
  emit_summary(rep, dir, c, {{"fits", results}, {"tail_fraction", kTail}});
  return rep;
}

CommandReport cmd_compare(const ExperimentConfig& c) {
  c.validate();
  CommandReport rep;
  const fs::path dir = c.out_dir / "compare";
  const std::uint32_t d = c.model.d_max;
  const auto times = output_grid(c.model.horizon, c.output_intervals);

  std::vector<std::vector<double>> pol, dom;
  for (std::size_t r = 0; r < c.replicas; ++r) {
    const SystemParams p = replica_params(c.model, r);
    pol.push_back(run_trajectory(p, sim_options(c)).alive_fraction);
    dom.push_back(run_dominating(p, sim_options(c)).alive_fraction);
  }
  const auto ps = summarize_columns(pol);
  const auto ds = summarize_columns(dom);
  const auto tbar = limit_alive(c.model, times);
  std::vector<double> fp(times.size(), kNan);
  if (d == 2) {
    FpOptions fo;
    fo.lambda = c.model.lambda;
    fo.mu = c.model.mu;
    fo.times = times;
    const FpHistory h = fp_solve(initial_fp_grid(c.model), fo);
    for (std::size_t j = 0; j < times.size(); ++j) fp[j] = h.m1[j] + 0.5 * h.m2[j];
  }
  Table t({"t", "policy_mean", "policy_ci_low", "policy_ci_high", "dominating_mean",
           "dominating_ci_low", "dominating_ci_high", "fp_alive", "limit_bound"});
  for (std::size_t j = 0; j < times.size(); ++j) {
    t.row({cell(times[j]), cell(ps[j].mean), cell(ps[j].ci_low), cell(ps[j].ci_high),
           cell(ds[j].mean), cell(ds[j].ci_low), cell(ds[j].ci_high), cell(fp[j]), cell(tbar[j])});
  }
  emit(rep, dir / "compare.csv", t.str());

  const double slack = kFiniteNSlack * initial_files_per_server(c.model);
  std::size_t above = 0, fp_off = 0, tbar_off = 0;
  for (std::size_t j = 0; j < times.size(); ++j) {
    if (ps[j].mean > ds[j].mean + 3.0 * std::hypot(ps[j].std_err, ds[j].std_err) + 1e-12) ++above;
  }
  for (std::size_t j : ten_indices(times.size())) {
    if (d == 2 && std::fabs(ps[j].mean - fp[j]) > 3.0 * ps[j].std_err + slack) ++fp_off;
    if (std::fabs(ds[j].mean - tbar[j]) > 3.0 * ds[j].std_err + slack) ++tbar_off;
  }
  rep.check(above == 0, "policy mean below dominating mean (3 SE) at every sample");
  if (d == 2) rep.check(fp_off == 0, "policy mean within 3 SE + finite-N slack of the FP curve");
  rep.check(tbar_off == 0, "dominating mean within 3 SE + finite-N slack of the limit curve");
  emit_summary(rep, dir, c, {{"finite_n_slack", slack}});
  return rep;
}

CommandReport cmd_figure3(const ExperimentConfig& c) {
  c.validate();
  require(!c.grids.d.empty() && !c.grids.rho.empty(), "figure3 needs non-empty d and rho grids");
  for (double rho : c.grids.rho) require(rho > 0.0, "figure3 needs rho > 0");
  CommandReport rep;
  const fs::path dir = c.out_dir / "figure3";
  const std::vector<std::size_t> ds(c.grids.d.begin(), c.grids.d.end());
  const auto rows = figure3_table(ds, c.grids.rho);
  emit(rep, dir / "figure3.csv", figure3_csv(rows));
  json spectra = json::array();
  for (auto d : c.grids.d) {
    for (double rho : c.grids.rho) spectra.push_back(json::parse(spectrum(d, rho).to_json()));
  }
  emit(rep, dir / "spectra.json", json({{"config", config_json(c)}, {"spectra", spectra}}).dump(2) + "\n");

  bool ratios = true, bounds = true, unit = true;
  for (const auto& r : rows) {
    ratios = ratios && r.ratio >= 1.0 - 1e-12;
    if (r.d == 1) unit = unit && std::fabs(r.ratio - 1.0) <= 1e-12;
    if (r.d >= 2) {
      bounds = bounds && r.kappa_plus > 0.0 && r.kappa_plus <= r.kappa_bar * (1 + 1e-12) &&
               r.kappa_bar < 1.0;
    }
  }
  rep.check(ratios, "every kappa_bar / kappa_plus ratio >= 1");
  rep.check(bounds, "0 < kappa_plus <= kappa_bar < 1 for every d >= 2");
  rep.check(unit, "d = 1 rows have ratio 1");
  emit_summary(rep, dir, c, {{"rows", rows.size()}});
  return rep;
}

CommandReport cmd_convergence(const ExperimentConfig& c) {
  c.validate();
  require(c.model.d_max == 2, "convergence needs d_max = 2");
  require(c.grids.n.size() >= 3, "convergence needs at least 3 values of N");
  require(!c.grids.t.empty(), "convergence needs a non-empty t grid");
  std::vector<std::uint32_t> ns = c.grids.n;
  std::sort(ns.begin(), ns.end());
  std::vector<double> ts = c.grids.t;
  std::sort(ts.begin(), ts.end());
  ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
  CommandReport rep;
  const fs::path dir = c.out_dir / "convergence";

  FpOptions fo;
  fo.lambda = c.model.lambda;
  fo.mu = c.model.mu;
  fo.times = ts;
  fo.snapshot_stride = 1;
  const FpHistory h = fp_solve(initial_fp_grid(c.model), fo);
  std::vector<DiscreteMeasure> limit;
  for (const auto& snap : h.snapshots) limit.push_back(snap.second.to_measure());

  // tv[n][t], and the shared-pair fraction per n.
  std::vector<std::vector<Summary>> tv(ns.size()), bl(ns.size());
  std::vector<Summary> pairs;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    SystemParams base = params_for_n(c.model, ns[i]);
    base.horizon = ts.back();
    TrajectoryOptions o;
    o.sample_times = ts;
    o.keep_server_counts = true;
    o.track_shared_pairs = true;
    std::vector<std::vector<double>> tv_r(ts.size()), bl_r(ts.size());
    std::vector<double> pair_r;
    for (std::size_t r = 0; r < c.replicas; ++r) {
      const TrajectoryStats s = run_trajectory(replica_params(base, r), o);
      for (std::size_t j = 0; j < ts.size(); ++j) {
        const auto emp = empirical_measure(reduce(s, j));
        const MeasureDistance dist = measure_distance(emp.measure, limit[j]);
        tv_r[j].push_back(dist.total_variation);
        bl_r[j].push_back(dist.bounded_lipschitz);
      }
      pair_r.push_back(s.shared_pair_fraction());
    }
    for (std::size_t j = 0; j < ts.size(); ++j) {
      tv[i].push_back(summarize(tv_r[j]));
      bl[i].push_back(summarize(bl_r[j]));
    }
    pairs.push_back(summarize(pair_r));
  }

  Table dist({"n", "t", "tv_mean", "tv_std_err", "bl_mean", "bl_std_err", "replicas"});
  for (std::size_t i = 0; i < ns.size(); ++i) {
    for (std::size_t j = 0; j < ts.size(); ++j) {
      dist.row({std::to_string(ns[i]), cell(ts[j]), cell(tv[i][j].mean), cell(tv[i][j].std_err),
                cell(bl[i][j].mean), cell(bl[i][j].std_err), std::to_string(c.replicas)});
    }
  }
  emit(rep, dir / "convergence.csv", dist.str());

  json per_t = json::array();
  for (std::size_t j = 0; j < ts.size(); ++j) {
    bool strict = true, ci = true;
    for (std::size_t i = 0; i + 1 < ns.size(); ++i) {
      const double a = tv[i][j].mean, b = tv[i + 1][j].mean;
      strict = strict && b < a;
      ci = ci && b <= a + kZ95 * std::hypot(tv[i][j].std_err, tv[i + 1][j].std_err);
    }
    per_t.push_back({{"t", ts[j]}, {"strictly_decreasing", strict}, {"ci_decreasing", ci}});
    rep.check(ci, "TV distance decreasing in N at t=" + cell(ts[j]) +
                      (strict ? " (strictly)" : " (within CI overlap)"));
  }

  // P(server meets a repeated pair by T) ~ C / N, with C fitted at the smallest N.
  const double C = pairs.front().mean * ns.front();
  Table pt({"n", "fraction_mean", "fraction_std_err", "n_times_fraction", "ratio_to_fit"});
  bool within = C > 0.0;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    const double scaled = pairs[i].mean * ns[i];
    const double ratio = C > 0.0 ? scaled / C : kNan;
    within = within && ratio >= 0.5 && ratio <= 2.0;
    pt.row({std::to_string(ns[i]), cell(pairs[i].mean), cell(pairs[i].std_err), cell(scaled),
            cell(ratio)});
  }
  emit(rep, dir / "shared_pairs.csv", pt.str());
  rep.check(within, "shared-pair fraction within a factor 2 of C/N (C = " + cell(C) + ")");
  emit_summary(rep, dir, c, {{"monotonicity", per_t}, {"shared_pair_constant", C}});
  return rep;
}

CommandReport cmd_coupling(const ExperimentConfig& c) {
  c.validate();
  CommandReport rep;
  const fs::path dir = c.out_dir / "coupling";
  CoupledOptions o;
  o.output_intervals = c.output_intervals;
  o.abort_on_violation = false;
  Table per({"replica", "violations", "samplewise_dominated", "failures", "shared_duplications",
             "dominating_only", "algorithm_inside", "rejected"});
  std::vector<std::vector<double>> la, lb;
  std::vector<double> gap;
  std::uint64_t violations = 0;
  std::size_t dominated = 0;
  std::vector<double> times;
  for (std::size_t r = 0; r < c.replicas; ++r) {
    const CoupledTrace tr = run_coupled(replica_params(c.model, r), o);
    violations += tr.violations;
    const bool dom = tr.samplewise_dominated();
    dominated += dom;
    per.row({std::to_string(r), std::to_string(tr.violations), dom ? "1" : "0",
             std::to_string(tr.failures), std::to_string(tr.shared_duplications),
             std::to_string(tr.dominating_only), std::to_string(tr.algorithm_inside),
             std::to_string(tr.rejected)});
    la.push_back(tr.algorithm.alive_fraction);
    lb.push_back(tr.dominating.alive_fraction);
    times = tr.algorithm.times;
  }
  emit(rep, dir / "coupling.csv", per.str());
  const auto sa = summarize_columns(la);
  const auto sb = summarize_columns(lb);
  Table curves({"t", "policy_mean", "dominating_mean", "max_policy_minus_dominating"});
  for (std::size_t j = 0; j < times.size(); ++j) {
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < la.size(); ++r) worst = std::max(worst, la[r][j] - lb[r][j]);
    curves.row({cell(times[j]), cell(sa[j].mean), cell(sb[j].mean), cell(worst)});
  }
  emit(rep, dir / "coupling_curves.csv", curves.str());
  rep.check(violations == 0, "inclusion violations = " + std::to_string(violations));
  rep.check(dominated == c.replicas, "L_A <= L_B at every sample in " + std::to_string(dominated) +
                                         "/" + std::to_string(c.replicas) + " replicas");
  emit_summary(rep, dir, c, {{"violations", violations}, {"dominated_replicas", dominated}});
  return rep;
}

CommandReport run_command(const ExperimentConfig& config) {
  switch (config.kind) {
    case ExperimentKind::Simulate: return cmd_simulate(config);
    case ExperimentKind::MeanField: return cmd_meanfield(config);
    case ExperimentKind::Decay: return cmd_decay(config);
    case ExperimentKind::Compare: return cmd_compare(config);
    case ExperimentKind::Figure3: return cmd_figure3(config);
    case ExperimentKind::Convergence: return cmd_convergence(config);
    case ExperimentKind::Coupling: return cmd_coupling(config);
  }
  throw ValidationError("unknown experiment kind");
}

}  // namespace repdecay
