#include "repdecay/dominating.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "repdecay/spectral.hpp"

namespace repdecay {

namespace {

struct CopyPick {
  FileId file;
  ServerId server;
};

// Uniform choice among the under-replicated copies: class k contributes k
// copies per file, so one index draw selects both the file and its holder.
CopyPick pick_under_replicated(const NetworkState& s, Rng& rng) {
  std::uint64_t j = rng.uniform_index(s.under_replicated_copies());
  for (std::uint32_t k = 1; k < s.d_max(); ++k) {
    const auto files = s.files_with_copies(k);
    const std::uint64_t block = static_cast<std::uint64_t>(k) * files.size();
    if (j < block) {
      const FileId f = files[j / k];
      return {f, s.holders(f)[j % k].server};
    }
    j -= block;
  }
  throw std::logic_error("pick_under_replicated: index out of range");
}

ServerId uniform_other(ServerId self, std::uint32_t n, Rng& rng) {
  const auto r = static_cast<ServerId>(rng.uniform_index(n - 1));
  return r < self ? r : r + 1;
}

}  // namespace

TrajectoryStats run_dominating(const SystemParams& params, const TrajectoryOptions& options) {
  params.validate();
  Rng rng(params.seed, 0);
  NetworkState state = init_network(params, rng, options.track_shared_pairs);
  if (options.record_event_log) state.enable_event_log();
  TrajectoryRecorder recorder(state, sample_grid(params, options),
                              options.keep_server_counts);
  std::uint64_t failures = 0, duplications = 0, collisions = 0;
  bool absorbed = state.alive_count() == 0;
  double absorption_time = 0.0;
  const double failure_rate = params.mu * state.n_servers();
  while (!absorbed) {
    const double dup_rate =
        params.lambda * static_cast<double>(state.under_replicated_copies());
    const double total = failure_rate + dup_rate;
    const double t = state.time() + rng.exponential(total);
    if (t > params.horizon) break;
    const double u = rng.uniform() * total;
    recorder.record_before(state, t);
    state.set_time(t);
    if (u < failure_rate || state.under_replicated_copies() == 0) {
      const auto s = static_cast<ServerId>(rng.uniform_index(state.n_servers()));
      const std::uint32_t lost = state.fail_server(s);
      recorder.note_loss(t, lost);
      ++failures;
      state.log_event({t, EventKind::Failure, s, kNone, kNone, lost});
      if (state.alive_count() == 0) {
        absorbed = true;
        absorption_time = t;
      }
    } else {
      const CopyPick pick = pick_under_replicated(state, rng);
      const ServerId target = params.collision_mode == CollisionMode::AvoidHolders
                                  ? sample_non_holder(state, pick.file, rng)
                                  : uniform_other(pick.server, state.n_servers(), rng);
      if (!state.add_copy(pick.file, target)) ++collisions;
      ++duplications;
      state.log_event({t, EventKind::Duplication, pick.server, pick.file, target, 0});
    }
    if (options.audit_every_event) state.audit();
  }
  TrajectoryStats stats = recorder.finish(state);
  stats.failures = failures;
  stats.duplications = duplications;
  stats.collisions = collisions;
  stats.absorbed = absorbed;
  stats.absorption_time = absorption_time;
  if (options.record_event_log) stats.event_log = state.event_log();
  return stats;
}

bool CoupledTrace::samplewise_dominated() const {
  const auto& a = algorithm.alive_fraction;
  const auto& b = dominating.alive_fraction;
  if (a.size() != b.size()) return false;
  for (std::size_t j = 0; j < a.size(); ++j) {
    if (a[j] > b[j]) return false;
  }
  return true;
}

CoupledTrace run_coupled(const SystemParams& params, const CoupledOptions& options) {
  params.validate();
  if (params.collision_mode != CollisionMode::AvoidHolders) {
    throw ValidationError("run_coupled: the coupling is built for AvoidHolders targets");
  }
  Rng rng(params.seed, 0);
  NetworkState a = init_network(params, rng, false);
  NetworkState b = a;
  const auto grid = output_grid(params.horizon, options.output_intervals);
  TrajectoryRecorder rec_a(a, grid, options.keep_server_counts);
  TrajectoryRecorder rec_b(b, grid, options.keep_server_counts);
  const std::uint32_t n = a.n_servers();
  const std::uint32_t d = a.d_max();
  const double lambda = params.lambda;
  const double failure_rate = params.mu * n;

  CoupledTrace trace;
  std::vector<FileId> touched;
  std::vector<ServerId> spare;

  auto inclusion_holds = [&](FileId f) {
    if (a.copies(f) > b.copies(f)) return false;
    for (const Holder& h : a.holders(f)) {
      if (!b.holds(f, h.server)) return false;
    }
    return true;
  };
  auto report = [&](FileId f, const char* event, double t) {
    ++trace.violations;
    if (trace.first_violation.empty() || options.abort_on_violation) {
      std::ostringstream os;
      os << "inclusion violated after " << event << " at t=" << t << " for file " << f
         << ": A={";
      for (ServerId s : a.replica_set(f)) os << ' ' << s;
      os << " } B={";
      for (ServerId s : b.replica_set(f)) os << ' ' << s;
      os << " }";
      if (trace.first_violation.empty()) trace.first_violation = os.str();
      if (options.abort_on_violation) throw std::logic_error(os.str());
    }
  };

  bool absorbed = b.alive_count() == 0;
  double absorption_time = 0.0;
  std::uint64_t a_dups = 0, b_dups = 0;
  while (!absorbed) {
    const double b_rate = lambda * static_cast<double>(b.under_replicated_copies());
    const double a_rate = lambda * static_cast<double>(a.active_server_count());
    const double total = failure_rate + b_rate + a_rate;
    const double t = b.time() + rng.exponential(total);
    if (t > params.horizon) break;
    const double u = rng.uniform() * total;
    rec_a.record_before(a, t);
    rec_b.record_before(b, t);
    a.set_time(t);
    b.set_time(t);
    touched.clear();
    const char* event = "failure";
    if (u < failure_rate || b_rate + a_rate == 0.0) {
      const auto s = static_cast<ServerId>(rng.uniform_index(n));
      for (std::uint32_t k = 1; k <= d; ++k) {
        const auto members = b.class_members(s, k);
        touched.insert(touched.end(), members.begin(), members.end());
      }
      rec_a.note_loss(t, a.fail_server(s));
      rec_b.note_loss(t, b.fail_server(s));
      ++trace.failures;
    } else if (u < failure_rate + b_rate) {
      event = "dominating clock";
      const CopyPick pick = pick_under_replicated(b, rng);
      const FileId f = pick.file;
      const std::uint32_t ka = a.copies(f);
      bool joint = false;
      if (ka > 0 && ka < d && a.holds(f, pick.server) && a.min_class(pick.server) == ka) {
        joint = rng.uniform_index(a.class_members(pick.server, ka).size()) == 0;
      }
      if (joint) {
        const ServerId ta = sample_non_holder(a, f, rng);
        const ServerId tb = b.holds(f, ta) ? sample_non_holder(b, f, rng) : ta;
        a.add_copy(f, ta);
        b.add_copy(f, tb);
        ++trace.shared_duplications;
        ++a_dups;
      } else {
        b.add_copy(f, sample_non_holder(b, f, rng));
        ++trace.dominating_only;
      }
      ++b_dups;
      touched.push_back(f);
    } else {
      event = "policy clock";
      const ServerId s = a.active_server(rng.uniform_index(a.active_server_count()));
      const auto members = a.class_members(s, a.min_class(s));
      const FileId f = members[rng.uniform_index(members.size())];
      if (b.copies(f) == d) {
        spare.clear();
        for (const Holder& h : b.holders(f)) {
          if (!a.holds(f, h.server)) spare.push_back(h.server);
        }
        if (spare.empty()) {
          report(f, event, t);
        } else {
          a.add_copy(f, spare[rng.uniform_index(spare.size())]);
          ++trace.algorithm_inside;
          ++a_dups;
          touched.push_back(f);
        }
      } else {
        ++trace.rejected;
      }
    }
    if (options.full_check) {
      for (FileId f = 0; f < b.file_count(); ++f) {
        if (!inclusion_holds(f)) report(f, event, t);
      }
    } else {
      for (FileId f : touched) {
        if (!inclusion_holds(f)) report(f, event, t);
      }
    }
    if (b.alive_count() == 0) {
      absorbed = true;
      absorption_time = t;
    }
  }
  trace.algorithm = rec_a.finish(a);
  trace.dominating = rec_b.finish(b);
  for (TrajectoryStats* s : {&trace.algorithm, &trace.dominating}) {
    s->failures = trace.failures;
    s->absorbed = absorbed;
    s->absorption_time = absorption_time;
  }
  trace.algorithm.duplications = a_dups;
  trace.dominating.duplications = b_dups;
  return trace;
}

namespace {

// Cubic Hermite table of the mean curve V(tau), tau in units of 1/mu, using
// the exact derivative M V at the nodes.
class DriveTable {
 public:
  DriveTable(std::size_t d, double rho, std::span<const double> V0, double tau_max, double step)
      : d_(d), step_(step) {
    const auto n = static_cast<std::size_t>(std::ceil(tau_max / step)) + 1;
    std::vector<double> grid(n + 1);
    for (std::size_t j = 0; j <= n; ++j) grid[j] = step * static_cast<double>(j);
    values_ = solve_V(d, rho, V0, grid);
    const DenseMatrix m = build_M(d, rho);
    slopes_.assign(values_.size(), std::vector<double>(d, 0.0));
    for (std::size_t j = 0; j < values_.size(); ++j) {
      for (std::size_t i = 0; i < d; ++i) {
        double s = 0.0;
        for (std::size_t c = 0; c < d; ++c) s += m(i, c) * values_[j][c];
        slopes_[j][i] = s;
      }
    }
  }

  double value(std::size_t k, double tau) const {
    const double x = std::clamp(tau / step_, 0.0, static_cast<double>(values_.size() - 1));
    auto j = static_cast<std::size_t>(x);
    if (j + 1 >= values_.size()) j = values_.size() - 2;
    const double s = x - static_cast<double>(j);
    const double s2 = s * s, s3 = s2 * s;
    return (2 * s3 - 3 * s2 + 1) * values_[j][k] + (s3 - 2 * s2 + s) * step_ * slopes_[j][k] +
           (-2 * s3 + 3 * s2) * values_[j + 1][k] + (s3 - s2) * step_ * slopes_[j + 1][k];
  }

  double max_value(std::size_t k) const {
    double m = 0.0;
    for (const auto& v : values_) m = std::max(m, v[k]);
    return m;
  }

  // Integral of V_k over [0, tau] (Hermite rule on whole cells, Simpson on the rest).
  double integral(std::size_t k, double tau) const {
    double acc = 0.0;
    std::size_t j = 0;
    for (; (j + 1) * step_ <= tau && j + 1 < values_.size(); ++j) {
      acc += step_ * (values_[j][k] + values_[j + 1][k]) / 2 +
             step_ * step_ * (slopes_[j][k] - slopes_[j + 1][k]) / 12;
    }
    const double a = static_cast<double>(j) * step_;
    if (tau > a) acc += (tau - a) / 6 * (value(k, a) + 4 * value(k, (a + tau) / 2) + value(k, tau));
    return acc;
  }

 private:
  std::size_t d_;
  double step_;
  std::vector<std::vector<double>> values_;
  std::vector<std::vector<double>> slopes_;
};

LatticePoint draw_from(const DiscreteMeasure& law, double total, Rng& rng) {
  const double u = rng.uniform() * total;
  double acc = 0.0;
  const LatticePoint* last = nullptr;
  for (const auto& [point, w] : law.support()) {
    if (w <= 0.0) continue;
    acc += w;
    last = &point;
    if (u < acc) return point;
  }
  return *last;
}

}  // namespace

DiscreteMeasure TBarResult::final_measure() const {
  const std::size_t dim = final_states.empty() ? 0 : final_states.front().size();
  DiscreteMeasure m(dim);
  const double w = final_states.empty() ? 0.0 : 1.0 / static_cast<double>(final_states.size());
  for (const auto& s : final_states) m.add(s, w);
  return m;
}

TBarResult simulate_tbar(const TBarOptions& opt) {
  const std::uint32_t d = opt.d;
  if (d < 1) throw ValidationError("simulate_tbar: d must be >= 1");
  if (!(opt.rho >= 0.0) || !std::isfinite(opt.rho)) {
    throw ValidationError("simulate_tbar: rho must be finite and >= 0");
  }
  if (!(opt.mu > 0.0) || !std::isfinite(opt.mu)) {
    throw ValidationError("simulate_tbar: mu must be finite and > 0");
  }
  if (opt.particles < 1000) throw ValidationError("simulate_tbar: need at least 1000 particles");
  if (!(opt.horizon >= 0.0) || !std::isfinite(opt.horizon)) {
    throw ValidationError("simulate_tbar: horizon must be finite and >= 0");
  }
  if (!(opt.drive_step > 0.0)) throw ValidationError("simulate_tbar: drive_step must be > 0");

  std::vector<double> V0(d, 0.0);
  double init_total = 0.0;
  if (opt.initial) {
    if (opt.initial->dim() != d) throw ValidationError("simulate_tbar: initial law has wrong dimension");
    init_total = opt.initial->total();
    if (!(init_total > 0.0)) throw ValidationError("simulate_tbar: initial law has no mass");
    for (const auto& [point, w] : opt.initial->support()) {
      if (w < 0.0) throw ValidationError("simulate_tbar: negative weight in initial law");
      for (std::size_t k = 0; k < d; ++k) V0[k] += w * point[k] / init_total;
    }
  } else {
    if (opt.V0.size() != d) throw ValidationError("simulate_tbar: V0 has wrong dimension");
    for (std::size_t k = 0; k < d; ++k) {
      if (!(opt.V0[k] >= 0.0) || opt.V0[k] >= 700.0) {
        throw ValidationError("simulate_tbar: V0 entries must lie in [0, 700)");
      }
      V0[k] = opt.V0[k];
    }
  }

  const double mu = opt.mu;
  const double lambda = opt.rho * mu;
  const DriveTable drive(d, opt.rho, V0, mu * opt.horizon, opt.drive_step);
  double arrival_bound = 0.0;
  for (std::size_t k = 0; k + 1 < d; ++k) arrival_bound += drive.max_value(k);
  // Hermite overshoot between nodes is O(step^4); the margin covers it.
  arrival_bound = lambda * arrival_bound * (1.0 + 1e-6) + 1e-300;

  TBarResult out;
  out.times = output_grid(opt.horizon, opt.output_intervals);
  const std::size_t n_times = out.times.size();
  std::vector<double> sum(n_times * d, 0.0), sq(n_times * d, 0.0);
  out.final_states.reserve(opt.particles);

  std::vector<std::uint32_t> r(d);
  for (std::size_t m = 0; m < opt.particles; ++m) {
    Rng rng(opt.seed, m);
    if (opt.initial) {
      const LatticePoint p = draw_from(*opt.initial, init_total, rng);
      std::copy(p.begin(), p.end(), r.begin());
    } else {
      for (std::size_t k = 0; k < d; ++k) r[k] = static_cast<std::uint32_t>(rng.poisson(V0[k]));
    }
    double t = 0.0;
    std::size_t next = 0;
    auto record_until = [&](double limit, bool inclusive) {
      while (next < n_times && (out.times[next] < limit || (inclusive && out.times[next] <= limit))) {
        for (std::size_t k = 0; k < d; ++k) {
          const double v = r[k];
          sum[next * d + k] += v;
          sq[next * d + k] += v * v;
        }
        ++next;
      }
    };
    for (;;) {
      double promote = 0.0, demote = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        if (k + 1 < d) promote += lambda * static_cast<double>(k + 1) * r[k];
        if (k > 0) demote += mu * static_cast<double>(k) * r[k];
      }
      const double bound = mu + promote + demote + arrival_bound;
      const double t_next = t + rng.exponential(bound);
      const double t_end = std::min(t_next, opt.horizon);
      out.compensator[static_cast<std::size_t>(TBarJump::Reset)] += mu * (t_end - t);
      out.compensator[static_cast<std::size_t>(TBarJump::Promotion)] += promote * (t_end - t);
      out.compensator[static_cast<std::size_t>(TBarJump::Demotion)] += demote * (t_end - t);
      record_until(t_next, false);
      if (t_next > opt.horizon) break;
      t = t_next;
      ++out.proposals;

      long weight_before = 0;
      for (std::size_t k = 0; k < d; ++k) weight_before += static_cast<long>(k + 1) * r[k];
      double u = rng.uniform() * bound;
      long expected_change = 0;
      bool jumped = true;
      TBarJump kind = TBarJump::Reset;
      if (u < mu) {
        std::fill(r.begin(), r.end(), 0u);
        expected_change = -weight_before;
      } else if ((u -= mu) < promote) {
        kind = TBarJump::Promotion;
        std::size_t k = 0;
        for (; k + 2 < d; ++k) {
          const double w = lambda * static_cast<double>(k + 1) * r[k];
          if (u < w) break;
          u -= w;
        }
        // Rounding can leave u on an empty class; fall back to the nearest
        // class that can actually promote.
        while (r[k] == 0) k = k == 0 ? d - 2 : k - 1;
        --r[k];
        ++r[k + 1];
        expected_change = 1;
      } else if ((u -= promote) < demote) {
        kind = TBarJump::Demotion;
        std::size_t k = 1;
        for (; k + 1 < d; ++k) {
          const double w = mu * static_cast<double>(k) * r[k];
          if (u < w) break;
          u -= w;
        }
        while (r[k] == 0) k = k == 1 ? d - 1 : k - 1;
        --r[k];
        ++r[k - 1];
        expected_change = -1;
      } else {
        u -= demote;
        kind = TBarJump::Arrival;
        jumped = false;
        double rate_sum = 0.0;
        for (std::size_t k = 1; k < d; ++k) {
          const double w = lambda * drive.value(k - 1, mu * t);
          rate_sum += w;
          if (!jumped && u < w) {
            ++r[k];
            expected_change = static_cast<long>(k + 1);
            jumped = true;
          }
          if (!jumped) u -= w;
        }
        if (rate_sum > arrival_bound) {
          throw NumericalError("simulate_tbar: arrival rate exceeded its thinning bound");
        }
      }
      if (!jumped) continue;
      ++out.jumps[static_cast<std::size_t>(kind)];
      long weight_after = 0;
      for (std::size_t k = 0; k < d; ++k) weight_after += static_cast<long>(k + 1) * r[k];
      if (weight_after - weight_before != expected_change) ++out.audit_failures;
    }
    record_until(opt.horizon, true);
    out.final_states.push_back(r);
  }

  for (std::size_t k = 1; k < d; ++k) {
    out.compensator[static_cast<std::size_t>(TBarJump::Arrival)] +=
        static_cast<double>(opt.particles) * lambda * drive.integral(k - 1, mu * opt.horizon) / mu;
  }
  const double M = static_cast<double>(opt.particles);
  out.mean.assign(n_times, std::vector<double>(d));
  out.std_err.assign(n_times, std::vector<double>(d));
  out.drive.assign(n_times, std::vector<double>(d));
  for (std::size_t j = 0; j < n_times; ++j) {
    for (std::size_t k = 0; k < d; ++k) {
      const double mean = sum[j * d + k] / M;
      const double var = std::max(0.0, sq[j * d + k] / M - mean * mean);
      out.mean[j][k] = mean;
      out.std_err[j][k] = std::sqrt(var * M / (M - 1.0) / M);
      out.drive[j][k] = drive.value(k, mu * out.times[j]);
    }
  }
  return out;
}

}  // namespace repdecay
