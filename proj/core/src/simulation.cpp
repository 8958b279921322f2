#include "repdecay/simulation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <variant>


namespace repdecay {

namespace {

std::uint64_t draw_load(const PerServerLaw& law, Rng& rng) {
  switch (law.kind) {
    case PerServerLaw::Kind::Constant:
      return static_cast<std::uint64_t>(law.mean);
    case PerServerLaw::Kind::Poisson:
      return rng.poisson(law.mean);
    case PerServerLaw::Kind::Discrete: {
      double total = 0.0;
      for (const auto& entry : law.support) total += entry.second;
      const double u = rng.uniform() * total;
      double acc = 0.0;
      for (const auto& [value, weight] : law.support) {
        acc += weight;
        if (u < acc) return static_cast<std::uint64_t>(value);
      }
      for (auto it = law.support.rbegin(); it != law.support.rend(); ++it) {
        if (it->second > 0.0) return static_cast<std::uint64_t>(it->first);
      }
      return 0;
    }
  }
  return 0;
}

}  // namespace

NetworkState init_network(const SystemParams& params, Rng& rng,
                          bool track_shared_pairs) {
  params.validate();
  const std::uint32_t n = params.n_servers;
  const std::uint32_t d = params.d_max;
  NetworkState state(n, d);
  if (track_shared_pairs) state.enable_pair_tracking();
  std::vector<ServerId> servers;
  if (const auto* fixed = std::get_if<FixedTotal>(&params.initial_load)) {
    for (std::uint64_t f = 0; f < fixed->files; ++f) {
      sample_subset(n, d, rng, servers);
      state.add_file(servers);
    }
  } else {
    const auto& law = std::get<PerServerLaw>(params.initial_load);
    std::vector<ServerId> others;
    for (ServerId i = 0; i < n; ++i) {
      const std::uint64_t files = draw_load(law, rng);
      for (std::uint64_t f = 0; f < files; ++f) {
        sample_subset(n - 1, d - 1, rng, others);
        servers.assign(1, i);
        for (ServerId o : others) servers.push_back(o < i ? o : o + 1);
        state.add_file(servers);
      }
    }
  }
  return state;
}

Event next_event(const NetworkState& state, const SystemParams& params, Rng& rng) {
  if (state.alive_count() == 0) {
    return {std::numeric_limits<double>::infinity(), EventKind::Absorbed, kNone};
  }
  const double failure_rate = params.mu * state.n_servers();
  const double dup_rate = params.lambda * static_cast<double>(state.active_server_count());
  const double total = failure_rate + dup_rate;
  const double t = state.time() + rng.exponential(total);
  const double u = rng.uniform() * total;
  if (u < failure_rate || state.active_server_count() == 0) {
    return {t, EventKind::Failure, static_cast<ServerId>(rng.uniform_index(state.n_servers()))};
  }
  const auto idx = rng.uniform_index(state.active_server_count());
  return {t, EventKind::Duplication, state.active_server(idx)};
}

std::uint32_t apply_failure(NetworkState& state, ServerId server) {
  if (server >= state.n_servers()) throw std::out_of_range("apply_failure: server out of range");
  return state.fail_server(server);
}

ServerId sample_non_holder(const NetworkState& state, FileId f, Rng& rng) {
  const auto hs = state.holders(f);
  std::array<ServerId, 64> sorted{};
  std::vector<ServerId> big;
  ServerId* begin = sorted.data();
  if (hs.size() > sorted.size()) {
    big.resize(hs.size());
    begin = big.data();
  }
  for (std::size_t j = 0; j < hs.size(); ++j) begin[j] = hs[j].server;
  std::sort(begin, begin + hs.size());
  auto r = static_cast<ServerId>(rng.uniform_index(state.n_servers() - hs.size()));
  for (std::size_t j = 0; j < hs.size(); ++j) {
    if (begin[j] <= r) ++r;
  }
  return r;
}

DuplicationResult apply_duplication(NetworkState& state, ServerId server,
                                    const SystemParams& params, Rng& rng) {
  const std::uint32_t k = state.min_class(server);
  if (k == 0 || k >= state.d_max()) {
    throw std::logic_error("apply_duplication: server has no under-replicated file");
  }
  const auto members = state.class_members(server, k);
  const FileId f = members[rng.uniform_index(members.size())];
  ServerId target;
  if (params.collision_mode == CollisionMode::AvoidHolders) {
    target = sample_non_holder(state, f, rng);
  } else {
    const auto r = static_cast<ServerId>(rng.uniform_index(state.n_servers() - 1));
    target = r < server ? r : r + 1;
  }
  const bool added = state.add_copy(f, target);
  return {f, target, !added};
}

std::vector<double> output_grid(double horizon, std::size_t intervals) {
  if (horizon <= 0.0 || intervals == 0) return {0.0};
  std::vector<double> grid(intervals + 1);
  for (std::size_t j = 0; j <= intervals; ++j) {
    grid[j] = horizon * static_cast<double>(j) / static_cast<double>(intervals);
  }
  grid.back() = horizon;
  return grid;
}

std::vector<double> sample_grid(const SystemParams& params, const TrajectoryOptions& options) {
  if (options.sample_times.empty()) return output_grid(params.horizon, options.output_intervals);
  double prev = 0.0;
  for (double t : options.sample_times) {
    if (!(t >= prev) || t > params.horizon) {
      throw ValidationError("sample_times must be ascending and lie in [0, horizon]");
    }
    prev = t;
  }
  return options.sample_times;
}

TrajectoryRecorder::TrajectoryRecorder(const NetworkState& initial, std::vector<double> times,
                                       bool keep_server_counts)
    : keep_counts_(keep_server_counts) {
  stats_.n_servers = initial.n_servers();
  stats_.d_max = initial.d_max();
  stats_.initial_files = initial.alive_count();
  stats_.times = std::move(times);
  stats_.alive_fraction.reserve(stats_.times.size());
  stats_.mean_class.reserve(stats_.times.size());
}

void TrajectoryRecorder::sample(const NetworkState& state) {
  const double n = state.n_servers();
  const std::uint32_t d = state.d_max();
  stats_.alive_fraction.push_back(static_cast<double>(state.alive_count()) / n);
  std::vector<double> means(d);
  for (std::uint32_t k = 1; k <= d; ++k) {
    means[k - 1] = static_cast<double>(k) *
                   static_cast<double>(state.files_with_copies(k).size()) / n;
  }
  stats_.mean_class.push_back(std::move(means));
  if (keep_counts_) {
    std::vector<std::uint32_t> counts(static_cast<std::size_t>(state.n_servers()) * d);
    for (ServerId s = 0; s < state.n_servers(); ++s) {
      for (std::uint32_t k = 1; k <= d; ++k) {
        counts[static_cast<std::size_t>(s) * d + k - 1] =
            static_cast<std::uint32_t>(state.class_members(s, k).size());
      }
    }
    stats_.server_counts.push_back(std::move(counts));
  }
  ++next_;
}

void TrajectoryRecorder::record_before(const NetworkState& state, double t) {
  while (next_ < stats_.times.size() && stats_.times[next_] < t) sample(state);
}

void TrajectoryRecorder::note_loss(double t, std::uint32_t count) {
  stats_.loss_times.insert(stats_.loss_times.end(), count, t);
}

TrajectoryStats TrajectoryRecorder::finish(const NetworkState& state) {
  while (next_ < stats_.times.size()) sample(state);
  stats_.shared_pair_servers = state.servers_flagged();
  stats_.max_pair_multiplicity = state.max_pair_multiplicity_seen();
  return std::move(stats_);
}

TrajectoryStats run_trajectory(const SystemParams& params, const TrajectoryOptions& options) {
  params.validate();
  Rng rng(params.seed, 0);
  NetworkState state = init_network(params, rng, options.track_shared_pairs);
  if (options.record_event_log) state.enable_event_log();
  TrajectoryRecorder recorder(state, sample_grid(params, options),
                              options.keep_server_counts);
  std::uint64_t failures = 0;
  std::uint64_t duplications = 0;
  std::uint64_t collisions = 0;
  bool absorbed = state.alive_count() == 0;
  double absorption_time = 0.0;
  while (!absorbed) {
    const Event e = next_event(state, params, rng);
    if (e.kind == EventKind::Absorbed || e.time > params.horizon) break;
    recorder.record_before(state, e.time);
    state.set_time(e.time);
    if (e.kind == EventKind::Failure) {
      const std::uint32_t lost = apply_failure(state, e.server);
      recorder.note_loss(e.time, lost);
      ++failures;
      state.log_event({e.time, EventKind::Failure, e.server, kNone, kNone, lost});
      if (state.alive_count() == 0) {
        absorbed = true;
        absorption_time = e.time;
      }
    } else {
      const DuplicationResult dup = apply_duplication(state, e.server, params, rng);
      ++duplications;
      if (dup.collided) ++collisions;
      state.log_event({e.time, EventKind::Duplication, e.server, dup.file, dup.target, 0});
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

std::optional<double> durability(const TrajectoryStats& stats, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) {
    throw ValidationError("durability: delta must lie in (0, 1)");
  }
  if (stats.initial_files == 0) return 0.0;
  const auto needed = static_cast<std::size_t>(
      std::ceil(delta * static_cast<double>(stats.initial_files)));
  const std::size_t m = std::max<std::size_t>(needed, 1);
  if (m > stats.loss_times.size()) return std::nullopt;
  return stats.loss_times[m - 1];
}

}  // namespace repdecay
