#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "repdecay/network.hpp"
#include "repdecay/params.hpp"
#include "repdecay/rng.hpp"

namespace repdecay {

struct Event {
  double time;
  EventKind kind;
  ServerId server = kNone;
};

struct DuplicationResult {
  FileId file;
  ServerId target;
  bool collided;  ///< UniformMerge picked a current holder; nothing changed
};

/// Places the initial files. Every file gets d_max replicas on distinct
/// servers; FixedTotal draws a uniform d-subset per file, PerServerLaw lets
/// server i originate A_i files whose other d-1 replicas form a uniform subset
/// of the remaining servers.
NetworkState init_network(const SystemParams& params, Rng& rng,
                          bool track_shared_pairs = false);

/// Next transition of the algorithm process by competing exponentials.
///
/// Total rate is N*mu (failures) plus lambda times the number of servers whose
/// smallest nonempty copy class is below d_max. Random draws are consumed in
/// the fixed order: holding time, event kind, server. Returns an Absorbed
/// event with infinite time once every file is dead.
Event next_event(const NetworkState& state, const SystemParams& params, Rng& rng);

/// Server failure: every copy on `server` is dropped. Returns files lost.
std::uint32_t apply_failure(NetworkState& state, ServerId server);

/// Least-copies-first duplication at `server`: a file chosen uniformly in the
/// server's minimal nonempty class k* (< d_max) receives one more replica.
/// Draws: file index, then target. Throws std::logic_error if the server has
/// nothing to duplicate.
DuplicationResult apply_duplication(NetworkState& state, ServerId server,
                                    const SystemParams& params, Rng& rng);

/// Uniform server outside the replica set of f.
ServerId sample_non_holder(const NetworkState& state, FileId f, Rng& rng);

struct TrajectoryOptions {
  std::size_t output_intervals = 200;  ///< grid step = horizon / output_intervals
  /// Explicit sample times (ascending, within [0, horizon]). Overrides the
  /// uniform grid when non-empty.
  std::vector<double> sample_times;
  bool keep_server_counts = true;      ///< store R_{i,k} for every sample
  bool track_shared_pairs = true;
  bool audit_every_event = false;
  bool record_event_log = false;
};

/// Sampled history of one trajectory. Samples are right-continuous: the value
/// at time t includes every event at or before t.
struct TrajectoryStats {
  std::uint32_t n_servers = 0;
  std::uint32_t d_max = 0;
  std::uint64_t initial_files = 0;
  std::vector<double> times;
  std::vector<double> alive_fraction;            ///< L(t) / N
  std::vector<std::vector<double>> mean_class;   ///< [sample][k-1], mean over servers
  /// [sample] -> N*d counts, server-major: counts[i*d + k-1] = R_{i,k}.
  std::vector<std::vector<std::uint32_t>> server_counts;
  std::vector<double> loss_times;  ///< death time of each lost file, ascending
  std::uint64_t failures = 0;
  std::uint64_t duplications = 0;
  std::uint64_t collisions = 0;
  bool absorbed = false;
  double absorption_time = 0.0;
  /// Servers that shared >= 2 files with one other server at some time.
  std::size_t shared_pair_servers = 0;
  std::uint32_t max_pair_multiplicity = 0;
  std::vector<EventRecord> event_log;

  double shared_pair_fraction() const {
    return n_servers ? static_cast<double>(shared_pair_servers) / n_servers : 0.0;
  }
};

/// Uniform output grid 0, h, 2h, ..., horizon.
std::vector<double> output_grid(double horizon, std::size_t intervals);

/// Sample times for a run: options.sample_times if given, else the uniform
/// grid. Throws ValidationError on an unsorted or out-of-range list.
std::vector<double> sample_grid(const SystemParams& params, const TrajectoryOptions& options);

/// Incremental sampler shared by the event loops.
class TrajectoryRecorder {
 public:
  TrajectoryRecorder(const NetworkState& initial, std::vector<double> times,
                     bool keep_server_counts);

  /// Records every pending sample time strictly before `t`.
  void record_before(const NetworkState& state, double t);
  void note_loss(double t, std::uint32_t count);
  /// Records remaining samples and hands the result over.
  TrajectoryStats finish(const NetworkState& state);

 private:
  void sample(const NetworkState& state);
  TrajectoryStats stats_;
  std::size_t next_ = 0;
  bool keep_counts_;
};

/// Runs init + event loop until the horizon or absorption. Deterministic in
/// params.seed.
TrajectoryStats run_trajectory(const SystemParams& params,
                               const TrajectoryOptions& options = {});

/// First time the number of alive files drops to (1 - delta) * F_N or below,
/// using exact loss times. nullopt if that never happens within the horizon.
std::optional<double> durability(const TrajectoryStats& stats, double delta);

}  // namespace repdecay
