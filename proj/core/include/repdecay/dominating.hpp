#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "repdecay/params.hpp"
#include "repdecay/reduced_view.hpp"
#include "repdecay/simulation.hpp"

namespace repdecay {

// The dominating process is a proof device, not a placement policy: every copy
// of every file with fewer than d copies duplicates at rate lambda, whatever
// else its server holds. It bounds the survival of the real policy from above.

/// Event loop of the dominating process. Total rate is N mu plus lambda times
/// the number of under-replicated copies. Draw order: holding time, kind, then
/// either the failing server or one under-replicated copy (which fixes both the
/// file and the duplicating server), then the target. With lambda = 0 the draws
/// coincide with run_trajectory, so both return the same history.
///
/// In the returned stats mean_class[k-1] and server_counts hold T_{i,k}, the
/// dominating analogue of R_{i,k}.
TrajectoryStats run_dominating(const SystemParams& params,
                               const TrajectoryOptions& options = {});

struct CoupledOptions {
  std::size_t output_intervals = 200;
  bool keep_server_counts = false;
  /// Throw std::logic_error at the first inclusion violation. When false the
  /// run continues and the violations are only counted.
  bool abort_on_violation = true;
  /// Check every file after every event instead of only the files the event
  /// touched. Quadratic; meant for tests.
  bool full_check = false;
};

struct CoupledTrace {
  TrajectoryStats algorithm;   ///< the real policy (A)
  TrajectoryStats dominating;  ///< the dominating process (B)
  std::uint64_t violations = 0;
  std::string first_violation;
  std::uint64_t failures = 0;
  std::uint64_t shared_duplications = 0;     ///< one clock moved both A and B
  std::uint64_t dominating_only = 0;         ///< B copied, A did not
  std::uint64_t algorithm_inside = 0;        ///< A copied onto a node of a full B set
  std::uint64_t rejected = 0;                ///< A clock fired on a file B still drives

  /// L_A(t) <= L_B(t) at every sample time.
  bool samplewise_dominated() const;
};

/// Runs the policy A and the dominating process B from one initial placement
/// on a merged schedule that keeps A_f inside B_f for every file:
///  - failures hit the same server in both;
///  - each under-replicated B copy owns a clock of rate lambda; when it rings
///    for (f, i) and f is in A's minimal class at i, A duplicates f as well
///    with probability 1 / |that class|, onto a uniform non-holder of A_f, and
///    B reuses A's target when it lies outside B_f;
///  - every A-active server also owns a clock of rate lambda, which only
///    acts when A's chosen file already has d copies in B; A then copies onto
///    a uniform node of B_f minus A_f.
/// Both marginal duplication rates are exact. Targets use AvoidHolders; any
/// other collision mode is rejected with ValidationError.
CoupledTrace run_coupled(const SystemParams& params, const CoupledOptions& options = {});

/// Jump types of the limit process, in the order used by TBarResult counters.
enum class TBarJump : std::uint8_t { Reset, Arrival, Promotion, Demotion };

struct TBarOptions {
  std::uint32_t d = 2;
  double rho = 1.0;
  double mu = 1.0;
  /// Mean of the initial state. Ignored when `initial` is set (its mean is
  /// used). Without `initial`, coordinates start as independent Poisson(V0_k).
  std::vector<double> V0;
  std::optional<DiscreteMeasure> initial;
  std::size_t particles = 10000;
  double horizon = 5.0;
  std::size_t output_intervals = 50;
  std::uint64_t seed = 1;
  /// Step of the drive table in units of 1/mu.
  double drive_step = 1e-3;
};

struct TBarResult {
  std::vector<double> times;
  std::vector<std::vector<double>> mean;      ///< [sample][k-1] ensemble mean
  std::vector<std::vector<double>> std_err;   ///< [sample][k-1]
  std::vector<std::vector<double>> drive;     ///< [sample][k-1] E T_k from the mean ODE
  std::vector<std::vector<std::uint32_t>> final_states;  ///< one per particle, at horizon
  std::array<std::uint64_t, 4> jumps{};       ///< indexed by TBarJump
  std::array<double, 4> compensator{};        ///< integrated rate per jump type
  std::uint64_t proposals = 0;
  std::uint64_t audit_failures = 0;           ///< jumps outside the rate table

  /// Empirical law of the particles at the horizon.
  DiscreteMeasure final_measure() const;
};

/// M independent copies of the limit process of the dominating model, whose
/// arrival rates read the mean curve V(mu t) from solve_V:
///   reset to 0 at mu; +e_k at lambda V_{k-1}(mu t) for k >= 2;
///   -e_k + e_{k+1} at lambda k r_k (k < d); +e_{k-1} - e_k at mu (k-1) r_k (k > 1).
/// Event times are exact: internal rates are constant between jumps and the
/// arrivals are thinned against lambda times the sum of the drive maxima.
/// Particle m uses Rng(seed, m). Requires particles >= 1000.
TBarResult simulate_tbar(const TBarOptions& options);

}  // namespace repdecay
