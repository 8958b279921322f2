#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "repdecay/network.hpp"
#include "repdecay/simulation.hpp"

namespace repdecay {

/// Per-server reduced state: counts[k-1] = number of files with exactly k
/// copies, one of which is on the server.
struct ReducedState {
  std::vector<std::uint32_t> counts;
  auto operator<=>(const ReducedState&) const = default;
};

std::vector<ReducedState> reduce(const NetworkState& state);
/// Reduced states stored in a trajectory sample (requires keep_server_counts).
std::vector<ReducedState> reduce(const TrajectoryStats& stats, std::size_t sample);

using LatticePoint = std::vector<std::uint32_t>;

/// Finitely supported measure on N^dim with lexicographically ordered support.
class DiscreteMeasure {
 public:
  explicit DiscreteMeasure(std::size_t dim) : dim_(dim) {}

  std::size_t dim() const noexcept { return dim_; }
  void add(const LatticePoint& point, double weight);
  double weight(const LatticePoint& point) const;
  double total() const;
  const std::map<LatticePoint, double>& support() const noexcept { return weights_; }

  template <class F>
  double evaluate(F&& f) const {
    double acc = 0.0;
    for (const auto& [point, w] : weights_) acc += w * f(point);
    return acc;
  }

  /// Sparse JSON list [[point, weight], ...] in lexicographic order.
  std::string to_json() const;
  static DiscreteMeasure from_json(const std::string& text);

 private:
  std::size_t dim_;
  std::map<LatticePoint, double> weights_;
};

/// Normalized counting measure of N reduced states.
struct EmpiricalMeasure {
  DiscreteMeasure measure;
  std::size_t n_servers;
};

EmpiricalMeasure empirical_measure(std::span<const ReducedState> reduced);

struct MeasureDistance {
  double total_variation;  ///< exact: half the l1 distance of the weights
  /// Lower bound on the bounded-Lipschitz distance (|f| <= 1, Lip(f) <= 1
  /// under the l1 ground metric). Always within [TV, 2 TV].
  double bounded_lipschitz;
};

/// Throws ValidationError on dimension mismatch.
MeasureDistance measure_distance(const DiscreteMeasure& a, const DiscreteMeasure& b);

struct SharedPairReport {
  std::uint32_t max_shared = 0;     ///< max files co-located on one server pair
  std::size_t offending_pairs = 0;  ///< server pairs co-hosting >= 2 files
};

/// Snapshot diagnostic over every pair of servers holding a common alive file.
/// For d = 2 the pair counts are exactly the X_{i,j}.
SharedPairReport shared_pair_diagnostic(const NetworkState& state);

}  // namespace repdecay
