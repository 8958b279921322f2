#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "repdecay/reduced_view.hpp"

namespace repdecay {

/// Probability weights q(x, y) on {0..K}^2 for the pair (singleton files,
/// paired files) seen from one server in the d = 2 limit.
class FpGrid {
 public:
  explicit FpGrid(std::size_t K = 0) : K_(K), q_((K + 1) * (K + 1), 0.0) {}

  static FpGrid point_mass(std::size_t x, std::size_t y);
  /// x = 0 and y ~ Poisson(mean), cut where the remaining tail is below
  /// `tail` and renormalized.
  static FpGrid poisson_pairs(double mean, double tail = 1e-15);
  static FpGrid from_measure(const DiscreteMeasure& m);

  std::size_t K() const noexcept { return K_; }
  double& at(std::size_t x, std::size_t y) { return q_[x * (K_ + 1) + y]; }
  double at(std::size_t x, std::size_t y) const { return q_[x * (K_ + 1) + y]; }
  std::vector<double>& data() noexcept { return q_; }
  const std::vector<double>& data() const noexcept { return q_; }

  double mass() const;
  /// P(x > 0) = 1 - sum_y q(0, y).
  double p() const;
  double mean_x() const;
  double mean_y() const;
  /// E[u^(x+y)].
  double total_copies_pgf(double u) const;
  /// Mass on the layer {x = K or y = K}.
  double boundary_mass() const;
  /// Largest coordinate carrying positive mass.
  std::size_t support_bound() const;
  /// Copy onto a larger (or equal) truncation.
  FpGrid resized(std::size_t K) const;
  DiscreteMeasure to_measure(double threshold = 0.0) const;
  /// Sparse JSON list shared with DiscreteMeasure.
  std::string to_json() const { return to_measure().to_json(); }

 private:
  std::size_t K_;
  std::vector<double> q_;
};

/// dq/dt for fixed p, written to `dq` (same layout as q.data()). Jumps that
/// would leave the grid are suppressed, which keeps the total mass constant;
/// the suppressed probability flux is returned.
double fp_generator_apply(const FpGrid& q, double p, double lambda, double mu,
                          std::vector<double>& dq);

struct FpOptions {
  double lambda = 1.0;
  double mu = 1.0;
  std::vector<double> times;          ///< ascending output times, >= 0
  double step_factor = 0.1;           ///< h = step_factor / (mu (1 + K) + 2 lambda)
  double boundary_tol = 1e-10;        ///< grow K when boundary mass exceeds this
  std::size_t max_K = 4096;
  std::size_t snapshot_stride = 0;    ///< keep every n-th output grid (0: none)
};

struct FpHistory {
  std::vector<double> times;
  std::vector<double> p;
  std::vector<double> m1;  ///< E[x]
  std::vector<double> m2;  ///< E[y]
  std::vector<double> mass;
  std::vector<std::pair<double, FpGrid>> snapshots;
  FpGrid final_state;
  std::size_t final_K = 0;
  std::size_t steps = 0;
  std::size_t clamped = 0;          ///< tiny negative weights set to zero
  double max_censored_flux = 0.0;   ///< largest suppressed flux seen

  /// Linear interpolation of p between output times (constant beyond the ends).
  double p_at(double t) const;
  /// CSV with columns t,p,m1,m2,L where L = m1 + m2/2.
  std::string to_csv() const;
};

/// Explicit RK4 for the self-consistent forward equation, with p(q)
/// recomputed at every stage. Throws NumericalError if a weight drops below
/// -1e-14 or the truncation would exceed max_K.
FpHistory fp_solve(const FpGrid& initial, const FpOptions& options);

struct PicardOptions {
  double lambda = 1.0;
  double mu = 1.0;
  double horizon = 5.0;
  std::size_t particles = 10000;
  std::size_t cells = 1000;  ///< p is piecewise constant on horizon / cells
  double tol = 1e-3;
  std::size_t max_iter = 20;
  std::uint64_t seed = 1;
};

struct Particle {
  std::uint32_t x = 0;
  std::uint32_t y = 0;
};

struct PicardResult {
  double cell_width = 0.0;
  std::vector<double> p;                 ///< last iterate, one value per cell
  std::vector<double> residuals;         ///< sup |p^{k+1} - p^k| per iteration
  std::size_t iterations = 0;
  bool converged = false;
  double noise_floor = 0.0;              ///< 3 / sqrt(M)
  std::vector<Particle> ensemble;        ///< particle states at the horizon

  double p_at(double t) const;
};

/// Fixed-point iteration on the curve p(t). Each sweep simulates every
/// particle exactly (thinning) under the current curve, with particle m using
/// the stream (seed, m) in every sweep, and replaces the curve with the cell
/// averages of 1{x > 0}. Stops when the sup change is below tol + 3/sqrt(M).
/// `initial` must be a probability measure on N^2.
PicardResult picard_iterate(const DiscreteMeasure& initial, const PicardOptions& options);

/// E[u^(x + y)] at time t for the linear dynamics driven by p, started at
/// (0, r2), by adaptive Simpson quadrature with absolute tolerance `tol`.
double generating_function(std::uint32_t r2, double t, double u,
                           const std::function<double(double)>& p, double lambda, double mu,
                           double tol = 1e-9);

}  // namespace repdecay
