#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "repdecay/dominating.hpp"
#include "repdecay/reduced_view.hpp"
#include "repdecay/spectral.hpp"

using namespace repdecay;

namespace {

SystemParams params(std::uint32_t n, std::uint32_t d, std::uint64_t files, double lambda,
                    std::uint64_t seed = 5) {
  SystemParams p;
  p.n_servers = n;
  p.d_max = d;
  p.initial_load = FixedTotal{files};
  p.lambda = lambda;
  p.mu = 1.0;
  p.horizon = 3.0;
  p.seed = seed;
  return p;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double std_err_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

}  // namespace

TEST(RunDominating, SingleCopyFilesNeverDuplicate) {
  // d = 1: every file already has d copies.
  const TrajectoryStats s = run_dominating(params(50, 1, 200, 5.0));
  EXPECT_EQ(s.duplications, 0u);
  EXPECT_GT(s.failures, 0u);
}

TEST(RunDominating, FullFilesHaveNoDuplicationRate) {
  Rng rng(1);
  const NetworkState s = init_network(params(50, 3, 100, 1.0), rng);
  EXPECT_EQ(s.under_replicated_copies(), 0u);
}

TEST(RunDominating, WithoutDuplicationMatchesThePolicy) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const SystemParams p = params(80, 3, 160, 0.0, seed);
    const TrajectoryStats a = run_trajectory(p);
    const TrajectoryStats b = run_dominating(p);
    EXPECT_EQ(a.alive_fraction, b.alive_fraction);
    EXPECT_EQ(a.mean_class, b.mean_class);
    EXPECT_EQ(a.loss_times, b.loss_times);
    EXPECT_EQ(a.server_counts, b.server_counts);
  }
}

TEST(RunDominating, IndexesStayConsistent) {
  TrajectoryOptions o;
  o.audit_every_event = true;
  o.record_event_log = true;
  const TrajectoryStats s = run_dominating(params(40, 4, 80, 2.0), o);
  EXPECT_GT(s.duplications, 0u);
  for (const EventRecord& e : s.event_log) {
    if (e.kind == EventKind::Duplication) EXPECT_NE(e.server, e.target);
  }
}

TEST(RunDominating, DuplicatesFasterThanThePolicy) {
  const SystemParams p = params(200, 3, 400, 1.0);
  std::vector<double> la, lb;
  for (std::uint64_t r = 0; r < 10; ++r) {
    SystemParams q = p;
    q.seed = derive_seed(7, r);
    la.push_back(run_trajectory(q).alive_fraction.back());
    lb.push_back(run_dominating(q).alive_fraction.back());
  }
  EXPECT_GT(mean_of(lb), mean_of(la));
}

TEST(RunDominating, ClassMeansFollowTheMeanOde) {
  // Initial T(0) is Binomial(beta N, d / N) in class d, mean d beta.
  const std::uint32_t n = 2000, d = 3;
  const double beta = 2.0;
  SystemParams p = params(n, d, static_cast<std::uint64_t>(beta * n), 1.0);
  p.horizon = 2.0;
  TrajectoryOptions o;
  o.output_intervals = 4;
  o.keep_server_counts = false;
  o.track_shared_pairs = false;
  std::vector<std::vector<double>> per_rep;
  for (std::uint64_t r = 0; r < 4; ++r) {
    p.seed = derive_seed(3, r);
    const TrajectoryStats s = run_dominating(p, o);
    std::vector<double> flat;
    for (const auto& m : s.mean_class) flat.insert(flat.end(), m.begin(), m.end());
    per_rep.push_back(flat);
  }
  const std::vector<double> V0 = {0.0, 0.0, d * beta};
  const std::vector<double> times = {0.0, 0.5, 1.0, 1.5, 2.0};
  const auto V = solve_V(d, 1.0, V0, times);
  for (std::size_t j = 0; j < times.size(); ++j) {
    for (std::size_t k = 0; k < d; ++k) {
      double m = 0.0;
      for (const auto& rep : per_rep) m += rep[j * d + k] / per_rep.size();
      // Finite-N bias is O(1/N); 2% of the initial mass covers it comfortably.
      EXPECT_NEAR(m, V[j][k], 0.02 * d * beta) << "t=" << times[j] << " k=" << k + 1;
    }
  }
}

TEST(RunCoupled, NoDuplicationKeepsBothCopiesEqual) {
  const CoupledTrace c = run_coupled(params(100, 3, 200, 0.0));
  EXPECT_EQ(c.algorithm.alive_fraction, c.dominating.alive_fraction);
  EXPECT_EQ(c.algorithm.mean_class, c.dominating.mean_class);
  EXPECT_EQ(c.violations, 0u);
}

TEST(RunCoupled, InclusionHoldsAfterEveryEvent) {
  CoupledOptions o;
  o.full_check = true;
  for (std::uint32_t d : {2u, 3u, 5u}) {
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
      const CoupledTrace c = run_coupled(params(40, d, 80, 1.5, seed), o);
      EXPECT_EQ(c.violations, 0u) << c.first_violation;
      EXPECT_TRUE(c.samplewise_dominated());
      EXPECT_GT(c.shared_duplications, 0u);
      EXPECT_GT(c.dominating_only, 0u);
    }
  }
}

TEST(RunCoupled, PolicyClockActsInsideFullSets) {
  // With d = 3 the dominating copy often fills up first, so the policy has to
  // place copies inside B_f.
  std::uint64_t inside = 0, rejected = 0;
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const CoupledTrace c = run_coupled(params(100, 3, 300, 1.0, seed));
    inside += c.algorithm_inside;
    rejected += c.rejected;
  }
  EXPECT_GT(inside, 0u);
  EXPECT_GT(rejected, 0u);
}

TEST(RunCoupled, MarginalsMatchTheStandaloneProcesses) {
  // Coupled A vs run_trajectory and coupled B vs run_dominating: the alive
  // fraction at the horizon agrees within 4 combined standard errors.
  const SystemParams base = params(200, 3, 400, 1.0);
  std::vector<double> ca, cb, sa, sb;
  for (std::uint64_t r = 0; r < 40; ++r) {
    SystemParams q = base;
    q.seed = derive_seed(21, r);
    const CoupledTrace c = run_coupled(q);
    ca.push_back(c.algorithm.alive_fraction.back());
    cb.push_back(c.dominating.alive_fraction.back());
    q.seed = derive_seed(22, r);
    sa.push_back(run_trajectory(q).alive_fraction.back());
    sb.push_back(run_dominating(q).alive_fraction.back());
  }
  const auto close = [](const std::vector<double>& x, const std::vector<double>& y) {
    const double se = std::hypot(std_err_of(x), std_err_of(y));
    return std::fabs(mean_of(x) - mean_of(y)) <= 4.0 * se;
  };
  EXPECT_TRUE(close(ca, sa)) << mean_of(ca) << " vs " << mean_of(sa);
  EXPECT_TRUE(close(cb, sb)) << mean_of(cb) << " vs " << mean_of(sb);
}

TEST(RunCoupled, RejectsUniformMerge) {
  SystemParams p = params(20, 2, 10, 1.0);
  p.collision_mode = CollisionMode::UniformMerge;
  EXPECT_THROW(run_coupled(p), ValidationError);
}

TEST(SimulateTbar, EmptyStartStaysEmpty) {
  TBarOptions o;
  o.d = 3;
  o.V0 = {0.0, 0.0, 0.0};
  o.particles = 1000;
  const TBarResult r = simulate_tbar(o);
  for (const auto& s : r.final_states) {
    for (std::uint32_t v : s) EXPECT_EQ(v, 0u);
  }
  EXPECT_EQ(r.jumps[static_cast<int>(TBarJump::Arrival)], 0u);
  EXPECT_EQ(r.jumps[static_cast<int>(TBarJump::Promotion)], 0u);
}

TEST(SimulateTbar, PairsOnlyMatchTheClosedForm) {
  // Deterministic start (0, r2): the corollary closed form is exact.
  TBarOptions o;
  o.d = 2;
  o.rho = 1.0;
  o.mu = 1.5;
  o.particles = 20000;
  o.horizon = 4.0;
  o.output_intervals = 8;
  DiscreteMeasure start(2);
  start.add({0, 5}, 1.0);
  o.initial = start;
  const TBarResult r = simulate_tbar(o);
  for (std::size_t j = 0; j < r.times.size(); ++j) {
    const ClosedForm2 cf = corollary_closed_form(1.0, 5.0, o.mu, r.times[j]);
    EXPECT_NEAR(r.drive[j][0], cf.et1, 1e-8);
    EXPECT_NEAR(r.drive[j][1], cf.et2, 1e-8);
    EXPECT_LE(std::fabs(r.mean[j][0] - cf.et1), 4.0 * r.std_err[j][0] + 1e-12);
    EXPECT_LE(std::fabs(r.mean[j][1] - cf.et2), 4.0 * r.std_err[j][1] + 1e-12);
  }
}

TEST(SimulateTbar, JumpCountsMatchTheirCompensators) {
  TBarOptions o;
  o.d = 4;
  o.rho = 1.5;
  o.V0 = {0.5, 1.0, 0.0, 6.0};
  o.particles = 5000;
  o.horizon = 3.0;
  const TBarResult r = simulate_tbar(o);
  EXPECT_EQ(r.audit_failures, 0u);
  for (std::size_t j = 0; j < 4; ++j) {
    ASSERT_GT(r.compensator[j], 100.0);
    EXPECT_LE(std::fabs(static_cast<double>(r.jumps[j]) - r.compensator[j]),
              5.0 * std::sqrt(r.compensator[j]))
        << "jump type " << j;
  }
  EXPECT_GE(r.proposals, r.jumps[0] + r.jumps[1] + r.jumps[2] + r.jumps[3]);
}

TEST(SimulateTbar, EnsembleMeansTrackTheDrive) {
  TBarOptions o;
  o.d = 3;
  o.rho = 1.0;
  o.V0 = {0.0, 0.0, 6.0};
  o.particles = 10000;
  o.horizon = 3.0;
  o.output_intervals = 6;
  const TBarResult r = simulate_tbar(o);
  for (std::size_t j = 0; j < r.times.size(); ++j) {
    for (std::size_t k = 0; k < 3; ++k) {
      EXPECT_LE(std::fabs(r.mean[j][k] - r.drive[j][k]), 4.0 * r.std_err[j][k] + 1e-12);
    }
  }
}

TEST(SimulateTbar, InitialLawSetsTheDrive) {
  TBarOptions o;
  o.d = 2;
  o.particles = 1000;
  o.horizon = 0.0;
  DiscreteMeasure start(2);
  start.add({1, 3}, 0.25);
  start.add({0, 1}, 0.75);
  o.initial = start;
  const TBarResult r = simulate_tbar(o);
  EXPECT_DOUBLE_EQ(r.drive[0][0], 0.25);
  EXPECT_DOUBLE_EQ(r.drive[0][1], 1.5);
  EXPECT_NEAR(r.mean[0][0], 0.25, 4 * r.std_err[0][0]);
}

TEST(SimulateTbar, RejectsBadInput) {
  TBarOptions o;
  o.d = 2;
  o.V0 = {0.0, 1.0};
  o.particles = 999;
  EXPECT_THROW(simulate_tbar(o), ValidationError);
  o.particles = 1000;
  o.V0 = {1.0};
  EXPECT_THROW(simulate_tbar(o), ValidationError);
  o.V0 = {-1.0, 1.0};
  EXPECT_THROW(simulate_tbar(o), ValidationError);
}

TEST(MeanFieldConsistency, ServerLawApproachesTheLimitLaw) {
  const std::uint32_t d = 3;
  const double beta = 1.0, t = 1.0;
  TBarOptions o;
  o.d = d;
  o.V0 = {0.0, 0.0, d * beta};
  o.particles = 40000;
  o.horizon = t;
  const DiscreteMeasure limit = simulate_tbar(o).final_measure();

  std::vector<double> tv;
  for (std::uint32_t n : {100u, 400u, 1600u}) {
    SystemParams p = params(n, d, static_cast<std::uint64_t>(beta * n), 1.0);
    p.horizon = t;
    TrajectoryOptions opt;
    opt.output_intervals = 1;
    opt.track_shared_pairs = false;
    double acc = 0.0;
    const int reps = 6;
    for (int r = 0; r < reps; ++r) {
      p.seed = derive_seed(n, r);
      const TrajectoryStats s = run_dominating(p, opt);
      const auto reduced = reduce(s, s.times.size() - 1);
      acc += measure_distance(empirical_measure(reduced).measure, limit).total_variation / reps;
    }
    tv.push_back(acc);
  }
  EXPECT_GT(tv[0], tv[1]);
  EXPECT_GT(tv[1], tv[2]);
}
