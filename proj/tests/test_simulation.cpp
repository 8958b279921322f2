#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "repdecay/simulation.hpp"

using namespace repdecay;

namespace {

SystemParams basic(std::uint32_t n, std::uint32_t d, std::uint64_t files, double lambda) {
  SystemParams p;
  p.n_servers = n;
  p.d_max = d;
  p.initial_load = FixedTotal{files};
  p.lambda = lambda;
  p.mu = 1.0;
  p.horizon = 2.0;
  p.seed = 11;
  return p;
}

std::size_t copy_mass(const NetworkState& s) {
  std::size_t m = 0;
  for (std::uint32_t k = 1; k <= s.d_max(); ++k) m += k * s.files_with_copies(k).size();
  return m;
}

}  // namespace

TEST(InitNetwork, TwoServersForceTheOnlyPair) {
  Rng rng(1);
  const NetworkState s = init_network(basic(2, 2, 5, 1.0), rng);
  ASSERT_EQ(s.alive_count(), 5u);
  for (FileId f = 0; f < 5; ++f) EXPECT_EQ(s.replica_set(f), (std::vector<ServerId>{0, 1}));
}

TEST(InitNetwork, FullReplicationUsesEveryServer) {
  Rng rng(1);
  const NetworkState s = init_network(basic(5, 5, 1, 1.0), rng);
  EXPECT_EQ(s.replica_set(0), (std::vector<ServerId>{0, 1, 2, 3, 4}));
}

TEST(InitNetwork, ConstantPerServerLoad) {
  SystemParams p = basic(1000, 2, 0, 1.0);
  p.initial_load = PerServerLaw::constant(10);
  Rng rng(3);
  const NetworkState s = init_network(p, rng);
  EXPECT_EQ(s.alive_count(), 10000u);
  EXPECT_DOUBLE_EQ(static_cast<double>(copy_mass(s)) / 1000.0, 20.0);
  for (FileId f = 0; f < s.file_count(); ++f) ASSERT_EQ(s.copies(f), 2u);
  // primary placements: server i originates files 10i .. 10i+9
  for (FileId f = 0; f < 50; ++f) EXPECT_TRUE(s.holds(f, f / 10));
}

TEST(InitNetwork, RejectsInvalidParameters) {
  Rng rng(1);
  EXPECT_THROW(init_network(basic(2, 3, 1, 1.0), rng), ValidationError);
  SystemParams p = basic(10, 2, 0, 1.0);
  p.initial_load = PerServerLaw::discrete({{-1, 0.5}, {2, 0.5}});
  EXPECT_THROW(init_network(p, rng), ValidationError);
  p.initial_load = PerServerLaw::constant(2.5);
  EXPECT_THROW(init_network(p, rng), ValidationError);
}

TEST(NextEvent, NoDuplicationWithoutBandwidth) {
  Rng rng(5);
  const SystemParams p = basic(50, 2, 100, 0.0);
  NetworkState s = init_network(p, rng);
  s.fail_server(0);  // creates singletons, still no duplication at lambda = 0
  double sum = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const Event e = next_event(s, p, rng);
    ASSERT_EQ(e.kind, EventKind::Failure);
    sum += e.time;
  }
  EXPECT_NEAR(sum / n, 1.0 / 50.0, 4.0 * (1.0 / 50.0) / std::sqrt(n));
}

TEST(NextEvent, FullyReplicatedFilesOnlyFail) {
  Rng rng(6);
  const SystemParams p = basic(20, 3, 40, 5.0);
  const NetworkState s = init_network(p, rng);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(next_event(s, p, rng).kind, EventKind::Failure);
}

TEST(NextEvent, DuplicationOddsFollowRates) {
  NetworkState s(1, 2);
  const std::vector<ServerId> one{0};
  s.add_file(one);
  SystemParams p;
  p.n_servers = 1;
  p.lambda = 7.0;
  p.mu = 1.0;
  Rng rng(9);
  const int n = 80000;
  int dup = 0;
  for (int i = 0; i < n; ++i) dup += next_event(s, p, rng).kind == EventKind::Duplication;
  EXPECT_NEAR(dup / double(n), 7.0 / 8.0, 4.0 * std::sqrt(7.0 / 64.0 / n));
}

TEST(NextEvent, AbsorbedWhenEverythingIsDead) {
  NetworkState s(3, 2);
  Rng rng(1);
  const Event e = next_event(s, basic(3, 2, 0, 1.0), rng);
  EXPECT_EQ(e.kind, EventKind::Absorbed);
  EXPECT_TRUE(std::isinf(e.time));
}

TEST(ApplyFailure, PartnerMovesToSingletonClass) {
  NetworkState s(3, 2);
  const std::vector<ServerId> ij{0, 1};
  s.add_file(ij);
  EXPECT_EQ(apply_failure(s, 0), 0u);
  EXPECT_EQ(s.class_members(1, 1).size(), 1u);
  EXPECT_EQ(s.class_members(1, 2).size(), 0u);
  EXPECT_EQ(apply_failure(s, 1), 1u);
  EXPECT_EQ(s.alive_count(), 0u);
  EXPECT_THROW(apply_failure(s, 3), std::out_of_range);
}

TEST(ApplyDuplication, SingletonGetsSecondCopyElsewhere) {
  NetworkState s(10, 2);
  const std::vector<ServerId> i{4};
  s.add_file(i);
  Rng rng(2);
  const SystemParams p = basic(10, 2, 0, 1.0);
  const DuplicationResult r = apply_duplication(s, 4, p, rng);
  EXPECT_FALSE(r.collided);
  EXPECT_NE(r.target, 4u);
  EXPECT_EQ(s.copies(0), 2u);
  s.audit();
}

TEST(ApplyDuplication, LeastCopiesFirst) {
  const SystemParams p = basic(6, 3, 0, 1.0);
  Rng rng(3);
  for (int rep = 0; rep < 200; ++rep) {
    NetworkState s(6, 3);
    const std::vector<ServerId> g{0}, f{0, 1};
    const FileId fg = s.add_file(g);
    const FileId ff = s.add_file(f);
    const DuplicationResult r = apply_duplication(s, 0, p, rng);
    ASSERT_EQ(r.file, fg);
    ASSERT_EQ(s.copies(ff), 2u);
  }
  NetworkState s(6, 3);
  const std::vector<ServerId> f{0, 1};
  s.add_file(f);
  EXPECT_EQ(apply_duplication(s, 0, p, rng).file, 0u);
  EXPECT_EQ(s.copies(0), 3u);
  EXPECT_THROW(apply_duplication(s, 0, p, rng), std::logic_error);
}

TEST(ApplyDuplication, AvoidHoldersTargetsAreUniform) {
  const SystemParams p = basic(5, 3, 0, 1.0);
  Rng rng(8);
  std::vector<int> hits(5, 0);
  const int n = 30000;
  for (int i = 0; i < n; ++i) {
    NetworkState s(5, 3);
    const std::vector<ServerId> f{1, 3};
    s.add_file(f);
    ++hits[apply_duplication(s, 1, p, rng).target];
  }
  EXPECT_EQ(hits[1], 0);
  EXPECT_EQ(hits[3], 0);
  for (int j : {0, 2, 4}) EXPECT_NEAR(hits[j], n / 3.0, 5.0 * std::sqrt(n * 2.0 / 9.0));
}

TEST(ApplyDuplication, UniformMergeCanCollide) {
  SystemParams p = basic(3, 3, 0, 1.0);
  p.collision_mode = CollisionMode::UniformMerge;
  Rng rng(4);
  int collisions = 0;
  for (int i = 0; i < 4000; ++i) {
    NetworkState s(3, 3);
    const std::vector<ServerId> f{0, 1};
    s.add_file(f);
    const DuplicationResult r = apply_duplication(s, 0, p, rng);
    ASSERT_NE(r.target, 0u);
    collisions += r.collided;
    ASSERT_EQ(s.copies(0), r.collided ? 2u : 3u);
  }
  EXPECT_NEAR(collisions / 4000.0, 0.5, 0.05);
}

TEST(RunTrajectory, DeterministicForFixedSeed) {
  SystemParams p = basic(200, 3, 400, 1.5);
  p.horizon = 3.0;
  const TrajectoryStats a = run_trajectory(p);
  const TrajectoryStats b = run_trajectory(p);
  EXPECT_EQ(a.alive_fraction, b.alive_fraction);
  EXPECT_EQ(a.loss_times, b.loss_times);
  EXPECT_EQ(a.server_counts, b.server_counts);
  EXPECT_EQ(a.failures, b.failures);
  p.seed = 12;
  EXPECT_NE(run_trajectory(p).loss_times, a.loss_times);
}

TEST(RunTrajectory, ZeroHorizonReportsInitialLoad) {
  SystemParams p = basic(100, 2, 250, 1.0);
  p.horizon = 0.0;
  const TrajectoryStats s = run_trajectory(p);
  ASSERT_EQ(s.times.size(), 1u);
  EXPECT_DOUBLE_EQ(s.alive_fraction[0], 2.5);
}

TEST(RunTrajectory, AuditAndCopyConservationAlongEvents) {
  SystemParams p = basic(40, 3, 80, 2.0);
  p.horizon = 4.0;
  TrajectoryOptions o;
  o.audit_every_event = true;
  o.record_event_log = true;
  const TrajectoryStats s = run_trajectory(p, o);
  EXPECT_EQ(s.event_log.size(), s.failures + s.duplications);
  // replay: each duplication adds one copy, each failure removes the copies on the server
  Rng rng(p.seed, 0);
  NetworkState replay = init_network(p, rng, true);
  for (const auto& e : s.event_log) {
    const std::size_t before = copy_mass(replay);
    if (e.kind == EventKind::Failure) {
      std::size_t held = 0;
      for (std::uint32_t k = 1; k <= 3; ++k) held += replay.class_members(e.server, k).size();
      ASSERT_EQ(replay.fail_server(e.server), e.files_lost);
      ASSERT_EQ(copy_mass(replay), before - held);
    } else {
      ASSERT_TRUE(replay.add_copy(e.file, e.target));
      ASSERT_EQ(copy_mass(replay), before + 1);
    }
  }
  replay.audit();
}

TEST(RunTrajectory, AbsorbedStateIsFinal) {
  SystemParams p = basic(5, 2, 2, 0.0);
  p.horizon = 1000.0;
  const TrajectoryStats s = run_trajectory(p);
  ASSERT_TRUE(s.absorbed);
  EXPECT_EQ(s.loss_times.size(), 2u);
  EXPECT_DOUBLE_EQ(s.loss_times.back(), s.absorption_time);
  EXPECT_DOUBLE_EQ(s.alive_fraction.back(), 0.0);
}

TEST(RunTrajectory, IndependentFailuresMatchClosedForm) {
  SystemParams p = basic(500, 2, 500, 0.0);
  p.horizon = 2.0;
  TrajectoryOptions o;
  o.output_intervals = 2;
  o.keep_server_counts = false;
  const int reps = 30;
  double s1 = 0.0, s2 = 0.0;
  for (int r = 0; r < reps; ++r) {
    p.seed = derive_seed(99, r);
    const double v = run_trajectory(p, o).alive_fraction[1];  // t = 1
    s1 += v;
    s2 += v * v;
  }
  const double mean = s1 / reps;
  const double se = std::sqrt((s2 / reps - mean * mean) / (reps - 1));
  const double exact = 2.0 * std::exp(-1.0) - std::exp(-2.0);
  EXPECT_NEAR(mean, exact, 4.0 * se + 1e-12);
}

TEST(Durability, FirstDeathAndMedian) {
  SystemParams p = basic(2000, 2, 2000, 0.0);
  p.horizon = 10.0;
  TrajectoryOptions o;
  o.keep_server_counts = false;
  const TrajectoryStats s = run_trajectory(p, o);
  EXPECT_DOUBLE_EQ(*durability(s, 1e-9), s.loss_times.front());
  // root of 2e^{-t} - e^{-2t} = 1/2
  EXPECT_NEAR(*durability(s, 0.5), -std::log(1.0 - 1.0 / std::sqrt(2.0)), 0.06);
  EXPECT_THROW(durability(s, 0.0), ValidationError);
  EXPECT_THROW(durability(s, 1.0), ValidationError);

  SystemParams q = basic(10, 2, 5, 0.0);
  q.horizon = 1e-6;
  EXPECT_FALSE(durability(run_trajectory(q, o), 0.1).has_value());
}
