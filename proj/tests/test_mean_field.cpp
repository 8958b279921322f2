#include <gtest/gtest.h>

#include <cmath>

#include "repdecay/mean_field.hpp"
#include "repdecay/params.hpp"
#include "repdecay/spectral.hpp"

using namespace repdecay;

namespace {

std::vector<double> uniform_times(double horizon, std::size_t n) {
  std::vector<double> t(n + 1);
  for (std::size_t j = 0; j <= n; ++j) t[j] = horizon * static_cast<double>(j) / n;
  return t;
}

FpHistory solve(double lambda, double mu, const FpGrid& init, double horizon, std::size_t n) {
  FpOptions o;
  o.lambda = lambda;
  o.mu = mu;
  o.times = uniform_times(horizon, n);
  return fp_solve(init, o);
}

double moment(const FpGrid& g, const std::vector<double>& dq, bool x_part, bool y_part) {
  double s = 0.0;
  for (std::size_t x = 0; x <= g.K(); ++x)
    for (std::size_t y = 0; y <= g.K(); ++y)
      s += dq[x * (g.K() + 1) + y] * ((x_part ? x : 0.0) + (y_part ? y : 0.0));
  return s;
}

}  // namespace

TEST(FpGenerator, AbsorbingStateIsStationary) {
  const FpGrid g = FpGrid::point_mass(0, 0).resized(5);
  std::vector<double> dq;
  fp_generator_apply(g, 0.0, 2.0, 1.0, dq);
  for (double v : dq) EXPECT_EQ(v, 0.0);
}

TEST(FpGenerator, LoneSingletonOnlyResets) {
  const FpGrid g = FpGrid::point_mass(1, 0).resized(4);
  std::vector<double> dq;
  fp_generator_apply(g, 1.0, 0.0, 1.5, dq);
  EXPECT_DOUBLE_EQ(dq[1 * 5 + 0], -1.5);
  EXPECT_DOUBLE_EQ(dq[0], 1.5);
  double other = 0.0;
  for (std::size_t i = 0; i < dq.size(); ++i)
    if (i != 0 && i != 5) other += std::fabs(dq[i]);
  EXPECT_EQ(other, 0.0);
}

TEST(FpGenerator, MomentRatesFromPairState) {
  const FpGrid g = FpGrid::point_mass(0, 2).resized(6);
  std::vector<double> dq;
  fp_generator_apply(g, g.p(), 0.0, 1.0, dq);
  EXPECT_NEAR(moment(g, dq, false, true), -4.0, 1e-14);
  EXPECT_NEAR(moment(g, dq, true, true), -2.0, 1e-14);
}

TEST(FpGenerator, ConservesMassAndReportsCensoring) {
  Rng rng(3);
  FpGrid g(6);
  double total = 0.0;
  for (double& v : g.data()) total += (v = rng.uniform());
  for (double& v : g.data()) v /= total;
  std::vector<double> dq;
  const double censored = fp_generator_apply(g, g.p(), 1.3, 0.7, dq);
  double s = 0.0;
  for (double v : dq) s += v;
  EXPECT_NEAR(s, 0.0, 1e-14);
  EXPECT_GT(censored, 0.0);
  EXPECT_THROW(fp_generator_apply(g, 1.5, 1.0, 1.0, dq), ValidationError);
}

TEST(FpSolve, AbsorbingInitialLawStays) {
  const auto h = solve(1.0, 1.0, FpGrid::point_mass(0, 0), 3.0, 30);
  for (std::size_t j = 0; j < h.times.size(); ++j) {
    EXPECT_EQ(h.m1[j], 0.0);
    EXPECT_EQ(h.m2[j], 0.0);
    EXPECT_EQ(h.p[j], 0.0);
  }
}

TEST(FpSolve, IndependentFailuresClosedForm) {
  for (double mu : {0.5, 1.0, 2.0}) {
    const auto h = solve(0.0, mu, FpGrid::point_mass(0, 2), 5.0 / mu, 200);
    for (std::size_t j = 0; j < h.times.size(); ++j) {
      const double t = h.times[j];
      EXPECT_NEAR(h.m2[j], 2 * std::exp(-2 * mu * t), 1e-6);
      EXPECT_NEAR(h.m1[j], 2 * (std::exp(-mu * t) - std::exp(-2 * mu * t)), 1e-6);
    }
  }
}

TEST(FpSolve, MassAndPositivity) {
  const auto h = solve(2.0, 1.0, FpGrid::poisson_pairs(4.0), 5.0, 100);
  for (double m : h.mass) EXPECT_NEAR(m, 1.0, 1e-10);
  for (double v : h.final_state.data()) EXPECT_GE(v, 0.0);
  EXPECT_GE(h.final_K, 10u);
}

TEST(FpSolve, DecayEnvelopeHoldsForEveryStart) {
  for (double rho : {0.5, 1.0, 2.0}) {
    for (const FpGrid& init : {FpGrid::point_mass(0, 2), FpGrid::point_mass(1, 0),
                               FpGrid::point_mass(2, 3), FpGrid::poisson_pairs(4.0)}) {
      const auto h = solve(rho, 1.0, init, 8.0, 160);
      const double kp = kappa2(rho).kappa_plus;
      const double c = decay_envelope(rho, h.m1[0], h.m2[0]);
      for (std::size_t j = 0; j < h.times.size(); ++j) {
        EXPECT_LE(h.m1[j] + 0.5 * h.m2[j], c * std::exp(-kp * h.times[j]) + 1e-8) << rho;
      }
    }
  }
}

TEST(FpSolve, InitialMassConstantSufficesWhenSingletonsDominate) {
  // With y+ m1(0) >= m2(0) the envelope constant is L(0) itself.
  for (double rho : {0.5, 1.0, 2.0}) {
    const auto h = solve(rho, 1.0, FpGrid::point_mass(1, 0), 8.0, 160);
    const double kp = kappa2(rho).kappa_plus;
    EXPECT_DOUBLE_EQ(decay_envelope(rho, 1.0, 0.0), 1.0);
    for (std::size_t j = 0; j < h.times.size(); ++j) {
      EXPECT_LE(h.m1[j] + 0.5 * h.m2[j], std::exp(-kp * h.times[j]) + 1e-8);
    }
  }
}

TEST(FpSolve, InitialMassConstantFailsFromPairsOnly) {
  // Without duplication, L(t) = 2e^{-t} - e^{-2t} exceeds L(0) e^{-t} = e^{-t}
  // for every t > 0, so the constant L(0) cannot be used from (0, 2).
  const auto h = solve(0.0, 1.0, FpGrid::point_mass(0, 2), 3.0, 30);
  for (std::size_t j = 1; j < h.times.size(); ++j) {
    EXPECT_GT(h.m1[j] + 0.5 * h.m2[j], std::exp(-h.times[j]));
  }
  EXPECT_GT(decay_envelope(1.0, 0.0, 2.0), 1.0);
}

TEST(FpSolve, MomentsSatisfyTheMeanEquations) {
  const double lambda = 1.0, mu = 1.0, dt = 1e-3;
  const auto h = solve(lambda, mu, FpGrid::point_mass(0, 2), 4.0, 4000);
  // Five-point stencil: truncation O(dt^4) keeps the check below 1e-6.
  const auto deriv = [&](const std::vector<double>& f, std::size_t j) {
    return (-f[j + 2] + 8 * f[j + 1] - 8 * f[j - 1] + f[j - 2]) / (12 * dt);
  };
  for (std::size_t j = 2; j + 2 < h.times.size(); j += 37) {
    const double dm1 = deriv(h.m1, j);
    const double dm2 = deriv(h.m2, j);
    EXPECT_LT(std::fabs(dm1 + lambda * h.p[j] - mu * (h.m2[j] - h.m1[j])), 1e-6);
    EXPECT_LT(std::fabs(dm2 - 2 * lambda * h.p[j] + 2 * mu * h.m2[j]), 1e-6);
  }
}

TEST(FpSolve, SingletonExcessBetweenZeroAndMean) {
  const auto h = solve(1.5, 1.0, FpGrid::poisson_pairs(3.0), 5.0, 100);
  for (std::size_t j = 0; j < h.times.size(); ++j) {
    const double g = h.m1[j] - h.p[j];
    EXPECT_GE(g, -1e-12);
    EXPECT_LE(g, h.m1[j] + 1e-12);
  }
}

TEST(FpSolve, CsvAndSnapshots) {
  FpOptions o;
  o.times = uniform_times(1.0, 4);
  o.snapshot_stride = 2;
  const auto h = fp_solve(FpGrid::point_mass(0, 1), o);
  EXPECT_EQ(h.snapshots.size(), 3u);
  const auto csv = h.to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "t,p,m1,m2,L");
  const auto back = FpGrid::from_measure(DiscreteMeasure::from_json(h.snapshots[1].second.to_json()));
  EXPECT_NEAR(back.mean_y(), h.snapshots[1].second.mean_y(), 1e-12);
}

TEST(FpSolve, RejectsBadInput) {
  FpOptions o;
  o.times = {1.0, 0.5};
  EXPECT_THROW(fp_solve(FpGrid::point_mass(0, 1), o), ValidationError);
  o.times = {1.0};
  o.max_K = 5;
  EXPECT_THROW(fp_solve(FpGrid::point_mass(0, 1), o), NumericalError);
}

TEST(PoissonPairs, MeanAndNormalization) {
  const FpGrid g = FpGrid::poisson_pairs(4.0);
  EXPECT_NEAR(g.mass(), 1.0, 1e-14);
  EXPECT_NEAR(g.mean_y(), 4.0, 1e-12);
  EXPECT_EQ(g.mean_x(), 0.0);
}

TEST(GeneratingFunction, TrivialValues) {
  auto p = [](double s) { return 0.3 + 0.1 * std::sin(s); };
  EXPECT_DOUBLE_EQ(generating_function(3, 2.0, 1.0, p, 1.5, 1.0), 1.0);
  EXPECT_DOUBLE_EQ(generating_function(3, 0.0, 0.4, p, 1.5, 1.0), std::pow(0.4, 3));
  for (double u : {0.0, 0.3, 0.8}) {
    const double t = 1.7;
    EXPECT_NEAR(generating_function(2, t, u, p, 0.0, 1.0),
                std::exp(-t) * u * u + 1 - std::exp(-t), 1e-15);
  }
  EXPECT_THROW(generating_function(1, 1.0, 1.2, p, 1.0, 1.0), ValidationError);
}

TEST(GeneratingFunction, ConstantDriveClosedForm) {
  // p = c: no reset gives u^r Poisson(lambda c t); reset at s gives Poisson(lambda c s).
  const double c = 0.4, lambda = 2.0, mu = 1.3, t = 2.5, u = 0.6;
  const double a = lambda * c * (1 - u);
  const double exact = std::exp(-mu * t) * u * u * std::exp(-a * t) +
                       mu / (mu + a) * (1 - std::exp(-(mu + a) * t));
  EXPECT_NEAR(generating_function(2, t, u, [c](double) { return c; }, lambda, mu), exact, 1e-10);
}

TEST(GeneratingFunction, MatchesForwardEquationLaw) {
  const double lambda = 1.0, mu = 1.0;
  const auto h = solve(lambda, mu, FpGrid::point_mass(0, 2), 3.0, 3000);
  auto p = [&h](double s) { return h.p_at(s); };
  for (double t : {1.0, 3.0}) {
    FpOptions o;
    o.lambda = lambda;
    o.mu = mu;
    o.times = {t};
    const FpGrid law = fp_solve(FpGrid::point_mass(0, 2), o).final_state;
    for (double u : {0.0, 0.5, 0.9}) {
      EXPECT_NEAR(generating_function(2, t, u, p, lambda, mu), law.total_copies_pgf(u), 5e-4);
    }
    const double step = 1e-5;
    const double slope = (1.0 - generating_function(2, t, 1 - step, p, lambda, mu)) / step;
    EXPECT_NEAR(slope, law.mean_x() + law.mean_y(), 1e-4);
  }
}

TEST(Picard, NoBandwidthConvergesAfterOneUpdate) {
  PicardOptions o;
  o.lambda = 0.0;
  o.particles = 2000;
  o.horizon = 3.0;
  o.cells = 300;
  const auto r = picard_iterate(FpGrid::point_mass(0, 2).to_measure(), o);
  ASSERT_TRUE(r.converged);
  EXPECT_EQ(r.iterations, 2u);
  EXPECT_EQ(r.residuals.back(), 0.0);
}

TEST(Picard, AbsorbingLawIsImmediateFixedPoint) {
  PicardOptions o;
  o.particles = 1000;
  const auto r = picard_iterate(FpGrid::point_mass(0, 0).to_measure(), o);
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.iterations, 1u);
  for (double v : r.p) EXPECT_EQ(v, 0.0);
}

TEST(Picard, AgreesWithForwardEquation) {
  PicardOptions o;
  o.lambda = 1.0;
  o.mu = 1.0;
  o.horizon = 5.0;
  o.particles = 20000;
  o.cells = 500;
  const auto r = picard_iterate(FpGrid::point_mass(0, 2).to_measure(), o);
  ASSERT_TRUE(r.converged);
  const auto h = solve(1.0, 1.0, FpGrid::point_mass(0, 2), 5.0, 5000);
  double worst = 0.0;
  for (std::size_t c = 0; c < o.cells; ++c) {
    // cell average of the reference curve, by the midpoint rule on its fine grid
    double avg = 0.0;
    for (int k = 0; k < 10; ++k) avg += h.p_at((c + (k + 0.5) / 10.0) * r.cell_width);
    worst = std::max(worst, std::fabs(r.p[c] - avg / 10.0));
  }
  EXPECT_LT(worst, r.noise_floor + 1e-3);

  // one more sweep under the converged curve moves it by less than tol + floor
  PicardOptions again = o;
  again.max_iter = r.iterations + 1;
  again.tol = 1e-12;
  const auto r2 = picard_iterate(FpGrid::point_mass(0, 2).to_measure(), again);
  EXPECT_LT(r2.residuals.back(), o.tol + r.noise_floor);
}

TEST(Picard, RejectsSmallEnsembles) {
  PicardOptions o;
  o.particles = 10;
  EXPECT_THROW(picard_iterate(FpGrid::point_mass(0, 2).to_measure(), o), ValidationError);
}
