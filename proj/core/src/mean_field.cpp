#include "repdecay/mean_field.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "repdecay/io.hpp"
#include "repdecay/params.hpp"
#include "repdecay/rng.hpp"

namespace repdecay {

FpGrid FpGrid::point_mass(std::size_t x, std::size_t y) {
  FpGrid g(std::max(x, y));
  g.at(x, y) = 1.0;
  return g;
}

FpGrid FpGrid::poisson_pairs(double mean, double tail) {
  if (!(mean >= 0.0) || mean >= 700.0) throw ValidationError("poisson_pairs: mean out of range");
  std::vector<double> pmf{std::exp(-mean)};
  double cdf = pmf[0];
  while (1.0 - cdf > tail && pmf.size() < 100000) {
    pmf.push_back(pmf.back() * mean / static_cast<double>(pmf.size()));
    cdf += pmf.back();
    if (pmf.back() == 0.0 && static_cast<double>(pmf.size()) > mean) break;
  }
  FpGrid g(pmf.size() - 1);
  for (std::size_t y = 0; y < pmf.size(); ++y) g.at(0, y) = pmf[y] / cdf;
  return g;
}

FpGrid FpGrid::from_measure(const DiscreteMeasure& m) {
  if (m.dim() != 2) throw ValidationError("FpGrid::from_measure: measure must live on N^2");
  std::size_t K = 0;
  for (const auto& entry : m.support()) K = std::max<std::size_t>({K, entry.first[0], entry.first[1]});
  FpGrid g(K);
  for (const auto& [pt, w] : m.support()) {
    if (w < 0.0) throw ValidationError("FpGrid::from_measure: negative weight");
    g.at(pt[0], pt[1]) += w;
  }
  return g;
}

double FpGrid::mass() const {
  double s = 0.0;
  for (double v : q_) s += v;
  return s;
}

double FpGrid::p() const {
  double zero = 0.0;
  for (std::size_t y = 0; y <= K_; ++y) zero += at(0, y);
  return std::clamp(1.0 - zero, 0.0, 1.0);
}

double FpGrid::mean_x() const {
  double s = 0.0;
  for (std::size_t x = 1; x <= K_; ++x)
    for (std::size_t y = 0; y <= K_; ++y) s += static_cast<double>(x) * at(x, y);
  return s;
}

double FpGrid::mean_y() const {
  double s = 0.0;
  for (std::size_t x = 0; x <= K_; ++x)
    for (std::size_t y = 1; y <= K_; ++y) s += static_cast<double>(y) * at(x, y);
  return s;
}

double FpGrid::total_copies_pgf(double u) const {
  std::vector<double> powers(2 * K_ + 1, 1.0);
  for (std::size_t n = 1; n < powers.size(); ++n) powers[n] = powers[n - 1] * u;
  double s = 0.0;
  for (std::size_t x = 0; x <= K_; ++x)
    for (std::size_t y = 0; y <= K_; ++y) s += at(x, y) * powers[x + y];
  return s;
}

double FpGrid::boundary_mass() const {
  double s = 0.0;
  for (std::size_t j = 0; j <= K_; ++j) {
    s += std::fabs(at(K_, j));
    if (j < K_) s += std::fabs(at(j, K_));
  }
  return s;
}

std::size_t FpGrid::support_bound() const {
  std::size_t b = 0;
  for (std::size_t x = 0; x <= K_; ++x)
    for (std::size_t y = 0; y <= K_; ++y)
      if (at(x, y) != 0.0) b = std::max({b, x, y});
  return b;
}

FpGrid FpGrid::resized(std::size_t K) const {
  if (K < support_bound()) throw ValidationError("FpGrid::resized: would drop mass");
  FpGrid g(K);
  const std::size_t lim = std::min(K, K_);
  for (std::size_t x = 0; x <= lim; ++x)
    for (std::size_t y = 0; y <= lim; ++y) g.at(x, y) = at(x, y);
  return g;
}

DiscreteMeasure FpGrid::to_measure(double threshold) const {
  DiscreteMeasure m(2);
  for (std::size_t x = 0; x <= K_; ++x) {
    for (std::size_t y = 0; y <= K_; ++y) {
      const double w = at(x, y);
      if (w > threshold) {
        m.add({static_cast<std::uint32_t>(x), static_cast<std::uint32_t>(y)}, w);
      }
    }
  }
  return m;
}

namespace {

double p_of(const std::vector<double>& q, std::size_t K) {
  double zero = 0.0;
  for (std::size_t y = 0; y <= K; ++y) zero += q[y];
  return std::clamp(1.0 - zero, 0.0, 1.0);
}

double generator(const std::vector<double>& q, std::size_t K, double p, double lambda,
                 double mu, std::vector<double>& dq) {
  const std::size_t w = K + 1;
  dq.assign(q.size(), 0.0);
  double censored = 0.0;
  const double arrival = lambda * p;
  for (std::size_t x = 0; x <= K; ++x) {
    for (std::size_t y = 0; y <= K; ++y) {
      const std::size_t i = x * w + y;
      const double m = q[i];
      if (m == 0.0) continue;
      if (x > 0 && lambda > 0.0) {  // duplicate a singleton: (x-1, y+1)
        const double r = lambda * m;
        if (y < K) {
          dq[i] -= r;
          dq[i - w + 1] += r;
        } else {
          censored += r;
        }
      }
      if (arrival > 0.0) {  // a partner duplicates onto this server: (x, y+1)
        const double r = arrival * m;
        if (y < K) {
          dq[i] -= r;
          dq[i + 1] += r;
        } else {
          censored += r;
        }
      }
      if (i != 0) {  // server failure: reset
        const double r = mu * m;
        dq[i] -= r;
        dq[0] += r;
      }
      if (y > 0) {  // partner failure: (x+1, y-1)
        const double r = mu * static_cast<double>(y) * m;
        if (x < K) {
          dq[i] -= r;
          dq[i + w - 1] += r;
        } else {
          censored += r;
        }
      }
    }
  }
  return censored;
}

}  // namespace

double fp_generator_apply(const FpGrid& q, double p, double lambda, double mu,
                          std::vector<double>& dq) {
  if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("fp_generator_apply: p must lie in [0, 1]");
  return generator(q.data(), q.K(), p, lambda, mu, dq);
}

double FpHistory::p_at(double t) const {
  if (times.empty()) return 0.0;
  if (t <= times.front()) return p.front();
  if (t >= times.back()) return p.back();
  const auto it = std::upper_bound(times.begin(), times.end(), t);
  const std::size_t j = static_cast<std::size_t>(it - times.begin());
  const double a = times[j - 1], b = times[j];
  const double w = (t - a) / (b - a);
  return (1.0 - w) * p[j - 1] + w * p[j];
}

std::string FpHistory::to_csv() const {
  std::ostringstream out;
  out << "t,p,m1,m2,L\n";
  for (std::size_t j = 0; j < times.size(); ++j) {
    out << format_number(times[j]) << ',' << format_number(p[j]) << ',' << format_number(m1[j])
        << ',' << format_number(m2[j]) << ',' << format_number(m1[j] + 0.5 * m2[j]) << '\n';
  }
  return out.str();
}

FpHistory fp_solve(const FpGrid& initial, const FpOptions& options) {
  if (!(options.mu > 0.0) || !(options.lambda >= 0.0)) {
    throw ValidationError("fp_solve: need mu > 0 and lambda >= 0");
  }
  if (!(options.step_factor > 0.0 && options.step_factor <= 0.1)) {
    throw ValidationError("fp_solve: step_factor must lie in (0, 0.1]");
  }
  for (std::size_t j = 0; j < options.times.size(); ++j) {
    if (!(options.times[j] >= 0.0) || (j && options.times[j] < options.times[j - 1])) {
      throw ValidationError("fp_solve: output times must be ascending and >= 0");
    }
  }
  for (double v : initial.data()) {
    if (v < 0.0) throw ValidationError("fp_solve: initial law has negative weight");
  }

  FpHistory hist;
  std::size_t K = initial.support_bound() + 10;
  if (K > options.max_K) throw NumericalError("fp_solve: initial support exceeds max_K");
  FpGrid grid = initial.resized(K);
  std::vector<double> k1, k2, k3, k4, tmp;
  double t = 0.0;

  auto record = [&](std::size_t index) {
    hist.times.push_back(t);
    hist.p.push_back(grid.p());
    hist.m1.push_back(grid.mean_x());
    hist.m2.push_back(grid.mean_y());
    hist.mass.push_back(grid.mass());
    if (options.snapshot_stride && index % options.snapshot_stride == 0) {
      hist.snapshots.emplace_back(t, grid);
    }
  };

  for (std::size_t out = 0; out < options.times.size(); ++out) {
    const double target = options.times[out];
    while (t < target) {
      const double h_max = options.step_factor /
                           (options.mu * (1.0 + static_cast<double>(K)) + 2.0 * options.lambda);
      const double remaining = target - t;
      const double n = std::ceil(remaining / h_max);
      const double h = remaining / n;
      if (!(h > 0.0) || t + h == t) throw NumericalError("fp_solve: step size underflow");
      auto& q = grid.data();
      auto stage = [&](const std::vector<double>& v, std::vector<double>& k) {
        const double c = generator(v, K, p_of(v, K), options.lambda, options.mu, k);
        hist.max_censored_flux = std::max(hist.max_censored_flux, c);
      };
      stage(q, k1);
      tmp.resize(q.size());
      for (std::size_t i = 0; i < q.size(); ++i) tmp[i] = q[i] + 0.5 * h * k1[i];
      stage(tmp, k2);
      for (std::size_t i = 0; i < q.size(); ++i) tmp[i] = q[i] + 0.5 * h * k2[i];
      stage(tmp, k3);
      for (std::size_t i = 0; i < q.size(); ++i) tmp[i] = q[i] + h * k3[i];
      stage(tmp, k4);
      for (std::size_t i = 0; i < q.size(); ++i) {
        double v = q[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        if (v < 0.0) {
          if (v < -1e-14) throw NumericalError("fp_solve: negative probability weight");
          v = 0.0;
          ++hist.clamped;
        }
        q[i] = v;
      }
      t = (n == 1.0) ? target : t + h;
      ++hist.steps;
      while (grid.boundary_mass() > options.boundary_tol) {
        if (2 * K > options.max_K) throw NumericalError("fp_solve: truncation exceeds max_K");
        K *= 2;
        grid = grid.resized(K);
      }
    }
    record(out);
  }
  hist.final_K = K;
  hist.final_state = std::move(grid);
  return hist;
}

double PicardResult::p_at(double t) const {
  if (p.empty()) return 0.0;
  const auto c = static_cast<std::size_t>(std::max(0.0, t) / cell_width);
  return p[std::min(c, p.size() - 1)];
}

namespace {

struct Occupancy {
  double width;
  std::vector<double> partial;
  std::vector<double> diff;

  Occupancy(std::size_t cells, double w) : width(w), partial(cells, 0.0), diff(cells + 1, 0.0) {}

  std::size_t cell(double t) const {
    return std::min(static_cast<std::size_t>(t / width), partial.size() - 1);
  }

  // Adds the time spent in [a, b) to the cells it overlaps.
  void add(double a, double b) {
    if (!(b > a)) return;
    const std::size_t ca = cell(a), cb = cell(b);
    if (ca == cb) {
      partial[ca] += b - a;
      return;
    }
    partial[ca] += static_cast<double>(ca + 1) * width - a;
    partial[cb] += b - static_cast<double>(cb) * width;
    if (cb > ca + 1) {
      diff[ca + 1] += width;
      diff[cb] -= width;
    }
  }

  std::vector<double> totals() const {
    std::vector<double> out(partial.size());
    double run = 0.0;
    for (std::size_t c = 0; c < out.size(); ++c) {
      run += diff[c];
      out[c] = partial[c] + run;
    }
    return out;
  }
};

}  // namespace

PicardResult picard_iterate(const DiscreteMeasure& initial, const PicardOptions& o) {
  if (initial.dim() != 2) throw ValidationError("picard_iterate: initial law must live on N^2");
  if (o.particles < 1000) throw ValidationError("picard_iterate: need at least 1000 particles");
  if (!(o.tol > 0.0)) throw ValidationError("picard_iterate: tol must be > 0");
  if (!(o.horizon > 0.0) || o.cells == 0 || o.max_iter == 0) {
    throw ValidationError("picard_iterate: need horizon > 0, cells > 0, max_iter > 0");
  }
  if (!(o.mu > 0.0) || !(o.lambda >= 0.0)) throw ValidationError("picard_iterate: bad rates");

  std::vector<std::pair<Particle, double>> law;
  double total = 0.0;
  double p0 = 0.0;
  for (const auto& [pt, w] : initial.support()) {
    if (w < 0.0) throw ValidationError("picard_iterate: negative weight");
    total += w;
    law.push_back({{pt[0], pt[1]}, total});
    if (pt[0] > 0) p0 += w;
  }
  if (!(total > 0.0)) throw ValidationError("picard_iterate: empty initial law");
  p0 /= total;

  PicardResult res;
  res.cell_width = o.horizon / static_cast<double>(o.cells);
  res.noise_floor = 3.0 / std::sqrt(static_cast<double>(o.particles));
  res.p.assign(o.cells, p0);
  res.ensemble.resize(o.particles);
  const double T = o.horizon;

  for (std::size_t it = 0; it < o.max_iter; ++it) {
    Occupancy occ(o.cells, res.cell_width);
    for (std::size_t m = 0; m < o.particles; ++m) {
      Rng rng(o.seed, m);
      const double pick = rng.uniform() * total;
      auto where = std::upper_bound(law.begin(), law.end(), pick,
                                    [](double v, const auto& e) { return v < e.second; });
      if (where == law.end()) --where;
      Particle s = where->first;
      double t = 0.0;
      double on_since = 0.0;
      while (true) {
        // Rates are constant between jumps except lambda p(t) <= lambda.
        const double dup = s.x > 0 ? o.lambda : 0.0;
        const double bound = o.mu + dup + o.lambda + o.mu * s.y;
        const double next = t + rng.exponential(bound);
        if (next >= T) break;
        t = next;
        double u = rng.uniform() * bound;
        const bool was_on = s.x > 0;
        if (u < o.mu) {
          s = {0, 0};
        } else if ((u -= o.mu) < dup) {
          --s.x;
          ++s.y;
        } else if ((u -= dup) < o.lambda) {
          if (u < o.lambda * res.p[occ.cell(t)]) ++s.y;
        } else {
          ++s.x;
          --s.y;
        }
        const bool on = s.x > 0;
        if (was_on && !on) occ.add(on_since, t);
        if (!was_on && on) on_since = t;
      }
      if (s.x > 0) occ.add(on_since, T);
      res.ensemble[m] = s;
    }
    std::vector<double> next = occ.totals();
    double residual = 0.0;
    const double scale = 1.0 / (static_cast<double>(o.particles) * res.cell_width);
    for (std::size_t c = 0; c < o.cells; ++c) {
      next[c] = std::clamp(next[c] * scale, 0.0, 1.0);
      residual = std::max(residual, std::fabs(next[c] - res.p[c]));
    }
    res.p = std::move(next);
    res.residuals.push_back(residual);
    res.iterations = it + 1;
    if (residual < o.tol + res.noise_floor) {
      res.converged = true;
      break;
    }
  }
  return res;
}

namespace {

template <class F>
double simpson_rec(const F& f, double a, double b, double fa, double fm, double fb, double whole,
                   double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::fabs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

template <class F>
double adaptive_simpson(const F& f, double a, double b, double tol) {
  if (!(b > a)) return 0.0;
  // Start from 16 panels so that kinks cannot hide between the first nodes.
  const int pieces = 16;
  double s = 0.0;
  const double w = (b - a) / pieces;
  for (int j = 0; j < pieces; ++j) {
    const double lo = a + j * w, hi = (j + 1 == pieces) ? b : a + (j + 1) * w;
    const double flo = f(lo), fhi = f(hi), fmid = f(0.5 * (lo + hi));
    s += simpson_rec(f, lo, hi, flo, fmid, fhi, (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi),
                     tol / pieces, 40);
  }
  return s;
}

}  // namespace

double generating_function(std::uint32_t r2, double t, double u,
                           const std::function<double(double)>& p, double lambda, double mu,
                           double tol) {
  if (!(u >= 0.0 && u <= 1.0)) throw ValidationError("generating_function: u must lie in [0, 1]");
  if (!(t >= 0.0)) throw ValidationError("generating_function: t must be >= 0");
  const double c = lambda * (1.0 - u);
  const double start = std::pow(u, static_cast<double>(r2));
  if (t == 0.0) return start;
  if (c == 0.0) return std::exp(-mu * t) * start + (1.0 - std::exp(-mu * t));

  const double inner_tol = 0.1 * tol / std::max(1.0, c * t);
  auto P = [&](double a, double b) { return adaptive_simpson(p, a, b, inner_tol); };
  const double no_reset = std::exp(-mu * t) * start * std::exp(-c * P(0.0, t));
  auto integrand = [&](double s) { return std::exp(-c * P(t - s, t)) * mu * std::exp(-mu * s); };
  return no_reset + adaptive_simpson(integrand, 0.0, t, 0.5 * tol);
}

}  // namespace repdecay
