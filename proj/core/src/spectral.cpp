#include "repdecay/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "repdecay/io.hpp"
#include "repdecay/params.hpp"

namespace repdecay {

namespace {

void check_d_rho(std::size_t d, double rho) {
  if (d < 1) throw ValidationError("d must be at least 1");
  if (!(rho >= 0.0) || !std::isfinite(rho)) throw ValidationError("rho must be finite and >= 0");
}

// Gaussian elimination with partial pivoting; a is overwritten. Exactly zero
// pivots are nudged so that inverse iteration on a singular shift still works.
std::vector<double> solve_dense(DenseMatrix a, std::vector<double> b) {
  const std::size_t n = a.n;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r) {
      if (std::fabs(a(r, c)) > std::fabs(a(piv, c))) piv = r;
    }
    if (piv != c) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a(c, j), a(piv, j));
      std::swap(b[c], b[piv]);
    }
    if (a(c, c) == 0.0) a(c, c) = std::numeric_limits<double>::epsilon() * (1.0 + a.inf_norm());
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a(r, c) / a(c, c);
      if (f == 0.0) continue;
      for (std::size_t j = c; j < n; ++j) a(r, j) -= f * a(c, j);
      b[r] -= f * b[c];
    }
  }
  for (std::size_t c = n; c-- > 0;) {
    double s = b[c];
    for (std::size_t j = c + 1; j < n; ++j) s -= a(c, j) * b[j];
    b[c] = s / a(c, c);
  }
  return b;
}

void normalize(std::vector<double>& v) {
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
}

DenseMatrix dense_of(const SymTridiagonal& t) {
  DenseMatrix m(t.diag.size());
  for (std::size_t k = 0; k < m.n; ++k) {
    m(k, k) = t.diag[k];
    if (k + 1 < m.n) m(k, k + 1) = m(k + 1, k) = t.off[k];
  }
  return m;
}

// Eigenvector of a symmetric matrix for an eigenvalue known to full precision.
std::vector<double> inverse_iteration(const DenseMatrix& s, double lambda) {
  const std::size_t n = s.n;
  DenseMatrix shifted = s;
  const double shift = lambda + 1e-13 * std::max(1.0, std::fabs(lambda));
  for (std::size_t k = 0; k < n; ++k) shifted(k, k) -= shift;
  std::vector<double> v(n);
  for (std::size_t k = 0; k < n; ++k) v[k] = 1.0 + 0.1 * static_cast<double>(k % 7);
  normalize(v);
  for (int it = 0; it < 3; ++it) {
    v = solve_dense(shifted, v);
    normalize(v);
  }
  return v;
}

RateFit fit_range(std::span<const double> t, std::span<const double> v, std::size_t begin,
                  std::size_t end) {
  const std::size_t n = end - begin;
  if (n < 10) throw ValidationError("fit_decay_rate: need at least 10 points in the window");
  double st = 0.0, sy = 0.0;
  for (std::size_t j = begin; j < end; ++j) {
    if (!(v[j] > 0.0)) throw ValidationError("fit_decay_rate: non-positive value in window");
    st += t[j];
    sy += std::log(v[j]);
  }
  const double mt = st / static_cast<double>(n);
  const double my = sy / static_cast<double>(n);
  double stt = 0.0, sty = 0.0, syy = 0.0;
  for (std::size_t j = begin; j < end; ++j) {
    const double dt = t[j] - mt;
    const double dy = std::log(v[j]) - my;
    stt += dt * dt;
    sty += dt * dy;
    syy += dy * dy;
  }
  if (stt == 0.0) throw ValidationError("fit_decay_rate: window has a single time point");
  const double slope = sty / stt;
  double ss_res = 0.0;
  for (std::size_t j = begin; j < end; ++j) {
    const double r = std::log(v[j]) - (my + slope * (t[j] - mt));
    ss_res += r * r;
  }
  const double r2 = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
  return {-slope, r2, n};
}

}  // namespace

DecayRates2 kappa2(double rho) {
  if (!(rho >= 0.0)) throw ValidationError("kappa2: rho must be >= 0");
  const double b = 3.0 + rho;
  // Larger root first; the smaller follows from the product of roots = 2,
  // which avoids cancellation (and gives kappa_plus(0) = 1 exactly).
  const double minus = 0.5 * (b + std::sqrt(b * b - 8.0));
  const double plus = 2.0 / minus;
  return {rho, plus, minus, rho + 1.0 - plus, rho + 1.0 - minus};
}

double DenseMatrix::inf_norm() const {
  double best = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) row += std::fabs((*this)(i, j));
    best = std::max(best, row);
  }
  return best;
}

DenseMatrix build_M(std::size_t d, double rho) {
  check_d_rho(d, rho);
  DenseMatrix m(d);
  for (std::size_t i = 0; i < d; ++i) {
    const double k = static_cast<double>(i + 1);
    m(i, i) = (i + 1 < d) ? -k * (rho + 1.0) : -k;
    if (i > 0) m(i, i - 1) = k * rho;
    if (i + 1 < d) m(i, i + 1) = k;
  }
  return m;
}

SymTridiagonal symmetrize(std::size_t d, double rho) {
  check_d_rho(d, rho);
  if (rho <= 0.0) throw ValidationError("symmetrize: rho must be > 0 (rho = 0 is triangular)");
  const DenseMatrix m = build_M(d, rho);
  SymTridiagonal t;
  t.diag.resize(d);
  t.off.resize(d - 1);
  for (std::size_t i = 0; i < d; ++i) t.diag[i] = m(i, i);
  for (std::size_t i = 0; i + 1 < d; ++i) {
    const double k = static_cast<double>(i + 1);
    t.off[i] = std::sqrt(k * (k + 1.0) * rho);
  }
  return t;
}

std::size_t sturm_count(const SymTridiagonal& t, double x) {
  const double pivmin = std::numeric_limits<double>::min();
  std::size_t count = 0;
  double q = t.diag[0] - x;
  for (std::size_t i = 0;; ++i) {
    if (std::fabs(q) < pivmin) q = -pivmin;
    if (q < 0.0) ++count;
    if (i + 1 == t.diag.size()) break;
    q = (t.diag[i + 1] - x) - t.off[i] * t.off[i] / q;
  }
  return count;
}

std::vector<double> sturm_eigenvalues(const SymTridiagonal& t) {
  const std::size_t n = t.diag.size();
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t i = 0; i < n; ++i) {
    double r = 0.0;
    if (i > 0) r += std::fabs(t.off[i - 1]);
    if (i + 1 < n) r += std::fabs(t.off[i]);
    lo = std::min(lo, t.diag[i] - r);
    hi = std::max(hi, t.diag[i] + r);
  }
  const double pad = 1e-12 * std::max({1.0, std::fabs(lo), std::fabs(hi)});
  lo -= pad;
  hi += pad;
  if (sturm_count(t, lo) != 0 || sturm_count(t, hi) != n) {
    throw NumericalError("sturm_eigenvalues: Gershgorin bracket does not enclose the spectrum");
  }
  std::vector<double> eig(n);
  for (std::size_t j = 0; j < n; ++j) {
    double a = lo;
    double b = hi;
    for (int it = 0; it < 2200; ++it) {
      const double mid = a + 0.5 * (b - a);
      if (mid <= a || mid >= b) break;
      if (sturm_count(t, mid) > j) {
        b = mid;
      } else {
        a = mid;
      }
    }
    eig[j] = a + 0.5 * (b - a);
  }
  return eig;
}

double kappa_bar(std::size_t d, double rho) {
  check_d_rho(d, rho);
  double sum = 0.0;
  double power = 1.0;
  for (std::size_t k = 1; k <= d; ++k) {
    sum += power / static_cast<double>(k);
    power *= rho;
  }
  return 1.0 / sum;
}

SpectralResult spectrum(std::size_t d, double rho) {
  check_d_rho(d, rho);
  SpectralResult r{d, rho, build_M(d, rho), {}, 0.0, kappa_bar(d, rho)};
  if (rho == 0.0 || d == 1) {
    r.eigenvalues.resize(d);
    for (std::size_t i = 0; i < d; ++i) r.eigenvalues[i] = r.matrix(i, i);
    std::sort(r.eigenvalues.begin(), r.eigenvalues.end());
  } else {
    r.eigenvalues = sturm_eigenvalues(symmetrize(d, rho));
  }
  r.kappa_d_plus = -r.eigenvalues.back();
  return r;
}

std::string SpectralResult::to_json() const {
  nlohmann::json j;
  j["d"] = d;
  j["rho"] = rho;
  j["eigenvalues"] = eigenvalues;
  j["kappa_d_plus"] = kappa_d_plus;
  j["kappa_bar"] = kappa_bar;
  return j.dump(2);
}

std::vector<double> ModalExpansion::evaluate(double t) const {
  std::vector<double> v(coeff.size(), 0.0);
  for (std::size_t k = 0; k < coeff.size(); ++k) {
    for (std::size_t j = 0; j < rates.size(); ++j) v[k] += coeff[k][j] * std::exp(rates[j] * t);
  }
  return v;
}

ModalExpansion modal_expansion(std::size_t d, double rho, std::span<const double> V0) {
  check_d_rho(d, rho);
  if (V0.size() != d) throw ValidationError("modal_expansion: V0 has wrong dimension");
  const DenseMatrix m = build_M(d, rho);
  ModalExpansion out;
  out.coeff.assign(d, std::vector<double>(d, 0.0));
  std::vector<double> c;
  // Eigenvectors of M as columns of p (original coordinates).
  DenseMatrix p(d);
  if (rho == 0.0 || d == 1) {
    // Upper triangular: eigenvalue m(j,j) has an eigenvector supported on 0..j.
    out.rates.resize(d);
    for (std::size_t j = 0; j < d; ++j) out.rates[j] = m(j, j);
    std::sort(out.rates.begin(), out.rates.end());
    for (std::size_t col = 0; col < d; ++col) {
      const std::size_t j = d - 1 - col;  // m(j,j) = -(j+1) sorts ascending in reverse
      const double lambda = m(j, j);
      p(j, col) = 1.0;
      for (std::size_t i = j; i-- > 0;) {
        p(i, col) = -m(i, i + 1) * p(i + 1, col) / (m(i, i) - lambda);
      }
    }
    c = solve_dense(p, std::vector<double>(V0.begin(), V0.end()));
  } else {
    const SymTridiagonal sym = symmetrize(d, rho);
    out.rates = sturm_eigenvalues(sym);
    const DenseMatrix s = dense_of(sym);
    std::vector<double> scale(d);  // D_k
    for (std::size_t i = 0; i < d; ++i) {
      const double k = static_cast<double>(i + 1);
      scale[i] = 1.0 / std::sqrt(k * std::pow(rho, k - 1.0));
    }
    DenseMatrix q(d);
    for (std::size_t j = 0; j < d; ++j) {
      const auto v = inverse_iteration(s, out.rates[j]);
      for (std::size_t i = 0; i < d; ++i) q(i, j) = v[i];
    }
    std::vector<double> w0(d);
    for (std::size_t i = 0; i < d; ++i) w0[i] = scale[i] * V0[i];
    c = solve_dense(q, w0);
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) p(i, j) = q(i, j) / scale[i];
    }
  }
  out.K0 = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    double row = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      out.coeff[k][j] = p(k, j) * c[j];
      row += std::fabs(out.coeff[k][j]);
    }
    out.K0 = std::max(out.K0, row);
  }
  return out;
}

std::vector<std::vector<double>> solve_V(std::size_t d, double rho, std::span<const double> V0,
                                         std::span<const double> t_grid, double step_factor) {
  check_d_rho(d, rho);
  if (V0.size() != d) throw ValidationError("solve_V: V0 has wrong dimension");
  for (double v : V0) {
    if (!(v >= 0.0)) throw ValidationError("solve_V: V0 must be componentwise >= 0");
  }
  if (!(step_factor > 0.0 && step_factor <= 0.1)) {
    throw ValidationError("solve_V: step_factor must lie in (0, 0.1]");
  }
  const DenseMatrix m = build_M(d, rho);
  const double h_max = step_factor / m.inf_norm();

  auto apply = [&](const std::vector<double>& x, std::vector<double>& y) {
    for (std::size_t i = 0; i < d; ++i) {
      double s = m(i, i) * x[i];
      if (i > 0) s += m(i, i - 1) * x[i - 1];
      if (i + 1 < d) s += m(i, i + 1) * x[i + 1];
      y[i] = s;
    }
  };

  std::vector<double> v(V0.begin(), V0.end());
  std::vector<double> k1(d), k2(d), k3(d), k4(d), tmp(d);
  std::vector<std::vector<double>> out;
  out.reserve(t_grid.size());
  double t = 0.0;
  for (double target : t_grid) {
    if (!(target >= t)) throw ValidationError("solve_V: t_grid must be ascending and >= 0");
    const double span = target - t;
    const auto steps = static_cast<std::size_t>(std::ceil(span / h_max));
    const double h = steps ? span / static_cast<double>(steps) : 0.0;
    for (std::size_t s = 0; s < steps; ++s) {
      apply(v, k1);
      for (std::size_t i = 0; i < d; ++i) tmp[i] = v[i] + 0.5 * h * k1[i];
      apply(tmp, k2);
      for (std::size_t i = 0; i < d; ++i) tmp[i] = v[i] + 0.5 * h * k2[i];
      apply(tmp, k3);
      for (std::size_t i = 0; i < d; ++i) tmp[i] = v[i] + h * k3[i];
      apply(tmp, k4);
      for (std::size_t i = 0; i < d; ++i) {
        v[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
      }
    }
    t = target;
    out.push_back(v);
  }
  return out;
}

ClosedForm2 corollary_closed_form(double rho, double r2, double mu, double t) {
  const DecayRates2 k = kappa2(rho);
  const double scale = r2 / (k.kappa_minus - k.kappa_plus);
  const double slow = std::exp(-mu * k.kappa_plus * t);
  const double fast = std::exp(-mu * k.kappa_minus * t);
  return {scale * (slow - fast), scale * (k.y_plus * slow - k.y_minus * fast)};
}

double decay_envelope(double rho, double m1_0, double m2_0) {
  const DecayRates2 k = kappa2(rho);
  const double gap = k.y_plus - k.y_minus;
  const double h1 = (m2_0 - k.y_minus * m1_0) / gap;
  const double h2 = (k.y_plus * m1_0 - m2_0) / gap;
  return (1.0 + 0.5 * k.y_plus) * h1 + std::max(0.0, (1.0 + 0.5 * k.y_minus) * h2);
}

RateFit fit_decay_rate(std::span<const double> t, std::span<const double> value,
                       double tail_fraction) {
  if (t.size() != value.size()) throw ValidationError("fit_decay_rate: size mismatch");
  if (!(tail_fraction > 0.0 && tail_fraction <= 1.0)) {
    throw ValidationError("fit_decay_rate: tail fraction must lie in (0, 1]");
  }
  const std::size_t n = t.size();
  const auto keep = static_cast<std::size_t>(std::ceil(tail_fraction * static_cast<double>(n)));
  return fit_range(t, value, n - std::min(keep, n), n);
}

RateFit fit_decay_rate_window(std::span<const double> t, std::span<const double> value,
                              double t_lo, double t_hi) {
  if (t.size() != value.size()) throw ValidationError("fit_decay_rate: size mismatch");
  std::size_t begin = 0;
  while (begin < t.size() && t[begin] < t_lo) ++begin;
  std::size_t end = begin;
  while (end < t.size() && t[end] <= t_hi) ++end;
  return fit_range(t, value, begin, end);
}

std::vector<Figure3Row> figure3_table(std::span<const std::size_t> d_list,
                                      std::span<const double> rho_list) {
  std::vector<Figure3Row> rows;
  rows.reserve(d_list.size() * rho_list.size());
  for (std::size_t d : d_list) {
    for (double rho : rho_list) {
      const SpectralResult s = spectrum(d, rho);
      rows.push_back({d, rho, s.kappa_bar, s.kappa_d_plus, s.kappa_bar / s.kappa_d_plus});
    }
  }
  return rows;
}

std::string figure3_csv(std::span<const Figure3Row> rows) {
  std::ostringstream out;
  out << "d,rho,kappa_bar,kappa_plus,ratio\n";
  for (const auto& r : rows) {
    out << r.d << ',' << format_number(r.rho) << ',' << format_number(r.kappa_bar) << ','
        << format_number(r.kappa_plus) << ',' << format_number(r.ratio) << '\n';
  }
  return out.str();
}

}  // namespace repdecay
