#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace repdecay {

/// Roots of x^2 + (3 + rho) x + 2, negated: the two decay exponents of the
/// d = 2 mean ODE in units of mu.
struct DecayRates2 {
  double rho;
  double kappa_plus;   ///< slow rate, in (0, 1]
  double kappa_minus;  ///< fast rate, >= 1
  double y_plus;       ///< rho + 1 - kappa_plus
  double y_minus;      ///< rho + 1 - kappa_minus
};

DecayRates2 kappa2(double rho);

/// Row-major dense square matrix.
struct DenseMatrix {
  std::size_t n = 0;
  std::vector<double> a;

  DenseMatrix() = default;
  explicit DenseMatrix(std::size_t size) : n(size), a(size * size, 0.0) {}
  double& operator()(std::size_t i, std::size_t j) { return a[i * n + j]; }
  double operator()(std::size_t i, std::size_t j) const { return a[i * n + j]; }
  double inf_norm() const;
};

/// The d x d generator of the dominating limit's mean vector (1-based rows k):
/// M[k][k-1] = k rho, M[k][k] = -k(rho+1) for k < d, M[d][d] = -d, M[k][k+1] = k.
DenseMatrix build_M(std::size_t d, double rho);

struct SymTridiagonal {
  std::vector<double> diag;
  std::vector<double> off;  ///< off[k] couples rows k and k+1 (0-based)
};

/// Diagonal similarity D M D^-1 with D_k = 1/sqrt(k rho^(k-1)); off-diagonal
/// sqrt(k(k+1) rho). Requires rho > 0 (ValidationError otherwise; at rho = 0
/// the matrix is triangular and its spectrum is the diagonal).
SymTridiagonal symmetrize(std::size_t d, double rho);

/// Number of eigenvalues strictly below x (Sturm sequence / LDL^T inertia).
std::size_t sturm_count(const SymTridiagonal& t, double x);

/// Bisection for every eigenvalue, ascending. Brackets start from the
/// Gershgorin interval and shrink until adjacent doubles.
std::vector<double> sturm_eigenvalues(const SymTridiagonal& t);

double kappa_bar(std::size_t d, double rho);

struct SpectralResult {
  std::size_t d;
  double rho;
  DenseMatrix matrix;
  std::vector<double> eigenvalues;  ///< ascending
  double kappa_d_plus;              ///< minus the largest eigenvalue
  double kappa_bar;

  std::string to_json() const;
};

SpectralResult spectrum(std::size_t d, double rho);

/// Exact solution of V' = M V as V_k(t) = sum_j coeff[k][j] exp(rates[j] t),
/// built from the eigenvectors of M (inverse iteration on the symmetrized
/// matrix, or back substitution in the triangular case rho = 0).
struct ModalExpansion {
  std::vector<double> rates;               ///< eigenvalues of M, ascending
  std::vector<std::vector<double>> coeff;  ///< [k][j]
  /// max_k sum_j |coeff[k][j]|, so that |V_k(t)| <= K0 exp(-kappa_d_plus t).
  double K0;

  std::vector<double> evaluate(double t) const;
};

ModalExpansion modal_expansion(std::size_t d, double rho, std::span<const double> V0);

/// RK4 integration of V' = M V (time in units of 1/mu) with step
/// step_factor / ||M||_inf. Returns one d-vector per entry of t_grid, which
/// must be ascending and nonnegative. V0 must be componentwise nonnegative.
std::vector<std::vector<double>> solve_V(std::size_t d, double rho, std::span<const double> V0,
                                         std::span<const double> t_grid,
                                         double step_factor = 0.01);

struct ClosedForm2 {
  double et1;
  double et2;
};

/// Expected class sizes of the d = 2 limit started at (0, r2):
///   ET1 = r2/(k- - k+) (e^{-mu k+ t} - e^{-mu k- t})
///   ET2 = r2/(k- - k+) (y+ e^{-mu k+ t} - y- e^{-mu k- t})
ClosedForm2 corollary_closed_form(double rho, double r2, double mu, double t);

struct RateFit {
  double rate;       ///< minus the least-squares slope of log(value)
  double r_squared;  ///< 1 for a perfect fit (and for a flat series)
  std::size_t points;
};

/// Constant C such that m1(t) + m2(t)/2 <= C exp(-mu kappa_plus t) for the
/// d = 2 limit whose initial means are (m1_0, m2_0). Writing the free
/// solution as h1 e^{-k+ t} (1, y+) + h2 e^{-k- t} (1, y-), C is
/// (1 + y+/2) h1 + max(0, (1 + y-/2) h2). It equals m1_0 + m2_0/2 only when
/// h2 >= 0, i.e. y+ m1_0 >= m2_0.
double decay_envelope(double rho, double m1_0, double m2_0);

/// Fit on the last `tail_fraction` of the samples.
RateFit fit_decay_rate(std::span<const double> t, std::span<const double> value,
                       double tail_fraction = 0.4);
/// Fit on the samples with t_lo <= t <= t_hi.
RateFit fit_decay_rate_window(std::span<const double> t, std::span<const double> value,
                              double t_lo, double t_hi);

struct Figure3Row {
  std::size_t d;
  double rho;
  double kappa_bar;
  double kappa_plus;
  double ratio;  ///< kappa_bar / kappa_plus, >= 1
};

std::vector<Figure3Row> figure3_table(std::span<const std::size_t> d_list,
                                      std::span<const double> rho_list);
/// Header "d,rho,kappa_bar,kappa_plus,ratio".
std::string figure3_csv(std::span<const Figure3Row> rows);

}  // namespace repdecay
