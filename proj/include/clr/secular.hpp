#pragma once

#include <span>
#include <string_view>

#include <Eigen/Dense>

#include "clr/clr_statistic.hpp"

namespace clr {

/// One realization of the independent chi-square variables of the
/// conditional null law: q0 ~ chi2(k - m), q_i ~ chi2(1) for i = 1..m.
struct NullDraw {
  double q0 = 0.0;
  Eigen::VectorXd q;

  double total() const { return q0 + q.sum(); }
};

enum class MuSolveMethod { newton, bisection_fallback, degenerate_zero };

std::string_view to_string(MuSolveMethod method);

struct MuSolveReport {
  double mu_min = 0.0;
  int iterations = 0;
  MuSolveMethod method = MuSolveMethod::degenerate_zero;
  double residual = 0.0;  // |g(mu_min)|, or the final bracket width on fallback
};

/// Characteristic polynomial
///   p(mu) = (mu - sum_{i>=0} q_i) prod_i (mu - l_i) - sum_i l_i q_i prod_{j!=i} (mu - l_j).
double eval_char_poly(const EigenSpectrum& spectrum, const NullDraw& draw, double mu);

struct SecularValue {
  double g = 0.0;
  double g_prime = 0.0;
};

/// Secular function g(mu) = p(mu) / prod_i (mu - l_i) and its derivative.
/// Throws NumericalError when mu sits on a pole.
SecularValue eval_secular(const EigenSpectrum& spectrum, const NullDraw& draw, double mu);

/// Smallest root of p, the unique root of g in [0, l_1). Safeguarded Newton
/// started at the smaller root of the single-pole quadratic, which lies left
/// of the root where g is increasing and convex.
MuSolveReport solve_mu_min(const EigenSpectrum& spectrum, const NullDraw& draw);

/// Allocation-free core of solve_mu_min. `lambdas` must be sorted ascending
/// and have the same length as `q`.
MuSolveReport solve_mu_min(std::span<const double> lambdas, double q0, std::span<const double> q);

/// Closed-form single-pole value: (1/2)(q0 + q1 - l1 + sqrt((q0 + q1 + l1)^2 - 4 q0 l1)),
/// evaluated without cancellation. For m = 1 this is the exact conditional
/// draw; with q1 = sum of the m chi2(1) variables it is the upper bound draw.
double gamma_bound_value(double q0, double q1, double lambda1);

/// Determinant of the arrowhead matrix with diagonal d (d_0..d_l) and
/// first row/column a (a_1..a_l):
///   prod_i d_i - sum_i a_i^2 prod_{j>=1, j!=i} d_j.
double eval_arrowhead_det(std::span<const double> d, std::span<const double> a);

}  // namespace clr
