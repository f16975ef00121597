#include "clr/secular.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "clr/errors.hpp"

namespace clr {

namespace {

constexpr int kMaxNewtonIterations = 200;
constexpr double kDegenerateLambda = 1e-12;
constexpr double kDegenerateQ0 = 1e-14;
constexpr double kBracketWidth = 1e-12;

// Consecutive sorted eigenvalues this close share one pole term.
bool same_pole(double a, double b) {
  return std::abs(a - b) <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(a), std::abs(b));
}

// g and g' with repeated poles merged. Caller guarantees mu < lambdas[0].
struct PoleSum {
  double g;
  double g_prime;
};

PoleSum secular_core(std::span<const double> lambdas, std::span<const double> q, double total,
                     double mu) {
  double g = mu - total;
  double gp = 1.0;
  std::size_t i = 0;
  while (i < lambdas.size()) {
    const double lam = lambdas[i];
    double weight = 0.0;
    while (i < lambdas.size() && same_pole(lambdas[i], lam)) weight += q[i++];
    const double inv = 1.0 / (mu - lam);
    const double term = lam * weight * inv;
    g -= term;
    gp += term * inv;
  }
  return PoleSum{g, gp};
}

void check_draw(const EigenSpectrum& spectrum, const NullDraw& draw) {
  if (draw.q.size() != spectrum.lambdas.size()) {
    throw InputError("null draw and spectrum have different lengths");
  }
}

}  // namespace

std::string_view to_string(MuSolveMethod method) {
  switch (method) {
    case MuSolveMethod::newton: return "newton";
    case MuSolveMethod::bisection_fallback: return "bisection-fallback";
    case MuSolveMethod::degenerate_zero: return "degenerate-zero";
  }
  return "unknown";
}

double eval_char_poly(const EigenSpectrum& spectrum, const NullDraw& draw, double mu) {
  check_draw(spectrum, draw);
  const auto& lam = spectrum.lambdas;
  const Eigen::Index m = lam.size();
  double head = mu - draw.total();
  for (Eigen::Index i = 0; i < m; ++i) head *= mu - lam(i);
  double tail = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    double term = lam(i) * draw.q(i);
    for (Eigen::Index j = 0; j < m; ++j) {
      if (j != i) term *= mu - lam(j);
    }
    tail += term;
  }
  return head - tail;
}

SecularValue eval_secular(const EigenSpectrum& spectrum, const NullDraw& draw, double mu) {
  check_draw(spectrum, draw);
  double g = mu - draw.total();
  double gp = 1.0;
  for (Eigen::Index i = 0; i < spectrum.lambdas.size(); ++i) {
    const double lam = spectrum.lambdas(i);
    const double gap = mu - lam;
    if (std::abs(gap) <= std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(lam))) {
      throw NumericalError("secular function evaluated at a pole");
    }
    const double term = lam * draw.q(i) / gap;
    g -= term;
    gp += term / gap;
  }
  return SecularValue{g, gp};
}

double gamma_bound_value(double q0, double q1, double lambda1) {
  const double total = q0 + q1;
  const double s = total + lambda1;
  if (!(s > 0.0)) return 0.0;
  const double disc = std::max(0.0, s * s - 4.0 * q0 * lambda1);
  // Smaller quadratic root written as 2c / (s + sqrt(disc)).
  const double mu_minus = 2.0 * q0 * lambda1 / (s + std::sqrt(disc));
  return std::max(0.0, total - mu_minus);
}

MuSolveReport solve_mu_min(std::span<const double> lambdas, double q0,
                           std::span<const double> q) {
  MuSolveReport report;
  if (lambdas.empty()) return report;
  const double lambda1 = lambdas.front();
  const double lambda_max = lambdas.back();
  if (lambda1 <= kDegenerateLambda * std::max(1.0, lambda_max) || q0 <= kDegenerateQ0) {
    return report;
  }

  double q_sum = 0.0;
  for (double v : q) q_sum += v;
  const double total = q0 + q_sum;

  // Root lies in [0, min(l_1, q0)]; g(0) = -q0 < 0.
  double lo = 0.0;
  double hi = std::min(lambda1, q0);
  const double width_tol = kBracketWidth * std::max(1.0, lambda1);

  const double s = total + lambda1;
  const double disc = std::max(0.0, s * s - 4.0 * q0 * lambda1);
  double mu = 2.0 * q0 * lambda1 / (s + std::sqrt(disc));
  if (!(mu >= lo) || !(mu < hi)) mu = 0.5 * (lo + hi);

  report.method = MuSolveMethod::newton;
  constexpr double eps = std::numeric_limits<double>::epsilon();
  double prev_abs_g = std::numeric_limits<double>::infinity();
  for (int it = 0; it < kMaxNewtonIterations; ++it) {
    report.iterations = it + 1;
    const PoleSum v = secular_core(lambdas, q, total, mu);
    const double abs_g = std::abs(v.g);
    if (v.g == 0.0) {
      report.mu_min = mu;
      return report;
    }
    if (v.g < 0.0) {
      lo = mu;
    } else {
      hi = mu;
    }
    const double step = v.g / v.g_prime;
    if (std::abs(step) <= 4.0 * eps * mu || hi - lo <= 4.0 * eps * hi) {
      report.mu_min = mu;
      report.residual = abs_g;
      return report;
    }
    double next = mu - step;
    if (!(next > lo && next < hi) || !(abs_g < prev_abs_g)) next = 0.5 * (lo + hi);
    prev_abs_g = abs_g;
    mu = next;
  }

  report.method = MuSolveMethod::bisection_fallback;
  while (hi - lo > width_tol) {
    const double mid = 0.5 * (lo + hi);
    const PoleSum v = secular_core(lambdas, q, total, mid);
    if (v.g < 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
    ++report.iterations;
  }
  report.mu_min = 0.5 * (lo + hi);
  report.residual = hi - lo;
  return report;
}

MuSolveReport solve_mu_min(const EigenSpectrum& spectrum, const NullDraw& draw) {
  check_draw(spectrum, draw);
  if (draw.q0 < 0.0 || (draw.q.array() < 0.0).any()) {
    throw InputError("null draw has a negative entry");
  }
  return solve_mu_min(std::span<const double>(spectrum.lambdas.data(), spectrum.lambdas.size()),
                      draw.q0, std::span<const double>(draw.q.data(), draw.q.size()));
}

double eval_arrowhead_det(std::span<const double> d, std::span<const double> a) {
  if (d.size() != a.size() + 1) {
    throw InputError("arrowhead determinant needs len(d) == len(a) + 1");
  }
  const std::size_t l = a.size();
  double diag = 1.0;
  for (double v : d) diag *= v;
  double correction = 0.0;
  for (std::size_t i = 1; i <= l; ++i) {
    double term = a[i - 1] * a[i - 1];
    for (std::size_t j = 1; j <= l; ++j) {
      if (j != i) term *= d[j];
    }
    correction += term;
  }
  return diag - correction;
}

}  // namespace clr
