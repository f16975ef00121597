#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "clr/model_data.hpp"
#include "clr/random.hpp"

namespace clr {

/// Gaussian weak-instrument design: Z rows ~ N(0, I_k), X = Z Pi + V,
/// y = X beta0 + eps with (eps, V) ~ N(0, Omega). Pi carries sqrt(l_j / n)
/// in entry (j, j) so that n Pi^T Pi = diag(spectrum); with
/// cfg.normalize_by_omega the spectrum is instead that of
/// n Omega_{V.eps}^{-1} Pi^T Pi.
IVDataset gen_gaussian_iv(const SimConfig& cfg, RandomStream& rng);

/// First-stage coefficient matrix used by gen_gaussian_iv.
Eigen::MatrixXd first_stage_coefficients(const SimConfig& cfg);

std::vector<double> log_grid(double lo, double hi, int count);
std::vector<double> linear_grid(double lo, double hi, int count);

struct ExperimentGrid {
  std::vector<double> lambda1_values;
  std::vector<double> lambda2_values;
  std::vector<double> beta1_values;  // power experiment only
  int reps = 1000;
  double alpha = 0.05;
  int n = 1000;
  int k = 10;
  int m = 2;
  std::uint64_t seed = 0;
  int draws = 10'000;           // Monte Carlo draws per p-value
  double cov_eps_v1 = -0.5;     // Cov(eps, V_1); other covariances are zero
  bool normalize_by_omega = false;
  unsigned threads = 0;
};

/// Throws InputError on an invalid grid. The power experiment additionally
/// needs beta1 values and ignores lambda1_values.
void validate(const ExperimentGrid& grid, bool power);

enum class TableKind { size, power };

struct RejectionRow {
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double beta1 = 0.0;
  double rate_exact = 0.0;
  double rate_bound = 0.0;
  double stderr_exact = 0.0;  // sqrt(r (1 - r) / reps) at r = rate_exact

  double difference() const { return rate_exact - rate_bound; }
};

struct RejectionTable {
  TableKind kind = TableKind::size;
  int reps = 0;
  double alpha = 0.05;
  std::vector<RejectionRow> rows;
};

/// Rejection rates under H0 (beta0 = 0) for every (lambda1, lambda2) pair,
/// lambda1 varying slowest.
RejectionTable run_size_experiment(const ExperimentGrid& grid);

/// Rejection rates of H0: beta = beta1 e1 on data generated with beta0 = 0
/// for every (lambda2, beta1) pair at fixed lambda1. Each dataset is reused
/// across all beta1 values.
RejectionTable run_power_experiment(const ExperimentGrid& grid, double lambda1_fixed);

struct CritvalPoint {
  double q0 = 0.0;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double critical_value_exact = 0.0;
  double critical_value_bound = 0.0;
};

struct CritvalSweep {
  int k = 0;
  int m = 0;
  double alpha = 0.05;
  double chi2_reference = 0.0;  // chi2(m) (1 - alpha)-quantile
  std::vector<CritvalPoint> points;  // sorted by q0
};

/// Critical value function along q0: for each of `points` realizations
/// q0 ~ chi2(k - m), sets l_1 = delta1 + q0, l_2 = ... = l_m = delta2 + q0 and
/// estimates the (1 - alpha)-quantiles of the exact and bound laws given this
/// spectrum and q0 (only q1..qm are redrawn), with common draws. Realization
/// i and its inner draws depend only on (seed, i), so sweeps with different
/// deltas are matched point by point.
CritvalSweep run_critval_sweep(int k, int m, double delta1, double delta2, double alpha,
                               int draws, std::uint64_t seed, int points = 50,
                               unsigned threads = 0);

/// chi2(dof) upper quantile, i.e. the value with P[X <= value] = 1 - alpha.
double chi2_upper_quantile(double dof, double alpha);

void write_csv(const RejectionTable& table, std::ostream& out);
void write_json(const RejectionTable& table, std::ostream& out);
void write_csv(const CritvalSweep& sweep, std::ostream& out);
void write_json(const CritvalSweep& sweep, std::ostream& out);

/// Column headers, as written by write_csv.
std::string csv_header(TableKind kind);
std::string critval_csv_header();

}  // namespace clr
