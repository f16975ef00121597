#include "clr/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include <boost/math/distributions/chi_squared.hpp>
#include <json.hpp>

#include "clr/clr_statistic.hpp"
#include "clr/errors.hpp"
#include "clr/null_distribution.hpp"

namespace clr {

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

Eigen::MatrixXd symmetric_sqrt(const Eigen::MatrixXd& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(a);
  return eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
         eig.eigenvectors().transpose();
}

Eigen::VectorXd grid_spectrum(int m, double lambda1, double lambda2) {
  Eigen::VectorXd s = Eigen::VectorXd::Constant(m, lambda2);
  s(0) = lambda1;
  return s;
}

SimConfig base_config(const ExperimentGrid& grid) {
  SimConfig cfg;
  cfg.n = grid.n;
  cfg.k = grid.k;
  cfg.m = grid.m;
  cfg.cov_eps_v = Eigen::VectorXd::Zero(grid.m);
  cfg.cov_eps_v(0) = grid.cov_eps_v1;
  cfg.beta0 = Eigen::VectorXd::Zero(grid.m);
  cfg.seed = grid.seed;
  cfg.reps = grid.reps;
  cfg.normalize_by_omega = grid.normalize_by_omega;
  return cfg;
}

double stderr_of(double rate, int reps) {
  return std::sqrt(rate * (1.0 - rate) / static_cast<double>(reps));
}

void check_nonnegative(const std::vector<double>& values, const char* name) {
  for (double v : values) {
    if (!std::isfinite(v) || v < 0.0) {
      throw InputError(std::string(name) + " values must be finite and nonnegative");
    }
  }
}

}  // namespace

Eigen::MatrixXd first_stage_coefficients(const SimConfig& cfg) {
  Eigen::MatrixXd pi = Eigen::MatrixXd::Zero(cfg.k, cfg.m);
  const Eigen::VectorXd scaled = (cfg.spectrum / static_cast<double>(cfg.n)).cwiseSqrt();
  if (!cfg.normalize_by_omega) {
    for (int j = 0; j < cfg.m; ++j) pi(j, j) = scaled(j);
    return pi;
  }
  // n Pi^T Pi = S diag(l) S with S = Omega_{V.eps}^{1/2}, which is similar to
  // Omega_{V.eps} diag(l) and equals it when Omega_{V.eps} is diagonal.
  const Eigen::MatrixXd om = cfg.omega();
  const Eigen::MatrixXd cond = om.bottomRightCorner(cfg.m, cfg.m) -
                               om.block(1, 0, cfg.m, 1) * om.block(0, 1, 1, cfg.m) / om(0, 0);
  pi.topRows(cfg.m) = scaled.asDiagonal() * symmetric_sqrt(cond);
  return pi;
}

IVDataset gen_gaussian_iv(const SimConfig& cfg, RandomStream& rng) {
  validate(cfg);
  const int n = cfg.n, k = cfg.k, m = cfg.m;
  Eigen::LLT<Eigen::MatrixXd> llt(cfg.omega());
  const Eigen::MatrixXd chol = llt.matrixL();
  const Eigen::MatrixXd pi = first_stage_coefficients(cfg);

  std::normal_distribution<double> normal(0.0, 1.0);
  IVDataset ds{Eigen::VectorXd(n), Eigen::MatrixXd(n, m), Eigen::MatrixXd(n, k)};
  Eigen::MatrixXd errors(n, 1 + m);
  Eigen::VectorXd u(1 + m);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < k; ++j) ds.Z(i, j) = normal(rng);
    for (int j = 0; j <= m; ++j) u(j) = normal(rng);
    errors.row(i) = (chol * u).transpose();
  }
  ds.X = ds.Z * pi + errors.rightCols(m);
  ds.y = ds.X * cfg.beta0 + errors.col(0);
  return ds;
}

std::vector<double> log_grid(double lo, double hi, int count) {
  if (count < 1 || !(lo > 0.0) || !(hi >= lo)) throw InputError("invalid logarithmic grid");
  if (count == 1) return {lo};
  std::vector<double> out(count);
  const double a = std::log(lo), b = std::log(hi);
  for (int i = 0; i < count; ++i) out[i] = std::exp(a + (b - a) * i / (count - 1));
  out.front() = lo;
  out.back() = hi;
  return out;
}

std::vector<double> linear_grid(double lo, double hi, int count) {
  if (count < 1 || !(hi >= lo)) throw InputError("invalid linear grid");
  if (count == 1) return {lo};
  std::vector<double> out(count);
  for (int i = 0; i < count; ++i) out[i] = lo + (hi - lo) * i / (count - 1);
  out.back() = hi;
  return out;
}

void validate(const ExperimentGrid& grid, bool power) {
  if (grid.m < 1 || grid.k < grid.m || grid.n <= grid.k) {
    throw InputError("grid dimensions need n > k >= m >= 1");
  }
  if (grid.reps < 100) throw InputError("reps must be at least 100");
  if (!(grid.alpha > 0.0 && grid.alpha < 1.0)) throw InputError("alpha must lie in (0, 1)");
  if (grid.draws < kMinPValueDraws) throw InputError("draws must be at least 1000");
  if (!(std::abs(grid.cov_eps_v1) < 1.0)) throw InputError("|cov_eps_v1| must be below 1");
  if (grid.lambda2_values.empty()) throw InputError("lambda2 grid is empty");
  check_nonnegative(grid.lambda2_values, "lambda2");
  if (power) {
    if (grid.beta1_values.empty()) throw InputError("beta1 grid is empty");
    for (double b : grid.beta1_values) {
      if (!std::isfinite(b)) throw InputError("beta1 values must be finite");
    }
  } else {
    if (grid.lambda1_values.empty()) throw InputError("lambda1 grid is empty");
    check_nonnegative(grid.lambda1_values, "lambda1");
  }
}

RejectionTable run_size_experiment(const ExperimentGrid& grid) {
  validate(grid, false);
  const std::size_t n2 = grid.lambda2_values.size();
  const std::size_t points = grid.lambda1_values.size() * n2;
  const auto reps = static_cast<std::size_t>(grid.reps);
  std::vector<unsigned char> rej_exact(points * reps, 0), rej_bound(points * reps, 0);

  parallel_for(points * reps, grid.threads, [&](std::size_t unit) {
    const std::size_t g = unit / reps, r = unit % reps;
    SimConfig cfg = base_config(grid);
    cfg.spectrum = grid_spectrum(grid.m, grid.lambda1_values[g / n2], grid.lambda2_values[g % n2]);
    RandomStream rng = make_stream(grid.seed, {0, g, r});
    const IVDataset ds = gen_gaussian_iv(cfg, rng);
    const ProjectionBasis basis = projection_basis(ds);
    const double lr = lr_statistic(ds, basis, cfg.beta0);
    const EigenSpectrum spectrum = conditioning_eigenvalues(ds, basis, cfg.beta0);
    const PValuePair p = pvalues(lr, spectrum, grid.draws, derive_seed(grid.seed, {1, g, r}), 1);
    rej_exact[unit] = p.exact < grid.alpha;
    rej_bound[unit] = p.bound < grid.alpha;
  });

  RejectionTable table{TableKind::size, grid.reps, grid.alpha, {}};
  for (std::size_t g = 0; g < points; ++g) {
    std::size_t ce = 0, cb = 0;
    for (std::size_t r = 0; r < reps; ++r) {
      ce += rej_exact[g * reps + r];
      cb += rej_bound[g * reps + r];
    }
    RejectionRow row;
    row.lambda1 = grid.lambda1_values[g / n2];
    row.lambda2 = grid.lambda2_values[g % n2];
    row.rate_exact = static_cast<double>(ce) / grid.reps;
    row.rate_bound = static_cast<double>(cb) / grid.reps;
    row.stderr_exact = stderr_of(row.rate_exact, grid.reps);
    table.rows.push_back(row);
  }
  return table;
}

RejectionTable run_power_experiment(const ExperimentGrid& grid, double lambda1_fixed) {
  validate(grid, true);
  if (!std::isfinite(lambda1_fixed) || lambda1_fixed < 0.0) {
    throw InputError("lambda1 must be finite and nonnegative");
  }
  const std::size_t nl = grid.lambda2_values.size();
  const std::size_t nb = grid.beta1_values.size();
  const auto reps = static_cast<std::size_t>(grid.reps);
  std::vector<unsigned char> rej_exact(nl * reps * nb, 0), rej_bound(nl * reps * nb, 0);

  parallel_for(nl * reps, grid.threads, [&](std::size_t unit) {
    const std::size_t a = unit / reps, r = unit % reps;
    SimConfig cfg = base_config(grid);
    cfg.spectrum = grid_spectrum(grid.m, lambda1_fixed, grid.lambda2_values[a]);
    RandomStream rng = make_stream(grid.seed, {0, a, r});
    const IVDataset ds = gen_gaussian_iv(cfg, rng);
    const ProjectionBasis basis = projection_basis(ds);
    const std::uint64_t inner = derive_seed(grid.seed, {1, a, r});
    for (std::size_t b = 0; b < nb; ++b) {
      Eigen::VectorXd beta = Eigen::VectorXd::Zero(grid.m);
      beta(0) = grid.beta1_values[b];
      const double lr = lr_statistic(ds, basis, beta);
      const EigenSpectrum spectrum = conditioning_eigenvalues(ds, basis, beta);
      const PValuePair p = pvalues(lr, spectrum, grid.draws, inner, 1);
      rej_exact[unit * nb + b] = p.exact < grid.alpha;
      rej_bound[unit * nb + b] = p.bound < grid.alpha;
    }
  });

  RejectionTable table{TableKind::power, grid.reps, grid.alpha, {}};
  for (std::size_t a = 0; a < nl; ++a) {
    for (std::size_t b = 0; b < nb; ++b) {
      std::size_t ce = 0, cb = 0;
      for (std::size_t r = 0; r < reps; ++r) {
        const std::size_t idx = (a * reps + r) * nb + b;
        ce += rej_exact[idx];
        cb += rej_bound[idx];
      }
      RejectionRow row;
      row.lambda1 = lambda1_fixed;
      row.lambda2 = grid.lambda2_values[a];
      row.beta1 = grid.beta1_values[b];
      row.rate_exact = static_cast<double>(ce) / grid.reps;
      row.rate_bound = static_cast<double>(cb) / grid.reps;
      row.stderr_exact = stderr_of(row.rate_exact, grid.reps);
      table.rows.push_back(row);
    }
  }
  return table;
}

double chi2_upper_quantile(double dof, double alpha) {
  boost::math::chi_squared dist(dof);
  return boost::math::quantile(dist, 1.0 - alpha);
}

CritvalSweep run_critval_sweep(int k, int m, double delta1, double delta2, double alpha,
                               int draws, std::uint64_t seed, int points, unsigned threads) {
  if (m < 1 || k <= m) throw InputError("critical-value sweep needs k > m >= 1");
  if (!(delta1 >= 0.0) || !(delta2 >= 0.0)) throw InputError("deltas must be nonnegative");
  if (points < 1) throw InputError("points must be positive");
  if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("alpha must lie in (0, 1)");
  if (static_cast<double>(draws) * std::min(alpha, 1.0 - alpha) < 50.0) {
    throw InputError("insufficient draws for the requested quantile");
  }

  CritvalSweep sweep{k, m, alpha, chi2_upper_quantile(m, alpha), {}};
  sweep.points.resize(static_cast<std::size_t>(points));
  // Points run serially; each critical value parallelizes over its draws.
  for (std::size_t i = 0; i < sweep.points.size(); ++i) {
    RandomStream rng = make_stream(seed, {0, i});
    ChiSquareSampler q0_sampler(k - m);
    const double q0 = q0_sampler(rng);
    Eigen::VectorXd lambdas = Eigen::VectorXd::Constant(m, delta2 + q0);
    lambdas(0) = delta1 + q0;
    const EigenSpectrum spectrum = make_spectrum(lambdas, k, m);
    const std::uint64_t inner = derive_seed(seed, {1, i});
    CritvalPoint& pt = sweep.points[i];
    pt.q0 = q0;
    pt.lambda1 = delta1 + q0;
    pt.lambda2 = delta2 + q0;
    NullSamples samples = simulate_null_given_q0(spectrum, q0, draws, inner, threads);
    pt.critical_value_exact = upper_quantile(samples.exact, alpha);
    pt.critical_value_bound = upper_quantile(samples.bound, alpha);
  }
  std::stable_sort(sweep.points.begin(), sweep.points.end(),
                   [](const CritvalPoint& a, const CritvalPoint& b) { return a.q0 < b.q0; });
  return sweep;
}

std::string csv_header(TableKind kind) {
  return kind == TableKind::size
             ? "lambda1,lambda2,rate_exact,rate_bound,stderr"
             : "lambda1,lambda2,beta1,rate_exact,rate_bound,difference,stderr";
}

std::string critval_csv_header() {
  return "q0,lambda1,lambda2,critical_value_exact,critical_value_bound,chi2_reference";
}

void write_csv(const RejectionTable& table, std::ostream& out) {
  out << csv_header(table.kind) << '\n';
  for (const auto& r : table.rows) {
    out << fmt_double(r.lambda1) << ',' << fmt_double(r.lambda2) << ',';
    if (table.kind == TableKind::power) out << fmt_double(r.beta1) << ',';
    out << fmt_double(r.rate_exact) << ',' << fmt_double(r.rate_bound) << ',';
    if (table.kind == TableKind::power) out << fmt_double(r.difference()) << ',';
    out << fmt_double(r.stderr_exact) << '\n';
  }
}

void write_json(const RejectionTable& table, std::ostream& out) {
  nlohmann::ordered_json j;
  j["kind"] = table.kind == TableKind::size ? "size" : "power";
  j["reps"] = table.reps;
  j["alpha"] = table.alpha;
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& r : table.rows) {
    nlohmann::ordered_json row;
    row["lambda1"] = r.lambda1;
    row["lambda2"] = r.lambda2;
    if (table.kind == TableKind::power) row["beta1"] = r.beta1;
    row["rate_exact"] = r.rate_exact;
    row["rate_bound"] = r.rate_bound;
    if (table.kind == TableKind::power) row["difference"] = r.difference();
    row["stderr"] = r.stderr_exact;
    j["rows"].push_back(row);
  }
  out << j.dump(2) << '\n';
}

void write_csv(const CritvalSweep& sweep, std::ostream& out) {
  out << critval_csv_header() << '\n';
  for (const auto& p : sweep.points) {
    out << fmt_double(p.q0) << ',' << fmt_double(p.lambda1) << ',' << fmt_double(p.lambda2) << ','
        << fmt_double(p.critical_value_exact) << ',' << fmt_double(p.critical_value_bound) << ','
        << fmt_double(sweep.chi2_reference) << '\n';
  }
}

void write_json(const CritvalSweep& sweep, std::ostream& out) {
  nlohmann::ordered_json j;
  j["k"] = sweep.k;
  j["m"] = sweep.m;
  j["alpha"] = sweep.alpha;
  j["chi2_reference"] = sweep.chi2_reference;
  j["points"] = nlohmann::ordered_json::array();
  for (const auto& p : sweep.points) {
    j["points"].push_back({{"q0", p.q0},
                           {"lambda1", p.lambda1},
                           {"lambda2", p.lambda2},
                           {"critical_value_exact", p.critical_value_exact},
                           {"critical_value_bound", p.critical_value_bound}});
  }
  out << j.dump(2) << '\n';
}

}  // namespace clr
