#include "clr/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "clr/clr_test.hpp"
#include "clr/errors.hpp"
#include "clr/model_data.hpp"
#include "clr/null_distribution.hpp"
#include "clr/simulation.hpp"

namespace clr {

namespace {

constexpr const char* kFooter = R"(Output tables (--out, --format csv):
  simulate-size   lambda1,lambda2,rate_exact,rate_bound,stderr
  simulate-power  lambda1,lambda2,beta1,rate_exact,rate_bound,difference,stderr
  sweep-critvals  q0,lambda1,lambda2,critical_value_exact,critical_value_bound,chi2_reference
  test            lr,pvalue_exact,pvalue_bound,critical_value_exact,critical_value_bound,alpha,draws,seed,lambda1..lambdam
  critval         k,m,alpha,draws,seed,critical_value_exact,critical_value_bound,chi2_reference
stderr is sqrt(r (1 - r) / reps) at r = rate_exact.
Exit codes: 0 ok, 2 input error, 3 numerical degeneracy.)";

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string join(const Eigen::VectorXd& v) {
  std::string s;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += fixed6(v(i));
  }
  return s;
}

std::string g10(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

struct Common {
  double alpha = 0.05;
  int draws = 0;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  std::string format = "csv";
  std::string out_path;
  std::string config_path;
};

void add_common(CLI::App* sub, Common& c, int default_draws) {
  c.draws = default_draws;
  sub->add_option("--alpha", c.alpha, "Nominal level")->capture_default_str();
  sub->add_option("--draws", c.draws, "Monte Carlo draws")->capture_default_str();
  sub->add_option("--seed", c.seed, "Root random seed")->capture_default_str();
  sub->add_option("--threads", c.threads, "Worker threads (0 = available parallelism)")
      ->capture_default_str();
  sub->add_option("--format", c.format, "Table format for --out")
      ->check(CLI::IsMember({"csv", "json"}))
      ->capture_default_str();
  sub->add_option("--out", c.out_path, "Write the result table to this file");
  sub->add_option("--config", c.config_path,
                  "Flat key = value file of option values; explicit flags take precedence");
}

template <class Writer>
void write_output(const Common& c, Writer&& writer) {
  if (c.out_path.empty()) return;
  std::ofstream file(c.out_path, std::ios::binary | std::ios::trunc);
  if (!file) throw InputError("unwritable output path: " + c.out_path);
  writer(file, c.format == "json");
  file.flush();
  if (!file) throw InputError("write failed: " + c.out_path);
}

std::vector<double> or_default(const std::vector<double>& given, std::vector<double> fallback) {
  return given.empty() ? fallback : given;
}

int cmd_test(const std::string& data, const std::vector<double>& beta0_in, int m_opt, int k_opt,
             const Common& c, std::ostream& out) {
  CsvDims dims{m_opt, k_opt};
  if (dims.m <= 0 || dims.k <= 0) {
    const CsvDims inferred = infer_csv_dims(data);
    if (dims.m <= 0) dims.m = inferred.m;
    if (dims.k <= 0) dims.k = inferred.k;
  }
  const IVDataset ds = load_csv(data, dims.m, dims.k);
  if (static_cast<int>(beta0_in.size()) != dims.m) {
    throw InputError("--beta0 has " + std::to_string(beta0_in.size()) + " entries, expected m = " +
                     std::to_string(dims.m));
  }
  const Eigen::VectorXd beta0 = Eigen::Map<const Eigen::VectorXd>(beta0_in.data(), dims.m);
  TestOptions opts;
  opts.alpha = c.alpha;
  opts.draws = c.draws;
  opts.seed = c.seed;
  opts.threads = c.threads;
  const TestResult r = run_clr_test(ds, beta0, opts);

  out << "n = " << ds.n() << ", k = " << ds.k() << ", m = " << ds.m() << '\n';
  if (r.just_identified) out << "note = just-identified (k = m): q0 is identically zero\n";
  out << "lr = " << fixed6(r.lr) << '\n';
  out << "lambdas = " << join(r.spectrum.lambdas) << '\n';
  out << "pvalue_exact = " << fixed6(r.pvalue_exact) << '\n';
  out << "pvalue_bound = " << fixed6(r.pvalue_bound) << '\n';
  out << "critical_value_exact = " << fixed6(r.critical_value_exact) << '\n';
  out << "critical_value_bound = " << fixed6(r.critical_value_bound) << '\n';
  out << "alpha = " << g10(r.alpha) << ", draws = " << r.mc_draws << ", seed = " << r.seed << '\n';
  out << "decision = " << (r.reject_exact() ? "reject" : "accept") << '\n';

  write_output(c, [&](std::ostream& f, bool json) {
    if (json) {
      nlohmann::ordered_json j;
      j["lr"] = r.lr;
      j["lambdas"] = std::vector<double>(r.spectrum.lambdas.data(),
                                         r.spectrum.lambdas.data() + r.spectrum.lambdas.size());
      j["k"] = r.spectrum.k;
      j["m"] = r.spectrum.m;
      j["pvalue_exact"] = r.pvalue_exact;
      j["pvalue_bound"] = r.pvalue_bound;
      j["critical_value_exact"] = r.critical_value_exact;
      j["critical_value_bound"] = r.critical_value_bound;
      j["alpha"] = r.alpha;
      j["draws"] = r.mc_draws;
      j["seed"] = r.seed;
      j["just_identified"] = r.just_identified;
      j["reject"] = r.reject_exact();
      f << j.dump(2) << '\n';
    } else {
      f << "lr,pvalue_exact,pvalue_bound,critical_value_exact,critical_value_bound,alpha,draws,seed";
      for (int i = 1; i <= r.spectrum.m; ++i) f << ",lambda" << i;
      f << '\n'
        << g10(r.lr) << ',' << g10(r.pvalue_exact) << ',' << g10(r.pvalue_bound) << ','
        << g10(r.critical_value_exact) << ',' << g10(r.critical_value_bound) << ','
        << g10(r.alpha) << ',' << r.mc_draws << ',' << r.seed;
      for (Eigen::Index i = 0; i < r.spectrum.lambdas.size(); ++i) {
        f << ',' << g10(r.spectrum.lambdas(i));
      }
      f << '\n';
    }
  });
  return kExitOk;
}

int cmd_critval(int k, int m, const std::vector<double>& spectrum_in, double lambda1,
                double lambda2, std::optional<double> lr, const Common& c, std::ostream& out) {
  Eigen::VectorXd lambdas;
  if (!spectrum_in.empty()) {
    lambdas = Eigen::Map<const Eigen::VectorXd>(spectrum_in.data(),
                                                static_cast<Eigen::Index>(spectrum_in.size()));
    if (m <= 0) m = static_cast<int>(lambdas.size());
  } else {
    if (m <= 0) throw InputError("critval needs --m or --spectrum");
    lambdas = Eigen::VectorXd::Constant(m, lambda2);
    lambdas(0) = lambda1;
  }
  if (k <= 0) throw InputError("critval needs --k");
  const EigenSpectrum spectrum = make_spectrum(lambdas, k, m);
  const double cv_exact = critical_value_exact(c.alpha, spectrum, c.draws, c.seed, c.threads);
  const double cv_bound =
      critical_value_bound(c.alpha, k, m, spectrum.smallest(), c.draws, c.seed, c.threads);
  const double ref = chi2_upper_quantile(m, c.alpha);
  out << "lambdas = " << join(spectrum.lambdas) << '\n';
  out << "critical_value_exact = " << fixed6(cv_exact) << '\n';
  out << "critical_value_bound = " << fixed6(cv_bound) << '\n';
  out << "chi2_reference = " << fixed6(ref) << '\n';
  std::optional<PValuePair> p;
  if (lr) {
    p = pvalues(*lr, spectrum, c.draws, c.seed, c.threads);
    out << "pvalue_exact = " << fixed6(p->exact) << '\n';
    out << "pvalue_bound = " << fixed6(p->bound) << '\n';
  }
  write_output(c, [&](std::ostream& f, bool json) {
    if (json) {
      nlohmann::ordered_json j;
      j["k"] = k;
      j["m"] = m;
      j["lambdas"] = std::vector<double>(spectrum.lambdas.data(),
                                         spectrum.lambdas.data() + spectrum.lambdas.size());
      j["alpha"] = c.alpha;
      j["draws"] = c.draws;
      j["seed"] = c.seed;
      j["critical_value_exact"] = cv_exact;
      j["critical_value_bound"] = cv_bound;
      j["chi2_reference"] = ref;
      if (p) {
        j["pvalue_exact"] = p->exact;
        j["pvalue_bound"] = p->bound;
      }
      f << j.dump(2) << '\n';
    } else {
      f << "k,m,alpha,draws,seed,critical_value_exact,critical_value_bound,chi2_reference\n"
        << k << ',' << m << ',' << g10(c.alpha) << ',' << c.draws << ',' << c.seed << ','
        << g10(cv_exact) << ',' << g10(cv_bound) << ',' << g10(ref) << '\n';
    }
  });
  return kExitOk;
}

void summarize(const RejectionTable& t, std::ostream& out) {
  out << "grid points = " << t.rows.size() << ", reps = " << t.reps << '\n';
  if (t.kind == TableKind::size) {
    double dev_exact = 0.0, dev_bound = 0.0;
    for (const auto& r : t.rows) {
      dev_exact = std::max(dev_exact, std::abs(r.rate_exact - t.alpha));
      dev_bound = std::max(dev_bound, std::abs(r.rate_bound - t.alpha));
    }
    out << "max |rate_exact - alpha| = " << fixed6(dev_exact) << '\n';
    out << "max |rate_bound - alpha| = " << fixed6(dev_bound) << '\n';
  } else {
    double best = -1.0;
    const RejectionRow* at = nullptr;
    for (const auto& r : t.rows) {
      if (r.difference() > best) {
        best = r.difference();
        at = &r;
      }
    }
    out << "max power difference = " << fixed6(best);
    if (at) out << " at lambda2 = " << g10(at->lambda2) << ", beta1 = " << g10(at->beta1);
    out << '\n';
  }
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool given(const std::vector<std::string>& args, const std::string& flag) {
  return std::any_of(args.begin(), args.end(), [&](const std::string& a) {
    return a == flag || a.rfind(flag + "=", 0) == 0;
  });
}

// Replaces each --config FILE by --key=value tokens read from FILE.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::vector<std::string> plain, files;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 == args.size()) throw InputError("--config needs a file");
      files.push_back(args[++i]);
    } else if (args[i].rfind("--config=", 0) == 0) {
      files.push_back(args[i].substr(9));
    } else {
      plain.push_back(args[i]);
    }
  }
  std::vector<std::string> out = plain;
  for (const auto& path : files) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open config file: " + path);
    int lineno = 0;
    for (std::string line; std::getline(in, line);) {
      ++lineno;
      line = trim(line);
      if (line.empty() || line[0] == '#' || line[0] == ';') continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw InputError("malformed config line " + std::to_string(lineno) + " in " + path);
      }
      std::string key = trim(line.substr(0, eq));
      std::string value = trim(line.substr(eq + 1));
      if (value.size() >= 2 && (value.front() == '"' || value.front() == '[')) {
        value = value.substr(1, value.size() - 2);
      }
      const std::string flag = "--" + key;
      if (!given(plain, flag)) out.push_back(flag + "=" + value);
    }
  }
  return out;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Conditional likelihood-ratio test for IV regression with several endogenous "
               "variables"};
  app.require_subcommand(1);
  app.footer(kFooter);

  // test
  Common test_common;
  std::string data;
  std::vector<double> beta0;
  int test_m = 0, test_k = 0;
  auto* test = app.add_subcommand("test", "Test H0: beta = beta0 on a CSV dataset");
  add_common(test, test_common, kDefaultPValueDraws);
  test->add_option("--data", data, "CSV with columns y, X1..Xm, Z1..Zk")->required();
  test->add_option("--beta0", beta0, "Hypothesized coefficients (comma-separated)")
      ->required()
      ->delimiter(',');
  test->add_option("--m", test_m, "Endogenous columns (default: from header)");
  test->add_option("--k", test_k, "Instrument columns (default: from header)");

  // critval
  Common cv_common;
  int cv_k = 0, cv_m = 0;
  std::vector<double> cv_spectrum;
  double cv_l1 = 0.0, cv_l2 = 0.0;
  std::optional<double> cv_lr;
  auto* critval = app.add_subcommand("critval", "Critical values of the conditional null law");
  add_common(critval, cv_common, kDefaultCriticalValueDraws);
  critval->add_option("--k", cv_k, "Number of instruments")->required();
  critval->add_option("--m", cv_m, "Number of endogenous variables");
  critval->add_option("--spectrum", cv_spectrum, "Conditioning eigenvalues (comma-separated)")
      ->delimiter(',');
  critval->add_option("--lambda1", cv_l1, "Smallest eigenvalue (without --spectrum)");
  critval->add_option("--lambda2", cv_l2, "Remaining eigenvalues (without --spectrum)");
  critval->add_option("--lr", cv_lr, "Also report p-values of this statistic");

  // simulate-size / simulate-power
  auto add_grid = [](CLI::App* sub, ExperimentGrid& g, Common& c, int& points) {
    add_common(sub, c, 10'000);
    sub->add_option("--n", g.n, "Observations per dataset")->capture_default_str();
    sub->add_option("--k", g.k, "Number of instruments")->capture_default_str();
    sub->add_option("--m", g.m, "Number of endogenous variables")->capture_default_str();
    sub->add_option("--reps", g.reps, "Replications per grid point")->capture_default_str();
    sub->add_option("--lambda2", g.lambda2_values, "lambda2 grid (comma-separated)")
        ->delimiter(',');
    sub->add_option("--grid-points", points, "Points of the default logarithmic grids")
        ->capture_default_str();
    sub->add_option("--cov", g.cov_eps_v1, "Cov(eps, V_1)")->capture_default_str();
    sub->add_flag("--normalize-by-omega", g.normalize_by_omega,
                  "Targets are eigenvalues of n Omega_{V.eps}^{-1} Pi^T Pi");
  };
  Common size_common;
  ExperimentGrid size_grid;
  int size_points = 21;
  auto* size = app.add_subcommand("simulate-size", "Empirical size over a (lambda1, lambda2) grid");
  add_grid(size, size_grid, size_common, size_points);
  size->add_option("--lambda1", size_grid.lambda1_values, "lambda1 grid (comma-separated)")
      ->delimiter(',');

  Common power_common;
  ExperimentGrid power_grid;
  int power_points = 21;
  int beta_points = 41;
  double power_l1 = 5.0;
  auto* power = app.add_subcommand("simulate-power", "Power over a (lambda2, beta1) grid");
  add_grid(power, power_grid, power_common, power_points);
  power->add_option("--lambda1", power_l1, "Fixed lambda1")->capture_default_str();
  power->add_option("--beta1", power_grid.beta1_values, "beta1 grid (comma-separated)")
      ->delimiter(',');
  power->add_option("--beta-points", beta_points, "Points of the default linear beta1 grid")
      ->capture_default_str();

  // sweep-critvals
  Common sweep_common;
  int sw_k = 10, sw_m = 2, sw_points = 50;
  double sw_d1 = 5.0, sw_d2 = 50.0;
  auto* sweep = app.add_subcommand("sweep-critvals", "Critical values along q0 realizations");
  add_common(sweep, sweep_common, 20'000);
  sweep->add_option("--k", sw_k, "Number of instruments")->capture_default_str();
  sweep->add_option("--m", sw_m, "Number of endogenous variables")->capture_default_str();
  sweep->add_option("--delta1", sw_d1, "Offset of lambda1 above q0")->capture_default_str();
  sweep->add_option("--delta2", sw_d2, "Offset of lambda2..lambdam above q0")
      ->capture_default_str();
  sweep->add_option("--points", sw_points, "Number of q0 realizations")->capture_default_str();

  std::vector<std::string> argv_store;
  argv_store.reserve(args.size() + 1);
  argv_store.emplace_back("clr-cli");
  try {
    const auto expanded = expand_config(args);
    argv_store.insert(argv_store.end(), expanded.begin(), expanded.end());
  } catch (const InputError& e) {
    err << "error[input]: " << e.what() << '\n';
    return kExitInputError;
  }
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    err << "error[usage]: " << msg << '\n';
    return kExitInputError;
  }

  try {
    if (*test) return cmd_test(data, beta0, test_m, test_k, test_common, out);
    if (*critval) return cmd_critval(cv_k, cv_m, cv_spectrum, cv_l1, cv_l2, cv_lr, cv_common, out);
    if (*size) {
      size_grid.alpha = size_common.alpha;
      size_grid.draws = size_common.draws;
      size_grid.seed = size_common.seed;
      size_grid.threads = size_common.threads;
      size_grid.lambda1_values = or_default(size_grid.lambda1_values, log_grid(1, 100, size_points));
      size_grid.lambda2_values = or_default(size_grid.lambda2_values, log_grid(1, 100, size_points));
      const RejectionTable t = run_size_experiment(size_grid);
      summarize(t, out);
      write_output(size_common, [&](std::ostream& f, bool json) {
        json ? write_json(t, f) : write_csv(t, f);
      });
      return kExitOk;
    }
    if (*power) {
      power_grid.alpha = power_common.alpha;
      power_grid.draws = power_common.draws;
      power_grid.seed = power_common.seed;
      power_grid.threads = power_common.threads;
      power_grid.lambda2_values =
          or_default(power_grid.lambda2_values, log_grid(1, 100, power_points));
      power_grid.beta1_values = or_default(power_grid.beta1_values, linear_grid(-1, 1, beta_points));
      const RejectionTable t = run_power_experiment(power_grid, power_l1);
      summarize(t, out);
      write_output(power_common, [&](std::ostream& f, bool json) {
        json ? write_json(t, f) : write_csv(t, f);
      });
      return kExitOk;
    }
    if (*sweep) {
      const CritvalSweep s = run_critval_sweep(sw_k, sw_m, sw_d1, sw_d2, sweep_common.alpha,
                                               sweep_common.draws, sweep_common.seed, sw_points,
                                               sweep_common.threads);
      double max_gap = 0.0;
      for (const auto& p : s.points) {
        max_gap = std::max(max_gap, std::abs(p.critical_value_exact - p.critical_value_bound));
      }
      out << "points = " << s.points.size() << ", chi2_reference = " << fixed6(s.chi2_reference)
          << '\n';
      out << "max |critical_value_exact - critical_value_bound| = " << g10(max_gap) << '\n';
      write_output(sweep_common, [&](std::ostream& f, bool json) {
        json ? write_json(s, f) : write_csv(s, f);
      });
      return kExitOk;
    }
  } catch (const InputError& e) {
    err << "error[input]: " << e.what() << '\n';
    return kExitInputError;
  } catch (const NumericalError& e) {
    err << "error[numerical]: " << e.what() << '\n';
    return kExitNumericalError;
  } catch (const std::exception& e) {
    err << "error[internal]: " << e.what() << '\n';
    return kExitInputError;
  }
  return kExitOk;
}

}  // namespace clr
