#include "clr/model_data.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <vector>

#include "clr/errors.hpp"

namespace clr {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream iss(line);
  while (std::getline(iss, field, ',')) fields.push_back(field);
  // A trailing comma denotes one more (empty) field.
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

double parse_cell(const std::string& raw, std::size_t row, const std::string& column) {
  const std::string cell = trim(raw);
  double value = 0.0;
  const char* begin = cell.data();
  const char* end = cell.data() + cell.size();
  if (!cell.empty() && *begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (cell.empty() || ec != std::errc() || ptr != end) {
    throw InputError("non-numeric cell '" + cell + "' at row " + std::to_string(row) +
                     ", column " + column);
  }
  return value;
}

bool all_finite(const Eigen::MatrixXd& a) { return a.allFinite(); }

}  // namespace

Eigen::MatrixXd SimConfig::omega() const {
  const Eigen::Index dim = 1 + m;
  Eigen::MatrixXd om = Eigen::MatrixXd::Identity(dim, dim);
  if (cov_eps_v.size() == m) {
    om.block(1, 0, m, 1) = cov_eps_v;
    om.block(0, 1, 1, m) = cov_eps_v.transpose();
  }
  return om;
}

void validate(const IVDataset& ds) {
  const Eigen::Index n = ds.n(), m = ds.m(), k = ds.k();
  if (ds.X.rows() != n || ds.Z.rows() != n) {
    throw InputError("row counts of y, X and Z differ");
  }
  if (m < 1) throw InputError("need at least one endogenous column (m >= 1)");
  if (k < m) throw InputError("fewer instruments than endogenous covariates (k < m)");
  if (n <= k) throw InputError("n <= k: need more observations than instruments");
  if (!ds.y.allFinite() || !all_finite(ds.X) || !all_finite(ds.Z)) {
    throw InputError("non-finite entry in dataset");
  }
  // Singular values of Z equal those of R in Z = QR.
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(ds.Z);
  const Eigen::MatrixXd r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(r);
  const auto& sv = svd.singularValues();
  if (sv(0) <= 0.0 || sv(k - 1) / sv(0) < kRankTolerance) {
    throw InputError("instrument matrix rank-deficient");
  }
}

void validate(const SimConfig& cfg) {
  if (cfg.n < 1 || cfg.k < 1 || cfg.m < 1) throw InputError("n, k and m must be positive");
  if (cfg.k < cfg.m) throw InputError("fewer instruments than endogenous covariates (k < m)");
  if (cfg.n <= cfg.k) throw InputError("n <= k: need more observations than instruments");
  if (cfg.reps < 1) throw InputError("reps must be positive");
  if (cfg.spectrum.size() != cfg.m) throw InputError("spectrum must have length m");
  if (cfg.cov_eps_v.size() != cfg.m) throw InputError("cov_eps_v must have length m");
  if (cfg.beta0.size() != cfg.m) throw InputError("beta0 must have length m");
  if (!cfg.spectrum.allFinite() || (cfg.spectrum.array() < 0.0).any()) {
    throw InputError("spectrum entries must be finite and nonnegative");
  }
  if (!cfg.cov_eps_v.allFinite() || !cfg.beta0.allFinite()) {
    throw InputError("non-finite entry in configuration");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(cfg.omega());
  if (llt.info() != Eigen::Success) {
    throw InputError("error covariance Omega is not positive definite");
  }
}

IVDataset load_csv(const std::filesystem::path& path, int m, int k) {
  if (m < 1 || k < 1) throw InputError("m and k must be positive");
  std::ifstream in(path);
  if (!in) throw InputError("cannot open file: " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw InputError("empty file: " + path.string());
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);

  std::map<std::string, int> expected;
  expected["y"] = 0;
  for (int j = 1; j <= m; ++j) expected["X" + std::to_string(j)] = j;
  for (int j = 1; j <= k; ++j) expected["Z" + std::to_string(j)] = m + j;

  const auto header = split_fields(line);
  std::vector<int> target(header.size(), -1);
  std::vector<bool> seen(1 + m + k, false);
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string name = trim(header[c]);
    auto it = expected.find(name);
    if (it == expected.end()) throw InputError("unexpected column '" + name + "' in header");
    if (seen[it->second]) throw InputError("duplicate column '" + name + "' in header");
    seen[it->second] = true;
    target[c] = it->second;
  }
  for (const auto& [name, idx] : expected) {
    if (!seen[idx]) throw InputError("missing column '" + name + "' in header");
  }

  std::vector<std::vector<double>> rows;
  std::size_t row_no = 1;
  while (std::getline(in, line)) {
    ++row_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw InputError("malformed row " + std::to_string(row_no) + ": expected " +
                       std::to_string(header.size()) + " fields, got " +
                       std::to_string(fields.size()));
    }
    std::vector<double> values(1 + m + k);
    for (std::size_t c = 0; c < fields.size(); ++c) {
      values[target[c]] = parse_cell(fields[c], row_no, trim(header[c]));
    }
    rows.push_back(std::move(values));
  }

  const auto n = static_cast<Eigen::Index>(rows.size());
  if (n <= k) throw InputError("n <= k: need more observations than instruments");
  IVDataset ds{Eigen::VectorXd(n), Eigen::MatrixXd(n, m), Eigen::MatrixXd(n, k)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[i];
    ds.y(i) = r[0];
    for (int j = 0; j < m; ++j) ds.X(i, j) = r[1 + j];
    for (int j = 0; j < k; ++j) ds.Z(i, j) = r[1 + m + j];
  }
  validate(ds);
  return ds;
}

CsvDims infer_csv_dims(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open file: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw InputError("empty file: " + path.string());
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  CsvDims dims;
  for (const auto& raw : split_fields(line)) {
    const std::string name = trim(raw);
    if (name.size() > 1 && name[0] == 'X') ++dims.m;
    if (name.size() > 1 && name[0] == 'Z') ++dims.k;
  }
  return dims;
}

void write_csv(const IVDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write file: " + path.string());
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << "y";
  for (Eigen::Index j = 1; j <= ds.m(); ++j) out << ",X" << j;
  for (Eigen::Index j = 1; j <= ds.k(); ++j) out << ",Z" << j;
  out << '\n';
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    out << ds.y(i);
    for (Eigen::Index j = 0; j < ds.m(); ++j) out << ',' << ds.X(i, j);
    for (Eigen::Index j = 0; j < ds.k(); ++j) out << ',' << ds.Z(i, j);
    out << '\n';
  }
  if (!out) throw InputError("write failed: " + path.string());
}

}  // namespace clr
