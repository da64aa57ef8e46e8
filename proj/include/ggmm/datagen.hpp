#pragma once

// Synthetic mixture generator controlled by separation c and eccentricity e,
// an ancestral sampler, and CSV input/output.
//
// Covariances share one eigenvalue ladder: log-uniformly spaced values
// spanning ratio e, scaled so tr(Sigma) = d, each component rotated by an
// independent Haar orthogonal matrix. Means are rejection-sampled Gaussians
// until every pair satisfies ||m_i - m_j|| >= c * sqrt(max_j tr Sigma_j).
// All randomness flows through the library generator, so a seed pins the
// mixture, the samples, and the CSV bytes across platforms.

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ggmm/gmm.hpp"
#include "ggmm/rng.hpp"
#include "ggmm/spd.hpp"

namespace ggmm {

struct GenSpec {
  int d = 2;
  int k = 2;
  double c = 1.0;    // separation
  double e = 1.0;    // eccentricity, lambda_max / lambda_min
  long long n = -1;  // sample count; -1 = default d^2 * 100
  std::uint64_t seed = 0;

  long long sample_count() const { return n >= 1 ? n : 100LL * d * d; }

  void validate() const {
    if (d < 1 || k < 1) throw std::invalid_argument("GenSpec: need d >= 1 and K >= 1");
    if (!(c > 0.0)) throw std::invalid_argument("GenSpec: separation c must be positive");
    if (!(e >= 1.0)) throw std::invalid_argument("GenSpec: eccentricity e must be >= 1");
    if (n != -1 && n < 1) throw std::invalid_argument("GenSpec: n must be >= 1");
  }
};

/// Rejection budget exhausted while placing means.
class generation_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the R
/// diagonal sign fix (otherwise the distribution is not uniform).
inline Matrix haar_orthogonal(int d, Xoshiro256& rng) {
  Matrix g(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) g(i, j) = rng.normal();
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < d; ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  return q;
}

/// Shared eigenvalue ladder: log-uniform spacing spanning ratio e, scaled so
/// the sum (= trace) equals d. e = 1 gives all ones.
inline Vector eccentric_eigenvalues(int d, double e) {
  Vector lambda(d);
  if (d == 1 || e == 1.0) {
    lambda.setOnes();
    return lambda;
  }
  const double log_e = std::log(e);
  for (int i = 0; i < d; ++i)
    lambda(i) = std::exp(log_e * static_cast<double>(i) / static_cast<double>(d - 1));
  lambda *= static_cast<double>(d) / lambda.sum();
  return lambda;
}

inline GmmParams gen_mixture(const GenSpec& spec) {
  spec.validate();
  Xoshiro256 rng(derive_seed(spec.seed, 0));
  const int d = spec.d;
  const int k = spec.k;

  // Covariances first; the separation threshold depends on their traces.
  const Vector lambda = eccentric_eigenvalues(d, spec.e);
  std::vector<SpdPoint> covs;
  covs.reserve(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j) {
    if (spec.e == 1.0) {
      covs.push_back(SpdPoint::identity(d));  // exactly spherical
      continue;
    }
    const Matrix q = haar_orthogonal(d, rng);
    covs.push_back(SpdPoint(symmetrized(q * lambda.asDiagonal() * q.transpose())));
  }
  double max_trace = 0.0;
  for (const auto& cov : covs) max_trace = std::max(max_trace, cov.mat().trace());
  const double threshold = spec.c * std::sqrt(max_trace);

  // Means by rejection, radius enlarged every 200 failures. The criterion is
  // a lower bound, but c is only a meaningful difficulty knob if the realized
  // minimum separation stays close to the threshold: a generous radius makes
  // the typical pairwise distance radius * sqrt(2d) dwarf the threshold and
  // every mixture comes out well separated regardless of c. Starting well
  // below threshold / sqrt(2d) puts acceptance in the upper tail of the
  // pairwise-distance distribution, so accepted configurations barely clear
  // the bound; the growth schedule keeps the budget safe in any dimension.
  std::vector<Vector> means;
  means.reserve(static_cast<std::size_t>(k));
  double radius = 0.5 * threshold / std::sqrt(2.0 * static_cast<double>(d));
  long long failures = 0;
  constexpr long long budget = 1000000;
  while (static_cast<int>(means.size()) < k) {
    Vector m(d);
    for (int i = 0; i < d; ++i) m(i) = radius * rng.normal();
    bool ok = true;
    for (const auto& prev : means)
      if ((m - prev).norm() < threshold) {
        ok = false;
        break;
      }
    if (ok) {
      means.push_back(std::move(m));
      continue;
    }
    if (++failures > budget)
      throw generation_error(
          "gen_mixture: mean rejection budget exhausted; try a smaller c*sqrt(d)");
    if (failures % 200 == 0) radius *= 1.25;
  }

  const Vector weights = Vector::Constant(k, 1.0 / static_cast<double>(k));
  GmmParams params(weights, std::move(means), std::move(covs));

  // Post-hoc re-verification of the advertised properties.
  for (std::size_t i = 0; i < params.means.size(); ++i)
    for (std::size_t j = i + 1; j < params.means.size(); ++j)
      if ((params.means[i] - params.means[j]).norm() < threshold)
        throw numerical_error("gen_mixture: separation criterion violated post hoc");
  for (const auto& cov : params.covs) {
    const auto es = detail::sym_eigen(cov.mat());
    const double ratio = es.eigenvalues().maxCoeff() / es.eigenvalues().minCoeff();
    if (std::abs(ratio - spec.e) > 1e-8 * spec.e)
      throw numerical_error("gen_mixture: eccentricity drifted beyond 1e-8 relative");
  }
  return params;
}

/// Ancestral sampling: component ~ Categorical(weights), x = mu + L z.
/// Optional per-sample component labels for tests.
inline Dataset sample_mixture(const GmmParams& params, long long n, std::uint64_t seed,
                              std::vector<int>* labels = nullptr) {
  if (n < 1) throw std::invalid_argument("sample_mixture: n must be >= 1");
  Xoshiro256 rng(derive_seed(seed, 1));
  const Eigen::Index d = params.dim();
  const auto k = params.num_components();
  std::vector<Matrix> chol;
  chol.reserve(k);
  for (const auto& cov : params.covs) chol.push_back(cov.llt().matrixL());

  Matrix x(n, d);
  if (labels) labels->assign(static_cast<std::size_t>(n), 0);
  Vector z(d);
  for (long long i = 0; i < n; ++i) {
    const double u = rng.uniform01();
    std::size_t j = 0;
    double acc = 0.0;
    for (; j + 1 < k; ++j) {
      acc += params.weights(static_cast<Eigen::Index>(j));
      if (u < acc) break;
    }
    for (Eigen::Index t = 0; t < d; ++t) z(t) = rng.normal();
    x.row(i) = (params.means[j] + chol[j] * z).transpose();
    if (labels) (*labels)[static_cast<std::size_t>(i)] = static_cast<int>(j);
  }
  return Dataset(std::move(x));
}

/// gen_mixture + sample_mixture with sub-streams derived from one seed.
inline Dataset generate_dataset(const GenSpec& spec, GmmParams* truth = nullptr) {
  GmmParams params = gen_mixture(spec);
  Dataset data = sample_mixture(params, spec.sample_count(), spec.seed);
  if (truth) *truth = std::move(params);
  return data;
}

// ---------------------------------------------------------------------------
// CSV

class csv_parse_error : public std::runtime_error {
 public:
  csv_parse_error(const std::string& msg, long long row, long long col)
      : std::runtime_error(msg + " (row " + std::to_string(row) + ", column " +
                           std::to_string(col) + ")"),
        row_(row),
        col_(col) {}
  long long row() const { return row_; }
  long long col() const { return col_; }

 private:
  long long row_, col_;
};

namespace detail {

inline bool parse_double(const std::string& cell, double& out) {
  const char* begin = cell.c_str();
  char* end = nullptr;
  errno = 0;
  out = std::strtod(begin, &end);
  if (end == begin || errno == ERANGE) return false;
  while (*end == ' ' || *end == '\t' || *end == '\r') ++end;
  return *end == '\0';
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  cells.push_back(cur);
  return cells;
}

}  // namespace detail

/// Comma-separated values, 17 significant digits, LF line endings.
inline void save_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_csv: cannot open " + path);
  char buf[64];
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    for (Eigen::Index j = 0; j < data.d(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", data.samples()(i, j));
      if (j) out << ',';
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("save_csv: write failed for " + path);
}

/// Loads a numeric CSV. A non-numeric first row is treated as a header;
/// non-numeric cells or ragged rows elsewhere raise csv_parse_error with
/// 1-based row/column location.
inline Dataset load_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_csv: cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  long long line_no = 0;
  Eigen::Index width = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() && in.peek() == std::char_traits<char>::eof()) break;
    const auto cells = detail::split_csv_line(line);
    std::vector<double> row(cells.size());
    bool numeric = true;
    long long bad_col = 0;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (!detail::parse_double(cells[c], row[c])) {
        numeric = false;
        bad_col = static_cast<long long>(c) + 1;
        break;
      }
    }
    if (!numeric) {
      if (line_no == 1) continue;  // header row
      throw csv_parse_error("load_csv: non-numeric cell", line_no, bad_col);
    }
    if (width < 0) width = static_cast<Eigen::Index>(row.size());
    if (static_cast<Eigen::Index>(row.size()) != width)
      throw csv_parse_error("load_csv: ragged row", line_no,
                            static_cast<long long>(row.size()));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("load_csv: no data rows in " + path);
  Matrix x(static_cast<Eigen::Index>(rows.size()), width);
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < width; ++j)
      x(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  return Dataset(std::move(x));
}

/// Sidecar describing how a dataset file was produced.
inline nlohmann::json dataset_meta_json(const GenSpec& spec) {
  nlohmann::json j;
  j["d"] = spec.d;
  j["n"] = spec.sample_count();
  j["seed"] = spec.seed;
  j["spec"] = {{"d", spec.d}, {"K", spec.k}, {"c", spec.c},
               {"e", spec.e}, {"n", spec.sample_count()}, {"seed", spec.seed}};
  j["generator"] = "xoshiro256++ / splitmix64 / Box-Muller";
  j["separation_criterion"] = "min_{i<j} ||m_i - m_j|| >= c * sqrt(max_j tr(Sigma_j))";
  j["trace_normalization"] = "tr(Sigma_j) = d";
  return j;
}

inline void save_dataset_meta(const std::string& csv_path, const GenSpec& spec) {
  const std::string path = csv_path + ".meta.json";
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_dataset_meta: cannot open " + path);
  out << dataset_meta_json(spec).dump(2) << '\n';
}

}  // namespace ggmm
