#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "treefe/common.hpp"

namespace treefe {

enum class CovKind { continuous, binary, ordinal };

inline std::string to_string(CovKind k) {
  switch (k) {
    case CovKind::continuous: return "continuous";
    case CovKind::binary: return "binary";
    case CovKind::ordinal: return "ordinal";
  }
  return "?";
}

struct CovariateMeta {
  std::string name;
  CovKind kind = CovKind::continuous;
  std::vector<double> distinct_values;  // strictly increasing, non-empty
};

// Clustered data: N observations grouped into n units. Units are stored as
// dense 0-based indices in first-appearance order; the original labels are
// kept for reporting. Immutable after construction.
struct ClusteredDataset {
  Eigen::VectorXd y;
  std::vector<int> unit;  // per row, 0..n-1
  Eigen::MatrixXd X;      // N x p
  std::vector<CovariateMeta> meta;
  std::vector<std::string> unit_labels;      // size n
  std::vector<int> unit_size;                // n_i
  std::vector<std::vector<int>> unit_rows;   // rows of each unit

  long n_rows() const { return y.size(); }
  int n_units() const { return static_cast<int>(unit_labels.size()); }
  int n_covariates() const { return static_cast<int>(X.cols()); }

  void validate() const {
    const long N = n_rows();
    if (N == 0) throw LoadError("dataset has no rows");
    if (static_cast<long>(unit.size()) != N || X.rows() != N)
      throw LoadError("dataset row counts disagree");
    if (static_cast<int>(meta.size()) != n_covariates())
      throw LoadError("covariate metadata count disagrees with X");
    const int n = n_units();
    std::vector<long> counts(n, 0);
    for (long i = 0; i < N; ++i) {
      if (unit[i] < 0 || unit[i] >= n) throw LoadError("unit index out of range");
      ++counts[unit[i]];
    }
    for (int i = 0; i < n; ++i) {
      if (counts[i] == 0)
        throw LoadError("unit '" + unit_labels[i] + "' has zero rows");
      if (counts[i] != unit_size[i])
        throw LoadError("unit row counts disagree");
    }
    for (long i = 0; i < N; ++i)
      if (!std::isfinite(y[i])) throw LoadError("non-finite outcome at row " + std::to_string(i + 1));
    for (int k = 0; k < n_covariates(); ++k) {
      const auto& m = meta[k];
      if (m.distinct_values.empty())
        throw LoadError("covariate '" + m.name + "' has empty value list");
      for (size_t t = 1; t < m.distinct_values.size(); ++t)
        if (!(m.distinct_values[t - 1] < m.distinct_values[t]))
          throw LoadError("covariate '" + m.name + "' distinct values not strictly increasing");
      if (m.kind == CovKind::binary)
        for (double v : m.distinct_values)
          if (v != 0.0 && v != 1.0)
            throw LoadError("binary covariate '" + m.name + "' has value outside {0,1}");
      for (long i = 0; i < N; ++i)
        if (!std::isfinite(X(i, k)))
          throw LoadError("non-finite value in covariate '" + m.name + "' at row " + std::to_string(i + 1));
    }
  }
};

namespace detail {

inline std::vector<double> distinct_sorted(const Eigen::VectorXd& col) {
  std::vector<double> v(col.data(), col.data() + col.size());
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

inline void index_units(const std::vector<std::string>& labels,
                        std::vector<int>& unit_out,
                        std::vector<std::string>& label_out) {
  std::map<std::string, int> seen;
  unit_out.resize(labels.size());
  for (size_t i = 0; i < labels.size(); ++i) {
    auto it = seen.find(labels[i]);
    if (it == seen.end()) {
      it = seen.emplace(labels[i], static_cast<int>(label_out.size())).first;
      label_out.push_back(labels[i]);
    }
    unit_out[i] = it->second;
  }
}

}  // namespace detail

// Assembles and validates a dataset from raw columns. Unit labels are
// re-indexed densely in first-appearance order; binary kind is auto-detected
// (distinct values within {0,1}) unless overridden by name.
inline ClusteredDataset make_dataset(
    Eigen::VectorXd y, const std::vector<std::string>& unit_labels_per_row,
    Eigen::MatrixXd X, const std::vector<std::string>& covariate_names,
    const std::map<std::string, CovKind>& kind_overrides = {}) {
  ClusteredDataset d;
  d.y = std::move(y);
  d.X = std::move(X);
  detail::index_units(unit_labels_per_row, d.unit, d.unit_labels);
  const int n = d.n_units();
  d.unit_size.assign(n, 0);
  d.unit_rows.assign(n, {});
  for (long i = 0; i < d.n_rows(); ++i) {
    ++d.unit_size[d.unit[i]];
    d.unit_rows[d.unit[i]].push_back(static_cast<int>(i));
  }
  d.meta.resize(covariate_names.size());
  for (size_t k = 0; k < covariate_names.size(); ++k) {
    auto& m = d.meta[k];
    m.name = covariate_names[k];
    m.distinct_values = detail::distinct_sorted(d.X.col(k));
    auto ov = kind_overrides.find(m.name);
    if (ov != kind_overrides.end()) {
      m.kind = ov->second;
    } else {
      bool zero_one = true;
      for (double v : m.distinct_values) zero_one = zero_one && (v == 0.0 || v == 1.0);
      m.kind = zero_one ? CovKind::binary : CovKind::continuous;
    }
  }
  d.validate();
  return d;
}

// Minimal CSV table: comma-separated, one header row, no quoting.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const {
    for (size_t j = 0; j < header.size(); ++j)
      if (header[j] == name) return static_cast<int>(j);
    throw LoadError("missing column '" + name + "'");
  }
};

inline CsvTable read_csv_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open file: " + path);
  CsvTable t;
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
      if (c == ',') { out.push_back(cur); cur.clear(); }
      else if (c != '\r') cur.push_back(c);
    }
    out.push_back(cur);
    return out;
  };
  bool first = true;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() && in.peek() == EOF) break;
    auto cells = split(line);
    if (first) {
      t.header = cells;
      first = false;
    } else {
      if (cells.size() != t.header.size())
        throw LoadError(path + ": line " + std::to_string(lineno) + " has " +
                        std::to_string(cells.size()) + " fields, expected " +
                        std::to_string(t.header.size()));
      t.rows.push_back(std::move(cells));
    }
  }
  if (first) throw LoadError(path + ": empty file");
  return t;
}

inline ClusteredDataset load_csv(
    const std::string& path, const std::string& outcome,
    const std::string& unit, const std::vector<std::string>& covariates,
    const std::map<std::string, CovKind>& kind_overrides = {}) {
  CsvTable t = read_csv_table(path);
  if (t.rows.empty()) throw LoadError(path + ": no data rows");
  const int ycol = t.column(outcome);
  const int ucol = t.column(unit);
  std::vector<int> xcols;
  for (const auto& c : covariates) xcols.push_back(t.column(c));

  const long N = static_cast<long>(t.rows.size());
  Eigen::VectorXd y(N);
  Eigen::MatrixXd X(N, static_cast<long>(xcols.size()));
  std::vector<std::string> labels(N);
  for (long i = 0; i < N; ++i) {
    const auto& r = t.rows[i];
    auto where = [&](const std::string& col) {
      return path + ": row " + std::to_string(i + 2) + ", column '" + col + "'";
    };
    y[i] = parse_double(r[ycol], where(outcome));
    labels[i] = r[ucol];
    if (labels[i].empty()) throw LoadError("empty unit label at " + where(unit));
    for (size_t k = 0; k < xcols.size(); ++k)
      X(i, static_cast<long>(k)) = parse_double(r[xcols[k]], where(covariates[k]));
  }
  return make_dataset(std::move(y), labels, std::move(X), covariates, kind_overrides);
}

inline void write_csv(const ClusteredDataset& d, const std::string& path,
                     const std::string& outcome = "y",
                     const std::string& unit = "unit") {
  std::ofstream out(path);
  if (!out) throw Error("cannot write file: " + path);
  out << outcome << ',' << unit;
  for (const auto& m : d.meta) out << ',' << m.name;
  out << '\n';
  for (long i = 0; i < d.n_rows(); ++i) {
    out << format_double(d.y[i]) << ',' << d.unit_labels[d.unit[i]];
    for (int k = 0; k < d.n_covariates(); ++k) out << ',' << format_double(d.X(i, k));
    out << '\n';
  }
}

inline Eigen::VectorXd unit_means(const ClusteredDataset& d) {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(d.n_units());
  for (long i = 0; i < d.n_rows(); ++i) m[d.unit[i]] += d.y[i];
  for (int i = 0; i < d.n_units(); ++i) m[i] /= d.unit_size[i];
  return m;
}

struct FoldAssignment {
  int k = 0;
  std::vector<int> fold;  // per row, 0..k-1
};

// Within-unit stratified folds: each unit's rows are shuffled and dealt
// round-robin, so per-unit fold sizes differ by at most one and every unit
// with n_i >= 2 keeps rows in every training fold.
inline FoldAssignment assign_folds(const ClusteredDataset& d, int k,
                                   std::uint64_t seed) {
  if (k < 2) throw ConfigError("fold count must be >= 2, got " + std::to_string(k));
  FoldAssignment fa;
  fa.k = k;
  fa.fold.assign(d.n_rows(), 0);
  std::mt19937_64 rng(seed_stream({seed, 0x666f6c6473ull}));
  for (int u = 0; u < d.n_units(); ++u) {
    std::vector<int> rows = d.unit_rows[u];
    std::shuffle(rows.begin(), rows.end(), rng);
    for (size_t t = 0; t < rows.size(); ++t)
      fa.fold[rows[t]] = static_cast<int>(t % k);
  }
  return fa;
}

struct SubsetResult {
  ClusteredDataset data;
  std::vector<int> unit_map;  // old unit index -> new, or -1 if dropped
  std::vector<int> row_map;   // new row -> old row
};

// Row subset with units re-indexed; units losing all rows are dropped.
inline SubsetResult subset_rows(const ClusteredDataset& d,
                                const std::vector<char>& keep) {
  SubsetResult out;
  long N = 0;
  for (long i = 0; i < d.n_rows(); ++i)
    if (keep[i]) ++N;
  if (N == 0) throw Error("row subset is empty");
  Eigen::VectorXd y(N);
  Eigen::MatrixXd X(N, d.n_covariates());
  std::vector<std::string> labels(N);
  long r = 0;
  out.row_map.reserve(N);
  for (long i = 0; i < d.n_rows(); ++i) {
    if (!keep[i]) continue;
    y[r] = d.y[i];
    X.row(r) = d.X.row(i);
    labels[r] = d.unit_labels[d.unit[i]];
    out.row_map.push_back(static_cast<int>(i));
    ++r;
  }
  std::map<std::string, CovKind> kinds;
  for (const auto& m : d.meta) kinds[m.name] = m.kind;
  std::vector<std::string> names;
  for (const auto& m : d.meta) names.push_back(m.name);
  out.data = make_dataset(std::move(y), labels, std::move(X), names, kinds);
  std::map<std::string, int> new_index;
  for (int u = 0; u < out.data.n_units(); ++u)
    new_index[out.data.unit_labels[u]] = u;
  out.unit_map.assign(d.n_units(), -1);
  for (int v = 0; v < d.n_units(); ++v) {
    auto it = new_index.find(d.unit_labels[v]);
    if (it != new_index.end()) out.unit_map[v] = it->second;
  }
  return out;
}

}  // namespace treefe
