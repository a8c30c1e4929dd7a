#include "lh/matfeat.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <istream>
#include <sstream>

#include "json.hpp"
#include "lh/error.hpp"
#include "lh/util.hpp"

namespace lh::matfeat {

SparseMatrix::SparseMatrix(std::size_t rows, std::size_t cols, std::vector<Triplet> entries,
                           Symmetry hint)
    : rows_(rows), cols_(cols), hint_(hint) {
  for (const auto& t : entries) {
    if (t.row >= rows || t.col >= cols)
      fail(ErrorKind::validation, "entry (" + std::to_string(t.row + 1) + "," +
                                      std::to_string(t.col + 1) + ") outside " +
                                      std::to_string(rows) + "x" + std::to_string(cols));
    if (!std::isfinite(t.value)) fail(ErrorKind::validation, "non-finite matrix entry");
  }
  std::stable_sort(entries.begin(), entries.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  row_ptr_.assign(rows + 1, 0);
  for (std::size_t k = 0; k < entries.size();) {
    const auto [r, c, v0] = entries[k];
    double sum = v0;
    std::size_t next = k + 1;
    for (; next < entries.size() && entries[next].row == r && entries[next].col == c; ++next)
      sum += entries[next].value;
    if (sum != 0.0) {
      col_idx_.push_back(c);
      values_.push_back(sum);
      ++row_ptr_[r + 1];
    }
    k = next;
  }
  for (std::size_t i = 0; i < rows; ++i) row_ptr_[i + 1] += row_ptr_[i];
}

double SparseMatrix::at(std::size_t i, std::size_t j) const {
  auto first = col_idx_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[i]);
  auto last = col_idx_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[i + 1]);
  auto it = std::lower_bound(first, last, j);
  if (it == last || *it != j) return 0.0;
  return values_[static_cast<std::size_t>(it - col_idx_.begin())];
}

std::vector<Triplet> SparseMatrix::triplets() const {
  std::vector<Triplet> out;
  out.reserve(nnz());
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) out.push_back({i, col_idx_[k], values_[k]});
  return out;
}

SparseMatrix SparseMatrix::transpose() const {
  SparseMatrix t;
  t.rows_ = cols_;
  t.cols_ = rows_;
  t.hint_ = hint_;
  t.row_ptr_.assign(cols_ + 1, 0);
  for (auto c : col_idx_) ++t.row_ptr_[c + 1];
  for (std::size_t j = 0; j < cols_; ++j) t.row_ptr_[j + 1] += t.row_ptr_[j];
  t.col_idx_.resize(nnz());
  t.values_.resize(nnz());
  std::vector<std::size_t> fill(t.row_ptr_.begin(), t.row_ptr_.end() - 1);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) {
      const auto dst = fill[col_idx_[k]]++;
      t.col_idx_[dst] = i;
      t.values_[dst] = values_[k];
    }
  return t;
}

// ---------------------------------------------------------------------------
// Matrix Market

namespace {

[[noreturn]] void parse_fail(ErrorKind kind, const std::string& msg, int line) {
  throw LocatedError(kind, msg, line);
}

std::vector<std::string> words(std::string_view line) {
  std::vector<std::string> out;
  std::istringstream ss{std::string(line)};
  for (std::string w; ss >> w;) out.push_back(std::move(w));
  return out;
}

std::size_t parse_index(const std::string& word, std::size_t limit, const char* what, int line) {
  long long v = 0;
  try {
    v = parse_int(word);
  } catch (const Error&) {
    parse_fail(ErrorKind::parse, std::string("non-numeric ") + what + " '" + word + "'", line);
  }
  if (v < 1 || static_cast<unsigned long long>(v) > limit)
    parse_fail(ErrorKind::validation,
               std::string(what) + " " + word + " out of range 1.." + std::to_string(limit), line);
  return static_cast<std::size_t>(v - 1);
}

}  // namespace

SparseMatrix parse_matrix_market(std::istream& in) {
  std::string line;
  int lineno = 0;
  if (!std::getline(in, line)) fail(ErrorKind::parse, "empty Matrix Market input");
  ++lineno;
  const auto header = words(to_lower(line));
  if (header.empty() || header[0] != "%%matrixmarket")
    parse_fail(ErrorKind::parse, "missing %%MatrixMarket header", lineno);
  if (header.size() != 5) parse_fail(ErrorKind::parse, "header needs 4 qualifiers", lineno);
  if (header[1] != "matrix") parse_fail(ErrorKind::unsupported, "unsupported format: object " + header[1], lineno);
  if (header[2] != "coordinate")
    parse_fail(ErrorKind::unsupported, "unsupported format: " + header[2] + " (only coordinate)", lineno);
  if (header[3] != "real" && header[3] != "integer")
    parse_fail(ErrorKind::unsupported, "unsupported format: field " + header[3] + " (only real)", lineno);
  Symmetry sym;
  if (header[4] == "general")
    sym = Symmetry::general;
  else if (header[4] == "symmetric")
    sym = Symmetry::symmetric;
  else
    parse_fail(ErrorKind::unsupported, "unsupported format: symmetry " + header[4], lineno);

  auto next_data_line = [&](std::vector<std::string>& out) {
    while (std::getline(in, line)) {
      ++lineno;
      const auto t = trim(line);
      if (t.empty() || t.front() == '%') continue;
      out = words(t);
      return true;
    }
    return false;
  };

  std::vector<std::string> w;
  if (!next_data_line(w)) fail(ErrorKind::parse, "missing size line");
  if (w.size() != 3) parse_fail(ErrorKind::parse, "size line needs rows, columns and entry count", lineno);
  long long rows = 0, cols = 0, count = 0;
  try {
    rows = parse_int(w[0]);
    cols = parse_int(w[1]);
    count = parse_int(w[2]);
  } catch (const Error&) {
    parse_fail(ErrorKind::parse, "non-numeric size line", lineno);
  }
  if (rows < 1 || cols < 1 || count < 0) parse_fail(ErrorKind::validation, "invalid matrix dimensions", lineno);
  if (sym == Symmetry::symmetric && rows != cols)
    parse_fail(ErrorKind::validation, "symmetric matrix must be square", lineno);

  std::vector<Triplet> entries;
  entries.reserve(static_cast<std::size_t>(count) * (sym == Symmetry::symmetric ? 2 : 1));
  for (long long k = 0; k < count; ++k) {
    if (!next_data_line(w))
      fail(ErrorKind::parse, "expected " + std::to_string(count) + " entries, found " + std::to_string(k));
    if (w.size() != 3) parse_fail(ErrorKind::parse, "entry needs row, column and value", lineno);
    const auto i = parse_index(w[0], static_cast<std::size_t>(rows), "row index", lineno);
    const auto j = parse_index(w[1], static_cast<std::size_t>(cols), "column index", lineno);
    double v = 0;
    try {
      v = parse_double(w[2]);
    } catch (const Error&) {
      parse_fail(ErrorKind::parse, "non-numeric value '" + w[2] + "'", lineno);
    }
    if (!std::isfinite(v)) parse_fail(ErrorKind::parse, "non-finite value '" + w[2] + "'", lineno);
    entries.push_back({i, j, v});
    if (sym == Symmetry::symmetric && i != j) entries.push_back({j, i, v});
  }
  if (next_data_line(w)) parse_fail(ErrorKind::parse, "more entries than declared", lineno);
  return SparseMatrix(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols), std::move(entries), sym);
}

SparseMatrix parse_matrix_market(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_matrix_market(in);
}

SparseMatrix load_matrix_market(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::not_found, "cannot open " + path.string());
  return parse_matrix_market(in);
}

std::string to_matrix_market(const SparseMatrix& m) {
  std::string out = "%%MatrixMarket matrix coordinate real general\n";
  out += std::to_string(m.rows()) + " " + std::to_string(m.cols()) + " " + std::to_string(m.nnz()) + "\n";
  for (const auto& t : m.triplets())
    out += std::to_string(t.row + 1) + " " + std::to_string(t.col + 1) + " " + format_double(t.value) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Features

namespace {

void require_square(const SparseMatrix& m) {
  if (!m.square())
    fail(ErrorKind::invalid_argument, "features need a square matrix, got " + std::to_string(m.rows()) +
                                          "x" + std::to_string(m.cols()));
}

std::vector<double> diagonal(const SparseMatrix& m) {
  std::vector<double> d(std::min(m.rows(), m.cols()), 0.0);
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = m.at(i, i);
  return d;
}

double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double population_variance(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  const double mu = mean(v);
  double s = 0;
  for (double x : v) s += (x - mu) * (x - mu);
  return s / static_cast<double>(v.size());
}

// Variance of each row's full length-n vector, implicit zeros included.
std::vector<double> row_variances(const SparseMatrix& m) {
  const auto& rp = m.row_ptr();
  const auto& val = m.values();
  const double n = static_cast<double>(m.cols());
  std::vector<double> out(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double s = 0;
    for (auto k = rp[i]; k < rp[i + 1]; ++k) s += val[k];
    const double mu = s / n;
    double ss = 0;
    for (auto k = rp[i]; k < rp[i + 1]; ++k) ss += (val[k] - mu) * (val[k] - mu);
    ss += (n - static_cast<double>(rp[i + 1] - rp[i])) * mu * mu;
    out[i] = ss / n;
  }
  return out;
}

double max_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : *std::max_element(v.begin(), v.end());
}

// Visits each entry of the union pattern of A and A^T in row i as
// (i, a_ij, a_ji).
template <class F>
void for_each_pair(const SparseMatrix& a, const SparseMatrix& at, F&& f) {
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto p = a.row_ptr()[i], pe = a.row_ptr()[i + 1];
    auto q = at.row_ptr()[i], qe = at.row_ptr()[i + 1];
    while (p < pe || q < qe) {
      const auto cp = p < pe ? a.col_idx()[p] : SIZE_MAX;
      const auto cq = q < qe ? at.col_idx()[q] : SIZE_MAX;
      if (cp == cq) {
        f(i, a.values()[p++], at.values()[q++]);
      } else if (cp < cq) {
        f(i, a.values()[p++], 0.0);
      } else {
        f(i, 0.0, at.values()[q++]);
      }
    }
  }
}

double part_frobenius(const SparseMatrix& m, double sign) {
  const auto t = m.transpose();
  double s = 0;
  for_each_pair(m, t, [&](std::size_t, double aij, double aji) {
    const double x = (aij + sign * aji) / 2;
    s += x * x;
  });
  return std::sqrt(s);
}

double part_infinity(const SparseMatrix& m, double sign) {
  const auto t = m.transpose();
  std::vector<double> rows(m.rows(), 0.0);
  for_each_pair(m, t, [&](std::size_t i, double aij, double aji) { rows[i] += std::abs((aij + sign * aji) / 2); });
  return max_of(rows);
}

std::vector<double> abs_row_sums(const SparseMatrix& m) {
  std::vector<double> out(m.rows(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (auto k = m.row_ptr()[i]; k < m.row_ptr()[i + 1]; ++k) out[i] += std::abs(m.values()[k]);
  return out;
}

std::vector<double> nnz_per_row(const SparseMatrix& m) {
  std::vector<double> out(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) out[i] = static_cast<double>(m.row_nnz(i));
  return out;
}

double f_row_variance(const SparseMatrix& m) { return mean(row_variances(m)); }
double f_column_variance(const SparseMatrix& m) { return mean(row_variances(m.transpose())); }
double f_diagonal_variance(const SparseMatrix& m) { return population_variance(diagonal(m)); }
double f_nnz(const SparseMatrix& m) { return static_cast<double>(m.nnz()); }
double f_n_rows(const SparseMatrix& m) { return static_cast<double>(m.rows()); }
double f_frobenius(const SparseMatrix& m) {
  double s = 0;
  for (double v : m.values()) s += v * v;
  return std::sqrt(s);
}
double f_sym_frobenius(const SparseMatrix& m) { return part_frobenius(m, +1.0); }
double f_antisym_frobenius(const SparseMatrix& m) { return part_frobenius(m, -1.0); }
double f_one_norm(const SparseMatrix& m) { return max_of(abs_row_sums(m.transpose())); }
double f_infinity_norm(const SparseMatrix& m) { return max_of(abs_row_sums(m)); }
double f_sym_infinity(const SparseMatrix& m) { return part_infinity(m, +1.0); }
double f_antisym_infinity(const SparseMatrix& m) { return part_infinity(m, -1.0); }
double f_max_nnz_per_row(const SparseMatrix& m) { return max_of(nnz_per_row(m)); }
double f_trace(const SparseMatrix& m) {
  double s = 0;
  for (double d : diagonal(m)) s += d;
  return s;
}
double f_absolute_trace(const SparseMatrix& m) {
  double s = 0;
  for (double d : diagonal(m)) s += std::abs(d);
  return s;
}

double f_n_cols(const SparseMatrix& m) { return static_cast<double>(m.cols()); }
double f_min_nnz_per_row(const SparseMatrix& m) {
  const auto v = nnz_per_row(m);
  return v.empty() ? 0.0 : *std::min_element(v.begin(), v.end());
}
double f_avg_nnz_per_row(const SparseMatrix& m) { return mean(nnz_per_row(m)); }
double f_nnz_fraction(const SparseMatrix& m) {
  return static_cast<double>(m.nnz()) / (static_cast<double>(m.rows()) * static_cast<double>(m.cols()));
}
double f_structural_symmetry(const SparseMatrix& m) {
  std::size_t off = 0, matched = 0;
  for (const auto& t : m.triplets()) {
    if (t.row == t.col) continue;
    ++off;
    if (m.at(t.col, t.row) != 0.0) ++matched;
  }
  return off == 0 ? 1.0 : static_cast<double>(matched) / static_cast<double>(off);
}
double f_value_symmetry(const SparseMatrix& m) {
  const auto t = m.transpose();
  return m.col_idx() == t.col_idx() && m.row_ptr() == t.row_ptr() && m.values() == t.values() ? 1.0 : 0.0;
}
double f_diagonal_dominance(const SparseMatrix& m) {
  std::size_t dominant = 0;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double d = 0, off = 0;
    for (auto k = m.row_ptr()[i]; k < m.row_ptr()[i + 1]; ++k) {
      if (m.col_idx()[k] == i)
        d = std::abs(m.values()[k]);
      else
        off += std::abs(m.values()[k]);
    }
    if (d >= off) ++dominant;
  }
  return static_cast<double>(dominant) / static_cast<double>(m.rows());
}
double f_diagonal_mean(const SparseMatrix& m) { return mean(diagonal(m)); }
double f_diagonal_sign_changes(const SparseMatrix& m) {
  const auto d = diagonal(m);
  std::size_t changes = 0;
  for (std::size_t i = 1; i < d.size(); ++i)
    if (d[i - 1] * d[i] < 0) ++changes;
  return static_cast<double>(changes);
}
double f_max_abs_entry(const SparseMatrix& m) {
  double best = 0;
  for (double v : m.values()) best = std::max(best, std::abs(v));
  return best;
}
double f_min_abs_nonzero(const SparseMatrix& m) {
  if (m.nnz() == 0) return 0.0;
  double best = std::abs(m.values().front());
  for (double v : m.values()) best = std::min(best, std::abs(v));
  return best;
}
double f_row_variance_max(const SparseMatrix& m) { return max_of(row_variances(m)); }
double f_column_variance_max(const SparseMatrix& m) { return max_of(row_variances(m.transpose())); }
double f_bandwidth_lower(const SparseMatrix& m) {
  std::size_t bw = 0;
  for (const auto& t : m.triplets())
    if (t.row > t.col) bw = std::max(bw, t.row - t.col);
  return static_cast<double>(bw);
}
double f_bandwidth_upper(const SparseMatrix& m) {
  std::size_t bw = 0;
  for (const auto& t : m.triplets())
    if (t.col > t.row) bw = std::max(bw, t.col - t.row);
  return static_cast<double>(bw);
}

using FeatureFn = double (*)(const SparseMatrix&);

struct BaseDef {
  std::string_view name;
  FeatureFn fn;
  double FeatureVector::*field;
};

struct ExtDef {
  std::string_view name;
  FeatureFn fn;
  double ExtendedFeatureVector::*field;
};

const std::array<BaseDef, feature_count> kBase = {{
    {"row_variance", f_row_variance, &FeatureVector::row_variance},
    {"column_variance", f_column_variance, &FeatureVector::column_variance},
    {"diagonal_variance", f_diagonal_variance, &FeatureVector::diagonal_variance},
    {"nnz", f_nnz, &FeatureVector::nnz},
    {"n_rows", f_n_rows, &FeatureVector::n_rows},
    {"frobenius_norm", f_frobenius, &FeatureVector::frobenius_norm},
    {"symmetric_frobenius_norm", f_sym_frobenius, &FeatureVector::symmetric_frobenius_norm},
    {"antisymmetric_frobenius_norm", f_antisym_frobenius, &FeatureVector::antisymmetric_frobenius_norm},
    {"one_norm", f_one_norm, &FeatureVector::one_norm},
    {"infinity_norm", f_infinity_norm, &FeatureVector::infinity_norm},
    {"symmetric_infinity_norm", f_sym_infinity, &FeatureVector::symmetric_infinity_norm},
    {"antisymmetric_infinity_norm", f_antisym_infinity, &FeatureVector::antisymmetric_infinity_norm},
    {"max_nnz_per_row", f_max_nnz_per_row, &FeatureVector::max_nnz_per_row},
    {"trace", f_trace, &FeatureVector::trace},
    {"absolute_trace", f_absolute_trace, &FeatureVector::absolute_trace},
}};

const std::array<ExtDef, extended_feature_count - feature_count> kExtra = {{
    {"n_cols", f_n_cols, &ExtendedFeatureVector::n_cols},
    {"min_nnz_per_row", f_min_nnz_per_row, &ExtendedFeatureVector::min_nnz_per_row},
    {"avg_nnz_per_row", f_avg_nnz_per_row, &ExtendedFeatureVector::avg_nnz_per_row},
    {"nnz_fraction", f_nnz_fraction, &ExtendedFeatureVector::nnz_fraction},
    {"structural_symmetry_fraction", f_structural_symmetry, &ExtendedFeatureVector::structural_symmetry_fraction},
    {"value_symmetry_flag", f_value_symmetry, &ExtendedFeatureVector::value_symmetry_flag},
    {"diagonal_dominance_fraction", f_diagonal_dominance, &ExtendedFeatureVector::diagonal_dominance_fraction},
    {"diagonal_mean", f_diagonal_mean, &ExtendedFeatureVector::diagonal_mean},
    {"diagonal_sign_changes", f_diagonal_sign_changes, &ExtendedFeatureVector::diagonal_sign_changes},
    {"max_abs_entry", f_max_abs_entry, &ExtendedFeatureVector::max_abs_entry},
    {"min_abs_nonzero", f_min_abs_nonzero, &ExtendedFeatureVector::min_abs_nonzero},
    {"row_variance_max", f_row_variance_max, &ExtendedFeatureVector::row_variance_max},
    {"column_variance_max", f_column_variance_max, &ExtendedFeatureVector::column_variance_max},
    {"bandwidth_lower", f_bandwidth_lower, &ExtendedFeatureVector::bandwidth_lower},
    {"bandwidth_upper", f_bandwidth_upper, &ExtendedFeatureVector::bandwidth_upper},
}};

}  // namespace

const std::array<std::string_view, feature_count>& feature_names() {
  static const auto names = [] {
    std::array<std::string_view, feature_count> out{};
    for (std::size_t i = 0; i < feature_count; ++i) out[i] = kBase[i].name;
    return out;
  }();
  return names;
}

const std::array<std::string_view, extended_feature_count>& extended_feature_names() {
  static const auto names = [] {
    std::array<std::string_view, extended_feature_count> out{};
    for (std::size_t i = 0; i < feature_count; ++i) out[i] = kBase[i].name;
    for (std::size_t i = 0; i < kExtra.size(); ++i) out[feature_count + i] = kExtra[i].name;
    return out;
  }();
  return names;
}

FeatureVector compute_features(const SparseMatrix& m) {
  require_square(m);
  FeatureVector f;
  for (const auto& d : kBase) f.*d.field = d.fn(m);
  return f;
}

ExtendedFeatureVector compute_extended_features(const SparseMatrix& m) {
  ExtendedFeatureVector f;
  f.base = compute_features(m);
  for (const auto& d : kExtra) f.*d.field = d.fn(m);
  return f;
}

std::pair<FeatureVector, FeatureTiming> measure_features(const SparseMatrix& m) {
  using clock = std::chrono::steady_clock;
  require_square(m);
  FeatureVector f;
  FeatureTiming timing;
  const auto start = clock::now();
  for (const auto& d : kBase) {
    const auto t0 = clock::now();
    f.*d.field = d.fn(m);
    timing.seconds.emplace_back(std::string(d.name), std::chrono::duration<double>(clock::now() - t0).count());
  }
  timing.total = std::chrono::duration<double>(clock::now() - start).count();
  return {f, timing};
}

double compute_feature(const SparseMatrix& m, std::string_view name) {
  require_square(m);
  for (const auto& d : kBase)
    if (d.name == name) return d.fn(m);
  for (const auto& d : kExtra)
    if (d.name == name) return d.fn(m);
  fail(ErrorKind::not_found, "unknown feature '" + std::string(name) + "'");
}

FeatureMap to_map(const FeatureVector& f) {
  FeatureMap out;
  for (const auto& d : kBase) out.emplace_back(std::string(d.name), f.*d.field);
  return out;
}

FeatureMap to_map(const ExtendedFeatureVector& f) {
  FeatureMap out = to_map(f.base);
  for (const auto& d : kExtra) out.emplace_back(std::string(d.name), f.*d.field);
  return out;
}

std::string to_json(const FeatureMap& features) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [k, v] : features) j[k] = v;
  return j.dump(2);
}

std::string csv_header(const FeatureMap& features) {
  std::vector<std::string> names;
  for (const auto& [k, v] : features) names.push_back(k);
  return csv_row(names);
}

std::string csv_values(const FeatureMap& features) {
  std::vector<std::string> vals;
  for (const auto& [k, v] : features) vals.push_back(format_double(v));
  return csv_row(vals);
}

}  // namespace lh::matfeat
