#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace lh::matfeat {

enum class Symmetry { general, symmetric };

struct Triplet {
  std::size_t row = 0;  // 0-based
  std::size_t col = 0;
  double value = 0.0;
};

/// Assembled real sparse matrix in compressed-row form. Duplicate coordinates
/// are summed and entries that assemble to exactly zero are dropped, so nnz()
/// counts true nonzeros. Column indices are sorted within each row.
class SparseMatrix {
 public:
  SparseMatrix() = default;
  SparseMatrix(std::size_t rows, std::size_t cols, std::vector<Triplet> entries,
               Symmetry hint = Symmetry::general);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t nnz() const noexcept { return values_.size(); }
  bool square() const noexcept { return rows_ == cols_; }
  Symmetry symmetry_hint() const noexcept { return hint_; }

  const std::vector<std::size_t>& row_ptr() const noexcept { return row_ptr_; }
  const std::vector<std::size_t>& col_idx() const noexcept { return col_idx_; }
  const std::vector<double>& values() const noexcept { return values_; }

  std::size_t row_nnz(std::size_t i) const { return row_ptr_[i + 1] - row_ptr_[i]; }
  /// Entry value, 0 for structural zeros.
  double at(std::size_t i, std::size_t j) const;
  std::vector<Triplet> triplets() const;
  SparseMatrix transpose() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Symmetry hint_ = Symmetry::general;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<std::size_t> col_idx_;
  std::vector<double> values_;
};

/// Reads `%%MatrixMarket matrix coordinate {real|integer} {general|symmetric}`.
/// Symmetric files are expanded to full storage.
SparseMatrix parse_matrix_market(std::istream& in);
SparseMatrix parse_matrix_market(std::string_view text);
SparseMatrix load_matrix_market(const std::filesystem::path& path);
/// Writes general coordinate format with shortest round-trip values.
std::string to_matrix_market(const SparseMatrix& m);

struct FeatureVector {
  double row_variance = 0;
  double column_variance = 0;
  double diagonal_variance = 0;
  double nnz = 0;
  double n_rows = 0;
  double frobenius_norm = 0;
  double symmetric_frobenius_norm = 0;
  double antisymmetric_frobenius_norm = 0;
  double one_norm = 0;
  double infinity_norm = 0;
  double symmetric_infinity_norm = 0;
  double antisymmetric_infinity_norm = 0;
  double max_nnz_per_row = 0;
  double trace = 0;
  double absolute_trace = 0;

  bool operator==(const FeatureVector&) const = default;
};

struct ExtendedFeatureVector {
  FeatureVector base;
  double n_cols = 0;
  double min_nnz_per_row = 0;
  double avg_nnz_per_row = 0;
  double nnz_fraction = 0;
  double structural_symmetry_fraction = 0;
  double value_symmetry_flag = 0;
  double diagonal_dominance_fraction = 0;
  double diagonal_mean = 0;
  double diagonal_sign_changes = 0;
  double max_abs_entry = 0;
  double min_abs_nonzero = 0;
  double row_variance_max = 0;
  double column_variance_max = 0;
  double bandwidth_lower = 0;
  double bandwidth_upper = 0;

  bool operator==(const ExtendedFeatureVector&) const = default;
};

using FeatureMap = std::vector<std::pair<std::string, double>>;

struct FeatureTiming {
  std::vector<std::pair<std::string, double>> seconds;  // per feature, in column order
  double total = 0;
};

constexpr std::size_t feature_count = 15;
constexpr std::size_t extended_feature_count = 30;

/// Column order used by to_map, CSV output and models.
const std::array<std::string_view, feature_count>& feature_names();
const std::array<std::string_view, extended_feature_count>& extended_feature_names();

/// Requires a square matrix; throws invalid_argument otherwise.
FeatureVector compute_features(const SparseMatrix& m);
ExtendedFeatureVector compute_extended_features(const SparseMatrix& m);
/// Same values as compute_features, each feature timed on its own.
std::pair<FeatureVector, FeatureTiming> measure_features(const SparseMatrix& m);

/// Single feature by name, for any of the 30 names.
double compute_feature(const SparseMatrix& m, std::string_view name);

FeatureMap to_map(const FeatureVector& f);
FeatureMap to_map(const ExtendedFeatureVector& f);
std::string to_json(const FeatureMap& features);
std::string csv_header(const FeatureMap& features);
std::string csv_values(const FeatureMap& features);

}  // namespace lh::matfeat
