#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "json.hpp"
#include "lh/error.hpp"
#include "lh/matfeat.hpp"
#include "lh/util.hpp"
#include "support/dense_features.hpp"

using namespace lh::matfeat;
using lh::testing::close;
using lh::testing::Dense;

namespace {

SparseMatrix identity(std::size_t n) {
  std::vector<Triplet> t;
  for (std::size_t i = 0; i < n; ++i) t.push_back({i, i, 1.0});
  return SparseMatrix(n, n, t);
}

void check_against_oracle(const Dense& d) {
  const auto want = lh::testing::dense_features(d);
  const auto got = to_map(compute_extended_features(lh::testing::to_sparse(d)));
  REQUIRE(got.size() == extended_feature_count);
  for (const auto& [name, value] : got) {
    REQUIRE(want.count(name));
    CHECK_MESSAGE(close(value, want.at(name)), name << ": sparse " << value << " dense " << want.at(name));
  }
}

}  // namespace

TEST_CASE("parse_matrix_market") {
  SUBCASE("identity") {
    auto m = parse_matrix_market("%%MatrixMarket matrix coordinate real general\n% comment\n2 2 2\n1 1 1\n2 2 1\n");
    CHECK(m.rows() == 2);
    CHECK(m.nnz() == 2);
    CHECK(m.symmetry_hint() == Symmetry::general);
  }
  SUBCASE("symmetric expansion") {
    auto m = parse_matrix_market("%%MatrixMarket matrix coordinate real symmetric\n2 2 1\n1 2 3.0\n");
    CHECK(m.nnz() == 2);
    CHECK(m.at(1, 0) == 3.0);
    CHECK(m.at(0, 1) == 3.0);
    CHECK(m.symmetry_hint() == Symmetry::symmetric);
  }
  SUBCASE("duplicates are summed") {
    auto m = parse_matrix_market("%%MatrixMarket matrix coordinate real general\n2 2 3\n1 1 1.5\n1 1 2\n2 1 4\n");
    CHECK(m.nnz() == 2);
    CHECK(m.at(0, 0) == 3.5);
  }
  SUBCASE("integer field") {
    auto m = parse_matrix_market("%%MatrixMarket matrix coordinate integer general\n1 1 1\n1 1 7\n");
    CHECK(m.at(0, 0) == 7.0);
  }
  SUBCASE("unsupported formats") {
    for (const char* header : {"%%MatrixMarket matrix coordinate complex general",
                               "%%MatrixMarket matrix coordinate pattern general",
                               "%%MatrixMarket matrix array real general",
                               "%%MatrixMarket matrix coordinate real hermitian",
                               "%%MatrixMarket matrix coordinate real skew-symmetric"}) {
      try {
        parse_matrix_market(std::string(header) + "\n1 1 1\n1 1 1\n");
        FAIL("accepted " << header);
      } catch (const lh::Error& e) {
        CHECK(e.kind() == lh::ErrorKind::unsupported);
        CHECK(std::string(e.what()).find("unsupported format") != std::string::npos);
      }
    }
  }
  SUBCASE("located errors") {
    try {
      parse_matrix_market("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1\n3 1 1\n");
      FAIL("accepted out-of-range index");
    } catch (const lh::LocatedError& e) {
      CHECK(e.line() == 4);
      CHECK(e.kind() == lh::ErrorKind::validation);
    }
    try {
      parse_matrix_market("%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 abc\n");
      FAIL("accepted non-numeric value");
    } catch (const lh::LocatedError& e) {
      CHECK(e.line() == 3);
      CHECK(e.kind() == lh::ErrorKind::parse);
    }
    CHECK_THROWS_AS(parse_matrix_market("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1\n"),
                    lh::Error);
    CHECK_THROWS_AS(parse_matrix_market("not a header\n"), lh::Error);
  }
  SUBCASE("round trip through the writer") {
    std::mt19937_64 rng(3);
    auto m = lh::testing::to_sparse(lh::testing::random_dense(rng, 17, 0.2));
    auto again = parse_matrix_market(to_matrix_market(m));
    CHECK(again.row_ptr() == m.row_ptr());
    CHECK(again.col_idx() == m.col_idx());
    CHECK(again.values() == m.values());
  }
  SUBCASE("shipped sample") {
    auto m = load_matrix_market(std::string(LH_TEST_DATA_DIR) + "/matrices/id2.mtx");
    CHECK(m.nnz() == 2);
  }
}

TEST_CASE("compute_features: closed forms") {
  auto f = compute_features(identity(2));
  CHECK(f.nnz == 2);
  CHECK(f.n_rows == 2);
  CHECK(f.frobenius_norm == doctest::Approx(std::sqrt(2.0)));
  CHECK(f.one_norm == 1);
  CHECK(f.infinity_norm == 1);
  CHECK(f.trace == 2);
  CHECK(f.absolute_trace == 2);
  CHECK(f.max_nnz_per_row == 1);
  CHECK(f.symmetric_frobenius_norm == doctest::Approx(std::sqrt(2.0)));
  CHECK(f.antisymmetric_frobenius_norm == 0);
  CHECK(f.diagonal_variance == 0);
  CHECK(f.row_variance == 0.25);
  CHECK(f.column_variance == 0.25);

  auto g = compute_features(SparseMatrix(2, 2, {{0, 1, 1.0}}));
  CHECK(g.symmetric_frobenius_norm == doctest::Approx(std::sqrt(0.5)));
  CHECK(g.antisymmetric_frobenius_norm == doctest::Approx(std::sqrt(0.5)));
  CHECK(g.symmetric_infinity_norm == 0.5);
  CHECK(g.antisymmetric_infinity_norm == 0.5);

  auto e = compute_extended_features(identity(4));
  CHECK(e.diagonal_dominance_fraction == 1.0);
  CHECK(e.structural_symmetry_fraction == 1.0);
  auto u = compute_extended_features(SparseMatrix(3, 3, {{0, 1, 1.0}, {0, 2, 2.0}, {1, 2, 3.0}}));
  CHECK(u.structural_symmetry_fraction == 0.0);
  CHECK(u.bandwidth_upper == 2);
  CHECK(u.bandwidth_lower == 0);

  CHECK_THROWS_AS(compute_features(SparseMatrix(2, 3, {})), lh::Error);
}

TEST_CASE("compute_features: dense oracle") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::size_t> size(1, 50);
  std::uniform_real_distribution<double> density(0.0, 0.3);
  for (int trial = 0; trial < 200; ++trial) {
    const auto d = lh::testing::random_dense(rng, size(rng), density(rng));
    check_against_oracle(d);
  }
  check_against_oracle(lh::testing::make_dense(5));
  Dense eye = lh::testing::make_dense(9);
  for (std::size_t i = 0; i < 9; ++i) eye(i, i) = 1;
  check_against_oracle(eye);
  Dense perm = lh::testing::make_dense(7);
  for (std::size_t i = 0; i < 7; ++i) perm(i, (i * 3 + 1) % 7) = 1;
  check_against_oracle(perm);
}

TEST_CASE("features: invariants") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + trial % 30;
    const auto d = lh::testing::random_dense(rng, n, 0.25);

    SUBCASE("symmetric input gives exactly zero antisymmetric norms") {
      const auto f = compute_features(lh::testing::to_sparse(lh::testing::symmetrize(d)));
      CHECK(f.antisymmetric_frobenius_norm == 0.0);
      CHECK(f.antisymmetric_infinity_norm == 0.0);
    }
    SUBCASE("symmetric permutation") {
      std::vector<std::size_t> p(n);
      std::iota(p.begin(), p.end(), 0);
      std::shuffle(p.begin(), p.end(), rng);
      Dense q = lh::testing::make_dense(n);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) q(p[i], p[j]) = d(i, j);
      const auto a = compute_features(lh::testing::to_sparse(d));
      const auto b = compute_features(lh::testing::to_sparse(q));
      CHECK(close(a.frobenius_norm, b.frobenius_norm));
      CHECK(close(a.trace, b.trace));
      CHECK(close(a.absolute_trace, b.absolute_trace));
      CHECK(a.nnz == b.nnz);
      CHECK(close(a.diagonal_variance, b.diagonal_variance));
    }
    SUBCASE("positive scaling") {
      const double c = 2.5;
      Dense s = d;
      for (auto& x : s.a) x *= c;
      const auto a = compute_features(lh::testing::to_sparse(d));
      const auto b = compute_features(lh::testing::to_sparse(s));
      for (auto [field, power] : std::initializer_list<std::pair<double FeatureVector::*, int>>{
               {&FeatureVector::frobenius_norm, 1},
               {&FeatureVector::symmetric_frobenius_norm, 1},
               {&FeatureVector::antisymmetric_frobenius_norm, 1},
               {&FeatureVector::one_norm, 1},
               {&FeatureVector::infinity_norm, 1},
               {&FeatureVector::symmetric_infinity_norm, 1},
               {&FeatureVector::antisymmetric_infinity_norm, 1},
               {&FeatureVector::trace, 1},
               {&FeatureVector::absolute_trace, 1},
               {&FeatureVector::row_variance, 2},
               {&FeatureVector::column_variance, 2},
               {&FeatureVector::diagonal_variance, 2},
               {&FeatureVector::nnz, 0},
               {&FeatureVector::n_rows, 0},
               {&FeatureVector::max_nnz_per_row, 0}})
        CHECK(close(b.*field, std::pow(c, power) * (a.*field), 1e-12, 1e-12));
    }
    SUBCASE("ranges") {
      const auto e = compute_extended_features(lh::testing::to_sparse(d));
      CHECK(e.base.nnz <= e.base.n_rows * e.n_cols);
      CHECK(e.base.max_nnz_per_row <= e.n_cols);
      for (double x : {e.nnz_fraction, e.structural_symmetry_fraction, e.diagonal_dominance_fraction,
                       e.value_symmetry_flag}) {
        CHECK(x >= 0.0);
        CHECK(x <= 1.0);
      }
      CHECK(e.bandwidth_lower < e.base.n_rows);
      CHECK(e.bandwidth_upper < e.base.n_rows);
    }
  }
}

TEST_CASE("measure_features") {
  // Large enough that per-feature work dominates timer overhead.
  const std::size_t n = 200000;
  std::vector<Triplet> t;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> v(-1, 1);
  for (std::size_t i = 0; i < n; ++i) {
    t.push_back({i, i, 4.0 + v(rng)});
    if (i + 1 < n) t.push_back({i, i + 1, v(rng)});
    if (i >= 3) t.push_back({i, i - 3, v(rng)});
  }
  const SparseMatrix m(n, n, t);
  const auto [features, timing] = measure_features(m);
  CHECK(features == compute_features(m));
  REQUIRE(timing.seconds.size() == feature_count);
  double sum = 0;
  for (std::size_t i = 0; i < feature_count; ++i) {
    CHECK(timing.seconds[i].first == feature_names()[i]);
    CHECK(timing.seconds[i].second >= 0.0);
    sum += timing.seconds[i].second;
  }
  CHECK(timing.total >= sum);
  CHECK(std::abs(timing.total - sum) <= 0.05 * timing.total);
}

TEST_CASE("serialization") {
  const auto map = to_map(compute_extended_features(identity(3)));
  CHECK(map.front().first == "row_variance");
  CHECK(map.back().first == "bandwidth_upper");
  auto j = nlohmann::json::parse(to_json(map));
  CHECK(j.size() == 30);
  CHECK(j["trace"] == 3.0);
  const auto header = lh::split(std::string(lh::trim(csv_header(map))), ',');
  const auto values = lh::split(std::string(lh::trim(csv_values(map))), ',');
  REQUIRE(header.size() == 30);
  REQUIRE(values.size() == 30);
  for (std::size_t i = 0; i < 30; ++i) {
    CHECK(header[i] == extended_feature_names()[i]);
    CHECK(lh::parse_double(values[i]) == map[i].second);
  }
  CHECK(compute_feature(identity(3), "bandwidth_upper") == 0.0);
  CHECK_THROWS_AS(compute_feature(identity(3), "spectral_radius"), lh::Error);
}
