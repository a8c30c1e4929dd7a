#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <benchmark/benchmark.h>

#include "lh/kernelc.hpp"
#include "lh/matfeat.hpp"
#include "lh/mlselect.hpp"
#include "lh/taxonomy.hpp"
#include "lh/textsearch.hpp"
#include "lh/util.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kData = LH_BENCH_DATA_DIR;

/// n x n with a dominant diagonal and `per_row` random off-diagonal entries.
lh::matfeat::SparseMatrix random_matrix(std::size_t n, std::size_t per_row) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::size_t> col(0, n - 1);
  std::uniform_real_distribution<double> val(-1.0, 1.0);
  std::vector<lh::matfeat::Triplet> t;
  t.reserve(n * (per_row + 1));
  for (std::size_t i = 0; i < n; ++i) {
    t.push_back({i, i, 4.0 + static_cast<double>(per_row)});
    for (std::size_t k = 0; k < per_row; ++k) {
      const auto j = col(rng);
      if (j != i) t.push_back({i, j, val(rng)});
    }
  }
  return lh::matfeat::SparseMatrix(n, n, std::move(t));
}

const lh::taxonomy::Taxonomy& taxonomy() {
  static const auto tax = lh::taxonomy::Taxonomy::load(kData / "taxonomy" / "lapack_linear.json");
  return tax;
}

const std::vector<lh::mlselect::LabeledInstance>& dataset() {
  static const auto labels =
      lh::mlselect::derive_labels(lh::mlselect::parse_corpus_csv(lh::read_file(kData / "corpus" / "linear_runs.csv")));
  return labels.instances;
}

void BM_Features(benchmark::State& state) {
  const auto m = random_matrix(static_cast<std::size_t>(state.range(0)), 8);
  for (auto _ : state) benchmark::DoNotOptimize(lh::matfeat::compute_features(m));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(m.nnz()));
}
BENCHMARK(BM_Features)->Arg(1000)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);

void BM_ExtendedFeatures(benchmark::State& state) {
  const auto m = random_matrix(static_cast<std::size_t>(state.range(0)), 8);
  for (auto _ : state) benchmark::DoNotOptimize(lh::matfeat::compute_extended_features(m));
}
BENCHMARK(BM_ExtendedFeatures)->Arg(10000)->Unit(benchmark::kMillisecond);

void BM_GuidedTranscript(benchmark::State& state) {
  const std::vector<std::string> replies = {"Solve a system of linear equations only", "AX = B", "No",
                                            "general", "band", "double"};
  const auto& tax = taxonomy();
  for (auto _ : state) {
    auto s = lh::taxonomy::start_session(tax, lh::taxonomy::Library::lapack, "b");
    for (const auto& r : replies) {
      const auto* q = lh::taxonomy::current_question(tax, s);
      s = lh::taxonomy::answer(tax, s, *lh::taxonomy::resolve_option(*q, r));
    }
    benchmark::DoNotOptimize(s);
  }
}
BENCHMARK(BM_GuidedTranscript);

void BM_FlattenAndLookup(benchmark::State& state) {
  const auto& tree = *taxonomy().tree(lh::taxonomy::Library::lapack);
  for (auto _ : state) benchmark::DoNotOptimize(lh::taxonomy::flatten_tree(tree));
}
BENCHMARK(BM_FlattenAndLookup);

void BM_KeywordSearch(benchmark::State& state) {
  const auto index = lh::textsearch::build_index(taxonomy(), lh::textsearch::load_vocabulary(kData / "vocabulary.txt"));
  for (auto _ : state) {
    benchmark::DoNotOptimize(index.query("complex general band solve"));
    benchmark::DoNotOptimize(index.spell_correct("symetric"));
  }
}
BENCHMARK(BM_KeywordSearch);

void BM_KernelCompile(benchmark::State& state) {
  const auto text = lh::read_file(kData / "kernels" / "gemver.krn");
  for (auto _ : state) benchmark::DoNotOptimize(lh::kernelc::compile(text));
}
BENCHMARK(BM_KernelCompile);

void BM_TreeInduction(benchmark::State& state) {
  lh::mlselect::TreeParams params;
  params.max_depth = static_cast<int>(state.range(0));
  const auto& data = dataset();
  for (auto _ : state) benchmark::DoNotOptimize(lh::mlselect::induce_tree(data, params));
}
BENCHMARK(BM_TreeInduction)->Arg(3)->Arg(6)->Arg(-1)->Unit(benchmark::kMillisecond);

void BM_Predict(benchmark::State& state) {
  const auto model = lh::mlselect::ClassifierModel::load(kData / "models" / "linear.json");
  const auto features = lh::mlselect::to_features(lh::matfeat::compute_features(random_matrix(200, 4)));
  for (auto _ : state) benchmark::DoNotOptimize(model.predict(features));
}
BENCHMARK(BM_Predict);

}  // namespace

BENCHMARK_MAIN();
