#include <cmath>
#include <random>
#include <set>

#include "doctest.h"
#include "json.hpp"
#include "lh/error.hpp"
#include "lh/mlselect.hpp"
#include "support/jacobi_eigen.hpp"
#include "support/ml_data.hpp"

using namespace lh::mlselect;
using lh::testing::cfg;
using lh::testing::instance;

namespace {

RunRecord run(const std::string& problem, const std::string& key, double time, bool converged = true,
              double residual = 1e-10) {
  RunRecord r;
  r.problem_id = problem;
  r.features = {{"x", 1.0}};
  r.config = cfg(key);
  r.converged = converged;
  r.time_seconds = time;
  r.residual = residual;
  r.request.tolerance = 1e-8;
  return r;
}

std::set<std::string> keys_of(const std::vector<SolverConfig>& v) {
  std::set<std::string> out;
  for (const auto& c : v) out.insert(c.key());
  return out;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST_CASE("SolverConfig keys") {
  auto c = SolverConfig::parse("GMRES/ILU(2)");
  CHECK(c.method == "gmres");
  CHECK(c.preconditioner == "ilu");
  CHECK(c.extra.at("levels") == "2");
  CHECK(c.key() == "gmres/ilu(2)");
  CHECK(SolverConfig::parse("krylovschur;which=lm").key() == "krylovschur;which=lm");
  for (const char* k : {"cg", "cg/jacobi", "gmres/ilu(0);restart=30", "power"})
    CHECK(SolverConfig::parse(SolverConfig::parse(k).key()).key() == k);
  CHECK_NOTHROW(validate(cfg("bicgstab/asm"), ProblemKind::linear));
  CHECK_NOTHROW(validate(cfg("krylovschur"), ProblemKind::eigen));
  CHECK_THROWS_AS(validate(cfg("krylovschur"), ProblemKind::linear), lh::Error);
  CHECK_THROWS_AS(validate(cfg("gmres/amg"), ProblemKind::linear), lh::Error);
  CHECK_THROWS_AS(SolverConfig::parse("/jacobi"), lh::Error);
  CHECK_THROWS_AS(SolverConfig::parse("gmres/ilu(x)"), lh::Error);
  CHECK(linear_methods().size() == 7);
  CHECK(eigen_methods().size() == 7);
}

TEST_CASE("derive_labels: examples") {
  SUBCASE("ratio boundary") {
    auto rep = derive_labels({run("p", "cg/jacobi", 10.0), run("p", "gmres/jacobi", 10.9), run("p", "tfqmr/sor", 12.0)});
    REQUIRE(rep.instances.size() == 1);
    CHECK(rep.instances[0].best.key() == "cg/jacobi");
    CHECK(keys_of(rep.instances[0].near_best) == std::set<std::string>{"cg/jacobi", "gmres/jacobi"});
  }
  SUBCASE("fastest run did not converge") {
    auto rep = derive_labels({run("p", "cg/jacobi", 10.0), run("p", "gmres/jacobi", 5.0, false)});
    CHECK(rep.instances[0].best.key() == "cg/jacobi");
  }
  SUBCASE("residual above tolerance") {
    auto rep = derive_labels({run("p", "cg/jacobi", 10.0), run("p", "gmres/jacobi", 5.0, true, 1e-4)});
    CHECK(rep.instances[0].best.key() == "cg/jacobi");
    auto loose = derive_labels({run("p", "cg/jacobi", 10.0), run("p", "gmres/jacobi", 5.0, true, 1e-4)}, 1e-3);
    CHECK(loose.instances[0].best.key() == "gmres/jacobi");
  }
  SUBCASE("too few converged eigenvalues") {
    auto a = run("e", "krylovschur", 2.0), b = run("e", "arnoldi", 1.0);
    a.request.nev = b.request.nev = 4;
    a.converged_count = 4;
    b.converged_count = 3;
    auto rep = derive_labels({a, b});
    CHECK(rep.instances[0].best.key() == "krylovschur");
    CHECK(std::get<double>(rep.instances[0].features.at("request_nev")) == 4.0);
  }
  SUBCASE("problem without eligible runs is reported") {
    auto rep = derive_labels({run("a", "cg", 1.0, false), run("b", "cg", 1.0)});
    CHECK(rep.excluded == std::vector<std::string>{"a"});
    CHECK(rep.instances.size() == 1);
  }
  SUBCASE("ties go to the smaller key") {
    auto rep = derive_labels({run("p", "gmres/jacobi", 3.0), run("p", "bicgstab/sor", 3.0)}, std::nullopt, 1.0);
    CHECK(rep.instances[0].best.key() == "bicgstab/sor");
    CHECK(rep.instances[0].near_best.size() == 2);
  }
  SUBCASE("invalid inputs") {
    CHECK_THROWS_AS(derive_labels({run("p", "cg", 0.0)}), lh::Error);
    CHECK_THROWS_AS(derive_labels({run("p", "cg", 1.0)}, std::nullopt, 0.9), lh::Error);
  }
}

TEST_CASE("derive_labels: brute-force oracle and invariants") {
  std::mt19937_64 rng(42);
  const auto runs = lh::testing::random_runs(rng, 200);
  for (double ratio : {1.0, 1.05, 1.10, 1.5}) {
    const auto rep = derive_labels(runs, std::nullopt, ratio);
    const auto want = lh::testing::oracle_labels(runs, ratio);
    REQUIRE(rep.instances.size() == want.size());
    for (std::size_t i = 0; i < want.size(); ++i) {
      CHECK(rep.instances[i].problem_id == want[i].problem_id);
      CHECK(rep.instances[i].best.key() == want[i].best);
      CHECK(keys_of(rep.instances[i].near_best) == want[i].near_best);
      CHECK(keys_of(rep.instances[i].near_best).count(rep.instances[i].best.key()));
    }
    CHECK(rep.instances.size() + rep.excluded.size() == 200);
  }

  // Argmin at ratio 1.0.
  for (const auto& inst : derive_labels(runs, std::nullopt, 1.0).instances) {
    double best_time = 1e300;
    for (const auto& r : runs)
      if (r.problem_id == inst.problem_id && r.config.key() == inst.best.key() && r.converged)
        best_time = std::min(best_time, r.time_seconds);
    for (const auto& c : inst.near_best) {
      bool tied = false;
      for (const auto& r : runs)
        if (r.problem_id == inst.problem_id && r.config.key() == c.key() && r.time_seconds == best_time) tied = true;
      CHECK(tied);
    }
  }

  // Monotone in the ratio, invariant under time scaling.
  std::uniform_real_distribution<double> scale(0.01, 100.0);
  for (int trial = 0; trial < 20; ++trial) {
    const auto sample = lh::testing::random_runs(rng, 30);
    auto scaled = sample;
    const double c = scale(rng);
    for (auto& r : scaled) r.time_seconds *= c;
    const auto a = derive_labels(sample);
    const auto b = derive_labels(scaled);
    REQUIRE(a.instances.size() == b.instances.size());
    for (std::size_t i = 0; i < a.instances.size(); ++i) {
      CHECK(a.instances[i].best == b.instances[i].best);
      CHECK(keys_of(a.instances[i].near_best) == keys_of(b.instances[i].near_best));
    }
    const auto wide = derive_labels(sample, std::nullopt, 1.3);
    const auto narrow = derive_labels(sample, std::nullopt, 1.02);
    for (std::size_t i = 0; i < wide.instances.size(); ++i) {
      const auto w = keys_of(wide.instances[i].near_best), n = keys_of(narrow.instances[i].near_best);
      CHECK(std::includes(w.begin(), w.end(), n.begin(), n.end()));
    }
  }
}

TEST_CASE("fit_pca") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> normal(0.0, 1.0);

  SUBCASE("orthonormal components and trace") {
    std::vector<std::string> names;
    for (int j = 0; j < 10; ++j) names.push_back("f" + std::to_string(j));
    std::vector<std::vector<double>> samples(100, std::vector<double>(10));
    for (auto& s : samples) {
      const double shared = normal(rng);
      for (int j = 0; j < 10; ++j) s[static_cast<std::size_t>(j)] = normal(rng) * (j + 1) + shared * j;
    }
    const auto pca = fit_pca(names, samples);
    REQUIRE(pca.components.size() == 10);
    for (std::size_t a = 0; a < 10; ++a)
      for (std::size_t b = 0; b < 10; ++b)
        CHECK(std::abs(dot(pca.components[a], pca.components[b]) - (a == b ? 1.0 : 0.0)) <= 1e-10);
    double total = 0;
    for (std::size_t k = 0; k < 10; ++k) {
      total += pca.explained[k];
      CHECK(pca.explained[k] >= 0);
      if (k) CHECK(pca.explained[k] <= pca.explained[k - 1]);
    }
    CHECK(std::abs(total - 10.0) <= 1e-8);

    // Jacobi oracle on the standardized covariance.
    std::vector<double> mean(10, 0), sd(10, 0);
    for (const auto& s : samples)
      for (std::size_t j = 0; j < 10; ++j) mean[j] += s[j] / 100.0;
    for (const auto& s : samples)
      for (std::size_t j = 0; j < 10; ++j) sd[j] += (s[j] - mean[j]) * (s[j] - mean[j]) / 99.0;
    std::vector<std::vector<double>> cov(10, std::vector<double>(10, 0.0));
    for (const auto& s : samples)
      for (std::size_t i = 0; i < 10; ++i)
        for (std::size_t j = 0; j < 10; ++j)
          cov[i][j] += (s[i] - mean[i]) / std::sqrt(sd[i]) * (s[j] - mean[j]) / std::sqrt(sd[j]) / 99.0;
    const auto oracle = lh::testing::jacobi_eigen(cov);
    for (std::size_t k = 0; k < 10; ++k) {
      CHECK(std::abs(pca.explained[k] - oracle.values[k]) <= 1e-8);
      CHECK(std::abs(std::abs(dot(pca.components[k], oracle.vectors[k])) - 1.0) <= 1e-8);
    }
  }
  SUBCASE("isotropic data") {
    std::vector<std::vector<double>> samples(20000, std::vector<double>(4));
    for (auto& s : samples)
      for (auto& x : s) x = normal(rng);
    const auto pca = fit_pca({"a", "b", "c", "d"}, samples);
    for (double v : pca.explained) CHECK(v == doctest::Approx(1.0).epsilon(0.05));
  }
  SUBCASE("data on a line") {
    std::vector<std::vector<double>> samples;
    for (int i = 0; i < 50; ++i) {
      const double t = normal(rng);
      samples.push_back({2 * t + 1, -t, 0.5 * t + 3, 7.0});
    }
    const auto pca = fit_pca({"a", "b", "c", "const"}, samples);
    CHECK(pca.dropped == std::vector<std::string>{"const"});
    CHECK(pca.explained[0] == doctest::Approx(3.0));
    CHECK(std::abs(pca.explained[1]) <= 1e-10);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(fit_pca({"a"}, {{1.0}}), lh::Error);
    CHECK_THROWS_AS(fit_pca({"a", "b"}, {{1.0, 2.0}, {1.0, 2.0}}), lh::Error);
  }
}

TEST_CASE("select_features") {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> normal(0.0, 1.0), small(0.0, std::sqrt(0.005));
  // f1, f2, f3 carry the signal; the others are noisy copies, at least two
  // per group so the original is the most correlated member.
  const std::vector<std::string> names = {"f1", "f2", "f3", "c1a", "c1b", "c1c", "c1d", "c2a", "c2b", "c2c", "c3a", "c3b"};
  std::vector<std::vector<double>> samples;
  for (int i = 0; i < 5000; ++i) {
    const double z1 = normal(rng), z2 = normal(rng), z3 = normal(rng);
    samples.push_back({z1, z2, z3, z1 + small(rng), z1 + small(rng), z1 + small(rng), z1 + small(rng),
                       z2 + small(rng), z2 + small(rng), z2 + small(rng), z3 + small(rng), z3 + small(rng)});
  }
  const auto pca = fit_pca(names, samples);
  double top = 0, total = 0;
  for (std::size_t k = 0; k < pca.explained.size(); ++k) {
    total += pca.explained[k];
    if (k < 3) top += pca.explained[k];
  }
  CHECK(top / total >= 0.99);
  const auto sel = select_features(pca, 3);
  CHECK(std::set<std::string>(sel.begin(), sel.end()) == std::set<std::string>{"f1", "f2", "f3"});
  const auto all = select_features(pca, names.size());
  CHECK(std::set<std::string>(all.begin(), all.end()) == std::set<std::string>(names.begin(), names.end()));
  CHECK_THROWS_AS(select_features(pca, 0), lh::Error);
  CHECK_THROWS_AS(select_features(pca, names.size() + 1), lh::Error);
}

TEST_CASE("induce_tree") {
  SUBCASE("single separable feature") {
    std::vector<LabeledInstance> data;
    for (int v = 1; v <= 10; ++v)
      data.push_back(instance("i" + std::to_string(v), {{"f", double(v)}}, v <= 5 ? "cg/jacobi" : "gmres/ilu(1)"));
    const auto model = induce_tree(data);
    CHECK(model.depth == 1);
    CHECK(model.leaf_count() == 2);
    CHECK(model.splits.at(model.tree.root).threshold == 5.5);
    CHECK(accuracy(model, data) == 1.0);
  }
  SUBCASE("conflict-free data is fit exactly") {
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<int> grid(0, 4);
    std::uniform_int_distribution<std::size_t> pick(0, 4);
    std::map<std::pair<int, int>, std::string> seen;
    std::vector<LabeledInstance> data;
    for (int i = 0; i < 300; ++i) {
      const int a = grid(rng), b = grid(rng);
      auto [it, fresh] = seen.emplace(std::make_pair(a, b), lh::testing::class_keys()[pick(rng)]);
      LabeledInstance inst = instance("c" + std::to_string(i), {{"a", double(a)}, {"b", double(b)}}, it->second);
      inst.features["kind"] = std::string(a % 2 ? "odd" : "even");
      data.push_back(inst);
    }
    for (auto crit : {Criterion::entropy, Criterion::gini}) {
      TreeParams p;
      p.criterion = crit;
      const auto model = induce_tree(data, p);
      CHECK(accuracy(model, data, true) == 1.0);
      // Every training point lands on a leaf containing its label.
      for (const auto& inst : data) CHECK(keys_of(model.predict(inst.features)).count(inst.best.key()));
    }
  }
  SUBCASE("hidden depth-3 tree is recovered") {
    std::mt19937_64 rng(17);
    const auto train = lh::testing::hidden_tree_data(rng, 1000);
    const auto held_out = lh::testing::hidden_tree_data(rng, 1000);
    const auto model = induce_tree(train);
    CHECK(accuracy(model, train) == 1.0);
    CHECK(accuracy(model, held_out) >= 0.95);
  }
  SUBCASE("categorical splits") {
    std::vector<LabeledInstance> data;
    for (int i = 0; i < 12; ++i) {
      const std::string spectrum = i % 3 == 0 ? "largest_magnitude" : (i % 3 == 1 ? "smallest_real" : "interior");
      data.push_back(instance("e" + std::to_string(i), {{"spectrum", spectrum}, {"n", double(i)}},
                              spectrum == "interior" ? "jacobi_davidson" : "krylovschur"));
    }
    const auto model = induce_tree(data);
    CHECK(model.leaf_count() == 2);
    CHECK_FALSE(model.splits.at(model.tree.root).numeric);
    CHECK(model.splits.at(model.tree.root).category == "interior");
    CHECK(model.predict({{"spectrum", std::string("interior")}, {"n", 0.0}}).front().key() == "jacobi_davidson");
  }
  SUBCASE("near_best payloads") {
    std::vector<LabeledInstance> data;
    for (int i = 0; i < 6; ++i) {
      auto inst = instance("n" + std::to_string(i), {{"f", double(i)}}, i < 3 ? "cg/jacobi" : "gmres/sor");
      inst.near_best = {inst.best, cfg(i % 2 ? "tfqmr/asm" : "bicg/sor")};
      data.push_back(inst);
    }
    TreeParams p;
    p.target = Target::near_best;
    const auto model = induce_tree(data, p);
    const auto pred = model.predict_keys({{"f", 0.0}});
    CHECK(pred.front() == "cg/jacobi");
    CHECK(std::set<std::string>(pred.begin(), pred.end()) ==
          std::set<std::string>{"cg/jacobi", "tfqmr/asm", "bicg/sor"});
  }
  SUBCASE("max depth and min leaf size") {
    std::mt19937_64 rng(3);
    const auto data = lh::testing::hidden_tree_data(rng, 400);
    TreeParams p;
    p.max_depth = 2;
    const auto model = induce_tree(data, p);
    CHECK(model.depth <= 2);
    CHECK(model.leaf_count() <= 4);
    p.max_depth = 0;
    CHECK(induce_tree(data, p).leaf_count() == 1);
    p.max_depth = -1;
    p.min_leaf_size = 50;
    const auto coarse = induce_tree(data, p);
    for (const auto& row : export_model(coarse).rows()) CHECK_FALSE(row.result.empty());
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(induce_tree({}), lh::Error);
    std::vector<LabeledInstance> bad = {instance("a", {{"f", std::nan("")}}, "cg")};
    CHECK_THROWS_AS(induce_tree(bad), lh::Error);
    std::vector<LabeledInstance> mixed = {instance("a", {{"f", 1.0}}, "cg"),
                                          instance("b", {{"f", std::string("x")}}, "cg")};
    CHECK_THROWS_AS(induce_tree(mixed), lh::Error);
  }
}

TEST_CASE("predict, serialization and export") {
  std::mt19937_64 rng(23);
  const auto data = lh::testing::hidden_tree_data(rng, 600);
  const auto model = induce_tree(data);

  SUBCASE("missing feature is named") {
    CHECK_THROWS_WITH(model.predict({{"x1", 0.2}}), doctest::Contains("x0"));
  }
  SUBCASE("prediction equals an independent traversal") {
    for (const auto& inst : data) {
      auto ref = model.tree.root;
      while (!model.tree.is_leaf(ref)) {
        const auto& s = model.splits.at(ref);
        const auto& inner = std::get<lh::taxonomy::InternalNode>(model.tree.node(ref));
        ref = inner.edges[std::get<double>(inst.features.at(s.feature)) <= s.threshold ? 0 : 1].second;
      }
      CHECK(std::get<lh::taxonomy::LeafNode>(model.tree.node(ref)).payload == model.predict_keys(inst.features));
    }
  }
  SUBCASE("deterministic serialization and round trip") {
    const auto text = model.to_json();
    CHECK(induce_tree(data).to_json() == text);
    const auto again = ClassifierModel::from_json(text);
    CHECK(again == model);
    CHECK(again.to_json() == text);
    auto j = nlohmann::json::parse(text);
    CHECK(j["format_version"] == 1);
    CHECK(j["leaf_count"] == model.leaf_count());
    j["nodes"][0]["children"][0] = "nowhere";
    CHECK_THROWS_AS(ClassifierModel::from_json(j.dump()), lh::Error);
    CHECK_THROWS_AS(ClassifierModel::from_json("{"), lh::Error);
  }
  SUBCASE("table lookup equals prediction") {
    const auto table = export_model(model);
    CHECK(table.size() == model.leaf_count());
    std::mt19937_64 probe(99);
    for (const auto& inst : data) CHECK(lookup_features(table, inst.features) == model.predict_keys(inst.features));
    for (int i = 0; i < 500; ++i) {
      const auto f = lh::testing::random_features(probe, 5);
      CHECK(lookup_features(table, f) == model.predict_keys(f));
    }
  }
  SUBCASE("395 leaves give 395 rows") {
    std::vector<LabeledInstance> wide;
    for (int i = 0; i < 395; ++i)
      wide.push_back(instance("w" + std::to_string(i), {{"f", double(i)}}, "gmres;tag=" + std::to_string(i)));
    const auto big = induce_tree(wide);
    CHECK(big.leaf_count() == 395);
    CHECK(export_model(big).size() == 395);
  }
  SUBCASE("depth-0 model gives one row") {
    const auto single = induce_tree({instance("a", {{"f", 1.0}}, "cg"), instance("b", {{"f", 2.0}}, "cg")});
    CHECK(single.depth == 0);
    const auto table = export_model(single);
    CHECK(table.size() == 1);
    CHECK(lookup_features(table, {{"f", 7.0}}) == std::vector<std::string>{"cg"});
  }
}

TEST_CASE("cross_validate") {
  SUBCASE("fold sizes") {
    std::mt19937_64 rng(5);
    const auto data = lh::testing::shuffled_label_data(rng, 103, 4);
    const auto folds = stratified_folds(data, 10, 77);
    std::size_t lo = SIZE_MAX, hi = 0, total = 0;
    std::set<std::size_t> all;
    for (const auto& f : folds) {
      lo = std::min(lo, f.size());
      hi = std::max(hi, f.size());
      total += f.size();
      all.insert(f.begin(), f.end());
    }
    CHECK(hi - lo <= 1);
    CHECK(total == 103);
    CHECK(all.size() == 103);
    CHECK(stratified_folds(data, 10, 77) == folds);
    CHECK_THROWS_AS(stratified_folds(data, 1, 0), lh::Error);
    CHECK_THROWS_AS(stratified_folds(data, 104, 0), lh::Error);
  }
  SUBCASE("identical halves") {
    std::vector<LabeledInstance> data;
    for (int copy = 0; copy < 2; ++copy)
      for (int c = 0; c < 5; ++c)
        data.push_back(instance("d" + std::to_string(copy) + std::to_string(c), {{"f", double(c)}},
                                lh::testing::class_keys()[static_cast<std::size_t>(c)]));
    const auto cv = cross_validate(data, 2, {}, 1);
    CHECK(cv.mean_accuracy == 1.0);
  }
  SUBCASE("label-shuffled data is at chance level") {
    std::mt19937_64 rng(2024);
    const auto data = lh::testing::shuffled_label_data(rng, 2000, 5);
    const auto cv = cross_validate(data, 10, {}, 7);
    CHECK(cv.fold_accuracy.size() == 10);
    CHECK(std::abs(cv.mean_accuracy - 0.2) <= 0.1);
  }
  SUBCASE("learnable data scores high") {
    std::mt19937_64 rng(31);
    const auto data = lh::testing::hidden_tree_data(rng, 1000);
    CHECK(cross_validate(data, 10, {}, 3).mean_accuracy >= 0.9);
  }
}

TEST_CASE("corpus CSV and synthetic runs") {
  const auto runs = synthetic_runs({12, 20, 40, 9});
  CHECK(runs.size() == 12 * synthetic_configs().size());
  CHECK(synthetic_runs({12, 20, 40, 9}) == runs);
  const auto text = to_corpus_csv(runs);
  const auto again = parse_corpus_csv(text);
  CHECK(again == runs);
  CHECK(to_corpus_csv(again) == text);
  const auto labels = derive_labels(runs);
  CHECK(labels.instances.size() == 12);

  auto eigen = run("e1", "krylovschur;which=lm", 1.5);
  eigen.request = {4, "largest_magnitude", 1e-8, 2};
  eigen.converged_count = 5;
  eigen.features["family"] = std::string("laplace");
  CHECK(parse_corpus_csv(to_corpus_csv({eigen})) == std::vector<RunRecord>{eigen});

  CHECK_THROWS_AS(parse_corpus_csv("problem_id,x\np,1\n"), lh::Error);
  try {
    parse_corpus_csv(
        "problem_id,x,method,preconditioner,converged,time_seconds,residual,converged_count,nev,spectrum,tolerance,"
        "processors\np,1,cg,jacobi,maybe,1,0,,,,,\n");
    FAIL("accepted a bad converged cell");
  } catch (const lh::LocatedError& e) {
    CHECK(e.line() == 2);
  }
}
