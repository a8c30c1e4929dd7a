#include <algorithm>
#include <random>
#include <set>

#include "doctest.h"
#include "lh/error.hpp"
#include "lh/taxonomy.hpp"
#include "lh/util.hpp"
#include "support/random_tree.hpp"

using namespace lh::taxonomy;

namespace {

const std::string kDataDir = LH_TEST_DATA_DIR;

const Taxonomy& small() {
  static const Taxonomy tax = Taxonomy::load(kDataDir + "/taxonomy/lapack_small.json");
  return tax;
}

const Taxonomy& full() {
  static const Taxonomy tax = Taxonomy::load(kDataDir + "/taxonomy/lapack_linear.json");
  return tax;
}

const std::vector<std::string> kTranscript = {"Solve a system of linear equations only",
                                              "AX = B", "No", "general", "band", "double"};

GuidedSession run_transcript(const Taxonomy& tax, std::vector<std::string>* asked = nullptr) {
  auto s = start_session(tax, Library::lapack, "s1");
  for (const auto& reply : kTranscript) {
    const Question* q = current_question(tax, s);
    REQUIRE(q != nullptr);
    if (asked) asked->push_back(q->text);
    auto key = resolve_option(*q, reply);
    REQUIRE_MESSAGE(key.has_value(), "no option for '" << reply << "' in " << q->id);
    s = answer(tax, s, *key);
  }
  return s;
}

std::string minimal_doc(const std::string& nodes, const std::string& routines =
                                                      R"([{"id":"R1","library":"LAPACK","name":"R1","precision":"double","scalar_field":"real","problem_class":"p"},
                                                          {"id":"R2","library":"LAPACK","name":"R2","precision":"double","scalar_field":"real","problem_class":"p"}])") {
  return R"({"routines":)" + routines + R"(,
    "questions":[{"id":"q","text":"Which?","facet":"precision",
                  "options":[{"key":"single","text":"single"},{"key":"double","text":"double"}]}],
    "trees":[{"library":"LAPACK","root":"a","nodes":)" +
         nodes + "}]}";
}

}  // namespace

TEST_CASE("load_taxonomy: shipped fixtures") {
  CHECK(small().routines().size() == 12);
  CHECK(small().libraries() == std::vector<Library>{Library::lapack});
  CHECK(full().routines().size() >= 40);
  std::set<std::string> types, storages;
  for (const auto& r : full().routines()) {
    types.insert(r.matrix_type);
    storages.insert(r.storage);
  }
  CHECK(types.size() == 6);
  CHECK(storages.size() == 4);
}

TEST_CASE("load_taxonomy: validation errors name their location") {
  SUBCASE("edge to a missing node") {
    const auto doc = minimal_doc(R"([{"id":"a","question":"q","edges":[{"option":"single","node":"b"},
                                                                     {"option":"double","node":"ghost"}]},
                                     {"id":"b","payload":["R1"]}])");
    try {
      Taxonomy::parse(doc);
      FAIL("expected a validation error");
    } catch (const lh::Error& e) {
      CHECK(e.kind() == lh::ErrorKind::validation);
      CHECK(std::string(e.what()).find("ghost") != std::string::npos);
    }
  }
  SUBCASE("empty routine list") {
    const auto doc = minimal_doc(R"([{"id":"a","payload":["R1"]}])", "[]");
    CHECK_THROWS_WITH(Taxonomy::parse(doc), doctest::Contains("empty taxonomy"));
  }
  SUBCASE("cycle") {
    const auto doc = minimal_doc(R"([{"id":"a","question":"q","edges":[{"option":"single","node":"b"},
                                                                     {"option":"double","node":"c"}]},
                                     {"id":"b","payload":["R1"]},
                                     {"id":"c","question":"q","edges":[{"option":"single","node":"a"},
                                                                     {"option":"double","node":"b"}]}])");
    CHECK_THROWS_AS(Taxonomy::parse(doc), lh::Error);
  }
  SUBCASE("dangling routine reference") {
    const auto doc = minimal_doc(R"([{"id":"a","question":"q","edges":[{"option":"single","node":"b"},
                                                                     {"option":"double","node":"c"}]},
                                     {"id":"b","payload":["R1"]},{"id":"c","payload":["NOPE"]}])");
    CHECK_THROWS_WITH(Taxonomy::parse(doc), doctest::Contains("NOPE"));
  }
  SUBCASE("malformed JSON") {
    CHECK_THROWS_AS(Taxonomy::parse("{not json"), lh::Error);
  }
  SUBCASE("valid minimal document") {
    const auto doc = minimal_doc(R"([{"id":"a","question":"q","edges":[{"option":"single","node":"b"},
                                                                     {"option":"double","node":"c"}]},
                                     {"id":"b","payload":["R1"]},{"id":"c","payload":["R2"]}])");
    auto tax = Taxonomy::parse(doc);
    CHECK(tax.tree(Library::lapack)->leaf_count() == 2);
  }
}

TEST_CASE("start_session") {
  auto s = start_session(small(), Library::lapack, "abc");
  CHECK_FALSE(s.finished);
  CHECK(s.candidates.size() == 12);
  std::vector<std::string> all;
  for (const auto& r : small().routines()) all.push_back(r.id);
  std::sort(all.begin(), all.end());
  CHECK(s.candidates == all);
  CHECK(current_question(small(), s)->text ==
        "Which of the following functions do you wish to execute?");
  CHECK_THROWS_AS(start_session(small(), Library::slepc), lh::Error);
}

TEST_CASE("answer: the DGBSV transcript on both fixtures") {
  for (const Taxonomy* tax : {&small(), &full()}) {
    std::vector<std::string> asked;
    auto s = run_transcript(*tax, &asked);
    CHECK(s.finished);
    CHECK(s.candidates == std::vector<std::string>{"DGBSV"});
    CHECK(asked == std::vector<std::string>{
                       "Which of the following functions do you wish to execute?",
                       "What form of the linear system do you want to solve?",
                       "Are there complex numbers in your matrix?",
                       "What is the type of your matrix?", "How is your matrix stored?",
                       "Would you like to use single or double precision?"});
    CHECK(current_question(*tax, s) == nullptr);
  }
  CHECK(completion_message == "End of guided search! Check out the result.");
}

TEST_CASE("answer: narrowing and errors") {
  auto s = start_session(full(), Library::lapack);
  auto next = answer(full(), s, "linear_solve");
  CHECK(next.candidates.size() < s.candidates.size());
  CHECK(std::includes(s.candidates.begin(), s.candidates.end(), next.candidates.begin(),
                      next.candidates.end()));
  try {
    answer(full(), s, "purple");
    FAIL("expected an error");
  } catch (const lh::Error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("linear_solve") != std::string::npos);
    CHECK(msg.find("linear_solve_expert") != std::string::npos);
  }
  auto done = run_transcript(full());
  CHECK_THROWS_AS(answer(full(), done, "double"), lh::Error);
}

TEST_CASE("back: inverse and idempotence") {
  const auto start = start_session(full(), Library::lapack, "s1");
  auto s = run_transcript(full());
  for (std::size_t i = 0; i < kTranscript.size(); ++i) s = back(full(), s);
  CHECK(s == start);
  CHECK_THROWS_AS(back(full(), s), lh::Error);

  auto one = answer(full(), start, "linear_solve");
  auto two = answer(full(), one, "ax_b");
  auto again = answer(full(), back(full(), two), "ax_b");
  CHECK(again == two);
}

TEST_CASE("guided search: partition property and determinism") {
  const auto* tree = full().tree(Library::lapack);
  for (const auto& [ref, node] : tree->nodes) {
    const auto& here = full().candidates(Library::lapack, ref);
    CHECK_FALSE(here.empty());
    if (const auto* inner = std::get_if<InternalNode>(&node)) {
      std::set<std::string> u;
      for (const auto& e : inner->edges) {
        const auto& c = full().candidates(Library::lapack, e.second);
        u.insert(c.begin(), c.end());
      }
      CHECK(std::vector<std::string>(u.begin(), u.end()) == here);
    }
  }
  // Interleaving two sessions does not change either result.
  auto a = start_session(full(), Library::lapack, "a");
  auto b = start_session(full(), Library::lapack, "b");
  const std::vector<std::string> keys_a = {"linear_solve", "ax_b", "real", "general", "band", "double"};
  const std::vector<std::string> keys_b = {"linear_solve_expert", "ax_b", "complex", "hpd", "packed", "single"};
  for (std::size_t i = 0; i < keys_a.size(); ++i) {
    a = answer(full(), a, keys_a[i]);
    b = answer(full(), b, keys_b[i]);
  }
  CHECK(a.candidates == std::vector<std::string>{"DGBSV"});
  CHECK(b.candidates == std::vector<std::string>{"CPPSVX"});
}

TEST_CASE("routine facets are consistent with every path that reaches them") {
  const auto* tree = full().tree(Library::lapack);
  for (const auto& path : lh::testing::enumerate_paths(*tree)) {
    const auto& payload = tree->traverse(path.keys);
    for (const auto& id : payload) {
      const auto& r = full().routine(id);
      for (const auto& [facet, key] : path.answers) {
        auto values = r.facet_values(facet);
        CHECK_MESSAGE(std::find(values.begin(), values.end(), key) != values.end(),
                      id << " reached with " << facet << "=" << key);
      }
    }
  }
}

TEST_CASE("flatten_tree") {
  SUBCASE("three leaves") {
    std::mt19937_64 rng(7);
    auto t = lh::testing::random_tree(rng, 3);
    CHECK(flatten_tree(t).size() == 3);
  }
  SUBCASE("single leaf") {
    DecisionTree t;
    t.root = "only";
    t.nodes["only"] = LeafNode{{"X"}};
    validate(t);
    auto table = flatten_tree(t);
    REQUIRE(table.size() == 1);
    CHECK(table.rows()[0].answers.empty());
    CHECK(table.lookup({}) == std::vector<std::string>{"X"});
  }
  SUBCASE("DFS order follows option order") {
    const auto table = flatten_tree(*small().tree(Library::lapack));
    REQUIRE(table.size() == small().tree(Library::lapack)->leaf_count());
    const auto& first = table.rows().front();
    CHECK(first.answers.front() == Answer{"problem_class", "linear_solve"});
    CHECK(table.rows().back().answers.front() == Answer{"problem_class", "linear_solve_expert"});
    CHECK(table.facets().front() == "problem_class");
  }
  SUBCASE("randomised: rows = leaves, lookup = traversal") {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 25; ++trial) {
      const std::size_t leaves = std::uniform_int_distribution<std::size_t>(1, 200)(rng);
      auto t = lh::testing::random_tree(rng, leaves);
      validate(t);
      auto table = flatten_tree(t);
      CHECK(table.size() == t.leaf_count());
      CHECK(table.size() == leaves);
      for (const auto& path : lh::testing::enumerate_paths(t))
        CHECK(table.lookup(path.answers) == t.traverse(path.keys));
    }
  }
}

TEST_CASE("lookup_path on the fixture tree") {
  const auto* tree = full().tree(Library::lapack);
  const auto table = flatten_tree(*tree);
  const auto paths = lh::testing::enumerate_paths(*tree);
  CHECK(paths.size() == table.size());
  for (const auto& path : paths) CHECK(lookup_path(table, path.answers) == tree->traverse(path.keys));

  const std::vector<Answer> dgbsv = {{"problem_class", "linear_solve"}, {"form", "ax_b"},
                                     {"scalar_field", "real"},          {"matrix_type", "general"},
                                     {"storage", "band"},               {"precision", "double"}};
  CHECK(lookup_path(table, dgbsv) == std::vector<std::string>{"DGBSV"});
  const std::vector<Answer> prefix(dgbsv.begin(), dgbsv.begin() + 3);
  CHECK_THROWS_WITH(lookup_path(table, prefix), doctest::Contains("incomplete path"));
  auto contradictory = dgbsv;
  contradictory[3] = {"matrix_type", "hermitian"};
  CHECK_THROWS_WITH(lookup_path(table, contradictory), doctest::Contains("no row"));

  const auto csv = table.to_csv();
  CHECK(csv.rfind("problem_class,form,scalar_field,matrix_type,storage,precision,result\n", 0) == 0);
}

TEST_CASE("routine_doc") {
  auto doc = routine_doc(full(), "DGBSV");
  CHECK(doc.name == "DGBSV");
  CHECK_FALSE(doc.documentation.empty());
  std::set<std::string> names;
  for (const auto& p : doc.parameters) names.insert(p.name);
  CHECK(names.count("AB"));
  CHECK(names.count("IPIV"));
  CHECK(names.count("LDAB"));
  CHECK_THROWS_AS(routine_doc(full(), "NOPE"), lh::Error);

  const auto& r = full().routine("DGBSV");
  const auto text = routine_to_json(r);
  const auto back_again = routine_from_json(text);
  CHECK(back_again == r);
  CHECK(routine_to_json(back_again) == text);
}

TEST_CASE("whole document round-trips") {
  const auto text = full().to_json();
  const auto again = Taxonomy::parse(text);
  CHECK(again.to_json() == text);
  CHECK(again.routines() == full().routines());
}

TEST_CASE("advanced search is conjunctive facet filtering") {
  FacetFilter f{{"scalar_field", {"complex"}}, {"matrix_type", {"general"}}, {"storage", {"band"}}};
  auto hits = full().filter(f);
  std::set<std::string> ids;
  for (const auto* r : hits) ids.insert(r->id);
  CHECK(ids == std::set<std::string>{"CGBSV", "ZGBSV", "CGBSVX", "ZGBSVX"});
  FacetFilter multi{{"precision", {"double"}}, {"form", {"ahx_b"}}};
  for (const auto* r : full().filter(multi)) CHECK(r->scalar_field == ScalarField::complex);
}
