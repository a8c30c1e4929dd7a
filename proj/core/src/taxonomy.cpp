#include "lh/taxonomy.hpp"

#include <algorithm>
#include <functional>
#include <nlohmann/json.hpp>

#include "lh/error.hpp"
#include "lh/util.hpp"

namespace lh::taxonomy {

using json = nlohmann::ordered_json;

namespace {

constexpr int kFormatVersion = 1;

[[noreturn]] void invalid(const std::string& where, const std::string& what) {
  throw Error(ErrorKind::validation, where + ": " + what);
}

template <typename Enum, std::size_t N>
Enum parse_enum(std::string_view text, const std::pair<std::string_view, Enum> (&table)[N],
                std::string_view what) {
  const std::string lowered = to_lower(text);
  for (const auto& [name, value] : table)
    if (to_lower(name) == lowered) return value;
  fail(ErrorKind::parse, "unknown " + std::string(what) + " '" + std::string(text) + "'");
}

constexpr std::pair<std::string_view, Library> kLibraries[] = {
    {"LAPACK", Library::lapack}, {"PETSc", Library::petsc}, {"SLEPc", Library::slepc}};
constexpr std::pair<std::string_view, Precision> kPrecisions[] = {
    {"single", Precision::single_precision}, {"double", Precision::double_precision}};
constexpr std::pair<std::string_view, ScalarField> kFields[] = {
    {"real", ScalarField::real}, {"complex", ScalarField::complex}};
constexpr std::pair<std::string_view, ParamKind> kKinds[] = {
    {"integer", ParamKind::integer},         {"real_scalar", ParamKind::real_scalar},
    {"complex_scalar", ParamKind::complex_scalar}, {"array_1d", ParamKind::array_1d},
    {"array_2d", ParamKind::array_2d},       {"character", ParamKind::character}};
constexpr std::pair<std::string_view, Intent> kIntents[] = {
    {"in", Intent::in}, {"out", Intent::out}, {"inout", Intent::inout}};

template <typename Enum, std::size_t N>
std::string_view enum_name(Enum value, const std::pair<std::string_view, Enum> (&table)[N]) {
  for (const auto& [name, v] : table)
    if (v == value) return name;
  return "?";
}

std::string get_string(const json& obj, const char* key, const std::string& where,
                       bool required = true) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    if (required) invalid(where, std::string("missing key '") + key + "'");
    return {};
  }
  if (!it->is_string()) invalid(where, std::string("'") + key + "' must be a string");
  return it->get<std::string>();
}

const json& get_array(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_array())
    invalid(where, std::string("missing array '") + key + "'");
  return *it;
}

json param_to_json(const ParameterSpec& p) {
  json j;
  j["name"] = p.name;
  j["kind"] = to_string(p.kind);
  j["intent"] = to_string(p.intent);
  j["description"] = p.description;
  if (!p.element.empty()) j["element"] = p.element;
  if (!p.dims.empty()) j["dims"] = p.dims;
  if (!p.value.empty()) j["value"] = p.value;
  return j;
}

ParameterSpec param_from_json(const json& j, const std::string& where) {
  ParameterSpec p;
  p.name = get_string(j, "name", where);
  p.kind = parse_enum(get_string(j, "kind", where), kKinds, "parameter kind");
  p.intent = parse_enum(get_string(j, "intent", where), kIntents, "intent");
  p.description = get_string(j, "description", where, false);
  p.element = get_string(j, "element", where, false);
  if (auto it = j.find("dims"); it != j.end()) p.dims = it->get<std::vector<std::string>>();
  p.value = get_string(j, "value", where, false);
  return p;
}

json routine_json(const RoutineRecord& r) {
  json j;
  j["id"] = r.id;
  j["library"] = to_string(r.library);
  j["name"] = r.name;
  j["precision"] = to_string(r.precision);
  j["scalar_field"] = to_string(r.scalar_field);
  j["problem_class"] = r.problem_class;
  j["matrix_type"] = r.matrix_type;
  j["storage"] = r.storage;
  if (!r.facets.empty()) {
    json f = json::object();
    for (const auto& [k, v] : r.facets) f[k] = v;
    j["facets"] = f;
  }
  j["template_category"] = r.template_category;
  j["description"] = r.description;
  j["documentation"] = r.documentation;
  j["parameters"] = json::array();
  for (const auto& p : r.parameters) j["parameters"].push_back(param_to_json(p));
  return j;
}

RoutineRecord routine_from(const json& j, const std::string& where) {
  if (!j.is_object()) invalid(where, "routine must be an object");
  RoutineRecord r;
  r.id = get_string(j, "id", where);
  r.library = parse_enum(get_string(j, "library", where), kLibraries, "library");
  r.name = get_string(j, "name", where);
  r.precision = parse_enum(get_string(j, "precision", where), kPrecisions, "precision");
  r.scalar_field = parse_enum(get_string(j, "scalar_field", where), kFields, "scalar field");
  r.problem_class = get_string(j, "problem_class", where);
  r.matrix_type = get_string(j, "matrix_type", where, false);
  r.storage = get_string(j, "storage", where, false);
  if (auto it = j.find("facets"); it != j.end()) {
    for (const auto& [k, v] : it->items()) r.facets[k] = v.get<std::vector<std::string>>();
  }
  r.template_category = get_string(j, "template_category", where, false);
  r.description = get_string(j, "description", where, false);
  r.documentation = get_string(j, "documentation", where, false);
  if (auto it = j.find("parameters"); it != j.end()) {
    std::set<std::string> names;
    for (std::size_t i = 0; i < it->size(); ++i) {
      const std::string pwhere = where + ".parameters[" + std::to_string(i) + "]";
      auto p = param_from_json((*it)[i], pwhere);
      if (!names.insert(p.name).second) invalid(pwhere, "duplicate parameter name '" + p.name + "'");
      r.parameters.push_back(std::move(p));
    }
  }
  return r;
}

Question question_from(const json& j, const std::string& where) {
  Question q;
  q.id = get_string(j, "id", where);
  q.text = get_string(j, "text", where);
  q.facet = get_string(j, "facet", where);
  const auto& opts = get_array(j, "options", where);
  std::set<std::string> keys;
  for (std::size_t i = 0; i < opts.size(); ++i) {
    const std::string owhere = where + ".options[" + std::to_string(i) + "]";
    Option o{get_string(opts[i], "key", owhere), get_string(opts[i], "text", owhere)};
    if (!keys.insert(o.key).second) invalid(owhere, "duplicate option key '" + o.key + "'");
    q.options.push_back(std::move(o));
  }
  if (q.options.size() < 2) invalid(where, "question '" + q.id + "' needs at least 2 options");
  return q;
}

json question_json(const Question& q) {
  json j;
  j["id"] = q.id;
  j["text"] = q.text;
  j["facet"] = q.facet;
  j["options"] = json::array();
  for (const auto& o : q.options) j["options"].push_back({{"key", o.key}, {"text", o.text}});
  return j;
}

}  // namespace

std::string_view to_string(Library lib) { return enum_name(lib, kLibraries); }
std::string_view to_string(Precision p) { return enum_name(p, kPrecisions); }
std::string_view to_string(ScalarField f) { return enum_name(f, kFields); }
std::string_view to_string(ParamKind k) { return enum_name(k, kKinds); }
std::string_view to_string(Intent i) { return enum_name(i, kIntents); }
Library parse_library(std::string_view text) { return parse_enum(text, kLibraries, "library"); }
Intent parse_intent(std::string_view text) { return parse_enum(text, kIntents, "intent"); }

std::vector<std::string> RoutineRecord::facet_values(std::string_view facet) const {
  if (facet == "library") return {std::string(to_string(library))};
  if (facet == "precision") return {std::string(to_string(precision))};
  if (facet == "scalar_field") return {std::string(to_string(scalar_field))};
  if (facet == "problem_class") return {problem_class};
  if (facet == "matrix_type") return {matrix_type};
  if (facet == "storage") return {storage};
  if (auto it = facets.find(std::string(facet)); it != facets.end()) return it->second;
  return {};
}

const Option* Question::find(std::string_view key) const {
  for (const auto& o : options)
    if (o.key == key) return &o;
  return nullptr;
}

// ---- DecisionTree --------------------------------------------------------

const Node& DecisionTree::node(const NodeRef& ref) const {
  auto it = nodes.find(ref);
  if (it == nodes.end()) fail(ErrorKind::not_found, "unknown node '" + ref + "'");
  return it->second;
}

const Question& DecisionTree::question(const std::string& id) const {
  auto it = questions.find(id);
  if (it == questions.end()) fail(ErrorKind::not_found, "unknown question '" + id + "'");
  return it->second;
}

bool DecisionTree::is_leaf(const NodeRef& ref) const {
  return std::holds_alternative<LeafNode>(node(ref));
}

std::size_t DecisionTree::leaf_count() const {
  return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const auto& kv) {
    return std::holds_alternative<LeafNode>(kv.second);
  }));
}

const std::vector<std::string>& DecisionTree::traverse(const std::vector<std::string>& answers) const {
  NodeRef at = root;
  for (const auto& key : answers) {
    const auto* inner = std::get_if<InternalNode>(&node(at));
    if (!inner) fail(ErrorKind::invalid_argument, "answer '" + key + "' given past a leaf");
    auto edge = std::find_if(inner->edges.begin(), inner->edges.end(),
                             [&](const auto& e) { return e.first == key; });
    if (edge == inner->edges.end())
      fail(ErrorKind::invalid_argument, "option '" + key + "' not valid at node '" + at + "'");
    at = edge->second;
  }
  const auto* leaf = std::get_if<LeafNode>(&node(at));
  if (!leaf) fail(ErrorKind::invalid_argument, "incomplete path: stopped at node '" + at + "'");
  return leaf->payload;
}

void validate(const DecisionTree& tree, std::string_view where_prefix) {
  const std::string where(where_prefix);
  if (tree.nodes.find(tree.root) == tree.nodes.end())
    invalid(where, "root node '" + tree.root + "' does not exist");

  for (const auto& [ref, node] : tree.nodes) {
    const std::string nwhere = where + ".nodes[" + ref + "]";
    if (const auto* leaf = std::get_if<LeafNode>(&node)) {
      if (leaf->payload.empty()) invalid(nwhere, "leaf payload is empty");
      continue;
    }
    const auto& inner = std::get<InternalNode>(node);
    auto qit = tree.questions.find(inner.question_id);
    if (qit == tree.questions.end())
      invalid(nwhere, "dangling question reference '" + inner.question_id + "'");
    const Question& q = qit->second;
    std::set<std::string> seen;
    for (std::size_t i = 0; i < inner.edges.size(); ++i) {
      const auto& [key, child] = inner.edges[i];
      const std::string ewhere = nwhere + ".edges[" + std::to_string(i) + "]";
      if (!q.find(key)) invalid(ewhere, "option '" + key + "' is not an option of question '" + q.id + "'");
      if (!seen.insert(key).second) invalid(ewhere, "duplicate edge for option '" + key + "'");
      if (tree.nodes.find(child) == tree.nodes.end())
        invalid(ewhere, "edge to missing node '" + child + "'");
    }
    for (const auto& o : q.options)
      if (!seen.count(o.key)) invalid(nwhere, "option '" + o.key + "' has no edge");
  }

  // Cycle and reachability check by iterative colouring DFS.
  enum class Mark { white, grey, black };
  std::map<NodeRef, Mark> mark;
  for (const auto& kv : tree.nodes) mark[kv.first] = Mark::white;
  std::vector<std::pair<NodeRef, std::size_t>> stack{{tree.root, 0}};
  mark[tree.root] = Mark::grey;
  while (!stack.empty()) {
    auto& [ref, next] = stack.back();
    const auto* inner = std::get_if<InternalNode>(&tree.nodes.at(ref));
    if (!inner || next >= inner->edges.size()) {
      mark[ref] = Mark::black;
      stack.pop_back();
      continue;
    }
    const NodeRef child = inner->edges[next++].second;
    if (mark[child] == Mark::grey) invalid(where, "cycle through node '" + child + "'");
    if (mark[child] == Mark::black) {
      // A tree shares no subtrees; a second parent is also a structural error.
      invalid(where, "node '" + child + "' has more than one parent");
    }
    mark[child] = Mark::grey;
    stack.emplace_back(child, 0);
  }
  for (const auto& [ref, m] : mark)
    if (m == Mark::white) invalid(where, "node '" + ref + "' is unreachable from the root");
}

std::vector<std::string> reachable_payload(const DecisionTree& tree, const NodeRef& from) {
  std::set<std::string> out;
  std::vector<NodeRef> stack{from};
  while (!stack.empty()) {
    NodeRef ref = std::move(stack.back());
    stack.pop_back();
    const Node& n = tree.node(ref);
    if (const auto* leaf = std::get_if<LeafNode>(&n)) {
      out.insert(leaf->payload.begin(), leaf->payload.end());
    } else {
      for (const auto& e : std::get<InternalNode>(n).edges) stack.push_back(e.second);
    }
  }
  return {out.begin(), out.end()};
}

// ---- Taxonomy ------------------------------------------------------------

Taxonomy Taxonomy::parse(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::parse, std::string("malformed taxonomy document: ") + e.what());
  }
  if (!doc.is_object()) invalid("document", "top level must be an object");
  if (auto v = doc.find("format_version"); v != doc.end() && v->get<int>() != kFormatVersion)
    fail(ErrorKind::unsupported, "unsupported taxonomy format_version " + v->dump());

  Taxonomy tax;
  const auto& routines = get_array(doc, "routines", "document");
  if (routines.empty()) fail(ErrorKind::validation, "empty taxonomy");
  for (std::size_t i = 0; i < routines.size(); ++i) {
    const std::string where = "routines[" + std::to_string(i) + "]";
    RoutineRecord r = routine_from(routines[i], where);
    if (!tax.by_id_.emplace(r.id, tax.routines_.size()).second)
      invalid(where, "duplicate routine id '" + r.id + "'");
    tax.routines_.push_back(std::move(r));
  }

  std::map<std::string, std::size_t> question_index;
  const auto& questions = get_array(doc, "questions", "document");
  for (std::size_t i = 0; i < questions.size(); ++i) {
    const std::string where = "questions[" + std::to_string(i) + "]";
    Question q = question_from(questions[i], where);
    if (!question_index.emplace(q.id, tax.questions_.size()).second)
      invalid(where, "duplicate question id '" + q.id + "'");
    tax.questions_.push_back(std::move(q));
  }

  const auto& trees = get_array(doc, "trees", "document");
  for (std::size_t t = 0; t < trees.size(); ++t) {
    const std::string twhere = "trees[" + std::to_string(t) + "]";
    const json& tj = trees[t];
    DecisionTree tree;
    const Library lib = parse_library(get_string(tj, "library", twhere));
    tree.name = std::string(to_string(lib));
    tree.root = get_string(tj, "root", twhere);
    const auto& nodes = get_array(tj, "nodes", twhere);
    for (std::size_t n = 0; n < nodes.size(); ++n) {
      const json& nj = nodes[n];
      const std::string id = get_string(nj, "id", twhere + ".nodes[" + std::to_string(n) + "]");
      const std::string nwhere = twhere + ".nodes[" + id + "]";
      Node node;
      if (nj.contains("payload")) {
        LeafNode leaf;
        leaf.payload = nj.at("payload").get<std::vector<std::string>>();
        for (const auto& rid : leaf.payload)
          if (!tax.by_id_.count(rid)) invalid(nwhere, "dangling routine reference '" + rid + "'");
        node = std::move(leaf);
      } else {
        InternalNode inner;
        inner.question_id = get_string(nj, "question", nwhere);
        auto qit = question_index.find(inner.question_id);
        if (qit == question_index.end())
          invalid(nwhere, "dangling question reference '" + inner.question_id + "'");
        const Question& q = tax.questions_[qit->second];
        tree.questions.emplace(q.id, q);
        const auto& edges = get_array(nj, "edges", nwhere);
        for (const auto& e : edges)
          inner.edges.emplace_back(get_string(e, "option", nwhere), get_string(e, "node", nwhere));
        // Edges are kept in option declaration order so DFS order is stable.
        std::stable_sort(inner.edges.begin(), inner.edges.end(), [&](const auto& a, const auto& b) {
          auto pos = [&](const std::string& key) {
            for (std::size_t i = 0; i < q.options.size(); ++i)
              if (q.options[i].key == key) return i;
            return q.options.size();
          };
          return pos(a.first) < pos(b.first);
        });
        node = std::move(inner);
      }
      if (!tree.nodes.emplace(id, std::move(node)).second) invalid(nwhere, "duplicate node id");
    }
    validate(tree, twhere);
    if (tax.trees_.count(lib)) invalid(twhere, "second tree for library " + tree.name);

    // Facet values used by the library's routines must be answerable.
    std::map<std::string, std::set<std::string>> answerable;
    for (const auto& [qid, q] : tree.questions)
      for (const auto& o : q.options) answerable[q.facet].insert(o.key);
    for (const auto& r : tax.routines_) {
      if (r.library != lib) continue;
      for (const auto& [facet, keys] : answerable)
        for (const auto& v : r.facet_values(facet))
          if (!keys.count(v))
            invalid("routine '" + r.id + "'",
                    "facet " + facet + "='" + v + "' is not an option of any " + tree.name +
                        " question");
    }

    auto& cache = tax.candidates_[lib];
    std::function<const std::vector<std::string>&(const NodeRef&)> fill =
        [&](const NodeRef& ref) -> const std::vector<std::string>& {
      if (auto it = cache.find(ref); it != cache.end()) return it->second;
      std::set<std::string> acc;
      const Node& n = tree.nodes.at(ref);
      if (const auto* leaf = std::get_if<LeafNode>(&n)) {
        acc.insert(leaf->payload.begin(), leaf->payload.end());
      } else {
        for (const auto& e : std::get<InternalNode>(n).edges) {
          const auto& sub = fill(e.second);
          acc.insert(sub.begin(), sub.end());
        }
      }
      return cache[ref] = std::vector<std::string>(acc.begin(), acc.end());
    };
    fill(tree.root);
    tax.trees_.emplace(lib, std::move(tree));
  }
  return tax;
}

Taxonomy Taxonomy::load(const std::filesystem::path& path) { return parse(read_file(path)); }

const RoutineRecord* Taxonomy::find_routine(std::string_view id) const {
  auto it = by_id_.find(id);
  return it == by_id_.end() ? nullptr : &routines_[it->second];
}

const RoutineRecord& Taxonomy::routine(std::string_view id) const {
  const auto* r = find_routine(id);
  if (!r) fail(ErrorKind::not_found, "unknown routine '" + std::string(id) + "'");
  return *r;
}

const DecisionTree* Taxonomy::tree(Library lib) const {
  auto it = trees_.find(lib);
  return it == trees_.end() ? nullptr : &it->second;
}

std::vector<Library> Taxonomy::libraries() const {
  std::vector<Library> out;
  for (const auto& kv : trees_) out.push_back(kv.first);
  return out;
}

const std::vector<std::string>& Taxonomy::candidates(Library lib, const NodeRef& node) const {
  auto t = candidates_.find(lib);
  if (t == candidates_.end())
    fail(ErrorKind::not_found, "no guided-search tree for " + std::string(to_string(lib)));
  auto it = t->second.find(node);
  if (it == t->second.end()) fail(ErrorKind::not_found, "unknown node '" + node + "'");
  return it->second;
}

std::vector<const RoutineRecord*> Taxonomy::filter(const FacetFilter& filter) const {
  std::vector<const RoutineRecord*> out;
  for (const auto& r : routines_) {
    bool ok = true;
    for (const auto& [facet, accepted] : filter) {
      if (accepted.empty()) continue;
      auto values = r.facet_values(facet);
      ok = std::any_of(values.begin(), values.end(),
                       [&](const std::string& v) { return accepted.count(v) > 0; });
      if (!ok) break;
    }
    if (ok) out.push_back(&r);
  }
  return out;
}

std::string Taxonomy::to_json() const {
  json doc;
  doc["format_version"] = kFormatVersion;
  doc["routines"] = json::array();
  for (const auto& r : routines_) doc["routines"].push_back(routine_json(r));
  doc["questions"] = json::array();
  for (const auto& q : questions_) doc["questions"].push_back(question_json(q));
  doc["trees"] = json::array();
  for (const auto& [lib, tree] : trees_) {
    json tj;
    tj["library"] = to_string(lib);
    tj["root"] = tree.root;
    tj["nodes"] = json::array();
    for (const auto& [ref, node] : tree.nodes) {
      json nj;
      nj["id"] = ref;
      if (const auto* leaf = std::get_if<LeafNode>(&node)) {
        nj["payload"] = leaf->payload;
      } else {
        const auto& inner = std::get<InternalNode>(node);
        nj["question"] = inner.question_id;
        nj["edges"] = json::array();
        for (const auto& [key, child] : inner.edges)
          nj["edges"].push_back({{"option", key}, {"node", child}});
      }
      tj["nodes"].push_back(std::move(nj));
    }
    doc["trees"].push_back(std::move(tj));
  }
  return doc.dump(2) + "\n";
}

RoutineDoc routine_doc(const Taxonomy& tax, std::string_view routine_id) {
  const auto& r = tax.routine(routine_id);
  return {r.id, r.name, r.description, r.documentation, r.parameters};
}

std::string routine_to_json(const RoutineRecord& routine) { return routine_json(routine).dump(2); }

RoutineRecord routine_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::parse, std::string("malformed routine record: ") + e.what());
  }
  return routine_from(j, "routine");
}

// ---- guided search -------------------------------------------------------

namespace {

const DecisionTree& require_tree(const Taxonomy& tax, Library lib) {
  const auto* tree = tax.tree(lib);
  if (!tree) fail(ErrorKind::not_found, "no guided-search tree for " + std::string(to_string(lib)));
  return *tree;
}

NodeRef child_for(const DecisionTree& tree, const NodeRef& at, std::string_view key) {
  const auto& inner = std::get<InternalNode>(tree.node(at));
  for (const auto& [k, child] : inner.edges)
    if (k == key) return child;
  const Question& q = tree.question(inner.question_id);
  std::vector<std::string> valid;
  for (const auto& o : q.options) valid.push_back(o.key);
  fail(ErrorKind::invalid_argument, "invalid option '" + std::string(key) + "' for question '" +
                                        q.id + "'; valid options: " + join(valid, ", "));
}

}  // namespace

GuidedSession start_session(const Taxonomy& tax, Library lib, std::string session_id) {
  const auto& tree = require_tree(tax, lib);
  GuidedSession s;
  s.session_id = std::move(session_id);
  s.library = lib;
  s.current = tree.root;
  s.candidates = tax.candidates(lib, tree.root);
  s.finished = tree.is_leaf(tree.root);
  return s;
}

GuidedSession answer(const Taxonomy& tax, const GuidedSession& session, std::string_view key) {
  if (session.finished) fail(ErrorKind::invalid_argument, "guided search already finished");
  const auto& tree = require_tree(tax, session.library);
  GuidedSession next = session;
  const auto& inner = std::get<InternalNode>(tree.node(session.current));
  next.current = child_for(tree, session.current, key);
  next.history.emplace_back(inner.question_id, std::string(key));
  next.candidates = tax.candidates(session.library, next.current);
  next.finished = tree.is_leaf(next.current);
  return next;
}

GuidedSession back(const Taxonomy& tax, const GuidedSession& session) {
  if (session.history.empty()) fail(ErrorKind::invalid_argument, "already at the first question");
  GuidedSession replay = start_session(tax, session.library, session.session_id);
  for (std::size_t i = 0; i + 1 < session.history.size(); ++i)
    replay = answer(tax, replay, session.history[i].second);
  return replay;
}

const Question* current_question(const Taxonomy& tax, const GuidedSession& session) {
  if (session.finished) return nullptr;
  const auto& tree = require_tree(tax, session.library);
  const auto& inner = std::get<InternalNode>(tree.node(session.current));
  return &tree.question(inner.question_id);
}

std::optional<std::string> resolve_option(const Question& q, std::string_view input) {
  input = trim(input);
  if (input.empty()) return std::nullopt;
  if (q.find(input)) return std::string(input);
  const std::string lowered = to_lower(input);
  for (const auto& o : q.options)
    if (to_lower(o.text) == lowered || to_lower(o.key) == lowered) return o.key;
  if (std::all_of(input.begin(), input.end(), [](char c) { return c >= '0' && c <= '9'; }) &&
      input.size() < 6) {
    const auto index = static_cast<std::size_t>(parse_int(input));
    if (index >= 1 && index <= q.options.size()) return q.options[index - 1].key;
  }
  return std::nullopt;
}

// ---- path table ----------------------------------------------------------

PathTable::PathTable(std::vector<std::string> facets, std::vector<PathRow> rows)
    : facets_(std::move(facets)), rows_(std::move(rows)) {
  for (std::size_t i = 0; i < rows_.size(); ++i)
    if (!index_.emplace(rows_[i].answers, i).second)
      fail(ErrorKind::validation, "path table has two rows with the same answers");
}

const std::vector<std::string>& PathTable::lookup(const std::vector<Answer>& answers) const {
  auto it = index_.lower_bound(answers);
  if (it != index_.end() && it->first == answers) return rows_[it->second].result;
  if (it != index_.end() && it->first.size() > answers.size() &&
      std::equal(answers.begin(), answers.end(), it->first.begin()))
    fail(ErrorKind::not_found, "incomplete path: more answers are required");
  fail(ErrorKind::not_found, "no row matches the given answers");
}

std::string PathTable::to_csv() const {
  std::vector<std::string> header = facets_;
  header.push_back("result");
  std::string out = csv_row(header);
  for (const auto& row : rows_) {
    std::vector<std::string> fields;
    for (const auto& facet : facets_) {
      std::vector<std::string> values;
      for (const auto& [f, v] : row.answers)
        if (f == facet) values.push_back(v);
      fields.push_back(join(values, ";"));
    }
    fields.push_back(join(row.result, ";"));
    out += csv_row(fields);
  }
  return out;
}

PathTable flatten_tree(const DecisionTree& tree) {
  std::vector<std::string> facets;
  std::set<std::string> seen_facets;
  std::vector<PathRow> rows;
  std::vector<Answer> path;

  std::function<void(const NodeRef&)> visit = [&](const NodeRef& ref) {
    const Node& n = tree.node(ref);
    if (const auto* leaf = std::get_if<LeafNode>(&n)) {
      rows.push_back({path, leaf->payload});
      return;
    }
    const auto& inner = std::get<InternalNode>(n);
    const Question& q = tree.question(inner.question_id);
    if (seen_facets.insert(q.facet).second) facets.push_back(q.facet);
    for (const auto& [key, child] : inner.edges) {
      path.emplace_back(q.facet, key);
      visit(child);
      path.pop_back();
    }
  };
  visit(tree.root);
  return PathTable(std::move(facets), std::move(rows));
}

}  // namespace lh::taxonomy
