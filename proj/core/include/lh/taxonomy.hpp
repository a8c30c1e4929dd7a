#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace lh::taxonomy {

enum class Library { lapack, petsc, slepc };
enum class Precision { single_precision, double_precision };
enum class ScalarField { real, complex };
enum class ParamKind { integer, real_scalar, complex_scalar, array_1d, array_2d, character };
enum class Intent { in, out, inout };

std::string_view to_string(Library lib);
std::string_view to_string(Precision p);
std::string_view to_string(ScalarField f);
std::string_view to_string(ParamKind k);
std::string_view to_string(Intent i);
/// Case-insensitive: "LAPACK", "lapack", "PETSc", ...
Library parse_library(std::string_view text);
Intent parse_intent(std::string_view text);

struct ParameterSpec {
  std::string name;
  ParamKind kind = ParamKind::integer;
  Intent intent = Intent::in;
  std::string description;
  // Code-generation hints. `element` is "integer", "real", "character" or
  // "scalar" (the routine's own scalar type); `dims` are Fortran extent
  // expressions; `value` initialises input scalars.
  std::string element;
  std::vector<std::string> dims;
  std::string value;

  bool operator==(const ParameterSpec&) const = default;
};

struct RoutineRecord {
  std::string id;
  Library library = Library::lapack;
  std::string name;
  Precision precision = Precision::double_precision;
  ScalarField scalar_field = ScalarField::real;
  std::string problem_class;
  std::string matrix_type;
  std::string storage;
  /// Library-specific multi-valued facets (e.g. "form" -> {"ax_b","atx_b"}).
  std::map<std::string, std::vector<std::string>> facets;
  /// Selects the code template family ("driver", "expert_driver", ...).
  std::string template_category;
  std::string description;
  std::string documentation;
  std::vector<ParameterSpec> parameters;

  /// Values of a named facet; fixed fields yield exactly one value.
  std::vector<std::string> facet_values(std::string_view facet) const;

  bool operator==(const RoutineRecord&) const = default;
};

struct Option {
  std::string key;
  std::string text;
  bool operator==(const Option&) const = default;
};

struct Question {
  std::string id;
  std::string text;
  std::string facet;
  std::vector<Option> options;

  const Option* find(std::string_view key) const;
  bool operator==(const Question&) const = default;
};

using NodeRef = std::string;

struct InternalNode {
  std::string question_id;
  std::vector<std::pair<std::string, NodeRef>> edges;  // option key -> child, option order
  bool operator==(const InternalNode&) const = default;
};

struct LeafNode {
  std::vector<std::string> payload;
  bool operator==(const LeafNode&) const = default;
};

using Node = std::variant<InternalNode, LeafNode>;

struct DecisionTree {
  std::string name;
  NodeRef root;
  std::map<NodeRef, Node> nodes;
  std::map<std::string, Question> questions;

  const Node& node(const NodeRef& ref) const;
  const Question& question(const std::string& id) const;
  bool is_leaf(const NodeRef& ref) const;
  std::size_t leaf_count() const;
  /// Follows `answers` (option keys) from the root. Throws unless the walk
  /// ends exactly on a leaf.
  const std::vector<std::string>& traverse(const std::vector<std::string>& answers) const;

  bool operator==(const DecisionTree&) const = default;
};

/// Checks the tree invariants: root and children exist, edges use options of
/// their question, every option has an edge, no cycles, every node reachable,
/// no empty leaf payload. Throws lh::Error(validation) naming the location.
void validate(const DecisionTree& tree, std::string_view where = "tree");

/// Sorted union of the leaf payloads below `from`.
std::vector<std::string> reachable_payload(const DecisionTree& tree, const NodeRef& from);

/// Conjunctive facet filter: a routine matches when, for every listed facet,
/// one of its values is among the accepted ones.
using FacetFilter = std::map<std::string, std::set<std::string>>;

struct RoutineDoc {
  std::string id;
  std::string name;
  std::string description;
  std::string documentation;
  std::vector<ParameterSpec> parameters;
};

class Taxonomy {
 public:
  static Taxonomy parse(std::string_view json_text);
  static Taxonomy load(const std::filesystem::path& path);

  const std::vector<RoutineRecord>& routines() const { return routines_; }
  const std::vector<Question>& questions() const { return questions_; }
  const RoutineRecord* find_routine(std::string_view id) const;
  const RoutineRecord& routine(std::string_view id) const;
  const DecisionTree* tree(Library lib) const;
  std::vector<Library> libraries() const;
  /// Cached union of leaf payloads below a node of the given library tree.
  const std::vector<std::string>& candidates(Library lib, const NodeRef& node) const;

  std::vector<const RoutineRecord*> filter(const FacetFilter& filter) const;
  std::string to_json() const;

 private:
  std::vector<RoutineRecord> routines_;
  std::map<std::string, std::size_t, std::less<>> by_id_;
  std::vector<Question> questions_;
  std::map<Library, DecisionTree> trees_;
  std::map<Library, std::map<NodeRef, std::vector<std::string>>> candidates_;
};

RoutineDoc routine_doc(const Taxonomy& tax, std::string_view routine_id);

std::string routine_to_json(const RoutineRecord& routine);
RoutineRecord routine_from_json(std::string_view json_text);

// ---- guided search -------------------------------------------------------

inline constexpr std::string_view completion_message =
    "End of guided search! Check out the result.";

struct GuidedSession {
  std::string session_id;
  Library library = Library::lapack;
  NodeRef current;
  std::vector<std::pair<std::string, std::string>> history;  // question id, option key
  std::vector<std::string> candidates;
  bool finished = false;

  bool operator==(const GuidedSession&) const = default;
};

GuidedSession start_session(const Taxonomy& tax, Library lib, std::string session_id = {});
GuidedSession answer(const Taxonomy& tax, const GuidedSession& session, std::string_view option_key);
GuidedSession back(const Taxonomy& tax, const GuidedSession& session);
/// Question to ask next; nullptr once the session is finished.
const Question* current_question(const Taxonomy& tax, const GuidedSession& session);

/// Maps user input onto an option key: the key itself, the display text
/// (case-insensitive) or a 1-based index. Empty when nothing matches.
std::optional<std::string> resolve_option(const Question& q, std::string_view input);

// ---- path table ----------------------------------------------------------

using Answer = std::pair<std::string, std::string>;  // facet, option key

struct PathRow {
  std::vector<Answer> answers;
  std::vector<std::string> result;
  bool operator==(const PathRow&) const = default;
};

/// Relational form of a decision tree: one row per root-to-leaf path.
class PathTable {
 public:
  PathTable() = default;
  PathTable(std::vector<std::string> facets, std::vector<PathRow> rows);

  const std::vector<std::string>& facets() const { return facets_; }
  const std::vector<PathRow>& rows() const { return rows_; }
  std::size_t size() const { return rows_.size(); }

  /// Exact match on the full answer list. Throws not_found with
  /// "incomplete path" for a strict prefix of a row, "no row" otherwise.
  const std::vector<std::string>& lookup(const std::vector<Answer>& answers) const;

  /// Facet columns in first-seen order, then `result`. Repeated facets on a
  /// path are joined with ';', as are result entries.
  std::string to_csv() const;

 private:
  std::vector<std::string> facets_;
  std::vector<PathRow> rows_;
  std::map<std::vector<Answer>, std::size_t> index_;
};

/// Depth-first, children in option order.
PathTable flatten_tree(const DecisionTree& tree);

inline const std::vector<std::string>& lookup_path(const PathTable& table,
                                                   const std::vector<Answer>& answers) {
  return table.lookup(answers);
}

}  // namespace lh::taxonomy
