#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "lh/taxonomy.hpp"

namespace lh::textsearch {

/// Lowercase ASCII alphanumeric runs; everything else separates tokens.
std::vector<std::string> tokenize(std::string_view text);

/// Accepted linear-algebra terms. Phrases are stored normalized (tokens
/// joined by one space); `words` holds every token of every term.
struct Vocabulary {
  std::set<std::string> terms;
  std::set<std::string> words;

  bool operator==(const Vocabulary&) const = default;
};

/// One term or phrase per line, `#` starts a comment.
Vocabulary parse_vocabulary(std::string_view text);
Vocabulary load_vocabulary(const std::filesystem::path& path);

enum class Mode { all, any };

constexpr int name_weight = 3;
constexpr int description_weight = 2;
constexpr int documentation_weight = 1;
constexpr std::size_t max_suggestions = 10;
constexpr std::size_t max_correction_distance = 2;

struct Hit {
  std::string routine_id;
  int score = 0;
  bool exact_name = false;

  bool operator==(const Hit&) const = default;
};

class SearchIndex {
 public:
  /// Indexes vocabulary words and routine names found in each routine's
  /// name, description and documentation. Throws on an empty vocabulary or
  /// routine list.
  SearchIndex(const std::vector<taxonomy::RoutineRecord>& routines, Vocabulary vocabulary);

  /// Ranked by exact name match, then score (summed field weights of the
  /// matched query tokens), then routine name.
  std::vector<Hit> query(std::string_view text, Mode mode = Mode::all) const;
  /// Terms and routine names starting with `prefix` (case-insensitive),
  /// lexicographic, at most max_suggestions.
  std::vector<std::string> autocomplete(std::string_view prefix) const;
  /// Nearest known word within max_correction_distance; ties prefer higher
  /// corpus frequency, then lexicographic order. Known words map to themselves.
  std::optional<std::string> spell_correct(std::string_view token) const;

  /// Query tokens after normalization and vocabulary filtering.
  std::vector<std::string> usable_tokens(std::string_view text) const;

  const Vocabulary& vocabulary() const { return vocabulary_; }
  const std::map<std::string, std::map<std::string, int>>& postings() const { return postings_; }
  std::size_t frequency(const std::string& word) const;

  bool operator==(const SearchIndex&) const = default;

 private:
  Vocabulary vocabulary_;
  std::map<std::string, std::string> names_;  // lowercase name -> routine id
  std::map<std::string, std::string> display_name_;  // routine id -> name
  std::map<std::string, std::map<std::string, int>> postings_;  // token -> routine id -> weight
  std::map<std::string, std::size_t> frequency_;  // token -> occurrences across all fields
};

SearchIndex build_index(const taxonomy::Taxonomy& taxonomy, Vocabulary vocabulary);

/// Unrestricted Damerau-Levenshtein distance (adjacent transpositions may
/// be edited further).
std::size_t damerau_levenshtein(std::string_view a, std::string_view b);

}  // namespace lh::textsearch
