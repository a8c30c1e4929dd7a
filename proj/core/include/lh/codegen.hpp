#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "lh/mlselect.hpp"
#include "lh/taxonomy.hpp"

namespace lh::codegen {

enum class Language { fortran90, c };

std::string_view to_string(Language lang);
Language parse_language(std::string_view text);
/// Source file extension without the dot.
std::string_view extension(Language lang);

// --- Template engine --------------------------------------------------------
//
// `{{name}}` substitutes a string binding. `{{#name}} ... {{/name}}` repeats
// its body once per element of a list binding, each element being a nested
// context that falls back to the enclosing one. Section tags alone on a line
// consume that line. An unbound name is an error; output never contains `{{`.

struct Context {
  using List = std::vector<Context>;
  std::map<std::string, std::variant<std::string, List>> values;

  Context& set(const std::string& name, std::string value);
  Context& set(const std::string& name, List items);
};

std::string render(std::string_view text, const Context& ctx, std::string_view where = "template");
/// Names referenced by a template, in first-use order.
std::vector<std::string> placeholders(std::string_view text);

/// Template files under a root directory, cached after first read.
class TemplateStore {
 public:
  explicit TemplateStore(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  bool has(const std::string& relpath) const;
  /// Throws not_found naming the missing template.
  std::string get(const std::string& relpath) const;
  /// Drops the cache so edited templates are picked up.
  void reload();

 private:
  std::filesystem::path root_;
  mutable std::mutex mutex_;
  mutable std::map<std::string, std::string> cache_;
};

/// Store rooted at share_dir()/templates.
const TemplateStore& default_store();

// --- Bundles ----------------------------------------------------------------

struct BundleFile {
  std::string path;
  std::string content;
  bool operator==(const BundleFile&) const = default;
};

struct Bundle {
  std::vector<BundleFile> files;

  const BundleFile* find(std::string_view path) const;
  /// (path, size) per file, in bundle order.
  std::vector<std::pair<std::string, std::size_t>> manifest() const;
  bool operator==(const Bundle&) const = default;
};

/// Paths relative, no `..`, unique; at least a source, a makefile and a README.
void validate_bundle(const Bundle& bundle);

/// Complete driver program for a routine: declarations, data set-up with a
/// known solution, the library call, and a result check.
std::string render_routine_template(const taxonomy::Taxonomy& taxonomy, const std::string& routine_id,
                                    Language lang, const TemplateStore& store = default_store());
/// Driver source plus makefile and README.
Bundle routine_bundle(const taxonomy::Taxonomy& taxonomy, const std::string& routine_id, Language lang,
                      const TemplateStore& store = default_store());

enum class SolverBundleKind { properties_program, default_solver, recommended_solver };

std::string_view to_string(SolverBundleKind kind);
SolverBundleKind parse_solver_bundle_kind(std::string_view text);

/// PETSc (or SLEPc, for eigen methods) program, makefile, options file and
/// README. A recommendation is required for recommended_solver and rejected
/// otherwise.
Bundle generate_solver_bundle(SolverBundleKind kind, const std::optional<mlselect::SolverConfig>& recommendation,
                              bool parallel, const TemplateStore& store = default_store());

/// Command-line options for a configuration, one flag per line.
std::vector<std::string> solver_options(const mlselect::SolverConfig& config, bool parallel);

// --- Archives ---------------------------------------------------------------

/// Zip (deflate) with entries in bundle order and a fixed 1980-01-01
/// timestamp, so equal bundles give equal bytes.
std::string package_archive(const Bundle& bundle);
Bundle unpack_archive(std::string_view bytes);

// --- Checks -----------------------------------------------------------------

/// Block-structure problems (unbalanced braces or unmatched Fortran
/// program units and constructs); empty when the source is balanced.
std::vector<std::string> lint_source(std::string_view text, Language lang);

}  // namespace lh::codegen
