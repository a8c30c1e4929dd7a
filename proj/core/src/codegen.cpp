#include "lh/codegen.hpp"

#include <zlib.h>

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include "lh/error.hpp"
#include "lh/util.hpp"

namespace lh::codegen {

using taxonomy::ParameterSpec;
using taxonomy::ParamKind;
using taxonomy::RoutineRecord;

std::string_view to_string(Language lang) { return lang == Language::fortran90 ? "fortran90" : "c"; }

Language parse_language(std::string_view text) {
  const auto t = to_lower(trim(text));
  if (t == "fortran90" || t == "fortran" || t == "f90") return Language::fortran90;
  if (t == "c") return Language::c;
  fail(ErrorKind::invalid_argument, "unknown language '" + std::string(text) + "' (expected fortran90 or c)");
}

std::string_view extension(Language lang) { return lang == Language::fortran90 ? "f90" : "c"; }

// ---------------------------------------------------------------------------
// Template engine

Context& Context::set(const std::string& name, std::string value) {
  values[name] = std::move(value);
  return *this;
}

Context& Context::set(const std::string& name, List items) {
  values[name] = std::move(items);
  return *this;
}

namespace {

struct Tag {
  char sigil = 0;  // 0, '#' or '/'
  std::string name;
  std::size_t begin = 0;  // first byte consumed
  std::size_t end = 0;    // one past the last byte consumed
};

bool is_name(std::string_view s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(),
                     [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.'; });
}

std::pair<int, int> line_col(std::string_view text, std::size_t pos) {
  int line = 1, col = 1;
  for (std::size_t i = 0; i < pos && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

[[noreturn]] void template_error(std::string_view where, std::string_view text, std::size_t pos,
                                 const std::string& msg) {
  const auto [line, col] = line_col(text, pos);
  throw LocatedError(ErrorKind::validation, std::string(where) + ": " + msg, line, col);
}

// Tags in order. A section tag that is the only thing on its line takes the
// whole line, newline included.
std::vector<Tag> scan(std::string_view text, std::string_view where) {
  std::vector<Tag> tags;
  std::size_t pos = 0;
  while ((pos = text.find("{{", pos)) != std::string_view::npos) {
    const auto close = text.find("}}", pos + 2);
    if (close == std::string_view::npos) template_error(where, text, pos, "unterminated '{{'");
    Tag tag;
    auto inner = trim(text.substr(pos + 2, close - pos - 2));
    if (!inner.empty() && (inner[0] == '#' || inner[0] == '/')) {
      tag.sigil = inner[0];
      inner = trim(inner.substr(1));
    }
    if (!is_name(inner)) template_error(where, text, pos, "bad tag name '" + std::string(inner) + "'");
    tag.name = std::string(inner);
    tag.begin = pos;
    tag.end = close + 2;
    if (tag.sigil) {
      const auto line_start = text.rfind('\n', pos == 0 ? 0 : pos - 1);
      const auto ls = (line_start == std::string_view::npos || pos == 0) ? 0 : line_start + 1;
      const auto le = text.find('\n', tag.end);
      const auto before = text.substr(ls, pos - ls);
      const auto after = text.substr(tag.end, (le == std::string_view::npos ? text.size() : le) - tag.end);
      if (trim(before).empty() && trim(after).empty() && (ls == 0 || text[ls - 1] == '\n')) {
        tag.begin = ls;
        tag.end = le == std::string_view::npos ? text.size() : le + 1;
      }
    }
    tags.push_back(std::move(tag));
    pos = close + 2;
  }
  return tags;
}

using Value = std::variant<std::string, Context::List>;

const Value* lookup(const std::vector<const Context*>& stack, const std::string& name) {
  for (auto it = stack.rbegin(); it != stack.rend(); ++it) {
    auto found = (*it)->values.find(name);
    if (found != (*it)->values.end()) return &found->second;
  }
  return nullptr;
}

void render_range(std::string_view text, const std::vector<Tag>& tags, std::size_t first, std::size_t last,
                  std::size_t from, std::size_t to, std::vector<const Context*>& stack, std::string& out,
                  std::string_view where) {
  std::size_t cursor = from;
  for (std::size_t i = first; i < last; ++i) {
    const auto& tag = tags[i];
    out.append(text.substr(cursor, tag.begin - cursor));
    if (tag.sigil == '/') template_error(where, text, tag.begin, "unexpected '{{/" + tag.name + "}}'");
    const auto* value = lookup(stack, tag.name);
    if (!value) template_error(where, text, tag.begin, "unbound placeholder '" + tag.name + "'");
    if (tag.sigil == 0) {
      const auto* s = std::get_if<std::string>(value);
      if (!s) template_error(where, text, tag.begin, "'" + tag.name + "' is a list; use a section");
      out += *s;
      cursor = tag.end;
      continue;
    }
    // Matching close tag, honoring nesting of the same name.
    std::size_t depth = 1, j = i + 1;
    for (; j < last; ++j) {
      if (tags[j].name != tag.name) continue;
      if (tags[j].sigil == '#') ++depth;
      if (tags[j].sigil == '/' && --depth == 0) break;
    }
    if (j == last) template_error(where, text, tag.begin, "unclosed section '" + tag.name + "'");
    const auto* items = std::get_if<Context::List>(value);
    if (!items) template_error(where, text, tag.begin, "'" + tag.name + "' is not a list");
    for (const auto& item : *items) {
      stack.push_back(&item);
      render_range(text, tags, i + 1, j, tag.end, tags[j].begin, stack, out, where);
      stack.pop_back();
    }
    cursor = tags[j].end;
    i = j;
  }
  out.append(text.substr(cursor, to - cursor));
}

}  // namespace

std::string render(std::string_view text, const Context& ctx, std::string_view where) {
  const auto tags = scan(text, where);
  std::vector<const Context*> stack{&ctx};
  std::string out;
  render_range(text, tags, 0, tags.size(), 0, text.size(), stack, out, where);
  if (const auto pos = out.find("{{"); pos != std::string::npos)
    fail(ErrorKind::validation, std::string(where) + ": a binding introduced '{{' into the output");
  return out;
}

std::vector<std::string> placeholders(std::string_view text) {
  std::vector<std::string> out;
  for (const auto& tag : scan(text, "template"))
    if (tag.sigil != '/' && std::find(out.begin(), out.end(), tag.name) == out.end()) out.push_back(tag.name);
  return out;
}

TemplateStore::TemplateStore(std::filesystem::path root) : root_(std::move(root)) {}

bool TemplateStore::has(const std::string& relpath) const {
  std::lock_guard lock(mutex_);
  return cache_.count(relpath) || std::filesystem::is_regular_file(root_ / relpath);
}

std::string TemplateStore::get(const std::string& relpath) const {
  std::lock_guard lock(mutex_);
  if (auto it = cache_.find(relpath); it != cache_.end()) return it->second;
  const auto path = root_ / relpath;
  if (!std::filesystem::is_regular_file(path))
    fail(ErrorKind::not_found, "missing template '" + relpath + "' under " + root_.string());
  return cache_[relpath] = read_file(path);
}

void TemplateStore::reload() {
  std::lock_guard lock(mutex_);
  cache_.clear();
}

const TemplateStore& default_store() {
  static const TemplateStore store(share_dir() / "templates");
  return store;
}

// ---------------------------------------------------------------------------
// Bundles

const BundleFile* Bundle::find(std::string_view path) const {
  for (const auto& f : files)
    if (f.path == path) return &f;
  return nullptr;
}

std::vector<std::pair<std::string, std::size_t>> Bundle::manifest() const {
  std::vector<std::pair<std::string, std::size_t>> out;
  for (const auto& f : files) out.emplace_back(f.path, f.content.size());
  return out;
}

void validate_bundle(const Bundle& bundle) {
  std::set<std::string> seen;
  bool source = false, makefile = false, readme = false;
  for (const auto& f : bundle.files) {
    if (f.path.empty() || f.path.front() == '/' || f.path.find('\\') != std::string::npos)
      fail(ErrorKind::validation, "bundle path '" + f.path + "' must be relative");
    for (const auto& part : split(f.path, '/'))
      if (part.empty() || part == "." || part == "..")
        fail(ErrorKind::validation, "bundle path '" + f.path + "' has an empty or dot component");
    if (!seen.insert(f.path).second) fail(ErrorKind::validation, "duplicate bundle path '" + f.path + "'");
    const auto name = f.path.substr(f.path.rfind('/') + 1);
    if (name == "makefile" || name == "Makefile") makefile = true;
    if (name == "README" || name == "README.md") readme = true;
    const auto dot = name.rfind('.');
    const auto ext = dot == std::string::npos ? "" : name.substr(dot + 1);
    if (ext == "c" || ext == "f90" || ext == "f") source = true;
    if (f.content.find("{{") != std::string::npos)
      fail(ErrorKind::validation, "bundle file '" + f.path + "' contains an unexpanded placeholder");
  }
  if (!source) fail(ErrorKind::validation, "bundle has no source file");
  if (!makefile) fail(ErrorKind::validation, "bundle has no makefile");
  if (!readme) fail(ErrorKind::validation, "bundle has no README");
}

namespace {

// Greedy word wrap; each output line gets `prefix`.
std::string wrap(std::string_view text, std::string_view prefix, std::size_t width = 88) {
  std::string out, line(prefix);
  bool empty = true;
  std::istringstream words{std::string(text)};
  for (std::string w; words >> w;) {
    if (!empty && line.size() + 1 + w.size() > width) {
      out += line + "\n";
      line = std::string(prefix);
      empty = true;
    }
    if (!empty) line += ' ';
    line += w;
    empty = false;
  }
  out += line;
  return out;
}

// Joins items into lines of at most `width`, ending continued lines with `cont`.
std::string wrap_list(const std::vector<std::string>& items, std::string_view cont, std::string_view indent,
                      std::size_t width = 72) {
  std::string out, line;
  for (std::size_t i = 0; i < items.size(); ++i) {
    auto piece = items[i] + (i + 1 < items.size() ? "," : "");
    if (!line.empty() && line.size() + 1 + piece.size() > width) {
      out += line + std::string(cont) + "\n" + std::string(indent);
      line.clear();
    }
    if (!line.empty()) line += ' ';
    line += piece;
  }
  return out + line;
}

enum class Layout { full, band_general, band_upper, packed_upper, tridiag_general, tridiag_pd };

std::string_view layout_name(Layout l) {
  switch (l) {
    case Layout::full: return "full";
    case Layout::band_general: return "band_general";
    case Layout::band_upper: return "band_upper";
    case Layout::packed_upper: return "packed_upper";
    case Layout::tridiag_general: return "tridiag_general";
    case Layout::tridiag_pd: return "tridiag_pd";
  }
  return "full";
}

bool has_param(const RoutineRecord& r, std::string_view name) {
  return std::any_of(r.parameters.begin(), r.parameters.end(), [&](const auto& p) { return p.name == name; });
}

Layout detect_layout(const RoutineRecord& r) {
  if (has_param(r, "DL")) return Layout::tridiag_general;
  if (has_param(r, "E") && has_param(r, "D")) return Layout::tridiag_pd;
  if (has_param(r, "AB")) return has_param(r, "KL") ? Layout::band_general : Layout::band_upper;
  if (has_param(r, "AP")) return Layout::packed_upper;
  if (has_param(r, "A")) return Layout::full;
  fail(ErrorKind::unsupported, "routine " + r.name + " has no recognised matrix argument");
}

bool is_double(const RoutineRecord& r) { return r.precision == taxonomy::Precision::double_precision; }
bool is_complex(const RoutineRecord& r) { return r.scalar_field == taxonomy::ScalarField::complex; }

std::string element_of(const ParameterSpec& p) {
  if (!p.element.empty()) return p.element;
  switch (p.kind) {
    case ParamKind::integer: return "integer";
    case ParamKind::real_scalar: return "real";
    case ParamKind::complex_scalar: return "scalar";
    case ParamKind::character: return "character";
    default: return "scalar";
  }
}

std::string fortran_type(const RoutineRecord& r, const std::string& element) {
  if (element == "integer") return "integer";
  if (element == "character") return "character";
  if (element == "real" || !is_complex(r)) return "real(wp)";
  return "complex(wp)";
}

std::string c_type(const RoutineRecord& r, const std::string& element) {
  if (element == "integer") return "int";
  if (element == "character") return "char";
  const std::string base = is_double(r) ? "double" : "float";
  if (element == "real" || !is_complex(r)) return base;
  return base + " _Complex";
}

bool is_array(const ParameterSpec& p) { return p.kind == ParamKind::array_1d || p.kind == ParamKind::array_2d; }

std::set<std::string> identifiers(const std::string& expr) {
  std::set<std::string> out;
  static const std::regex ident("[A-Za-z_][A-Za-z0-9_]*");
  for (auto it = std::sregex_iterator(expr.begin(), expr.end(), ident); it != std::sregex_iterator(); ++it)
    out.insert(it->str());
  return out;
}

// Scalars with an initial value, ordered so that each follows its dependencies.
std::vector<const ParameterSpec*> ordered_scalars(const RoutineRecord& r) {
  std::vector<const ParameterSpec*> pending;
  std::set<std::string> names;
  for (const auto& p : r.parameters) names.insert(p.name);
  for (const auto& p : r.parameters)
    if (!is_array(p) && (!p.value.empty() || (p.kind == ParamKind::character && p.intent != taxonomy::Intent::out)))
      pending.push_back(&p);
  std::set<std::string> defined;
  std::vector<const ParameterSpec*> out;
  while (!pending.empty()) {
    auto ready = std::find_if(pending.begin(), pending.end(), [&](const ParameterSpec* p) {
      for (const auto& id : identifiers(p->value))
        if (names.count(id) && id != p->name && !defined.count(id)) return false;
      return p->kind == ParamKind::character || !identifiers(p->value).count(p->name);
    });
    if (ready == pending.end())
      fail(ErrorKind::validation, "routine " + r.name + ": circular or unresolved scalar initial values");
    defined.insert((*ready)->name);
    out.push_back(*ready);
    pending.erase(ready);
  }
  return out;
}

std::string scalar_value(const ParameterSpec& p) {
  if (!p.value.empty()) return p.value;
  return "'N'";  // character arguments without a default, such as EQUED
}

struct Syntax {
  std::string and_op, true_lit, offdiag_general, offdiag_symmetric, comment;
};

Syntax syntax(Language lang) {
  if (lang == Language::fortran90)
    return {" .and. ", ".true.", "1.0_wp / real(i + 2 * j, wp)", "1.0_wp / real(i + j, wp)", "! "};
  return {" && ", "1", "1.0 / (i + 2 * j)", "1.0 / (i + j)", "// "};
}

std::string pattern(Layout layout, bool triangular, const Syntax& s) {
  const std::string absdiff = "abs(i - j)";
  switch (layout) {
    case Layout::full:
    case Layout::packed_upper: return triangular ? "j >= i" : s.true_lit;
    case Layout::band_general: return "i - j <= KL" + s.and_op + "j - i <= KU";
    case Layout::band_upper: return triangular ? "j >= i" + s.and_op + "j - i <= KD" : absdiff + " <= KD";
    case Layout::tridiag_general:
    case Layout::tridiag_pd: return absdiff + " <= 1";
  }
  return s.true_lit;
}

std::string solution_name(const RoutineRecord& r) { return has_param(r, "X") ? "X" : "B"; }

Context routine_context(const RoutineRecord& r, Language lang, const TemplateStore& store) {
  const auto s = syntax(lang);
  const auto layout = detect_layout(r);
  const bool triangular = r.matrix_type == "triangular";
  const bool general = r.matrix_type == "general";
  const std::string dir = "lapack/" + std::string(to_string(lang)) + "/";

  Context ctx;
  ctx.set("routine_name", r.name)
      .set("routine_lower", to_lower(r.name))
      .set("description", r.description)
      .set("description_comment", wrap(r.description, s.comment))
      .set("layout", std::string(layout_name(layout)))
      .set("pattern", pattern(layout, triangular, s))
      .set("offdiag", general ? s.offdiag_general : s.offdiag_symmetric)
      .set("solution", solution_name(r))
      .set("solution_ld", "LD" + solution_name(r));

  Context::List params, scalars, arrays, proto;
  std::vector<std::string> call_args, proto_args, hidden_args, hidden_proto;
  for (const auto& p : r.parameters) {
    const auto element = element_of(p);
    Context item;
    item.set("name", p.name);
    const auto doc = p.name + " (" + std::string(taxonomy::to_string(p.intent)) + "): " + p.description;
    std::string decl;
    if (lang == Language::fortran90) {
      decl = fortran_type(r, element);
      if (p.kind == ParamKind::array_1d) decl += ", allocatable :: " + p.name + "(:)";
      else if (p.kind == ParamKind::array_2d) decl += ", allocatable :: " + p.name + "(:,:)";
      else decl += " :: " + p.name;
      item.set("doc", wrap(doc, "  ! "));
      call_args.push_back(p.name);
    } else {
      const auto type = c_type(r, element);
      decl = "static " + type + (is_array(p) ? " *" : " ") + p.name + ";";
      item.set("doc", wrap(doc, "// "));
      call_args.push_back(is_array(p) ? p.name : "&" + p.name);
      proto_args.push_back(type + " *" + to_lower(p.name));
      if (p.kind == ParamKind::character) {
        hidden_args.push_back("1");
        hidden_proto.push_back("size_t " + to_lower(p.name) + "_len");
      }
    }
    item.set("decl", decl);
    params.push_back(std::move(item));
    if (is_array(p)) {
      if (p.dims.empty()) fail(ErrorKind::validation, "routine " + r.name + ": array " + p.name + " has no extent");
      Context a;
      a.set("name", p.name);
      if (lang == Language::fortran90) {
        a.set("extent", join(p.dims, ", "));
      } else {
        std::vector<std::string> factors;
        for (const auto& d : p.dims) factors.push_back("(" + d + ")");
        a.set("extent", join(factors, " * "));
      }
      arrays.push_back(std::move(a));
    }
  }
  for (const auto* p : ordered_scalars(r)) {
    Context sc;
    sc.set("name", p->name).set("value", scalar_value(*p));
    scalars.push_back(std::move(sc));
  }
  ctx.set("params", std::move(params)).set("scalars", std::move(scalars)).set("arrays", std::move(arrays));

  if (lang == Language::fortran90) {
    ctx.set("kind_expr", is_double(r) ? "kind(1.0d0)" : "kind(1.0e0)");
    ctx.set("check_tol", is_double(r) ? "1.0e-8_wp" : "1.0e-3_wp");
    ctx.set("call_args", wrap_list(call_args, " &", "        "));
  } else {
    call_args.insert(call_args.end(), hidden_args.begin(), hidden_args.end());
    proto_args.insert(proto_args.end(), hidden_proto.begin(), hidden_proto.end());
    ctx.set("check_tol", is_double(r) ? "1e-8" : "1e-3");
    ctx.set("abs_fn", std::string(is_complex(r) ? "cabs" : "fabs") + (is_double(r) ? "" : "f"));
    ctx.set("call_args", wrap_list(call_args, "", "      "));
    ctx.set("prototype", wrap_list(proto_args, "", "    "));
  }

  Context inner = ctx;
  const auto ext = std::string(".") + std::string(extension(lang)) + ".tmpl";
  auto fill = render(store.get(dir + "fill/" + std::string(layout_name(layout)) + ext), inner,
                     dir + "fill/" + std::string(layout_name(layout)) + ext);
  auto rhs = render(store.get(dir + "fill/rhs" + ext), inner, dir + "fill/rhs" + ext);
  while (!fill.empty() && fill.back() == '\n') fill.pop_back();
  while (!rhs.empty() && rhs.back() == '\n') rhs.pop_back();
  ctx.set("fill_matrix", fill).set("fill_rhs", rhs);
  return ctx;
}

std::string routine_template_path(const RoutineRecord& r, Language lang) {
  if (r.template_category.empty()) fail(ErrorKind::validation, "routine " + r.name + " has no template category");
  return "lapack/" + std::string(to_string(lang)) + "/" + r.template_category + "." + std::string(extension(lang)) +
         ".tmpl";
}

const RoutineRecord& lapack_routine(const taxonomy::Taxonomy& taxonomy, const std::string& routine_id) {
  const auto& r = taxonomy.routine(routine_id);
  if (r.library != taxonomy::Library::lapack)
    fail(ErrorKind::unsupported, "driver generation covers LAPACK routines; " + r.name + " is " +
                                     std::string(taxonomy::to_string(r.library)));
  return r;
}

Context::List file_list(const std::vector<std::pair<std::string, std::string>>& files) {
  std::size_t width = 0;
  for (const auto& [path, what] : files) width = std::max(width, path.size());
  Context::List out;
  for (const auto& [path, what] : files) {
    Context c;
    c.set("path", path).set("padded_path", path + std::string(width - path.size(), ' ')).set("what", what);
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace

std::string render_routine_template(const taxonomy::Taxonomy& taxonomy, const std::string& routine_id,
                                    Language lang, const TemplateStore& store) {
  const auto& r = lapack_routine(taxonomy, routine_id);
  const auto path = routine_template_path(r, lang);
  return render(store.get(path), routine_context(r, lang, store), path);
}

Bundle routine_bundle(const taxonomy::Taxonomy& taxonomy, const std::string& routine_id, Language lang,
                      const TemplateStore& store) {
  const auto& r = lapack_routine(taxonomy, routine_id);
  const auto program = to_lower(r.name) + "_driver";
  const auto source = program + "." + std::string(extension(lang));
  Context ctx;
  ctx.set("routine_name", r.name)
      .set("description", r.description)
      .set("program", program)
      .set("source", source)
      .set("language", lang == Language::fortran90 ? "Fortran 90" : "C")
      .set("files", file_list({{source, "driver program"},
                               {"makefile", "builds the driver against LAPACK and BLAS"},
                               {"README", "this file"}}));
  const std::string dir = "lapack/" + std::string(to_string(lang)) + "/";
  Bundle b;
  b.files.push_back({source, render_routine_template(taxonomy, routine_id, lang, store)});
  b.files.push_back({"makefile", render(store.get(dir + "makefile.tmpl"), ctx, dir + "makefile.tmpl")});
  b.files.push_back({"README", render(store.get("lapack/README.tmpl"), ctx, "lapack/README.tmpl")});
  validate_bundle(b);
  return b;
}

// ---------------------------------------------------------------------------
// Solver bundles

std::string_view to_string(SolverBundleKind kind) {
  switch (kind) {
    case SolverBundleKind::properties_program: return "properties";
    case SolverBundleKind::default_solver: return "default";
    case SolverBundleKind::recommended_solver: return "recommended";
  }
  return "default";
}

SolverBundleKind parse_solver_bundle_kind(std::string_view text) {
  const auto t = to_lower(trim(text));
  if (t == "properties" || t == "properties_program") return SolverBundleKind::properties_program;
  if (t == "default" || t == "default_solver") return SolverBundleKind::default_solver;
  if (t == "recommended" || t == "recommended_solver") return SolverBundleKind::recommended_solver;
  fail(ErrorKind::invalid_argument,
       "unknown bundle kind '" + std::string(text) + "' (expected properties, default or recommended)");
}

namespace {

bool is_eigen_method(const std::string& method) {
  const auto& eig = mlselect::eigen_methods();
  return std::find(eig.begin(), eig.end(), method) != eig.end();
}

std::string ksp_name(const std::string& method) { return method == "bicgstab" ? "bcgs" : method; }

std::string pc_name(const std::string& pc) {
  if (pc == "block_jacobi") return "bjacobi";
  return pc;
}

std::string eps_name(const std::string& method) {
  if (method == "generalized_davidson") return "gd";
  if (method == "jacobi_davidson") return "jd";
  return method;
}

// Preconditioners that PETSc only provides for one process.
bool sequential_only(const std::string& pc) { return pc == "ilu" || pc == "sor"; }

}  // namespace

std::vector<std::string> solver_options(const mlselect::SolverConfig& config, bool parallel) {
  std::vector<std::string> out;
  const bool eigen = is_eigen_method(config.method);
  out.push_back(eigen ? "-eps_type " + eps_name(config.method) : "-ksp_type " + ksp_name(config.method));
  // Eigensolvers take their preconditioner through the spectral transformation.
  const std::string pc_prefix = eigen ? "-st_" : "-";
  std::string factor = pc_prefix + "pc_factor_";
  if (config.preconditioner) {
    const auto pc = pc_name(*config.preconditioner);
    if (parallel && sequential_only(*config.preconditioner)) {
      out.push_back(pc_prefix + "pc_type bjacobi");
      out.push_back(pc_prefix + "sub_pc_type " + pc);
      factor = pc_prefix + "sub_pc_factor_";
    } else {
      out.push_back(pc_prefix + "pc_type " + pc);
    }
  }
  for (const auto& [key, value] : config.extra) {
    if (key == "levels") {
      if (!config.preconditioner) fail(ErrorKind::validation, "fill levels need a factorization preconditioner");
      out.push_back(factor + "levels " + value);
    } else if (key == "restart" && config.method == "gmres") {
      out.push_back("-ksp_gmres_restart " + value);
    } else if (key == "nev" && eigen) {
      out.push_back("-eps_nev " + value);
    } else if (key == "tol") {
      out.push_back(std::string(eigen ? "-eps_tol " : "-ksp_rtol ") + value);
    } else {
      fail(ErrorKind::unsupported, "no command-line option for solver parameter '" + key + "'");
    }
  }
  return out;
}

Bundle generate_solver_bundle(SolverBundleKind kind, const std::optional<mlselect::SolverConfig>& recommendation,
                              bool parallel, const TemplateStore& store) {
  if (kind == SolverBundleKind::recommended_solver && !recommendation)
    fail(ErrorKind::invalid_argument, "a recommended solver bundle needs a solver configuration");
  if (kind != SolverBundleKind::recommended_solver && recommendation)
    fail(ErrorKind::invalid_argument, "only the recommended solver bundle takes a solver configuration");
  const bool eigen = recommendation && is_eigen_method(recommendation->method);
  if (recommendation)
    mlselect::validate(*recommendation, eigen ? mlselect::ProblemKind::eigen : mlselect::ProblemKind::linear);

  std::string program, summary, library;
  std::vector<std::string> options{"-f matrix.dat"};
  switch (kind) {
    case SolverBundleKind::properties_program:
      program = "properties";
      library = "PETSc";
      summary = "Reads a matrix and prints the properties used for solver selection.";
      break;
    case SolverBundleKind::default_solver:
      program = "solver";
      library = "PETSc";
      summary = "Solves A x = b with the library's default Krylov method and preconditioner (GMRES with ILU(0) "
                "on one process, block Jacobi on several).";
      options.push_back("-ksp_converged_reason");
      break;
    case SolverBundleKind::recommended_solver: {
      program = eigen ? "eigensolver" : "solver";
      library = eigen ? "SLEPc" : "PETSc";
      summary = eigen ? "Computes eigenpairs of A with the recommended eigensolver: " + recommendation->key() + "."
                      : "Solves A x = b with the recommended method: " + recommendation->key() + ".";
      for (auto& o : solver_options(*recommendation, parallel)) options.push_back(std::move(o));
      options.push_back(eigen ? "-eps_converged_reason" : "-ksp_converged_reason");
      break;
    }
  }
  const auto source = program + ".c";
  Context ctx;
  ctx.set("program", program)
      .set("source", source)
      .set("library", library)
      .set("summary", summary)
      .set("summary_comment", wrap(summary, " * "))
      .set("options_file", "options.txt")
      .set("run_prefix", parallel ? "${MPIEXEC} -n 4 " : "")
      .set("processes", parallel ? "4 MPI processes" : "one process");
  Context::List opts;
  for (const auto& o : options) {
    Context c;
    c.set("option", o);
    opts.push_back(std::move(c));
  }
  ctx.set("options", std::move(opts));
  ctx.set("files", file_list({{source, library + " program"},
                              {"makefile", "builds with the " + library + " makefile rules"},
                              {"options.txt", "runtime options, one flag per line"},
                              {"README", "this file"}}));

  const std::string lib_dir = eigen ? "slepc/" : "petsc/";
  const auto source_template = "petsc/" + program + ".c.tmpl";
  Bundle b;
  b.files.push_back({source, render(store.get(eigen ? "slepc/eigensolver.c.tmpl" : source_template), ctx, source)});
  b.files.push_back({"makefile", render(store.get(lib_dir + "makefile.tmpl"), ctx, lib_dir + "makefile.tmpl")});
  b.files.push_back({"options.txt", render(store.get("petsc/options.txt.tmpl"), ctx, "petsc/options.txt.tmpl")});
  b.files.push_back({"README", render(store.get("petsc/README.tmpl"), ctx, "petsc/README.tmpl")});
  validate_bundle(b);
  return b;
}

// ---------------------------------------------------------------------------
// Archives

namespace {

constexpr std::uint32_t kLocalSig = 0x04034b50, kCentralSig = 0x02014b50, kEndSig = 0x06054b50;
constexpr std::uint16_t kDosDate = (0 << 9) | (1 << 5) | 1;  // 1980-01-01
constexpr std::uint16_t kVersion = 20;
constexpr std::uint16_t kMadeBy = (3 << 8) | kVersion;  // Unix
constexpr std::uint32_t kFileMode = 0100644u << 16;

void put16(std::string& out, std::uint16_t v) {
  out += static_cast<char>(v & 0xff);
  out += static_cast<char>(v >> 8);
}

void put32(std::string& out, std::uint32_t v) {
  put16(out, static_cast<std::uint16_t>(v & 0xffff));
  put16(out, static_cast<std::uint16_t>(v >> 16));
}

std::uint32_t crc_of(std::string_view data) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(data.data()), static_cast<uInt>(data.size())));
}

std::string deflate_raw(std::string_view data) {
  z_stream zs{};
  if (deflateInit2(&zs, 9, Z_DEFLATED, -15, 8, Z_DEFAULT_STRATEGY) != Z_OK)
    fail(ErrorKind::domain, "deflate initialisation failed");
  std::string out(deflateBound(&zs, static_cast<uLong>(data.size())), '\0');
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(data.data()));
  zs.avail_in = static_cast<uInt>(data.size());
  zs.next_out = reinterpret_cast<Bytef*>(out.data());
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = deflate(&zs, Z_FINISH);
  out.resize(zs.total_out);
  deflateEnd(&zs);
  if (rc != Z_STREAM_END) fail(ErrorKind::domain, "deflate failed");
  return out;
}

std::string inflate_raw(std::string_view data, std::size_t size) {
  z_stream zs{};
  if (inflateInit2(&zs, -15) != Z_OK) fail(ErrorKind::domain, "inflate initialisation failed");
  std::string out(size, '\0');
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(data.data()));
  zs.avail_in = static_cast<uInt>(data.size());
  zs.next_out = reinterpret_cast<Bytef*>(out.data());
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = inflate(&zs, Z_FINISH);
  const auto produced = zs.total_out;
  inflateEnd(&zs);
  if (rc != Z_STREAM_END || produced != size) fail(ErrorKind::parse, "corrupt deflate stream in archive");
  return out;
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::uint16_t u16(std::size_t at) const {
    need(at, 2);
    return static_cast<std::uint16_t>(byte(at) | (byte(at + 1) << 8));
  }
  std::uint32_t u32(std::size_t at) const {
    return static_cast<std::uint32_t>(u16(at)) | (static_cast<std::uint32_t>(u16(at + 2)) << 16);
  }
  std::string_view slice(std::size_t at, std::size_t n) const {
    need(at, n);
    return bytes_.substr(at, n);
  }
  std::size_t size() const { return bytes_.size(); }

 private:
  unsigned byte(std::size_t at) const { return static_cast<unsigned char>(bytes_[at]); }
  void need(std::size_t at, std::size_t n) const {
    if (at > bytes_.size() || n > bytes_.size() - at) fail(ErrorKind::parse, "truncated archive");
  }
  std::string_view bytes_;
};

}  // namespace

std::string package_archive(const Bundle& bundle) {
  validate_bundle(bundle);
  std::string out, central;
  for (const auto& f : bundle.files) {
    const auto offset = static_cast<std::uint32_t>(out.size());
    const auto crc = crc_of(f.content);
    const auto packed = deflate_raw(f.content);
    auto header = [&](std::string& dst, bool is_central) {
      put32(dst, is_central ? kCentralSig : kLocalSig);
      if (is_central) put16(dst, kMadeBy);
      put16(dst, kVersion);
      put16(dst, 0);  // flags
      put16(dst, 8);  // deflate
      put16(dst, 0);  // time
      put16(dst, kDosDate);
      put32(dst, crc);
      put32(dst, static_cast<std::uint32_t>(packed.size()));
      put32(dst, static_cast<std::uint32_t>(f.content.size()));
      put16(dst, static_cast<std::uint16_t>(f.path.size()));
      put16(dst, 0);  // extra
      if (is_central) {
        put16(dst, 0);  // comment
        put16(dst, 0);  // disk
        put16(dst, 0);  // internal attributes
        put32(dst, kFileMode);
        put32(dst, offset);
      }
      dst += f.path;
    };
    header(out, false);
    out += packed;
    header(central, true);
  }
  const auto cd_offset = static_cast<std::uint32_t>(out.size());
  out += central;
  put32(out, kEndSig);
  put16(out, 0);
  put16(out, 0);
  put16(out, static_cast<std::uint16_t>(bundle.files.size()));
  put16(out, static_cast<std::uint16_t>(bundle.files.size()));
  put32(out, static_cast<std::uint32_t>(central.size()));
  put32(out, cd_offset);
  put16(out, 0);
  return out;
}

Bundle unpack_archive(std::string_view bytes) {
  const Reader in(bytes);
  if (in.size() < 22) fail(ErrorKind::parse, "not a zip archive");
  std::size_t end = in.size() - 22;
  while (in.u32(end) != kEndSig) {
    if (end == 0 || in.size() - end > 22 + 0xffff) fail(ErrorKind::parse, "zip end record not found");
    --end;
  }
  const auto count = in.u16(end + 10);
  std::size_t pos = in.u32(end + 16);
  Bundle b;
  for (std::uint16_t i = 0; i < count; ++i) {
    if (in.u32(pos) != kCentralSig) fail(ErrorKind::parse, "bad central directory entry");
    const auto flags = in.u16(pos + 8);
    const auto method = in.u16(pos + 10);
    const auto crc = in.u32(pos + 16);
    const auto csize = in.u32(pos + 20);
    const auto usize = in.u32(pos + 24);
    const auto name_len = in.u16(pos + 28);
    const auto extra_len = in.u16(pos + 30);
    const auto comment_len = in.u16(pos + 32);
    const auto local = in.u32(pos + 42);
    std::string name(in.slice(pos + 46, name_len));
    pos += 46u + name_len + extra_len + comment_len;
    if (flags & 1) fail(ErrorKind::unsupported, "encrypted archive entry '" + name + "'");
    if (in.u32(local) != kLocalSig) fail(ErrorKind::parse, "bad local header for '" + name + "'");
    const auto data_at = local + 30u + in.u16(local + 26) + in.u16(local + 28);
    const auto data = in.slice(data_at, csize);
    std::string content;
    if (method == 0) content = std::string(data);
    else if (method == 8) content = inflate_raw(data, usize);
    else fail(ErrorKind::unsupported, "compression method " + std::to_string(method) + " in '" + name + "'");
    if (content.size() != usize || crc_of(content) != crc)
      fail(ErrorKind::parse, "checksum mismatch for '" + name + "'");
    if (!name.empty() && name.back() == '/') continue;  // directory entry
    b.files.push_back({std::move(name), std::move(content)});
  }
  return b;
}

// ---------------------------------------------------------------------------
// Lint

namespace {

std::vector<std::string> lint_c(std::string_view text) {
  std::vector<std::string> problems;
  std::vector<std::pair<char, int>> stack;
  int line = 1;
  enum { code, str, chr, line_comment, block_comment } state = code;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    const char next = i + 1 < text.size() ? text[i + 1] : '\0';
    if (c == '\n') ++line;
    switch (state) {
      case code:
        if (c == '"') state = str;
        else if (c == '\'') state = chr;
        else if (c == '/' && next == '/') state = line_comment, ++i;
        else if (c == '/' && next == '*') state = block_comment, ++i;
        else if (c == '(' || c == '[' || c == '{') stack.emplace_back(c, line);
        else if (c == ')' || c == ']' || c == '}') {
          const char want = c == ')' ? '(' : c == ']' ? '[' : '{';
          if (stack.empty() || stack.back().first != want) {
            problems.push_back("line " + std::to_string(line) + ": unmatched '" + std::string(1, c) + "'");
            if (!stack.empty()) stack.pop_back();
          } else {
            stack.pop_back();
          }
        }
        break;
      case str:
      case chr:
        if (c == '\\') ++i;
        else if (c == (state == str ? '"' : '\'')) state = code;
        else if (c == '\n') problems.push_back("line " + std::to_string(line - 1) + ": unterminated literal"),
                            state = code;
        break;
      case line_comment:
        if (c == '\n') state = code;
        break;
      case block_comment:
        if (c == '*' && next == '/') state = code, ++i;
        break;
    }
  }
  if (state == block_comment) problems.push_back("unterminated comment");
  for (const auto& [c, l] : stack) problems.push_back("line " + std::to_string(l) + ": unclosed '" + c + "'");
  return problems;
}

// Fortran statement text with comments and string contents removed, lowercase.
std::string fortran_code(std::string_view raw) {
  std::string out;
  char quote = 0;
  for (char c : raw) {
    if (quote) {
      if (c == quote) quote = 0, out += c;
      continue;
    }
    if (c == '!') break;
    if (c == '\'' || c == '"') quote = c;
    out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return std::string(trim(out));
}

std::vector<std::string> lint_fortran(std::string_view text) {
  std::vector<std::string> problems;
  std::vector<std::pair<std::string, int>> stack;
  static const std::regex unit(R"(^(?:(?:pure|elemental|recursive|integer|logical|character|real(?:\([^)]*\))?|complex(?:\([^)]*\))?)\s+)*(program|module|subroutine|function)\s+\w+.*)");
  static const std::regex end_stmt(R"(^end\s*(program|module|subroutine|function|do|if|select|interface|type)?\b.*)");
  static const std::regex do_stmt(R"(^(\w+\s*:\s*)?do\b.*)");
  static const std::regex if_then(R"(^(\w+\s*:\s*)?if\s*\(.*\)\s*then$)");
  static const std::regex select_stmt(R"(^(\w+\s*:\s*)?select\s+case\b.*)");
  static const std::regex interface_stmt(R"(^(abstract\s+)?interface\b.*)");
  static const std::regex type_stmt(R"(^type\s*(,.*::)?\s*\w+\s*$)");
  static const std::regex module_procedure(R"(^module\s+procedure\b.*)");

  int line_no = 0;
  std::string pending;
  int pending_line = 0;
  for (const auto& raw : split(text, '\n')) {
    ++line_no;
    auto code = fortran_code(raw);
    const bool continued = !code.empty() && code.back() == '&';
    if (continued) code.pop_back();
    if (pending.empty()) pending_line = line_no;
    pending += code;
    if (continued) continue;
    const auto stmt = std::string(trim(pending));
    pending.clear();
    if (stmt.empty()) continue;
    std::smatch m;
    auto open = [&](const std::string& what) { stack.emplace_back(what, pending_line); };
    if (std::regex_match(stmt, m, end_stmt) && stmt.rfind("endfile", 0) != 0) {
      std::string what = m[1].str();
      if (stmt.rfind("enddo", 0) == 0) what = "do";
      if (stmt.rfind("endif", 0) == 0) what = "if";
      if (stack.empty()) {
        problems.push_back("line " + std::to_string(line_no) + ": '" + stmt + "' without an open block");
        continue;
      }
      if (!what.empty() && stack.back().first != what)
        problems.push_back("line " + std::to_string(line_no) + ": '" + stmt + "' closes '" + stack.back().first +
                           "' opened on line " + std::to_string(stack.back().second));
      stack.pop_back();
    } else if (std::regex_match(stmt, m, module_procedure)) {
      continue;
    } else if (std::regex_match(stmt, m, unit)) {
      open(m[1].str());
    } else if (std::regex_match(stmt, do_stmt)) {
      open("do");
    } else if (std::regex_match(stmt, if_then)) {
      open("if");
    } else if (std::regex_match(stmt, select_stmt)) {
      open("select");
    } else if (std::regex_match(stmt, interface_stmt)) {
      open("interface");
    } else if (std::regex_match(stmt, type_stmt)) {
      open("type");
    }
  }
  for (const auto& [what, l] : stack) problems.push_back("line " + std::to_string(l) + ": unclosed '" + what + "'");
  return problems;
}

}  // namespace

std::vector<std::string> lint_source(std::string_view text, Language lang) {
  return lang == Language::c ? lint_c(text) : lint_fortran(text);
}

}  // namespace lh::codegen
