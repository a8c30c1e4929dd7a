#include "lh/kernelc.hpp"

#include <algorithm>
#include <cctype>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"
#include "lh/error.hpp"
#include "lh/util.hpp"

namespace lh::kernelc {

// ---------------------------------------------------------------------------
// Syntax

Expr Expr::variable(std::string name, int line, int column) {
  Expr e;
  e.op = Op::var;
  e.name = std::move(name);
  e.line = line;
  e.column = column;
  return e;
}

bool Expr::operator==(const Expr& other) const {
  return op == other.op && name == other.name && args == other.args;
}

namespace {

const std::set<std::string, std::less<>>& reserved_words() {
  static const std::set<std::string, std::less<>> words = {
      "auto",     "break",  "case",    "char",   "const",    "continue", "default",  "do",
      "double",   "else",   "enum",    "extern", "float",    "for",      "goto",     "if",
      "inline",   "int",    "long",    "register", "restrict", "return", "short",    "signed",
      "sizeof",   "static", "struct",  "switch", "typedef",  "union",    "unsigned", "void",
      "volatile", "while",  "kernel",  "malloc", "free",     "size_t",   "NULL",     "main"};
  return words;
}

enum class Tok { ident, equals, plus, star, quote, lparen, rparen, end };

struct Token {
  Tok kind = Tok::end;
  std::string text;
  int column = 0;
};

std::string_view describe(Tok t) {
  switch (t) {
    case Tok::ident: return "identifier";
    case Tok::equals: return "'='";
    case Tok::plus: return "'+'";
    case Tok::star: return "'*'";
    case Tok::quote: return "\"'\"";
    case Tok::lparen: return "'('";
    case Tok::rparen: return "')'";
    case Tok::end: return "end of line";
  }
  return "token";
}

std::vector<Token> lex_line(std::string_view line, int line_no) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < line.size()) {
    const char c = line[i];
    const int col = static_cast<int>(i) + 1;
    if (c == '#') break;
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t j = i;
      while (j < line.size() && (std::isalnum(static_cast<unsigned char>(line[j])) || line[j] == '_')) ++j;
      out.push_back({Tok::ident, std::string(line.substr(i, j - i)), col});
      i = j;
      continue;
    }
    Tok kind;
    switch (c) {
      case '=': kind = Tok::equals; break;
      case '+': kind = Tok::plus; break;
      case '*': kind = Tok::star; break;
      case '\'': kind = Tok::quote; break;
      case '(': kind = Tok::lparen; break;
      case ')': kind = Tok::rparen; break;
      default:
        throw LocatedError(ErrorKind::parse, "unexpected character '" + std::string(1, c) + "'", line_no, col);
    }
    out.push_back({kind, std::string(1, c), col});
    ++i;
  }
  out.push_back({Tok::end, "", static_cast<int>(line.size()) + 1});
  return out;
}

class LineParser {
 public:
  LineParser(std::vector<Token> tokens, int line) : tokens_(std::move(tokens)), line_(line) {}

  Assign statement() {
    const auto target = expect(Tok::ident);
    check_name(target);
    expect(Tok::equals);
    Assign a;
    a.target = target.text;
    a.line = line_;
    a.column = target.column;
    a.expr = expr();
    if (peek().kind != Tok::end) error(peek(), "expected '+', '*' or end of line");
    return a;
  }

 private:
  Expr expr() {
    auto first = term();
    if (peek().kind != Tok::plus) return first;
    Expr sum;
    sum.op = Expr::Op::add;
    sum.line = first.line;
    sum.column = first.column;
    sum.args.push_back(std::move(first));
    while (peek().kind == Tok::plus) {
      next();
      sum.args.push_back(term());
    }
    return sum;
  }

  Expr term() {
    auto left = postfix();
    while (peek().kind == Tok::star) {
      next();
      Expr prod;
      prod.op = Expr::Op::mul;
      prod.line = left.line;
      prod.column = left.column;
      prod.args.push_back(std::move(left));
      prod.args.push_back(postfix());
      left = std::move(prod);
    }
    return left;
  }

  Expr postfix() {
    auto e = primary();
    while (peek().kind == Tok::quote) {
      const auto q = next();
      Expr t;
      t.op = Expr::Op::transpose;
      t.line = line_;
      t.column = q.column;
      t.args.push_back(std::move(e));
      e = std::move(t);
    }
    return e;
  }

  Expr primary() {
    const auto& t = peek();
    if (t.kind == Tok::ident) {
      const auto id = next();
      check_name(id);
      return Expr::variable(id.text, line_, id.column);
    }
    if (t.kind == Tok::lparen) {
      next();
      auto e = expr();
      expect(Tok::rparen);
      return e;
    }
    error(t, "expected an identifier or '(' but found " + std::string(describe(t.kind)));
  }

  void check_name(const Token& t) const {
    if (reserved_words().count(t.text)) error(t, "'" + t.text + "' is reserved and cannot name a variable");
  }

  const Token& peek() const { return tokens_[pos_]; }
  Token next() { return tokens_[pos_ < tokens_.size() - 1 ? pos_++ : pos_]; }
  Token expect(Tok kind) {
    if (peek().kind != kind)
      error(peek(), "expected " + std::string(describe(kind)) + " but found " + std::string(describe(peek().kind)));
    return next();
  }
  [[noreturn]] void error(const Token& t, const std::string& msg) const {
    throw LocatedError(ErrorKind::parse, msg, line_, t.column);
  }

  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
  int line_;
};

int precedence(const Expr& e) {
  switch (e.op) {
    case Expr::Op::add: return 1;
    case Expr::Op::mul: return 2;
    default: return 3;
  }
}

}  // namespace

KernelProgram parse_kernel(std::string_view text) {
  KernelProgram program;
  bool have_name = false;
  int line_no = 0, name_line = 1;
  for (const auto& raw : split(text, '\n')) {
    ++line_no;
    auto line = std::string_view(raw);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    auto tokens = lex_line(line, line_no);
    if (tokens.front().kind == Tok::end) continue;
    if (tokens.front().kind == Tok::ident && tokens.front().text == "kernel" &&
        (tokens.size() < 2 || tokens[1].kind != Tok::equals)) {
      if (have_name)
        throw LocatedError(ErrorKind::parse, "duplicate kernel name (already '" + program.name + "')", line_no,
                           tokens.front().column);
      if (tokens.size() != 3 || tokens[1].kind != Tok::ident)
        throw LocatedError(ErrorKind::parse, "expected 'kernel <name>'", line_no,
                           tokens.size() > 1 ? tokens[1].column : tokens.front().column);
      if (reserved_words().count(tokens[1].text))
        throw LocatedError(ErrorKind::parse, "'" + tokens[1].text + "' is reserved and cannot name a kernel", line_no,
                           tokens[1].column);
      if (!program.statements.empty())
        throw LocatedError(ErrorKind::parse, "the kernel name must come before the statements", line_no,
                           tokens.front().column);
      program.name = tokens[1].text;
      name_line = line_no;
      have_name = true;
      continue;
    }
    if (!have_name) throw LocatedError(ErrorKind::parse, "expected 'kernel <name>' first", line_no, tokens.front().column);
    program.statements.push_back(LineParser(std::move(tokens), line_no).statement());
  }
  if (!have_name) throw LocatedError(ErrorKind::parse, "missing 'kernel <name>' line", 1, 1);
  if (program.statements.empty()) throw LocatedError(ErrorKind::parse, "kernel has no statements", name_line, 1);
  return program;
}

std::string to_source(const Expr& e) {
  auto wrapped = [&](const Expr& child, int min_prec) {
    const auto s = to_source(child);
    return precedence(child) < min_prec ? "(" + s + ")" : s;
  };
  switch (e.op) {
    case Expr::Op::var: return e.name;
    case Expr::Op::add: {
      std::vector<std::string> parts;
      for (const auto& a : e.args) parts.push_back(wrapped(a, 2));
      return join(parts, " + ");
    }
    case Expr::Op::mul: return wrapped(e.args[0], 2) + " * " + wrapped(e.args[1], 3);
    case Expr::Op::transpose: return wrapped(e.args[0], 3) + "'";
  }
  return {};
}

std::string to_source(const KernelProgram& program) {
  std::string out = "kernel " + program.name + "\n";
  for (const auto& s : program.statements) out += s.target + " = " + to_source(s.expr) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Types

std::string_view to_string(Kind k) {
  switch (k) {
    case Kind::scalar: return "scalar";
    case Kind::vector: return "vector";
    case Kind::matrix: return "matrix";
  }
  return "scalar";
}

std::string_view to_string(Orientation o) {
  switch (o) {
    case Orientation::none: return "none";
    case Orientation::row: return "row";
    case Orientation::column: return "column";
  }
  return "none";
}

std::string_view to_string(Intent i) {
  switch (i) {
    case Intent::in: return "in";
    case Intent::out: return "out";
    case Intent::inout: return "inout";
  }
  return "in";
}

Type Type::transposed() const {
  if (kind != Kind::vector) return *this;
  return {Kind::vector, orientation == Orientation::row ? Orientation::column : Orientation::row};
}

std::string to_string(Type t) {
  if (t.kind == Kind::vector) return std::string(to_string(t.orientation)) + " vector";
  return std::string(to_string(t.kind));
}

Seed parse_seed(std::string_view text) {
  Seed s;
  for (const auto& raw : split(text, ',')) {
    const auto w = to_lower(trim(raw));
    if (w.empty()) continue;
    if (w == "scalar") s.kind = Kind::scalar;
    else if (w == "vector") s.kind = Kind::vector;
    else if (w == "matrix") s.kind = Kind::matrix;
    else if (w == "row" || w == "column") {
      s.kind = Kind::vector;
      s.orientation = w == "row" ? Orientation::row : Orientation::column;
    } else if (w == "in") s.intent = Intent::in;
    else if (w == "out") s.intent = Intent::out;
    else if (w == "inout") s.intent = Intent::inout;
    else fail(ErrorKind::invalid_argument, "unknown declaration word '" + w + "'");
  }
  if (s.orientation && s.kind != Kind::vector)
    fail(ErrorKind::invalid_argument, "orientation applies to vectors only");
  return s;
}

const Variable* TypedProgram::find(std::string_view name) const {
  for (const auto& v : variables)
    if (v.name == name) return &v;
  return nullptr;
}

const Variable& TypedProgram::variable(std::string_view name) const {
  if (const auto* v = find(name)) return *v;
  fail(ErrorKind::not_found, "no variable '" + std::string(name) + "' in kernel " + program.name);
}

namespace {

const std::vector<Type>& all_types() {
  static const std::vector<Type> t = {Type::scalar(), Type::column(), Type::row(), Type::matrix()};
  return t;
}

// Shape of an expression given the type of each variable (by index).
std::optional<Type> type_of(const Expr& e, const std::map<std::string, std::size_t>& index,
                            const std::vector<int>& assignment) {
  switch (e.op) {
    case Expr::Op::var: return all_types()[static_cast<std::size_t>(assignment[index.at(e.name)])];
    case Expr::Op::transpose: {
      auto t = type_of(e.args[0], index, assignment);
      if (!t) return std::nullopt;
      return t->transposed();
    }
    case Expr::Op::add: {
      auto t = type_of(e.args[0], index, assignment);
      for (std::size_t i = 1; t && i < e.args.size(); ++i)
        if (type_of(e.args[i], index, assignment) != t) return std::nullopt;
      return t;
    }
    case Expr::Op::mul: {
      const auto a = type_of(e.args[0], index, assignment);
      const auto b = type_of(e.args[1], index, assignment);
      if (!a || !b) return std::nullopt;
      if (a->kind == Kind::scalar) return b;
      if (b->kind == Kind::scalar) return a;
      const bool a_col = *a == Type::column(), a_row = *a == Type::row(), a_mat = *a == Type::matrix();
      const bool b_col = *b == Type::column(), b_row = *b == Type::row(), b_mat = *b == Type::matrix();
      if (a_mat && b_col) return Type::column();
      if (a_row && b_mat) return Type::row();
      if (a_col && b_row) return Type::matrix();
      if (a_row && b_col) return Type::scalar();
      if (a_mat && b_mat) return Type::matrix();
      return std::nullopt;
    }
  }
  return std::nullopt;
}

void collect_vars(const Expr& e, std::vector<std::string>& out) {
  if (e.op == Expr::Op::var) {
    out.push_back(e.name);
    return;
  }
  for (const auto& a : e.args) collect_vars(a, out);
}

bool lowercase_name(const std::string& n) {
  return std::none_of(n.begin(), n.end(), [](char c) { return std::isupper(static_cast<unsigned char>(c)); });
}

bool single_upper(const std::string& n) { return n.size() == 1 && std::isupper(static_cast<unsigned char>(n[0])); }

bool matches(const Seed& s, const Type& t) {
  if (s.kind && *s.kind != t.kind) return false;
  if (s.orientation && *s.orientation != t.orientation) return false;
  return true;
}

constexpr std::size_t kMaxTypings = 1u << 20;

// Union-find over dimension slots.
struct Dims {
  std::vector<std::size_t> parent;
  std::size_t make() {
    parent.push_back(parent.size());
    return parent.size() - 1;
  }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(std::size_t a, std::size_t b) { parent[find(a)] = find(b); }
};

// Shape with dimension slots; nullopt stands for extent 1.
struct Shape {
  Type type;
  std::optional<std::size_t> rows, cols;
};

Shape shape_of(const Expr& e, const std::map<std::string, Shape>& vars, Dims& dims) {
  switch (e.op) {
    case Expr::Op::var: return vars.at(e.name);
    case Expr::Op::transpose: {
      auto s = shape_of(e.args[0], vars, dims);
      return {s.type.transposed(), s.cols, s.rows};
    }
    case Expr::Op::add: {
      auto s = shape_of(e.args[0], vars, dims);
      for (std::size_t i = 1; i < e.args.size(); ++i) {
        const auto t = shape_of(e.args[i], vars, dims);
        if (s.rows && t.rows) dims.unite(*s.rows, *t.rows);
        if (s.cols && t.cols) dims.unite(*s.cols, *t.cols);
      }
      return s;
    }
    case Expr::Op::mul: {
      const auto a = shape_of(e.args[0], vars, dims);
      const auto b = shape_of(e.args[1], vars, dims);
      if (a.type.kind == Kind::scalar) return b;
      if (b.type.kind == Kind::scalar) return a;
      if (a.cols && b.rows) dims.unite(*a.cols, *b.rows);
      Shape out;
      out.rows = a.rows;
      out.cols = b.cols;
      if (out.rows && out.cols) out.type = Type::matrix();
      else if (out.rows) out.type = Type::column();
      else if (out.cols) out.type = Type::row();
      else out.type = Type::scalar();
      return out;
    }
  }
  return {};
}

}  // namespace

TypedProgram infer(const KernelProgram& program, const std::map<std::string, Seed>& seeds) {
  // Variables in first-appearance order (target before its right-hand side).
  std::vector<std::string> order;
  std::map<std::string, std::size_t> index;
  auto note = [&](const std::string& n) {
    if (index.emplace(n, order.size()).second) order.push_back(n);
  };
  std::vector<std::vector<std::string>> reads(program.statements.size());
  for (std::size_t s = 0; s < program.statements.size(); ++s) {
    note(program.statements[s].target);
    collect_vars(program.statements[s].expr, reads[s]);
    for (const auto& n : reads[s]) note(n);
  }
  for (const auto& [name, seed] : seeds)
    if (!index.count(name)) fail(ErrorKind::invalid_argument, "declaration for unknown variable '" + name + "'");

  // Candidate types per variable.
  std::vector<std::vector<int>> domain(order.size());
  for (std::size_t v = 0; v < order.size(); ++v) {
    auto it = seeds.find(order[v]);
    for (std::size_t t = 0; t < all_types().size(); ++t)
      if (it == seeds.end() || matches(it->second, all_types()[t])) domain[v].push_back(static_cast<int>(t));
  }

  // Statements become checkable once their last variable is assigned.
  std::vector<std::vector<std::size_t>> check_at(order.size());
  for (std::size_t s = 0; s < program.statements.size(); ++s) {
    std::size_t last = index[program.statements[s].target];
    for (const auto& n : reads[s]) last = std::max(last, index[n]);
    check_at[last].push_back(s);
  }
  auto statement_ok = [&](std::size_t s, const std::vector<int>& a) {
    const auto t = type_of(program.statements[s].expr, index, a);
    return t && *t == all_types()[static_cast<std::size_t>(a[index[program.statements[s].target]])];
  };

  std::vector<std::vector<int>> solutions;
  std::vector<int> assignment(order.size(), -1);
  std::function<void(std::size_t)> search = [&](std::size_t v) {
    if (v == order.size()) {
      if (solutions.size() == kMaxTypings)
        fail(ErrorKind::invalid_argument, "too many possible typings; declare some variable kinds");
      solutions.push_back(assignment);
      return;
    }
    for (int t : domain[v]) {
      assignment[v] = t;
      bool ok = true;
      for (auto s : check_at[v])
        if (!statement_ok(s, assignment)) {
          ok = false;
          break;
        }
      if (ok) search(v + 1);
    }
    assignment[v] = -1;
  };
  search(0);

  if (solutions.empty()) {
    // Report the first statement that cannot be typed together with its predecessors.
    KernelProgram prefix{program.name, {}};
    for (const auto& st : program.statements) {
      prefix.statements.push_back(st);
      std::map<std::string, Seed> prefix_seeds;
      std::vector<std::string> names;
      for (const auto& s2 : prefix.statements) {
        names.push_back(s2.target);
        collect_vars(s2.expr, names);
      }
      for (const auto& n : names)
        if (seeds.count(n)) prefix_seeds[n] = seeds.at(n);
      bool typable = true;
      if (prefix.statements.size() < program.statements.size()) {
        try {
          infer(prefix, prefix_seeds);
        } catch (const LocatedError&) {
          typable = false;
        } catch (const Error& e) {
          typable = e.kind() != ErrorKind::domain;
        }
      } else {
        typable = false;
      }
      if (!typable)
        throw LocatedError(ErrorKind::domain,
                           "type conflict: no consistent kinds for '" + st.target + " = " + to_source(st.expr) + "'",
                           st.line, st.column);
    }
  }

  // Naming hints, only where consistent: single uppercase letters first, then
  // lowercase names, each pass in first-appearance order.
  using Pref = std::function<bool(const Type&)>;
  auto apply_hints = [&](const std::function<bool(const std::string&)>& applies, const std::vector<Pref>& prefs) {
    for (std::size_t v = 0; v < order.size() && solutions.size() > 1; ++v) {
      if (!applies(order[v])) continue;
      std::set<int> kinds;
      for (const auto& s : solutions) kinds.insert(s[v]);
      if (kinds.size() < 2) continue;
      for (const auto& pref : prefs) {
        std::vector<std::vector<int>> kept;
        for (const auto& s : solutions)
          if (pref(all_types()[static_cast<std::size_t>(s[v])])) kept.push_back(s);
        if (!kept.empty()) {
          solutions = std::move(kept);
          break;
        }
      }
    }
  };
  apply_hints(single_upper, {[](const Type& t) { return t == Type::matrix(); }});
  apply_hints(lowercase_name, {[](const Type& t) { return t == Type::column(); },
                               [](const Type& t) { return t.kind == Kind::vector; },
                               [](const Type& t) { return t.kind == Kind::scalar; }});
  if (solutions.size() > 1) {
    std::vector<std::string> ambiguous;
    for (std::size_t v = 0; v < order.size(); ++v) {
      std::set<int> kinds;
      for (const auto& s : solutions) kinds.insert(s[v]);
      if (kinds.size() > 1) ambiguous.push_back(order[v]);
    }
    fail(ErrorKind::invalid_argument, "cannot determine the kind of: " + join(ambiguous, ", ") +
                                          " (declare them explicitly)");
  }
  const auto& chosen = solutions.front();

  // Dimension symbols.
  Dims dims;
  std::map<std::string, Shape> shapes;
  for (std::size_t v = 0; v < order.size(); ++v) {
    Shape s;
    s.type = all_types()[static_cast<std::size_t>(chosen[v])];
    if (s.type.kind == Kind::matrix || s.type == Type::column()) s.rows = dims.make();
    if (s.type.kind == Kind::matrix || s.type == Type::row()) s.cols = dims.make();
    shapes[order[v]] = s;
  }
  for (const auto& st : program.statements) {
    const auto rhs = shape_of(st.expr, shapes, dims);
    const auto& lhs = shapes[st.target];
    if (lhs.rows && rhs.rows) dims.unite(*lhs.rows, *rhs.rows);
    if (lhs.cols && rhs.cols) dims.unite(*lhs.cols, *rhs.cols);
  }

  TypedProgram out;
  out.program = program;
  std::set<std::string> taken(order.begin(), order.end());
  taken.insert(program.name);
  std::map<std::size_t, std::string> dim_names;
  std::size_t next_dim = 1;
  auto dim_name = [&](std::optional<std::size_t> slot) -> std::string {
    if (!slot) return {};
    const auto root = dims.find(*slot);
    auto it = dim_names.find(root);
    if (it != dim_names.end()) return it->second;
    std::string name;
    do name = "n" + std::to_string(next_dim++);
    while (taken.count(name));
    out.dimensions.push_back(name);
    return dim_names[root] = name;
  };

  // Intents from the order of reads and writes; a statement reads before it writes.
  std::map<std::string, bool> written, read_first;
  for (std::size_t s = 0; s < program.statements.size(); ++s) {
    for (const auto& n : reads[s])
      if (!written.count(n) && !read_first.count(n)) read_first[n] = true;
    written[program.statements[s].target] = true;
  }
  for (const auto& name : order) {
    Variable var;
    var.name = name;
    var.type = shapes[name].type;
    var.rows = dim_name(shapes[name].rows);
    var.cols = dim_name(shapes[name].cols);
    const bool w = written.count(name) > 0, r = read_first.count(name) > 0;
    var.intent = !w ? Intent::in : r ? Intent::inout : Intent::out;
    if (auto it = seeds.find(name); it != seeds.end() && it->second.intent) {
      const auto want = *it->second.intent;
      if (w && want == Intent::in)
        fail(ErrorKind::domain, "'" + name + "' is assigned, so it cannot be declared in");
      if (r && w && want == Intent::out)
        fail(ErrorKind::domain, "'" + name + "' is read before it is assigned, so it cannot be declared out");
      if (!w && want == Intent::out) fail(ErrorKind::domain, "'" + name + "' is never assigned, so it cannot be out");
      var.intent = want;
    }
    out.variables.push_back(std::move(var));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Lowering

const Buffer& LoopIR::buffer(std::string_view name) const {
  for (const auto& b : buffers)
    if (b.name == name) return b;
  fail(ErrorKind::not_found, "no buffer '" + std::string(name) + "'");
}

namespace {

struct Term {
  std::vector<Access> factors;
  std::vector<std::pair<std::string, std::string>> loops;  // reduction (var, extent)
};

struct TypedShape {
  Type type;
  std::string rows, cols;
};

TypedShape typed_shape(const Expr& e, const TypedProgram& typed) {
  switch (e.op) {
    case Expr::Op::var: {
      const auto& v = typed.variable(e.name);
      return {v.type, v.rows, v.cols};
    }
    case Expr::Op::transpose: {
      auto s = typed_shape(e.args[0], typed);
      return {s.type.transposed(), s.cols, s.rows};
    }
    case Expr::Op::add: return typed_shape(e.args[0], typed);
    case Expr::Op::mul: {
      const auto a = typed_shape(e.args[0], typed);
      const auto b = typed_shape(e.args[1], typed);
      if (a.type.kind == Kind::scalar) return b;
      if (b.type.kind == Kind::scalar) return a;
      TypedShape out{Type::scalar(), a.rows, b.cols};
      if (!out.rows.empty() && !out.cols.empty()) out.type = Type::matrix();
      else if (!out.rows.empty()) out.type = Type::column();
      else if (!out.cols.empty()) out.type = Type::row();
      return out;
    }
  }
  return {};
}

class Lowerer {
 public:
  explicit Lowerer(const TypedProgram& typed) : typed_(typed) {
    for (const auto& v : typed.variables) taken_.insert(v.name);
    for (const auto& d : typed.dimensions) taken_.insert(d);
    taken_.insert(typed.program.name);
  }

  LoopIR run() {
    LoopIR ir;
    ir.name = typed_.program.name;
    ir.dimensions = typed_.dimensions;
    for (const auto& v : typed_.variables) ir.buffers.push_back({v.name, v.rows, v.cols, false});
    for (std::size_t s = 0; s < typed_.program.statements.size(); ++s) {
      index_counter_ = 0;
      ir.nests.push_back(statement(s, ir));
    }
    return ir;
  }

 private:
  std::string fresh_index() {
    static const char* pool[] = {"i", "j", "k", "l", "p", "q", "r", "s"};
    for (;;) {
      const auto n = index_counter_++;
      std::string name = n < 8 ? pool[n] : "i" + std::to_string(n);
      if (!taken_.count(name)) return name;
    }
  }

  std::string fresh_buffer(const std::string& base) {
    std::string name = "t_" + base;
    while (taken_.count(name)) name += "_";
    taken_.insert(name);
    return name;
  }

  static Access access(const std::string& buffer, const TypedShape& s, const std::string& r, const std::string& c) {
    Access a{buffer, {}};
    if (!s.rows.empty()) a.index.push_back(r);
    if (!s.cols.empty()) a.index.push_back(c);
    return a;
  }

  std::vector<Term> expand(const Expr& e, const std::string& r, const std::string& c) {
    switch (e.op) {
      case Expr::Op::var: return {Term{{access(e.name, typed_shape(e, typed_), r, c)}, {}}};
      case Expr::Op::transpose: return expand(e.args[0], c, r);
      case Expr::Op::add: {
        std::vector<Term> out;
        for (const auto& a : e.args) {
          auto t = expand(a, r, c);
          out.insert(out.end(), std::make_move_iterator(t.begin()), std::make_move_iterator(t.end()));
        }
        return out;
      }
      case Expr::Op::mul: {
        const auto sa = typed_shape(e.args[0], typed_);
        const auto sb = typed_shape(e.args[1], typed_);
        std::vector<Term> ta, tb;
        std::optional<std::pair<std::string, std::string>> reduction;
        if (sa.type.kind == Kind::scalar) {
          ta = expand(e.args[0], "", "");
          tb = expand(e.args[1], r, c);
        } else if (sb.type.kind == Kind::scalar) {
          ta = expand(e.args[0], r, c);
          tb = expand(e.args[1], "", "");
        } else {
          std::string k;
          if (!sa.cols.empty()) {
            k = fresh_index();
            reduction = std::make_pair(k, sa.cols);
          }
          ta = expand(e.args[0], r, k);
          tb = expand(e.args[1], k, c);
        }
        std::vector<Term> out;
        for (const auto& x : ta)
          for (const auto& y : tb) {
            Term t;
            if (reduction) t.loops.push_back(*reduction);
            t.loops.insert(t.loops.end(), x.loops.begin(), x.loops.end());
            t.loops.insert(t.loops.end(), y.loops.begin(), y.loops.end());
            t.factors = x.factors;
            t.factors.insert(t.factors.end(), y.factors.begin(), y.factors.end());
            out.push_back(std::move(t));
          }
        return out;
      }
    }
    return {};
  }

  static IrNode loop(std::string var, std::string extent, std::vector<IrNode> body) {
    IrNode n;
    n.op = IrNode::Op::loop;
    n.var = std::move(var);
    n.extent = std::move(extent);
    n.body = std::move(body);
    return n;
  }

  static std::vector<IrNode> wrap(std::vector<std::pair<std::string, std::string>> loops, std::vector<IrNode> body) {
    for (auto it = loops.rbegin(); it != loops.rend(); ++it) body = {loop(it->first, it->second, std::move(body))};
    return body;
  }

  static std::size_t depth(const std::vector<IrNode>& body) {
    std::size_t d = 0;
    for (const auto& n : body)
      if (n.op == IrNode::Op::loop) d = std::max(d, 1 + depth(n.body));
    return d;
  }

  StatementNest statement(std::size_t s, LoopIR& ir) {
    const auto& st = typed_.program.statements[s];
    const auto& target = typed_.variable(st.target);
    const TypedShape ts{target.type, target.rows, target.cols};

    std::vector<std::string> reads;
    collect_vars(st.expr, reads);
    const bool aliased = std::find(reads.begin(), reads.end(), st.target) != reads.end();
    std::string result = st.target;
    if (aliased) {
      result = fresh_buffer(st.target);
      ir.buffers.push_back({result, target.rows, target.cols, true});
    }

    std::vector<std::pair<std::string, std::string>> free;
    std::string r, c;
    if (!ts.rows.empty()) free.emplace_back(r = fresh_index(), ts.rows);
    if (!ts.cols.empty()) free.emplace_back(c = fresh_index(), ts.cols);

    std::vector<IrNode> inner;
    IrNode zero;
    zero.op = IrNode::Op::store;
    zero.target = access(result, ts, r, c);
    inner.push_back(zero);
    for (auto& term : expand(st.expr, r, c)) {
      IrNode acc;
      acc.op = IrNode::Op::accumulate;
      acc.target = access(result, ts, r, c);
      acc.factors = std::move(term.factors);
      auto wrapped = wrap(term.loops, {std::move(acc)});
      inner.insert(inner.end(), wrapped.begin(), wrapped.end());
    }

    StatementNest nest;
    nest.statement = s;
    nest.body = wrap(free, std::move(inner));
    if (aliased) {
      IrNode copy;
      copy.op = IrNode::Op::store;
      copy.target = access(st.target, ts, r, c);
      copy.factors = {access(result, ts, r, c)};
      auto copy_loops = wrap(free, {std::move(copy)});
      nest.body.insert(nest.body.end(), copy_loops.begin(), copy_loops.end());
    }
    nest.depth = depth(nest.body);
    return nest;
  }

  const TypedProgram& typed_;
  std::set<std::string> taken_;
  std::size_t index_counter_ = 0;
};

}  // namespace

LoopIR lower(const TypedProgram& typed) { return Lowerer(typed).run(); }

void validate(const LoopIR& ir, const TypedProgram& typed) {
  std::set<std::string> defined;
  for (const auto& v : typed.variables)
    if (v.intent != Intent::out) defined.insert(v.name);
  const std::set<std::string> dims(ir.dimensions.begin(), ir.dimensions.end());
  std::map<std::string, const Buffer*> buffers;
  for (const auto& b : ir.buffers) {
    if (!buffers.emplace(b.name, &b).second) fail(ErrorKind::validation, "duplicate buffer " + b.name);
    for (const auto* d : {&b.rows, &b.cols})
      if (!d->empty() && !dims.count(*d)) fail(ErrorKind::validation, "buffer " + b.name + " uses undeclared " + *d);
  }

  struct NestState {
    std::set<std::string> scope, zeroed, written, phase_writes;
  };
  std::function<void(const std::vector<IrNode>&, NestState&)> walk = [&](const std::vector<IrNode>& body,
                                                                          NestState& st) {
    auto check_access = [&](const Access& a) {
      auto it = buffers.find(a.buffer);
      if (it == buffers.end()) fail(ErrorKind::validation, "unknown buffer " + a.buffer);
      const std::size_t rank = !it->second->rows.empty() + !it->second->cols.empty();
      if (a.index.size() != rank) fail(ErrorKind::validation, "wrong index count for " + a.buffer);
      for (const auto& i : a.index)
        if (!st.scope.count(i)) fail(ErrorKind::validation, "index " + i + " used outside its loop");
    };
    for (const auto& n : body) {
      if (n.op == IrNode::Op::loop) {
        if (!dims.count(n.extent)) fail(ErrorKind::validation, "loop over undeclared extent " + n.extent);
        if (st.scope.count(n.var)) fail(ErrorKind::validation, "loop variable " + n.var + " reused");
        st.scope.insert(n.var);
        walk(n.body, st);
        st.scope.erase(n.var);
        continue;
      }
      check_access(n.target);
      const auto* var = typed.find(n.target.buffer);
      if (var && var->intent == Intent::in) fail(ErrorKind::validation, "input " + var->name + " is written");
      for (const auto& f : n.factors) {
        check_access(f);
        if (!defined.count(f.buffer))
          fail(ErrorKind::validation, "buffer " + f.buffer + " is read before it is written");
        // Products may not read anything this statement writes; copies read finished results only.
        if ((n.op == IrNode::Op::accumulate && st.written.count(f.buffer)) || st.phase_writes.count(f.buffer))
          fail(ErrorKind::validation, "buffer " + f.buffer + " is read while it is being written");
      }
      if (n.op == IrNode::Op::accumulate && !st.zeroed.count(n.target.buffer))
        fail(ErrorKind::validation, "accumulation into " + n.target.buffer + " before initialisation");
      st.zeroed.insert(n.target.buffer);
      st.written.insert(n.target.buffer);
      st.phase_writes.insert(n.target.buffer);
    }
  };
  for (const auto& nest : ir.nests) {
    NestState st;
    // A top-level node finishes its writes before the next one starts.
    for (const auto& top : nest.body) {
      walk({top}, st);
      defined.insert(st.phase_writes.begin(), st.phase_writes.end());
      st.phase_writes.clear();
    }
  }
  for (const auto& v : typed.variables)
    if (v.intent != Intent::in && !defined.count(v.name))
      fail(ErrorKind::validation, "output " + v.name + " is never written");
}

// ---------------------------------------------------------------------------
// Evaluation

Array Array::zeros(std::size_t rows, std::size_t cols) { return Array{rows, cols, std::vector<double>(rows * cols)}; }

namespace {

std::size_t extent_of(const Extents& ex, const std::string& dim) { return dim.empty() ? 1 : ex.at(dim); }

Array allocate(const Extents& ex, const std::string& rows, const std::string& cols) {
  return Array::zeros(extent_of(ex, rows), extent_of(ex, cols));
}

Array evaluate(const Expr& e, const TypedProgram& typed, const Bindings& env) {
  switch (e.op) {
    case Expr::Op::var: return env.at(e.name);
    case Expr::Op::transpose: {
      const auto a = evaluate(e.args[0], typed, env);
      auto t = Array::zeros(a.cols, a.rows);
      for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
      return t;
    }
    case Expr::Op::add: {
      auto sum = evaluate(e.args[0], typed, env);
      for (std::size_t k = 1; k < e.args.size(); ++k) {
        const auto t = evaluate(e.args[k], typed, env);
        for (std::size_t i = 0; i < sum.data.size(); ++i) sum.data[i] += t.data[i];
      }
      return sum;
    }
    case Expr::Op::mul: {
      const auto a = evaluate(e.args[0], typed, env);
      const auto b = evaluate(e.args[1], typed, env);
      const auto sa = typed_shape(e.args[0], typed).type;
      const auto sb = typed_shape(e.args[1], typed).type;
      if (sa.kind == Kind::scalar || sb.kind == Kind::scalar) {
        auto out = sa.kind == Kind::scalar ? b : a;
        const double f = sa.kind == Kind::scalar ? a.data[0] : b.data[0];
        for (auto& x : out.data) x *= f;
        return out;
      }
      auto out = Array::zeros(a.rows, b.cols);
      for (std::size_t j = 0; j < b.cols; ++j)
        for (std::size_t k = 0; k < a.cols; ++k)
          for (std::size_t i = 0; i < a.rows; ++i) out(i, j) += a(i, k) * b(k, j);
      return out;
    }
  }
  return {};
}

Bindings initial_env(const TypedProgram& typed, const Bindings& inputs, const Extents& ex) {
  Bindings env;
  for (const auto& v : typed.variables) {
    if (v.intent == Intent::out) env[v.name] = allocate(ex, v.rows, v.cols);
    else env[v.name] = inputs.at(v.name);
  }
  return env;
}

}  // namespace

Extents resolve_extents(const TypedProgram& typed, const Bindings& inputs, const Extents& explicit_extents) {
  Extents ex = explicit_extents;
  std::map<std::string, std::string> source;
  for (const auto& [d, n] : explicit_extents) source[d] = "the given extents";
  for (const auto& [name, arr] : inputs) {
    const auto* v = typed.find(name);
    if (!v) fail(ErrorKind::invalid_argument, "binding for unknown variable '" + name + "'");
    if (arr.data.size() != arr.rows * arr.cols)
      fail(ErrorKind::invalid_argument, "binding for '" + name + "' has inconsistent storage size");
  }
  for (const auto& v : typed.variables) {
    if (v.intent == Intent::out) continue;
    auto it = inputs.find(v.name);
    if (it == inputs.end()) fail(ErrorKind::invalid_argument, "missing binding for input '" + v.name + "'");
    const auto& a = it->second;
    auto bind = [&](const std::string& dim, std::size_t n, const char* axis) {
      if (dim.empty()) {
        if (n != 1)
          fail(ErrorKind::invalid_argument, "extent mismatch: '" + v.name + "' is a " + to_string(v.type) +
                                                " but has " + std::to_string(n) + " " + axis);
        return;
      }
      auto [pos, inserted] = ex.emplace(dim, n);
      if (inserted) {
        source[dim] = "'" + v.name + "'";
      } else if (pos->second != n) {
        fail(ErrorKind::invalid_argument, "extent mismatch for " + dim + ": " + source[dim] + " gives " +
                                              std::to_string(pos->second) + ", '" + v.name + "' gives " +
                                              std::to_string(n));
      }
    };
    bind(v.rows, a.rows, "rows");
    bind(v.cols, a.cols, "columns");
  }
  for (const auto& d : typed.dimensions)
    if (!ex.count(d)) fail(ErrorKind::invalid_argument, "no extent for dimension " + d);
  return ex;
}

Bindings interpret(const TypedProgram& typed, const Bindings& inputs, const Extents& explicit_extents) {
  const auto ex = resolve_extents(typed, inputs, explicit_extents);
  auto env = initial_env(typed, inputs, ex);
  for (const auto& st : typed.program.statements) env[st.target] = evaluate(st.expr, typed, env);
  return env;
}

Bindings interpret(const LoopIR& ir, const TypedProgram& typed, const Bindings& inputs,
                   const Extents& explicit_extents) {
  const auto ex = resolve_extents(typed, inputs, explicit_extents);
  auto env = initial_env(typed, inputs, ex);
  for (const auto& b : ir.buffers)
    if (b.temporary) env[b.name] = allocate(ex, b.rows, b.cols);
  std::map<std::string, std::size_t> iv;
  auto element = [&](const Access& a) -> double& {
    auto& arr = env.at(a.buffer);
    const auto& buf = ir.buffer(a.buffer);
    std::size_t i = 0, j = 0;
    if (a.index.size() == 2) {
      i = iv.at(a.index[0]);
      j = iv.at(a.index[1]);
    } else if (a.index.size() == 1) {
      (buf.rows.empty() ? j : i) = iv.at(a.index[0]);
    }
    return arr(i, j);
  };
  std::function<void(const std::vector<IrNode>&)> run = [&](const std::vector<IrNode>& body) {
    for (const auto& n : body) {
      switch (n.op) {
        case IrNode::Op::loop: {
          const auto extent = ex.at(n.extent);
          for (std::size_t k = 0; k < extent; ++k) {
            iv[n.var] = k;
            run(n.body);
          }
          iv.erase(n.var);
          break;
        }
        case IrNode::Op::store: element(n.target) = n.factors.empty() ? 0.0 : element(n.factors[0]); break;
        case IrNode::Op::accumulate: {
          double p = 1.0;
          for (const auto& f : n.factors) p *= element(f);
          element(n.target) += p;
          break;
        }
      }
    }
  };
  for (const auto& nest : ir.nests) run(nest.body);
  for (const auto& b : ir.buffers)
    if (b.temporary) env.erase(b.name);
  return env;
}

// ---------------------------------------------------------------------------
// Output

namespace {

class CWriter {
 public:
  CWriter(const LoopIR& ir, const TypedProgram& typed) : ir_(ir), typed_(typed) {}

  std::string run() {
    std::ostringstream out;
    out << "/* Kernel " << ir_.name << ":\n";
    for (const auto& st : typed_.program.statements) out << " *   " << st.target << " = " << to_source(st.expr) << "\n";
    out << " *\n * Arrays are column-major with the row extent as leading dimension.\n"
        << " * Returns 0, or -1 when temporary storage cannot be allocated.\n */\n";
    out << "#include <stdlib.h>\n\n";
    out << "int " << ir_.name << "(" << parameters() << ")\n{\n";

    std::set<std::string> loop_vars;
    for (const auto& nest : ir_.nests) collect_loops(nest.body, loop_vars);
    if (!loop_vars.empty())
      out << "  int " << join(std::vector<std::string>(loop_vars.begin(), loop_vars.end()), ", ") << ";\n";
    std::vector<const Buffer*> temps;
    for (const auto& b : ir_.buffers)
      if (b.temporary) temps.push_back(&b);
    for (const auto* t : temps) {
      if (t->rows.empty() && t->cols.empty()) out << "  double " << t->name << ";\n";
      else out << "  double *" << t->name << " = malloc(sizeof(double) * " << size_expr(*t) << ");\n";
    }
    std::vector<std::string> heap;
    for (const auto* t : temps)
      if (!t->rows.empty() || !t->cols.empty()) heap.push_back(t->name);
    if (!heap.empty()) {
      std::vector<std::string> nulls;
      for (const auto& h : heap) nulls.push_back("!" + h);
      out << "\n  if (" << join(nulls, " || ") << ") {\n";
      for (const auto& h : heap) out << "    free(" << h << ");\n";
      out << "    return -1;\n  }\n";
    }
    for (const auto& nest : ir_.nests) {
      const auto& st = typed_.program.statements[nest.statement];
      out << "\n  /* " << st.target << " = " << to_source(st.expr) << " */\n";
      body(out, nest.body, 1);
    }
    if (!heap.empty()) out << "\n";
    for (const auto& h : heap) out << "  free(" << h << ");\n";
    out << "  return 0;\n}\n";
    return out.str();
  }

 private:
  std::string parameters() const {
    std::vector<std::string> params;
    for (const auto& d : ir_.dimensions) params.push_back("int " + d);
    for (const auto& v : typed_.variables) {
      const bool scalar = v.type.kind == Kind::scalar;
      if (v.intent == Intent::in) params.push_back(scalar ? "double " + v.name : "const double *" + v.name);
      else params.push_back("double *" + v.name);
    }
    return join(params, ", ");
  }

  static std::string size_expr(const Buffer& b) {
    std::vector<std::string> f;
    if (!b.rows.empty()) f.push_back("(size_t)" + b.rows);
    if (!b.cols.empty()) f.push_back(b.cols);
    return join(f, " * ");
  }

  static void collect_loops(const std::vector<IrNode>& body, std::set<std::string>& out) {
    for (const auto& n : body)
      if (n.op == IrNode::Op::loop) {
        out.insert(n.var);
        collect_loops(n.body, out);
      }
  }

  std::string ref(const Access& a) const {
    const auto& b = ir_.buffer(a.buffer);
    const auto* var = typed_.find(a.buffer);
    if (a.index.empty()) {
      if (b.temporary || (var && var->intent == Intent::in)) return a.buffer;
      return "*" + a.buffer;
    }
    if (a.index.size() == 1) return a.buffer + "[" + a.index[0] + "]";
    return a.buffer + "[" + a.index[0] + " + " + a.index[1] + " * " + b.rows + "]";
  }

  void body(std::ostringstream& out, const std::vector<IrNode>& nodes, int level) const {
    const std::string pad(static_cast<std::size_t>(level) * 2, ' ');
    for (const auto& n : nodes) {
      switch (n.op) {
        case IrNode::Op::loop:
          out << pad << "for (" << n.var << " = 0; " << n.var << " < " << n.extent << "; ++" << n.var << ") {\n";
          body(out, n.body, level + 1);
          out << pad << "}\n";
          break;
        case IrNode::Op::store:
          out << pad << ref(n.target) << " = " << (n.factors.empty() ? "0.0" : ref(n.factors[0])) << ";\n";
          break;
        case IrNode::Op::accumulate: {
          std::vector<std::string> f;
          for (const auto& a : n.factors) f.push_back(ref(a));
          out << pad << ref(n.target) << " += " << join(f, " * ") << ";\n";
          break;
        }
      }
    }
  }

  const LoopIR& ir_;
  const TypedProgram& typed_;
};

}  // namespace

std::string emit_c(const LoopIR& ir, const TypedProgram& typed) { return CWriter(ir, typed).run(); }

std::string manifest_json(const TypedProgram& typed) {
  nlohmann::ordered_json j;
  j["kernel"] = typed.program.name;
  j["source"] = typed.program.name + ".c";
  j["returns"] = "int: 0 on success, -1 when temporary storage cannot be allocated";
  j["layout"] = "column-major";
  auto params = nlohmann::ordered_json::array();
  for (const auto& d : typed.dimensions)
    params.push_back({{"name", d}, {"kind", "extent"}, {"intent", "in"}, {"c_type", "int"}});
  for (const auto& v : typed.variables) {
    nlohmann::ordered_json p;
    p["name"] = v.name;
    p["kind"] = to_string(v.type.kind);
    p["orientation"] = to_string(v.type.orientation);
    p["intent"] = to_string(v.intent);
    p["rows"] = v.rows.empty() ? "1" : v.rows;
    p["cols"] = v.cols.empty() ? "1" : v.cols;
    const bool scalar = v.type.kind == Kind::scalar;
    p["c_type"] = v.intent == Intent::in ? (scalar ? "double" : "const double *") : "double *";
    params.push_back(std::move(p));
  }
  j["parameters"] = std::move(params);
  return j.dump(2) + "\n";
}

std::string makefile(const CompiledKernel& kernel) {
  const auto& name = kernel.typed.program.name;
  std::ostringstream out;
  out << "CC ?= cc\n"
      << "CFLAGS ?= -O2 -std=c99 -Wall -Wextra\n\n"
      << name << ".o: " << name << ".c\n"
      << "\t$(CC) $(CFLAGS) -c " << name << ".c -o " << name << ".o\n\n"
      << "clean:\n"
      << "\trm -f " << name << ".o\n\n"
      << ".PHONY: clean\n";
  return out.str();
}

std::string readme(const CompiledKernel& kernel) {
  const auto& p = kernel.typed.program;
  std::ostringstream out;
  out << "Kernel " << p.name << "\n\n";
  for (const auto& st : p.statements) out << "    " << st.target << " = " << to_source(st.expr) << "\n";
  const auto sig_begin = kernel.source.find("int " + p.name + "(");
  const auto sig_end = kernel.source.find(')', sig_begin);
  if (sig_begin != std::string::npos && sig_end != std::string::npos)
    out << "\nC entry point (" << p.name << ".c):\n\n    " << kernel.source.substr(sig_begin, sig_end - sig_begin + 1)
        << ";\n";
  out << "\nArrays are column-major with the row extent as leading dimension.\n"
      << "The call returns 0, or -1 when temporary storage cannot be allocated.\n\n"
      << "Parameters (also in " << kernel.manifest_file() << "):\n\n";
  for (const auto& d : kernel.typed.dimensions) out << "    " << d << "  extent\n";
  for (const auto& v : kernel.typed.variables) {
    out << "    " << v.name << "  " << to_string(v.type.kind);
    if (v.type.kind != Kind::scalar)
      out << " " << (v.rows.empty() ? "1" : v.rows) << " x " << (v.cols.empty() ? "1" : v.cols);
    out << ", " << to_string(v.intent) << "\n";
  }
  out << "\nBuild with `make`, which produces " << p.name << ".o.\n";
  return out.str();
}

std::vector<std::pair<std::string, std::string>> package_files(const CompiledKernel& kernel) {
  return {{kernel.source_file(), kernel.source},
          {kernel.manifest_file(), kernel.manifest},
          {"makefile", makefile(kernel)},
          {"README", readme(kernel)}};
}

CompiledKernel compile(std::string_view text, const std::map<std::string, Seed>& seeds) {
  CompiledKernel k;
  k.typed = infer(parse_kernel(text), seeds);
  k.ir = lower(k.typed);
  validate(k.ir, k.typed);
  k.source = emit_c(k.ir, k.typed);
  k.manifest = manifest_json(k.typed);
  return k;
}

}  // namespace lh::kernelc
