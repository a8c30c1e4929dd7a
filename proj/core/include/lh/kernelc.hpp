#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace lh::kernelc {

// --- Syntax -----------------------------------------------------------------
//
//   kernel <name>
//   <target> = <expr>          one statement per line, '#' starts a comment
//
//   expr    := term { '+' term }
//   term    := postfix { '*' postfix }
//   postfix := primary { "'" }
//   primary := identifier | '(' expr ')'

struct Expr {
  enum class Op { var, add, mul, transpose };

  Op op = Op::var;
  std::string name;         // var only
  std::vector<Expr> args;   // add: two or more terms; mul: two factors; transpose: one
  int line = 0, column = 0;

  static Expr variable(std::string name, int line = 0, int column = 0);
  bool operator==(const Expr& other) const;
};

struct Assign {
  std::string target;
  Expr expr;
  int line = 0, column = 0;
};

struct KernelProgram {
  std::string name;
  std::vector<Assign> statements;
};

/// Throws LocatedError(parse) with the offending line and column.
KernelProgram parse_kernel(std::string_view text);
/// Source form of an expression, fully parenthesised where needed.
std::string to_source(const Expr& expr);
std::string to_source(const KernelProgram& program);

// --- Types ------------------------------------------------------------------

enum class Kind { scalar, vector, matrix };
enum class Orientation { none, row, column };
enum class Intent { in, out, inout };

std::string_view to_string(Kind k);
std::string_view to_string(Orientation o);
std::string_view to_string(Intent i);

/// Kind plus orientation; the four shapes a value can take.
struct Type {
  Kind kind = Kind::scalar;
  Orientation orientation = Orientation::none;

  static Type scalar() { return {Kind::scalar, Orientation::none}; }
  static Type column() { return {Kind::vector, Orientation::column}; }
  static Type row() { return {Kind::vector, Orientation::row}; }
  static Type matrix() { return {Kind::matrix, Orientation::none}; }

  Type transposed() const;
  bool operator==(const Type&) const = default;
};

std::string to_string(Type t);

/// Explicit declarations that take precedence over inference. Any field may
/// be left open; `vector` without orientation accepts either.
struct Seed {
  std::optional<Kind> kind;
  std::optional<Orientation> orientation;
  std::optional<Intent> intent;
};

/// Comma-separated words from {scalar, vector, matrix, row, column, in, out, inout}.
Seed parse_seed(std::string_view text);

struct Variable {
  std::string name;
  Type type;
  Intent intent = Intent::in;
  std::string rows;  // dimension symbol, empty when the extent is 1
  std::string cols;
};

struct TypedProgram {
  KernelProgram program;
  std::vector<Variable> variables;  // first-appearance order
  std::vector<std::string> dimensions;  // symbols in first-use order

  const Variable& variable(std::string_view name) const;
  const Variable* find(std::string_view name) const;
};

/// Assigns every variable a type, dimension symbols and an intent. Seeds are
/// applied first; remaining choices follow from the typing rules, then from
/// naming hints (lowercase -> column vector, single uppercase letter ->
/// matrix) in first-appearance order, only where a hint is consistent with
/// the rules. Throws domain on a type conflict and invalid_argument listing
/// the variables that are still ambiguous.
TypedProgram infer(const KernelProgram& program, const std::map<std::string, Seed>& seeds = {});

// --- Loop form --------------------------------------------------------------

struct Access {
  std::string buffer;
  std::vector<std::string> index;  // loop variables: none, [i] or [row, col]
};

struct IrNode {
  enum class Op { loop, store, accumulate };

  Op op = Op::loop;
  // loop
  std::string var;
  std::string extent;  // dimension symbol
  std::vector<IrNode> body;
  // store: target = 0 (factors empty) or copy of factors[0];
  // accumulate: target += product of factors
  Access target;
  std::vector<Access> factors;
};

struct Buffer {
  std::string name;
  std::string rows, cols;  // dimension symbols, empty for extent 1
  bool temporary = false;
};

struct StatementNest {
  std::size_t statement = 0;
  std::vector<IrNode> body;
  /// Loop depth of the outermost nest over the statement's result.
  std::size_t depth = 0;
};

struct LoopIR {
  std::string name;
  std::vector<Buffer> buffers;  // variables, then temporaries
  std::vector<std::string> dimensions;
  std::vector<StatementNest> nests;

  const Buffer& buffer(std::string_view name) const;
};

/// One nest per statement. Each nest zero-fills its result and accumulates
/// every term of the distributed expression; a statement that reads its own
/// target computes into a temporary first.
LoopIR lower(const TypedProgram& typed);

/// Def-use audit: reads only of inputs or already-written buffers, `in`
/// buffers never written, loop extents declared. Throws validation.
void validate(const LoopIR& ir, const TypedProgram& typed);

// --- Evaluation -------------------------------------------------------------

/// Column-major dense array; scalars are 1x1, column vectors n x 1, row
/// vectors 1 x n.
struct Array {
  std::size_t rows = 1, cols = 1;
  std::vector<double> data;

  static Array zeros(std::size_t rows, std::size_t cols);
  double& operator()(std::size_t i, std::size_t j) { return data[i + j * rows]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i + j * rows]; }
  bool operator==(const Array&) const = default;
};

using Bindings = std::map<std::string, Array>;
using Extents = std::map<std::string, std::size_t>;

/// Extents of every dimension symbol, taken from the bound inputs and any
/// explicit values. Throws invalid_argument on missing or inconsistent data.
Extents resolve_extents(const TypedProgram& typed, const Bindings& inputs, const Extents& explicit_extents = {});

/// Statement-by-statement evaluation with dense linear algebra. Returns the
/// final value of every variable.
Bindings interpret(const TypedProgram& typed, const Bindings& inputs, const Extents& explicit_extents = {});
/// Executes the loop form directly.
Bindings interpret(const LoopIR& ir, const TypedProgram& typed, const Bindings& inputs,
                   const Extents& explicit_extents = {});

// --- Output -----------------------------------------------------------------

/// One C function named after the kernel. Parameters: dimension extents as
/// int, then variables in first-appearance order. `in` scalars pass by value,
/// `in` arrays as const double*, everything else as double*. Arrays are
/// column-major with the row extent as leading dimension.
std::string emit_c(const LoopIR& ir, const TypedProgram& typed);

/// JSON description of the generated function's parameters.
std::string manifest_json(const TypedProgram& typed);

struct CompiledKernel {
  TypedProgram typed;
  LoopIR ir;
  std::string source;    // C text
  std::string manifest;  // JSON
  std::string source_file() const { return typed.program.name + ".c"; }
  std::string manifest_file() const { return typed.program.name + ".json"; }
};

/// Makefile that builds <name>.o with a C99 compiler.
std::string makefile(const CompiledKernel& kernel);
/// Statements, C signature and parameter table.
std::string readme(const CompiledKernel& kernel);
/// Source, manifest, makefile and README as (file name, content) pairs.
std::vector<std::pair<std::string, std::string>> package_files(const CompiledKernel& kernel);

/// parse, infer, lower, validate, emit.
CompiledKernel compile(std::string_view text, const std::map<std::string, Seed>& seeds = {});

}  // namespace lh::kernelc
