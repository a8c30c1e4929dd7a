#pragma once

// Random well-typed kernel programs and inputs for them.

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lh/kernelc.hpp"

namespace lh::testing {

using kernelc::Array;
using kernelc::Bindings;
using kernelc::Extents;
using kernelc::Intent;
using kernelc::Kind;
using kernelc::Seed;
using kernelc::Type;
using kernelc::TypedProgram;

inline Array random_array(std::size_t rows, std::size_t cols, std::mt19937& rng) {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  auto a = Array::zeros(rows, cols);
  for (auto& x : a.data) x = d(rng);
  return a;
}

inline std::size_t extent(const Extents& ex, const std::string& dim) { return dim.empty() ? 1 : ex.at(dim); }

// Random data for every input of a typed program, extents drawn per dimension symbol.
inline std::pair<Bindings, Extents> random_inputs(const TypedProgram& typed, std::mt19937& rng, std::size_t max_dim) {
  Extents ex;
  std::uniform_int_distribution<std::size_t> dim(1, max_dim);
  for (const auto& d : typed.dimensions) ex[d] = dim(rng);
  Bindings in;
  for (const auto& v : typed.variables)
    if (v.intent != Intent::out) in[v.name] = random_array(extent(ex, v.rows), extent(ex, v.cols), rng);
  return {in, ex};
}

inline bool close(const Array& a, const Array& b, double rel) {
  if (a.rows != b.rows || a.cols != b.cols) return false;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double scale = std::max({1.0, std::abs(a.data[i]), std::abs(b.data[i])});
    if (std::abs(a.data[i] - b.data[i]) > rel * scale) return false;
  }
  return true;
}

// Generator of well-typed random programs; every variable carries a full seed.
class ProgramGen {
 public:
  explicit ProgramGen(std::mt19937& rng) : rng_(rng) {}

  std::string program(std::map<std::string, Seed>& seeds) {
    vars_.clear();
    std::ostringstream out;
    out << "kernel random_kernel\n";
    const int statements = pick(1, 3);
    for (int s = 0; s < statements; ++s) {
      const Type t = random_type();
      const auto rhs = expr(t, pick(0, 3));
      std::string target;
      const auto existing = of_type(t);
      if (!existing.empty() && pick(0, 3) == 0) target = existing[static_cast<std::size_t>(pick(0, static_cast<int>(existing.size()) - 1))];
      else target = fresh(t);
      out << target << " = " << rhs << "\n";
    }
    for (const auto& [name, type] : vars_) {
      Seed s;
      s.kind = type.kind;
      if (type.kind == Kind::vector) s.orientation = type.orientation;
      seeds[name] = s;
    }
    return out.str();
  }

 private:
  int pick(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }

  Type random_type() {
    static const Type types[] = {Type::scalar(), Type::column(), Type::row(), Type::matrix()};
    return types[pick(0, 3)];
  }

  std::vector<std::string> of_type(Type t) const {
    std::vector<std::string> out;
    for (const auto& [n, ty] : vars_)
      if (ty == t) out.push_back(n);
    return out;
  }

  std::string fresh(Type t) {
    std::string name = "v" + std::to_string(vars_.size());
    vars_.emplace_back(name, t);
    return name;
  }

  std::string var(Type t) {
    const auto existing = of_type(t);
    if (!existing.empty() && pick(0, 1) == 0) return existing[static_cast<std::size_t>(pick(0, static_cast<int>(existing.size()) - 1))];
    return fresh(t);
  }

  std::string expr(Type t, int depth) {
    if (depth == 0) return var(t);
    switch (pick(0, 4)) {
      case 0: return var(t);
      case 1: return "(" + expr(t, depth - 1) + " + " + expr(t, depth - 1) + ")";
      case 2: return var(Type::scalar()) + " * (" + expr(t, depth - 1) + ")";
      case 3: return "(" + expr(t.transposed(), depth - 1) + ")'";
      default: break;
    }
    const auto a = [&](Type x) { return "(" + expr(x, depth - 1) + ")"; };
    if (t == Type::column()) return a(Type::matrix()) + " * " + a(Type::column());
    if (t == Type::row()) return a(Type::row()) + " * " + a(Type::matrix());
    if (t == Type::scalar()) return a(Type::row()) + " * " + a(Type::column());
    return pick(0, 1) ? a(Type::column()) + " * " + a(Type::row()) : a(Type::matrix()) + " * " + a(Type::matrix());
  }

  std::mt19937& rng_;
  std::vector<std::pair<std::string, Type>> vars_;
};

}  // namespace lh::testing
