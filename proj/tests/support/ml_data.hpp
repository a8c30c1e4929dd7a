#pragma once

// Synthetic datasets for classifier and labeling tests.

#include <algorithm>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "lh/mlselect.hpp"

namespace lh::testing {

inline mlselect::SolverConfig cfg(const std::string& key) { return mlselect::SolverConfig::parse(key); }

inline mlselect::LabeledInstance instance(std::string id, mlselect::Features f, const std::string& best) {
  mlselect::LabeledInstance inst;
  inst.problem_id = std::move(id);
  inst.features = std::move(f);
  inst.best = cfg(best);
  inst.near_best = {inst.best};
  return inst;
}

inline const std::vector<std::string>& class_keys() {
  static const std::vector<std::string> k = {"cg/jacobi",   "gmres/ilu(1)", "bicgstab/sor", "tfqmr/asm",
                                             "gmres/jacobi", "cgs/block_jacobi", "bicg/ilu(0)", "fgmres/asm"};
  return k;
}

/// Hidden depth-3 tree over x0..x4 in [0,1].
inline std::string hidden_label(const mlselect::Features& f) {
  auto x = [&](int i) { return std::get<double>(f.at("x" + std::to_string(i))); };
  const auto& k = class_keys();
  if (x(0) <= 0.5) {
    if (x(1) <= 0.3) return x(2) <= 0.6 ? k[0] : k[1];
    return x(3) <= 0.4 ? k[2] : k[3];
  }
  if (x(2) <= 0.7) return x(4) <= 0.5 ? k[4] : k[5];
  return x(1) <= 0.8 ? k[6] : k[7];
}

inline mlselect::Features random_features(std::mt19937_64& rng, int count) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  mlselect::Features f;
  for (int i = 0; i < count; ++i) f["x" + std::to_string(i)] = u(rng);
  return f;
}

inline std::vector<mlselect::LabeledInstance> hidden_tree_data(std::mt19937_64& rng, std::size_t n) {
  std::vector<mlselect::LabeledInstance> out;
  for (std::size_t i = 0; i < n; ++i) {
    auto f = random_features(rng, 5);
    const auto label = hidden_label(f);
    out.push_back(instance("h" + std::to_string(i), std::move(f), label));
  }
  return out;
}

/// Uniformly random labels from `classes` keys over random features.
inline std::vector<mlselect::LabeledInstance> shuffled_label_data(std::mt19937_64& rng, std::size_t n,
                                                                   std::size_t classes) {
  std::uniform_int_distribution<std::size_t> pick(0, classes - 1);
  std::vector<mlselect::LabeledInstance> out;
  for (std::size_t i = 0; i < n; ++i)
    out.push_back(instance("r" + std::to_string(i), random_features(rng, 5), class_keys()[pick(rng)]));
  return out;
}

/// Random run records for `problems` problems, several configs each, with
/// failures, residual misses, repeated configs and exact time ties.
inline std::vector<mlselect::RunRecord> random_runs(std::mt19937_64& rng, std::size_t problems) {
  const std::vector<std::string> keys = {"cg/jacobi", "gmres/ilu(1)", "bicgstab/sor", "tfqmr/asm", "gmres/jacobi",
                                         "cgs/block_jacobi"};
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> count(1, 9), pick(0, static_cast<int>(keys.size()) - 1);
  std::vector<mlselect::RunRecord> out;
  for (std::size_t p = 0; p < problems; ++p) {
    const int runs = count(rng);
    double last_time = 0;
    for (int r = 0; r < runs; ++r) {
      mlselect::RunRecord rec;
      rec.problem_id = "p" + std::to_string(p);
      rec.features = {{"x", static_cast<double>(p)}};
      rec.config = cfg(keys[static_cast<std::size_t>(pick(rng))]);
      rec.converged = u(rng) > 0.2;
      rec.time_seconds = (r > 0 && u(rng) < 0.1) ? last_time : 1.0 + 2.0 * u(rng);
      last_time = rec.time_seconds;
      rec.residual = u(rng) < 0.15 ? 1e-3 : 1e-10;
      rec.request.tolerance = 1e-8;
      if (p % 3 == 0) {
        rec.request.nev = 4;
        rec.converged_count = count(rng) % 6;
      }
      out.push_back(rec);
    }
  }
  return out;
}

}  // namespace lh::testing

namespace lh::testing {

struct OracleLabel {
  std::string problem_id;
  std::string best;
  std::set<std::string> near_best;
};

/// Quadratic scan straight from the definitions.
inline std::vector<OracleLabel> oracle_labels(const std::vector<mlselect::RunRecord>& runs, double ratio) {
  auto eligible = [](const mlselect::RunRecord& r) {
    if (!r.converged) return false;
    if (r.request.tolerance && r.residual > *r.request.tolerance) return false;
    if (r.request.nev && (!r.converged_count || *r.converged_count < *r.request.nev)) return false;
    return true;
  };
  std::vector<OracleLabel> out;
  std::vector<std::string> seen;
  for (const auto& first : runs) {
    if (std::find(seen.begin(), seen.end(), first.problem_id) != seen.end()) continue;
    seen.push_back(first.problem_id);
    const mlselect::RunRecord* best = nullptr;
    for (const auto& r : runs) {
      if (r.problem_id != first.problem_id || !eligible(r)) continue;
      bool beats_all = true;
      for (const auto& s : runs) {
        if (s.problem_id != first.problem_id || !eligible(s)) continue;
        if (s.time_seconds < r.time_seconds ||
            (s.time_seconds == r.time_seconds && s.config.key() < r.config.key()))
          beats_all = false;
      }
      if (beats_all) best = &r;
    }
    if (!best) continue;
    OracleLabel label{first.problem_id, best->config.key(), {}};
    for (const auto& r : runs)
      if (r.problem_id == first.problem_id && eligible(r) &&
          (r.time_seconds < ratio * best->time_seconds || r.time_seconds == best->time_seconds))
        label.near_best.insert(r.config.key());
    out.push_back(label);
  }
  return out;
}

}  // namespace lh::testing
