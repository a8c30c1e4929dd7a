#include "lh/mlselect.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include "json.hpp"
#include "lh/error.hpp"
#include "lh/util.hpp"

namespace lh::mlselect {

using json = nlohmann::ordered_json;

const std::vector<std::string>& linear_methods() {
  static const std::vector<std::string> v = {"cg", "cgs", "bicg", "bicgstab", "gmres", "fgmres", "tfqmr"};
  return v;
}

const std::vector<std::string>& eigen_methods() {
  static const std::vector<std::string> v = {"power",   "subspace",     "arnoldi", "lanczos", "krylovschur",
                                             "generalized_davidson", "jacobi_davidson"};
  return v;
}

const std::vector<std::string>& preconditioners() {
  static const std::vector<std::string> v = {"ilu", "jacobi", "block_jacobi", "sor", "asm"};
  return v;
}

namespace {

bool contains(const std::vector<std::string>& v, const std::string& x) {
  return std::find(v.begin(), v.end(), x) != v.end();
}

}  // namespace

std::string SolverConfig::key() const {
  std::string k = method;
  const bool ilu = preconditioner && *preconditioner == "ilu";
  if (preconditioner) {
    k += "/" + *preconditioner;
    if (auto it = extra.find("levels"); ilu && it != extra.end()) k += "(" + it->second + ")";
  }
  for (const auto& [name, value] : extra) {
    if (ilu && name == "levels") continue;
    k += ";" + name + "=" + value;
  }
  return k;
}

SolverConfig SolverConfig::parse(std::string_view key) {
  SolverConfig c;
  const auto parts = split(trim(key), ';');
  const std::string head = to_lower(trim(parts.at(0)));
  const auto slash = head.find('/');
  c.method = std::string(trim(head.substr(0, slash)));
  if (c.method.empty()) fail(ErrorKind::invalid_argument, "empty solver method in '" + std::string(key) + "'");
  if (slash != std::string::npos) {
    std::string pc(trim(head.substr(slash + 1)));
    if (const auto open = pc.find('('); open != std::string::npos) {
      if (pc.back() != ')') fail(ErrorKind::invalid_argument, "malformed preconditioner '" + pc + "'");
      const std::string levels = pc.substr(open + 1, pc.size() - open - 2);
      if (parse_int(levels) < 0) fail(ErrorKind::invalid_argument, "negative fill level in '" + pc + "'");
      c.extra["levels"] = levels;
      pc = pc.substr(0, open);
    }
    if (pc.empty()) fail(ErrorKind::invalid_argument, "empty preconditioner in '" + std::string(key) + "'");
    c.preconditioner = pc;
  }
  for (std::size_t i = 1; i < parts.size(); ++i) {
    const auto eq = parts[i].find('=');
    if (eq == std::string::npos) fail(ErrorKind::invalid_argument, "expected name=value in '" + parts[i] + "'");
    c.extra[std::string(trim(parts[i].substr(0, eq)))] = std::string(trim(parts[i].substr(eq + 1)));
  }
  return c;
}

void validate(const SolverConfig& config, ProblemKind kind) {
  const auto& methods = kind == ProblemKind::linear ? linear_methods() : eigen_methods();
  if (!contains(methods, config.method))
    fail(ErrorKind::invalid_argument, "unknown " + std::string(kind == ProblemKind::linear ? "linear" : "eigen") +
                                          " method '" + config.method + "'");
  if (config.preconditioner && !contains(preconditioners(), *config.preconditioner))
    fail(ErrorKind::invalid_argument, "unknown preconditioner '" + *config.preconditioner + "'");
}

Features to_features(const matfeat::FeatureVector& f) {
  Features out;
  for (const auto& [k, v] : matfeat::to_map(f)) out[k] = v;
  return out;
}

Features to_features(const matfeat::ExtendedFeatureVector& f) {
  Features out;
  for (const auto& [k, v] : matfeat::to_map(f)) out[k] = v;
  return out;
}

// ---------------------------------------------------------------------------
// Labels

LabelReport derive_labels(const std::vector<RunRecord>& runs, std::optional<double> tolerance_threshold,
                          double time_ratio) {
  if (!(time_ratio >= 1.0) || !std::isfinite(time_ratio))
    fail(ErrorKind::invalid_argument, "time ratio must be a finite value >= 1");
  std::vector<std::string> order;
  std::map<std::string, std::vector<const RunRecord*>> groups;
  for (const auto& r : runs) {
    if (r.converged && !(r.time_seconds > 0 && std::isfinite(r.time_seconds)))
      fail(ErrorKind::invalid_argument, "run of " + r.problem_id + " converged with non-positive time");
    if (r.residual < 0 || std::isnan(r.residual))
      fail(ErrorKind::invalid_argument, "run of " + r.problem_id + " has a negative residual");
    auto& g = groups[r.problem_id];
    if (g.empty()) order.push_back(r.problem_id);
    g.push_back(&r);
  }

  LabelReport report;
  for (const auto& id : order) {
    const auto& group = groups[id];
    // Fastest time per eligible config.
    std::map<std::string, std::pair<double, const SolverConfig*>> eligible;
    for (const auto* r : group) {
      if (!r->converged) continue;
      const auto tol = tolerance_threshold ? tolerance_threshold : r->request.tolerance;
      if (tol && r->residual > *tol) continue;
      if (r->request.nev && (!r->converged_count || *r->converged_count < *r->request.nev)) continue;
      const auto key = r->config.key();
      auto it = eligible.find(key);
      if (it == eligible.end() || r->time_seconds < it->second.first)
        eligible[key] = {r->time_seconds, &r->config};
    }
    if (eligible.empty()) {
      report.excluded.push_back(id);
      continue;
    }
    // Map order is key order, so the first strict minimum is the smallest key.
    auto best = eligible.begin();
    for (auto it = eligible.begin(); it != eligible.end(); ++it)
      if (it->second.first < best->second.first) best = it;
    const double best_time = best->second.first;

    LabeledInstance inst;
    inst.problem_id = id;
    inst.best = *best->second.second;
    for (const auto& [key, entry] : eligible)
      if (entry.first < time_ratio * best_time || entry.first == best_time) inst.near_best.push_back(*entry.second);

    const auto& first = *group.front();
    inst.features = first.features;
    if (first.request.nev) inst.features["request_nev"] = static_cast<double>(*first.request.nev);
    if (first.request.spectrum) inst.features["request_spectrum"] = *first.request.spectrum;
    if (first.request.tolerance) inst.features["request_tolerance"] = *first.request.tolerance;
    if (first.request.processors) inst.features["request_processors"] = static_cast<double>(*first.request.processors);
    report.instances.push_back(std::move(inst));
  }
  return report;
}

// ---------------------------------------------------------------------------
// PCA

PcaResult fit_pca(const std::vector<std::string>& names, const std::vector<std::vector<double>>& samples) {
  if (samples.size() < 2) fail(ErrorKind::invalid_argument, "PCA needs at least 2 samples");
  const std::size_t m = names.size();
  for (const auto& s : samples) {
    if (s.size() != m) fail(ErrorKind::invalid_argument, "sample width does not match feature names");
    for (double x : s)
      if (!std::isfinite(x)) fail(ErrorKind::invalid_argument, "non-finite feature value");
  }
  const double n = static_cast<double>(samples.size());

  PcaResult out;
  std::vector<std::size_t> kept;
  for (std::size_t j = 0; j < m; ++j) {
    double mu = 0;
    for (const auto& s : samples) mu += s[j];
    mu /= n;
    double ss = 0;
    for (const auto& s : samples) ss += (s[j] - mu) * (s[j] - mu);
    const double sd = std::sqrt(ss / (n - 1));
    if (sd == 0.0 || sd <= 1e-12 * std::max(1.0, std::abs(mu))) {
      out.dropped.push_back(names[j]);
      continue;
    }
    kept.push_back(j);
    out.features.push_back(names[j]);
    out.mean.push_back(mu);
    out.scale.push_back(sd);
  }
  if (kept.empty()) fail(ErrorKind::invalid_argument, "all features are constant");

  const auto p = static_cast<Eigen::Index>(kept.size());
  Eigen::MatrixXd z(static_cast<Eigen::Index>(samples.size()), p);
  for (std::size_t i = 0; i < samples.size(); ++i)
    for (Eigen::Index c = 0; c < p; ++c) {
      const auto cu = static_cast<std::size_t>(c);
      z(static_cast<Eigen::Index>(i), c) = (samples[i][kept[cu]] - out.mean[cu]) / out.scale[cu];
    }
  const Eigen::MatrixXd cov = (z.transpose() * z) / (n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) fail(ErrorKind::domain, "eigendecomposition did not converge");

  for (Eigen::Index c = p - 1; c >= 0; --c) {
    Eigen::VectorXd v = eig.eigenvectors().col(c);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    out.components.emplace_back(v.data(), v.data() + v.size());
    out.explained.push_back(std::max(0.0, eig.eigenvalues()(c)));
  }
  return out;
}

std::vector<std::string> select_features(const PcaResult& pca, std::size_t k) {
  if (k == 0) fail(ErrorKind::invalid_argument, "k must be positive");
  if (k > pca.features.size())
    fail(ErrorKind::invalid_argument, "k = " + std::to_string(k) + " exceeds the " +
                                          std::to_string(pca.features.size()) + " available features");
  std::vector<std::string> selected;
  std::vector<bool> used(pca.features.size(), false);
  for (std::size_t c = 0; selected.size() < k; ++c) {
    const auto& comp = pca.components[c % pca.components.size()];
    std::size_t pick = SIZE_MAX;
    for (std::size_t j = 0; j < comp.size(); ++j) {
      if (used[j]) continue;
      if (pick == SIZE_MAX || std::abs(comp[j]) > std::abs(comp[pick]) ||
          (std::abs(comp[j]) == std::abs(comp[pick]) && pca.features[j] < pca.features[pick]))
        pick = j;
    }
    used[pick] = true;
    selected.push_back(pca.features[pick]);
  }
  return selected;
}

// ---------------------------------------------------------------------------
// Decision trees

namespace {

constexpr double kGainEps = 1e-12;

std::string numeric_key(bool le, double t) { return (le ? "<=" : ">") + format_double(t); }
std::string category_key(bool eq, const std::string& v) { return (eq ? "=" : "!=") + v; }

std::string criterion_name(Criterion c) { return c == Criterion::entropy ? "entropy" : "gini"; }
std::string target_name(Target t) { return t == Target::best ? "best" : "near_best"; }

void attach_split(ClassifierModel& model, const taxonomy::NodeRef& ref, const Split& s,
                  const taxonomy::NodeRef& yes, const taxonomy::NodeRef& no) {
  taxonomy::Question q;
  q.id = ref;
  q.facet = s.feature;
  if (s.numeric) {
    q.text = "Is " + s.feature + " <= " + format_double(s.threshold) + "?";
    q.options = {{numeric_key(true, s.threshold), "yes"}, {numeric_key(false, s.threshold), "no"}};
  } else {
    q.text = "Is " + s.feature + " = " + s.category + "?";
    q.options = {{category_key(true, s.category), "yes"}, {category_key(false, s.category), "no"}};
  }
  model.tree.nodes[ref] = taxonomy::InternalNode{q.id, {{q.options[0].key, yes}, {q.options[1].key, no}}};
  model.tree.questions[q.id] = std::move(q);
  model.splits[ref] = s;
}

class Trainer {
 public:
  Trainer(const std::vector<LabeledInstance>& data, const TreeParams& params) : data_(data), params_(params) {
    if (data.empty()) fail(ErrorKind::invalid_argument, "empty training set");
    if (params.min_leaf_size == 0) fail(ErrorKind::invalid_argument, "min_leaf_size must be positive");
    for (const auto& [name, value] : data.front().features)
      model_.schema[name] = std::holds_alternative<double>(value) ? FeatureType::numeric : FeatureType::categorical;
    for (const auto& inst : data) {
      if (inst.features.size() != model_.schema.size())
        fail(ErrorKind::invalid_argument, "instance " + inst.problem_id + " has a different feature set");
      for (const auto& [name, value] : inst.features) {
        auto it = model_.schema.find(name);
        if (it == model_.schema.end())
          fail(ErrorKind::invalid_argument, "instance " + inst.problem_id + " has unexpected feature " + name);
        const bool numeric = std::holds_alternative<double>(value);
        if (numeric != (it->second == FeatureType::numeric))
          fail(ErrorKind::invalid_argument, "feature " + name + " mixes numeric and categorical values");
        if (numeric && !std::isfinite(std::get<double>(value)))
          fail(ErrorKind::invalid_argument, "non-finite feature " + name + " in " + inst.problem_id);
      }
    }
    std::set<std::string> keys;
    for (const auto& inst : data) keys.insert(inst.best.key());
    classes_.assign(keys.begin(), keys.end());
    for (const auto& inst : data)
      label_.push_back(static_cast<std::size_t>(
          std::lower_bound(classes_.begin(), classes_.end(), inst.best.key()) - classes_.begin()));
    model_.params = params;
    model_.tree.name = "classifier";
  }

  ClassifierModel run() {
    std::vector<std::size_t> all(data_.size());
    std::iota(all.begin(), all.end(), 0);
    model_.tree.root = build(all, 0);
    taxonomy::validate(model_.tree, "classifier");
    return std::move(model_);
  }

 private:
  struct Candidate {
    bool found = false;
    double gain = 0;
    Split split;
  };

  double impurity(const std::vector<std::size_t>& counts, std::size_t total) const {
    if (total == 0) return 0.0;
    const double n = static_cast<double>(total);
    double acc = 0;
    if (params_.criterion == Criterion::entropy) {
      for (auto c : counts)
        if (c) {
          const double p = static_cast<double>(c) / n;
          acc -= p * std::log2(p);
        }
      return acc;
    }
    for (auto c : counts) {
      const double p = static_cast<double>(c) / n;
      acc += p * p;
    }
    return 1.0 - acc;
  }

  std::vector<std::size_t> counts_of(const std::vector<std::size_t>& idx) const {
    std::vector<std::size_t> counts(classes_.size(), 0);
    for (auto i : idx) ++counts[label_[i]];
    return counts;
  }

  void consider(Candidate& best, double parent, const std::vector<std::size_t>& left, std::size_t nl,
                const std::vector<std::size_t>& total, std::size_t n, const Split& s) const {
    const std::size_t nr = n - nl;
    if (nl < params_.min_leaf_size || nr < params_.min_leaf_size) return;
    std::vector<std::size_t> right(total.size());
    for (std::size_t c = 0; c < total.size(); ++c) right[c] = total[c] - left[c];
    const double dn = static_cast<double>(n);
    const double gain = parent - static_cast<double>(nl) / dn * impurity(left, nl) -
                        static_cast<double>(nr) / dn * impurity(right, nr);
    if (!best.found || gain > best.gain + kGainEps) best = {true, gain, s};
  }

  Candidate best_split(const std::vector<std::size_t>& idx) const {
    const auto total = counts_of(idx);
    const double parent = impurity(total, idx.size());
    Candidate best;
    for (const auto& [name, type] : model_.schema) {
      if (type == FeatureType::numeric) {
        std::vector<std::pair<double, std::size_t>> vals;
        for (auto i : idx) vals.emplace_back(std::get<double>(data_[i].features.at(name)), label_[i]);
        std::sort(vals.begin(), vals.end());
        std::vector<std::size_t> left(classes_.size(), 0);
        for (std::size_t k = 0; k + 1 < vals.size(); ++k) {
          ++left[vals[k].second];
          const double a = vals[k].first, b = vals[k + 1].first;
          if (a == b) continue;
          double t = a + (b - a) / 2;
          if (!(t < b)) t = a;
          consider(best, parent, left, k + 1, total, idx.size(), Split{name, true, t, {}});
        }
      } else {
        std::map<std::string, std::vector<std::size_t>> by_value;
        for (auto i : idx) {
          auto& c = by_value[std::get<std::string>(data_[i].features.at(name))];
          if (c.empty()) c.assign(classes_.size(), 0);
          ++c[label_[i]];
        }
        if (by_value.size() < 2) continue;
        for (const auto& [value, left] : by_value) {
          const std::size_t nl = std::accumulate(left.begin(), left.end(), std::size_t{0});
          consider(best, parent, left, nl, total, idx.size(), Split{name, false, 0, value});
        }
      }
    }
    return best;
  }

  bool goes_first(std::size_t i, const Split& s) const {
    const auto& v = data_[i].features.at(s.feature);
    return s.numeric ? std::get<double>(v) <= s.threshold : std::get<std::string>(v) == s.category;
  }

  std::vector<std::string> leaf_payload(const std::vector<std::size_t>& idx) const {
    const auto counts = counts_of(idx);
    const auto majority = static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    std::vector<std::string> payload{classes_[majority]};
    if (params_.target == Target::near_best) {
      std::set<std::string> rest;
      for (auto i : idx)
        for (const auto& c : data_[i].near_best) rest.insert(c.key());
      rest.erase(classes_[majority]);
      payload.insert(payload.end(), rest.begin(), rest.end());
    }
    return payload;
  }

  taxonomy::NodeRef build(const std::vector<std::size_t>& idx, int depth) {
    const taxonomy::NodeRef ref = "n" + std::to_string(next_id_++);
    model_.depth = std::max(model_.depth, depth);
    const auto counts = counts_of(idx);
    const bool pure = std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; }) <= 1;
    const bool depth_left = params_.max_depth < 0 || depth < params_.max_depth;
    if (!pure && depth_left && idx.size() >= 2 * params_.min_leaf_size) {
      const auto cand = best_split(idx);
      if (cand.found) {
        std::vector<std::size_t> yes, no;
        for (auto i : idx) (goes_first(i, cand.split) ? yes : no).push_back(i);
        model_.tree.nodes[ref] = taxonomy::InternalNode{};  // reserve preorder slot
        const auto a = build(yes, depth + 1);
        const auto b = build(no, depth + 1);
        attach_split(model_, ref, cand.split, a, b);
        return ref;
      }
    }
    model_.tree.nodes[ref] = taxonomy::LeafNode{leaf_payload(idx)};
    return ref;
  }

  const std::vector<LabeledInstance>& data_;
  TreeParams params_;
  std::vector<std::string> classes_;
  std::vector<std::size_t> label_;
  ClassifierModel model_;
  int next_id_ = 0;
};

}  // namespace

ClassifierModel induce_tree(const std::vector<LabeledInstance>& dataset, const TreeParams& params) {
  return Trainer(dataset, params).run();
}

const std::vector<std::string>& ClassifierModel::predict_keys(const Features& features) const {
  taxonomy::NodeRef ref = tree.root;
  while (true) {
    const auto& node = tree.node(ref);
    if (const auto* leaf = std::get_if<taxonomy::LeafNode>(&node)) return leaf->payload;
    const auto& inner = std::get<taxonomy::InternalNode>(node);
    const auto& s = splits.at(ref);
    auto it = features.find(s.feature);
    if (it == features.end()) fail(ErrorKind::invalid_argument, "missing feature '" + s.feature + "'");
    bool first = false;
    if (s.numeric) {
      const auto* v = std::get_if<double>(&it->second);
      if (!v) fail(ErrorKind::invalid_argument, "feature '" + s.feature + "' must be numeric");
      first = *v <= s.threshold;
    } else {
      const auto* v = std::get_if<std::string>(&it->second);
      if (!v) fail(ErrorKind::invalid_argument, "feature '" + s.feature + "' must be categorical");
      first = *v == s.category;
    }
    ref = inner.edges[first ? 0 : 1].second;
  }
}

std::vector<SolverConfig> ClassifierModel::predict(const Features& features) const {
  std::vector<SolverConfig> out;
  for (const auto& k : predict_keys(features)) out.push_back(SolverConfig::parse(k));
  return out;
}

std::string ClassifierModel::to_json() const {
  json j;
  j["format_version"] = 1;
  j["kind"] = "decision_tree";
  j["params"] = {{"max_depth", params.max_depth},
                 {"min_leaf_size", params.min_leaf_size},
                 {"criterion", criterion_name(params.criterion)},
                 {"target", target_name(params.target)}};
  json feats = json::object();
  for (const auto& [name, type] : schema) feats[name] = type == FeatureType::numeric ? "numeric" : "categorical";
  j["features"] = feats;
  j["depth"] = depth;
  j["leaf_count"] = leaf_count();
  j["root"] = tree.root;
  json nodes = json::array();
  auto walk = [&](auto&& self, const taxonomy::NodeRef& ref) -> void {
    const auto& node = tree.node(ref);
    if (const auto* leaf = std::get_if<taxonomy::LeafNode>(&node)) {
      nodes.push_back({{"id", ref}, {"payload", leaf->payload}});
      return;
    }
    const auto& inner = std::get<taxonomy::InternalNode>(node);
    const auto& s = splits.at(ref);
    json n = {{"id", ref}, {"feature", s.feature}};
    if (s.numeric) {
      n["op"] = "<=";
      n["value"] = s.threshold;
    } else {
      n["op"] = "=";
      n["value"] = s.category;
    }
    n["children"] = {inner.edges[0].second, inner.edges[1].second};
    nodes.push_back(n);
    self(self, inner.edges[0].second);
    self(self, inner.edges[1].second);
  };
  walk(walk, tree.root);
  j["nodes"] = nodes;
  return j.dump(2) + "\n";
}

ClassifierModel ClassifierModel::from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::parse, std::string("model JSON: ") + e.what());
  }
  try {
    if (j.at("format_version").get<int>() != 1) fail(ErrorKind::unsupported, "unsupported model format_version");
    ClassifierModel m;
    m.tree.name = "classifier";
    const auto& p = j.at("params");
    m.params.max_depth = p.at("max_depth").get<int>();
    m.params.min_leaf_size = p.at("min_leaf_size").get<std::size_t>();
    const auto crit = p.at("criterion").get<std::string>();
    if (crit != "entropy" && crit != "gini") fail(ErrorKind::validation, "unknown criterion " + crit);
    m.params.criterion = crit == "entropy" ? Criterion::entropy : Criterion::gini;
    const auto target = p.at("target").get<std::string>();
    if (target != "best" && target != "near_best") fail(ErrorKind::validation, "unknown target " + target);
    m.params.target = target == "best" ? Target::best : Target::near_best;
    for (const auto& [name, type] : j.at("features").items()) {
      const auto t = type.get<std::string>();
      if (t != "numeric" && t != "categorical") fail(ErrorKind::validation, "unknown feature type " + t);
      m.schema[name] = t == "numeric" ? FeatureType::numeric : FeatureType::categorical;
    }
    m.depth = j.at("depth").get<int>();
    m.tree.root = j.at("root").get<std::string>();
    for (const auto& n : j.at("nodes")) {
      const auto id = n.at("id").get<std::string>();
      if (m.tree.nodes.count(id)) fail(ErrorKind::validation, "duplicate model node '" + id + "'");
      if (n.contains("payload")) {
        m.tree.nodes[id] = taxonomy::LeafNode{n.at("payload").get<std::vector<std::string>>()};
        continue;
      }
      Split s;
      s.feature = n.at("feature").get<std::string>();
      auto st = m.schema.find(s.feature);
      if (st == m.schema.end()) fail(ErrorKind::validation, "node " + id + " tests unknown feature " + s.feature);
      const auto op = n.at("op").get<std::string>();
      if (op == "<=") {
        s.threshold = n.at("value").get<double>();
        if (!std::isfinite(s.threshold)) fail(ErrorKind::validation, "non-finite threshold at " + id);
      } else if (op == "=") {
        s.numeric = false;
        s.category = n.at("value").get<std::string>();
      } else {
        fail(ErrorKind::validation, "unknown split operator '" + op + "'");
      }
      if (s.numeric != (st->second == FeatureType::numeric))
        fail(ErrorKind::validation, "node " + id + " split type disagrees with feature " + s.feature);
      const auto kids = n.at("children").get<std::vector<std::string>>();
      if (kids.size() != 2) fail(ErrorKind::validation, "node " + id + " needs two children");
      attach_split(m, id, s, kids[0], kids[1]);
    }
    taxonomy::validate(m.tree, "model");
    return m;
  } catch (const json::exception& e) {
    fail(ErrorKind::validation, std::string("model JSON: ") + e.what());
  }
}

ClassifierModel ClassifierModel::load(const std::filesystem::path& path) { return from_json(read_file(path)); }

double accuracy(const ClassifierModel& model, const std::vector<LabeledInstance>& dataset, bool strict) {
  if (dataset.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& inst : dataset) {
    const auto& keys = model.predict_keys(inst.features);
    const auto want = inst.best.key();
    if (strict ? keys.front() == want : std::find(keys.begin(), keys.end(), want) != keys.end()) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(dataset.size());
}

std::vector<std::vector<std::size_t>> stratified_folds(const std::vector<LabeledInstance>& dataset, std::size_t k,
                                                        std::uint64_t seed) {
  if (k < 2) fail(ErrorKind::invalid_argument, "cross-validation needs k >= 2");
  if (k > dataset.size())
    fail(ErrorKind::invalid_argument, "k = " + std::to_string(k) + " exceeds dataset size " +
                                          std::to_string(dataset.size()));
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < dataset.size(); ++i) groups[dataset[i].best.key()].push_back(i);
  std::mt19937_64 rng(seed);
  std::vector<std::vector<std::size_t>> folds(k);
  std::size_t counter = 0;
  for (auto& [key, members] : groups) {
    for (std::size_t i = members.size(); i > 1; --i) std::swap(members[i - 1], members[rng() % i]);
    for (auto idx : members) folds[counter++ % k].push_back(idx);
  }
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

CvResult cross_validate(const std::vector<LabeledInstance>& dataset, std::size_t k, const TreeParams& params,
                        std::uint64_t seed, bool strict) {
  const auto folds = stratified_folds(dataset, k, seed);
  CvResult out;
  for (std::size_t f = 0; f < k; ++f) {
    std::vector<LabeledInstance> train, test;
    for (std::size_t g = 0; g < k; ++g)
      for (auto i : folds[g]) (g == f ? test : train).push_back(dataset[i]);
    const auto model = induce_tree(train, params);
    out.fold_accuracy.push_back(accuracy(model, test, strict));
    out.fold_sizes.push_back(test.size());
  }
  out.mean_accuracy =
      std::accumulate(out.fold_accuracy.begin(), out.fold_accuracy.end(), 0.0) / static_cast<double>(k);
  return out;
}

taxonomy::PathTable export_model(const ClassifierModel& model) { return taxonomy::flatten_tree(model.tree); }

namespace {

bool answer_holds(const taxonomy::Answer& a, const Features& features) {
  const auto& [feature, key] = a;
  auto it = features.find(feature);
  if (it == features.end()) fail(ErrorKind::invalid_argument, "missing feature '" + feature + "'");
  auto number = [&] {
    const auto* v = std::get_if<double>(&it->second);
    if (!v) fail(ErrorKind::invalid_argument, "feature '" + feature + "' must be numeric");
    return *v;
  };
  auto text = [&]() -> const std::string& {
    const auto* v = std::get_if<std::string>(&it->second);
    if (!v) fail(ErrorKind::invalid_argument, "feature '" + feature + "' must be categorical");
    return *v;
  };
  if (key.rfind("<=", 0) == 0) return number() <= parse_double(key.substr(2));
  if (key.rfind(">", 0) == 0) return number() > parse_double(key.substr(1));
  if (key.rfind("!=", 0) == 0) return text() != key.substr(2);
  if (key.rfind("=", 0) == 0) return text() == key.substr(1);
  fail(ErrorKind::validation, "unrecognised path answer '" + key + "'");
}

}  // namespace

const std::vector<std::string>& lookup_features(const taxonomy::PathTable& table, const Features& features) {
  for (const auto& row : table.rows()) {
    const bool match = std::all_of(row.answers.begin(), row.answers.end(),
                                   [&](const taxonomy::Answer& a) { return answer_holds(a, features); });
    if (match) return row.result;
  }
  fail(ErrorKind::not_found, "no row matches the feature vector");
}

// ---------------------------------------------------------------------------
// Corpus CSV

namespace {

const std::vector<std::string> kRunColumns = {"method",   "preconditioner",  "converged", "time_seconds",
                                              "residual", "converged_count", "nev",       "spectrum",
                                              "tolerance", "processors"};

// The method cell carries extras when there is no preconditioner; otherwise
// the preconditioner cell does. Joining them with '/' restores the key.
std::pair<std::string, std::string> config_cells(const SolverConfig& c) {
  const auto key = c.key();
  if (!c.preconditioner) return {key, ""};
  return {c.method, key.substr(c.method.size() + 1)};
}

}  // namespace

std::vector<RunRecord> parse_corpus_csv(std::string_view text) {
  const auto rows = parse_csv(text);
  if (rows.empty()) fail(ErrorKind::parse, "empty corpus");
  const auto& header = rows.front();
  if (header.empty() || header.front() != "problem_id") fail(ErrorKind::parse, "corpus must start with problem_id");
  const auto method_col =
      static_cast<std::size_t>(std::find(header.begin(), header.end(), "method") - header.begin());
  if (method_col == header.size() || header.size() != method_col + kRunColumns.size() ||
      !std::equal(kRunColumns.begin(), kRunColumns.end(), header.begin() + static_cast<std::ptrdiff_t>(method_col)))
    fail(ErrorKind::parse, "corpus columns must end with " + join(kRunColumns, ","));

  std::vector<RunRecord> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const int line = static_cast<int>(r + 1);
    if (row.size() != header.size()) throw LocatedError(ErrorKind::parse, "wrong number of fields", line);
    try {
      RunRecord rec;
      rec.problem_id = row[0];
      for (std::size_t c = 1; c < method_col; ++c) {
        if (row[c].empty()) continue;
        try {
          rec.features[header[c]] = parse_double(row[c]);
        } catch (const Error&) {
          rec.features[header[c]] = row[c];
        }
      }
      auto cell = [&](const char* name) -> const std::string& {
        return row[method_col + static_cast<std::size_t>(
                                    std::find(kRunColumns.begin(), kRunColumns.end(), name) - kRunColumns.begin())];
      };
      rec.config = SolverConfig::parse(cell("preconditioner").empty() ? cell("method")
                                                                      : cell("method") + "/" + cell("preconditioner"));
      const auto conv = to_lower(cell("converged"));
      if (conv == "true" || conv == "1")
        rec.converged = true;
      else if (conv == "false" || conv == "0")
        rec.converged = false;
      else
        fail(ErrorKind::parse, "converged must be true or false");
      rec.time_seconds = cell("time_seconds").empty() ? 0.0 : parse_double(cell("time_seconds"));
      rec.residual = cell("residual").empty() ? 0.0 : parse_double(cell("residual"));
      if (!cell("converged_count").empty()) rec.converged_count = static_cast<int>(parse_int(cell("converged_count")));
      if (!cell("nev").empty()) rec.request.nev = static_cast<int>(parse_int(cell("nev")));
      if (!cell("spectrum").empty()) rec.request.spectrum = cell("spectrum");
      if (!cell("tolerance").empty()) rec.request.tolerance = parse_double(cell("tolerance"));
      if (!cell("processors").empty()) rec.request.processors = static_cast<int>(parse_int(cell("processors")));
      out.push_back(std::move(rec));
    } catch (const LocatedError&) {
      throw;
    } catch (const Error& e) {
      throw LocatedError(e.kind(), e.what(), line);
    }
  }
  return out;
}

std::string to_corpus_csv(const std::vector<RunRecord>& runs) {
  std::set<std::string> names;
  for (const auto& r : runs)
    for (const auto& [k, v] : r.features) names.insert(k);
  std::vector<std::string> header{"problem_id"};
  header.insert(header.end(), names.begin(), names.end());
  header.insert(header.end(), kRunColumns.begin(), kRunColumns.end());
  std::string out = csv_row(header);
  for (const auto& r : runs) {
    std::vector<std::string> row{r.problem_id};
    for (const auto& n : names) {
      auto it = r.features.find(n);
      if (it == r.features.end())
        row.emplace_back();
      else if (const auto* d = std::get_if<double>(&it->second))
        row.push_back(format_double(*d));
      else
        row.push_back(std::get<std::string>(it->second));
    }
    auto [method, pc] = config_cells(r.config);
    row.push_back(method);
    row.push_back(pc);
    row.push_back(r.converged ? "true" : "false");
    row.push_back(format_double(r.time_seconds));
    row.push_back(format_double(r.residual));
    row.push_back(r.converged_count ? std::to_string(*r.converged_count) : "");
    row.push_back(r.request.nev ? std::to_string(*r.request.nev) : "");
    row.push_back(r.request.spectrum.value_or(""));
    row.push_back(r.request.tolerance ? format_double(*r.request.tolerance) : "");
    row.push_back(r.request.processors ? std::to_string(*r.request.processors) : "");
    out += csv_row(row);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic corpus

std::vector<SolverConfig> synthetic_configs() {
  std::vector<SolverConfig> out;
  for (const char* method : {"cg", "bicgstab", "gmres", "tfqmr"})
    for (const char* pc : {"jacobi", "ilu(0)", "ilu(1)", "block_jacobi", "sor"})
      out.push_back(SolverConfig::parse(std::string(method) + "/" + pc));
  return out;
}

namespace {

struct PcModel {
  double iters_base, iters_slope, setup, apply;
};

PcModel pc_model(const SolverConfig& c) {
  const auto key = c.key();
  if (key.find("/jacobi") != std::string::npos) return {10, 220, 1, 0.1};
  if (key.find("/ilu(0)") != std::string::npos) return {8, 80, 15, 0.8};
  if (key.find("/ilu(1)") != std::string::npos) return {6, 35, 40, 1.2};
  if (key.find("/block_jacobi") != std::string::npos) return {9, 120, 10, 0.6};
  return {9, 150, 2, 0.7};  // sor
}

matfeat::SparseMatrix synthetic_matrix(std::mt19937_64& rng, std::size_t n, bool symmetric, double dominance) {
  std::uniform_int_distribution<std::size_t> per_row(2, 8), col(0, n - 1);
  std::uniform_real_distribution<double> val(-1.0, 1.0);
  std::map<std::pair<std::size_t, std::size_t>, double> off;
  for (std::size_t i = 0; i < n; ++i) {
    const auto count = per_row(rng);
    for (std::size_t k = 0; k < count; ++k) {
      const auto j = col(rng);
      if (j == i) continue;
      const double v = val(rng);
      off[{i, j}] = v;
      if (symmetric) off[{j, i}] = v;
    }
  }
  std::vector<double> rowsum(n, 0.0);
  std::vector<matfeat::Triplet> t;
  for (const auto& [ij, v] : off) {
    rowsum[ij.first] += std::abs(v);
    t.push_back({ij.first, ij.second, v});
  }
  for (std::size_t i = 0; i < n; ++i) t.push_back({i, i, dominance * std::max(rowsum[i], 0.1) + 1e-3});
  return matfeat::SparseMatrix(n, n, t);
}

}  // namespace

std::vector<RunRecord> synthetic_runs(const SynthParams& params) {
  if (params.min_n < 2 || params.max_n < params.min_n) fail(ErrorKind::invalid_argument, "bad synthetic size range");
  std::mt19937_64 rng(params.seed);
  std::uniform_int_distribution<std::size_t> size(params.min_n, params.max_n);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.03);
  const auto configs = synthetic_configs();
  std::vector<RunRecord> runs;
  for (std::size_t p = 0; p < params.problems; ++p) {
    const bool symmetric = unit(rng) < 0.5;
    const double dominance = 0.3 + 1.7 * unit(rng);
    const auto m = synthetic_matrix(rng, size(rng), symmetric, dominance);
    const auto f = matfeat::compute_features(m);
    const Features features = to_features(f);
    // Hidden performance model driven by the features themselves.
    const bool sym = f.antisymmetric_frobenius_norm == 0.0;
    const double r = std::min(1.0, f.absolute_trace / (f.n_rows * f.infinity_norm));
    const double hardness = (1.0 - r) * (1.0 - r);
    char id[32];
    std::snprintf(id, sizeof id, "p%04zu", p);
    for (const auto& c : configs) {
      RunRecord run;
      run.problem_id = id;
      run.features = features;
      run.config = c;
      run.request.tolerance = 1e-8;
      const auto pc = pc_model(c);
      double factor = 1.0;
      bool converges = true;
      if (c.method == "cg") {
        converges = sym;
      } else if (c.method == "bicgstab") {
        factor = sym ? 1.6 : 1.0 + 0.8 * hardness;
      } else if (c.method == "gmres") {
        factor = sym ? 1.8 : 1.3 - 0.5 * hardness;
      } else {
        factor = sym ? 2.0 : 1.35;
        converges = unit(rng) > 0.1;
      }
      const double iters = (pc.iters_base + pc.iters_slope * hardness) * factor;
      const double time = f.nnz * 1e-7 * (pc.setup + iters * (1.0 + pc.apply)) * std::exp(noise(rng));
      run.converged = converges;
      run.time_seconds = time;
      run.residual = converges ? 1e-10 * (1.0 + 9.0 * unit(rng)) : 1e-2;
      runs.push_back(std::move(run));
    }
  }
  return runs;
}

}  // namespace lh::mlselect
