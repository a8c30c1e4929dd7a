#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "lh/matfeat.hpp"
#include "lh/taxonomy.hpp"

namespace lh::mlselect {

enum class ProblemKind { linear, eigen };

const std::vector<std::string>& linear_methods();
const std::vector<std::string>& eigen_methods();
const std::vector<std::string>& preconditioners();

/// A solver configuration. The canonical key is `method[/pc[(levels)]][;name=value...]`,
/// e.g. `gmres/ilu(1)` or `krylovschur`.
struct SolverConfig {
  std::string method;
  std::optional<std::string> preconditioner;
  std::map<std::string, std::string> extra;

  std::string key() const;
  /// Accepts the key format; `ilu(k)` sets extra["levels"].
  static SolverConfig parse(std::string_view key);

  bool operator==(const SolverConfig&) const = default;
};

/// Throws invalid_argument unless the method belongs to `kind` and the
/// preconditioner is registered.
void validate(const SolverConfig& config, ProblemKind kind);

using FeatureValue = std::variant<double, std::string>;
using Features = std::map<std::string, FeatureValue>;

Features to_features(const matfeat::FeatureVector& f);
Features to_features(const matfeat::ExtendedFeatureVector& f);

/// Eigensolver request parameters; all optional.
struct RequestSpec {
  std::optional<int> nev;
  std::optional<std::string> spectrum;  // largest_magnitude, smallest_real, ...
  std::optional<double> tolerance;
  std::optional<int> processors;

  bool operator==(const RequestSpec&) const = default;
};

struct RunRecord {
  std::string problem_id;
  Features features;
  SolverConfig config;
  bool converged = false;
  double time_seconds = 0;
  double residual = 0;
  std::optional<int> converged_count;
  RequestSpec request;

  bool operator==(const RunRecord&) const = default;
};

struct LabeledInstance {
  std::string problem_id;
  Features features;
  SolverConfig best;
  std::vector<SolverConfig> near_best;  // sorted by key, contains best
};

struct LabelReport {
  std::vector<LabeledInstance> instances;   // first-appearance order of problem ids
  std::vector<std::string> excluded;        // problems without an eligible run
};

constexpr double default_time_ratio = 1.10;

/// Eligible runs converged, have residual <= tolerance and, when the request
/// asks for `nev` values, converged_count >= nev. The tolerance is
/// `tolerance_threshold` when given, else the run's requested tolerance, else
/// unchecked. best = fastest eligible (ties: smaller key); near_best = eligible
/// configs with time < ratio * best, plus those tied with best. Request
/// fields are added to the instance features as request_nev, request_spectrum,
/// request_tolerance and request_processors.
LabelReport derive_labels(const std::vector<RunRecord>& runs,
                          std::optional<double> tolerance_threshold = std::nullopt,
                          double time_ratio = default_time_ratio);

// --- PCA --------------------------------------------------------------------

struct PcaResult {
  std::vector<std::string> features;          // kept (non-constant) features
  std::vector<std::string> dropped;           // constant features
  std::vector<double> mean;
  std::vector<double> scale;                  // sample standard deviation
  std::vector<std::vector<double>> components;  // components[c][feature], unit length
  std::vector<double> explained;              // eigenvalues, descending
};

/// `samples[i][j]` is feature `names[j]` of sample i.
PcaResult fit_pca(const std::vector<std::string>& names, const std::vector<std::vector<double>>& samples);

/// Walks the components in order; each contributes the unselected feature with
/// the largest absolute loading (ties: smaller name).
std::vector<std::string> select_features(const PcaResult& pca, std::size_t k = 15);

// --- Decision trees -----------------------------------------------------------

enum class Criterion { entropy, gini };
enum class Target { best, near_best };

struct TreeParams {
  int max_depth = -1;  // negative: unlimited
  std::size_t min_leaf_size = 1;
  Criterion criterion = Criterion::entropy;
  Target target = Target::best;

  bool operator==(const TreeParams&) const = default;
};

struct Split {
  std::string feature;
  bool numeric = true;
  double threshold = 0;   // numeric: value <= threshold takes the first edge
  std::string category;   // categorical: value == category takes the first edge

  bool operator==(const Split&) const = default;
};

enum class FeatureType { numeric, categorical };

class ClassifierModel {
 public:
  /// Internal nodes ask about one feature with two options: `<=t`/`>t` or
  /// `=v`/`!=v`. Leaf payloads are SolverConfig keys.
  taxonomy::DecisionTree tree;
  std::map<taxonomy::NodeRef, Split> splits;
  std::map<std::string, FeatureType> schema;
  TreeParams params;
  int depth = 0;

  std::size_t leaf_count() const { return tree.leaf_count(); }
  /// Leaf payload reached by `features`; throws invalid_argument naming a
  /// missing or mistyped feature.
  std::vector<SolverConfig> predict(const Features& features) const;
  const std::vector<std::string>& predict_keys(const Features& features) const;

  std::string to_json() const;
  static ClassifierModel from_json(std::string_view text);
  static ClassifierModel load(const std::filesystem::path& path);

  bool operator==(const ClassifierModel&) const = default;
};

ClassifierModel induce_tree(const std::vector<LabeledInstance>& dataset, const TreeParams& params = {});

/// Fraction of instances whose best config is in the prediction; strict mode
/// requires it to be the first (majority) entry.
double accuracy(const ClassifierModel& model, const std::vector<LabeledInstance>& dataset, bool strict = false);

struct CvResult {
  std::vector<double> fold_accuracy;
  std::vector<std::size_t> fold_sizes;
  double mean_accuracy = 0;
};

/// Stratified by best label; folds come from a seeded shuffle and are
/// assigned round-robin, so sizes differ by at most one.
std::vector<std::vector<std::size_t>> stratified_folds(const std::vector<LabeledInstance>& dataset,
                                                        std::size_t k, std::uint64_t seed);
CvResult cross_validate(const std::vector<LabeledInstance>& dataset, std::size_t k, const TreeParams& params,
                        std::uint64_t seed, bool strict = false);

taxonomy::PathTable export_model(const ClassifierModel& model);
/// Finds the row whose every answer holds for `features`.
const std::vector<std::string>& lookup_features(const taxonomy::PathTable& table, const Features& features);

// --- Corpus I/O ---------------------------------------------------------------

/// Columns: problem_id, feature columns, method, preconditioner, converged,
/// time_seconds, residual, converged_count, nev, spectrum, tolerance,
/// processors. Feature cells that parse as numbers are numeric.
std::vector<RunRecord> parse_corpus_csv(std::string_view text);
std::string to_corpus_csv(const std::vector<RunRecord>& runs);

struct SynthParams {
  std::size_t problems = 100;
  std::size_t min_n = 20;
  std::size_t max_n = 120;
  std::uint64_t seed = 1;
};

/// Random sparse systems, their 15 standard features, and run times from a fixed
/// hidden performance model over a grid of linear solver configurations.
std::vector<RunRecord> synthetic_runs(const SynthParams& params);
/// The configurations synthetic_runs benchmarks.
std::vector<SolverConfig> synthetic_configs();

}  // namespace lh::mlselect
