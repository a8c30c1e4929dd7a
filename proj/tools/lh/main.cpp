#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <pthread.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "lh/codegen.hpp"
#include "lh/error.hpp"
#include "lh/kernelc.hpp"
#include "lh/matfeat.hpp"
#include "lh/mlselect.hpp"
#include "lh/service.hpp"
#include "lh/taxonomy.hpp"
#include "lh/textsearch.hpp"
#include "lh/util.hpp"

namespace fs = std::filesystem;
using namespace lh;

namespace {

fs::path share(const std::string& relative) { return share_dir() / relative; }

void write_output(const std::string& path, const std::string& bytes) {
  if (path.empty() || path == "-") {
    std::cout << bytes;
    return;
  }
  write_file(path, bytes);
  std::cerr << "wrote " << path << "\n";
}

// --- features / recommend / predict --------------------------------------------

struct FeaturesOpts {
  std::string file;
  bool extended = false;
  bool json = false;
  bool timing = false;
};

int run_features(const FeaturesOpts& o) {
  const auto m = matfeat::load_matrix_market(o.file);
  const auto [fv, timing] = matfeat::measure_features(m);
  const auto map = o.extended ? matfeat::to_map(matfeat::compute_extended_features(m)) : matfeat::to_map(fv);
  if (o.json) {
    std::cout << matfeat::to_json(map) << "\n";
  } else {
    for (const auto& [k, v] : map) std::cout << k << ": " << format_double(v) << "\n";
  }
  if (o.timing) {
    std::cerr << "timing (seconds):\n";
    for (const auto& [k, v] : timing.seconds) std::cerr << "  " << k << ": " << format_double(v) << "\n";
    std::cerr << "  total: " << format_double(timing.total) << "\n";
  }
  return 0;
}

struct PredictOpts {
  std::string file;
  std::string model;
  std::vector<std::string> features;
  bool parallel = false;
  bool options = false;
};

mlselect::Features features_for(const PredictOpts& o) {
  mlselect::Features f;
  if (!o.file.empty()) f = mlselect::to_features(matfeat::compute_features(matfeat::load_matrix_market(o.file)));
  for (const auto& kv : o.features) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) fail(ErrorKind::invalid_argument, "expected name=value, got '" + kv + "'");
    const auto name = kv.substr(0, eq), value = kv.substr(eq + 1);
    try {
      f[name] = parse_double(value);
    } catch (const Error&) {
      f[name] = value;
    }
  }
  if (f.empty()) fail(ErrorKind::invalid_argument, "give a matrix file or --feature name=value");
  return f;
}

int run_predict(const PredictOpts& o) {
  const auto model = mlselect::ClassifierModel::load(o.model.empty() ? share("models/linear.json") : fs::path(o.model));
  for (const auto& c : model.predict(features_for(o))) {
    std::cout << c.key();
    if (o.options) std::cout << "  " << join(codegen::solver_options(c, o.parallel), " ");
    std::cout << "\n";
  }
  return 0;
}

// --- guided search --------------------------------------------------------------------

int run_guided(const std::string& library, const std::string& taxonomy_path) {
  const auto tax = taxonomy::Taxonomy::load(taxonomy_path.empty() ? share("taxonomy/lapack_linear.json")
                                                                  : fs::path(taxonomy_path));
  auto session = taxonomy::start_session(tax, taxonomy::parse_library(library), "cli");
  std::string line;
  while (!session.finished) {
    const auto* q = taxonomy::current_question(tax, session);
    std::cout << "\n" << q->text << "\n";
    for (std::size_t i = 0; i < q->options.size(); ++i)
      std::cout << "  " << (i + 1) << ") " << q->options[i].text << "\n";
    std::cout << "(" << session.candidates.size() << " candidate routines; answer, 'back' or 'quit')\n> " << std::flush;
    if (!std::getline(std::cin, line)) {
      std::cout << "\n";
      std::cerr << "lh: input ended before the search finished\n";
      return 1;
    }
    const auto reply = std::string(trim(line));
    if (reply == "quit") return 0;
    if (reply == "back") {
      if (session.history.empty()) std::cout << "Nothing to take back.\n";
      else session = taxonomy::back(tax, session);
      continue;
    }
    const auto key = taxonomy::resolve_option(*q, reply);
    if (!key) {
      std::cout << "Please choose one of the listed options.\n";
      continue;
    }
    session = taxonomy::answer(tax, session, *key);
  }
  std::cout << "\n" << taxonomy::completion_message << "\n";
  for (const auto& id : session.candidates) {
    const auto& r = tax.routine(id);
    std::cout << r.name << " - " << r.description << "\n";
  }
  return 0;
}

// --- bundles and kernels ----------------------------------------------------------

struct BundleOpts {
  std::vector<std::string> routines;
  std::string language = "fortran90";
  std::string solver;
  std::string kind;
  bool parallel = false;
  std::string output;
  std::string dir;
};

int run_bundle(const BundleOpts& o) {
  codegen::Bundle bundle;
  std::string stem;
  if (!o.routines.empty()) {
    const auto tax = taxonomy::Taxonomy::load(share("taxonomy/lapack_linear.json"));
    const auto lang = codegen::parse_language(o.language);
    if (o.routines.size() == 1) {
      bundle = codegen::routine_bundle(tax, o.routines[0], lang);
      stem = to_lower(tax.routine(o.routines[0]).name) + "_" + std::string(codegen::to_string(lang));
    } else {
      for (const auto& id : o.routines) {
        const auto dir = to_lower(tax.routine(id).name);
        for (auto& f : codegen::routine_bundle(tax, id, lang).files)
          bundle.files.push_back({dir + "/" + f.path, std::move(f.content)});
      }
      stem = "selection_" + std::string(codegen::to_string(lang));
    }
  } else {
    std::optional<mlselect::SolverConfig> config;
    if (!o.solver.empty()) config = mlselect::SolverConfig::parse(o.solver);
    if (o.kind.empty() && !config) fail(ErrorKind::invalid_argument, "give --routine, --solver or --kind");
    const auto kind = codegen::parse_solver_bundle_kind(o.kind.empty() ? "recommended_solver" : o.kind);
    bundle = codegen::generate_solver_bundle(kind, config, o.parallel);
    stem = std::string(codegen::to_string(kind));
  }
  codegen::validate_bundle(bundle);
  if (!o.dir.empty()) {
    for (const auto& f : bundle.files) {
      const auto path = fs::path(o.dir) / f.path;
      fs::create_directories(path.parent_path());
      write_file(path, f.content);
      std::cerr << "wrote " << path.string() << "\n";
    }
    return 0;
  }
  write_output(o.output.empty() ? stem + ".zip" : o.output, codegen::package_archive(bundle));
  return 0;
}

struct KernelOpts {
  std::string file;
  std::vector<std::string> declare;
  std::string out_dir = ".";
  bool print = false;
  bool package = false;
};

int run_kernel(const KernelOpts& o) {
  std::map<std::string, kernelc::Seed> seeds;
  for (const auto& d : o.declare) {
    const auto eq = d.find('=');
    if (eq == std::string::npos) fail(ErrorKind::invalid_argument, "expected name=words, got '" + d + "'");
    seeds[d.substr(0, eq)] = kernelc::parse_seed(d.substr(eq + 1));
  }
  kernelc::CompiledKernel k;
  try {
    k = kernelc::compile(read_file(o.file), seeds);
  } catch (const LocatedError& e) {
    std::cerr << o.file << ":" << e.line() << ":" << e.column() << ": error: " << e.detail() << "\n";
    return 1;
  }
  if (o.print) {
    std::cout << k.source;
    return 0;
  }
  fs::create_directories(o.out_dir);
  auto files = kernelc::package_files(k);
  if (!o.package) files.resize(2);
  for (const auto& [name, content] : files) {
    write_file(fs::path(o.out_dir) / name, content);
    std::cout << (fs::path(o.out_dir) / name).string() << "\n";
  }
  return 0;
}

// --- training -------------------------------------------------------------------------

struct TrainOpts {
  std::string corpus;
  std::string output;
  int max_depth = 6;
  std::size_t min_leaf = 1;
  std::string criterion = "entropy";
  std::string target = "best";
  double ratio = mlselect::default_time_ratio;
  std::optional<double> tolerance;
  std::size_t folds = 10;
  std::uint64_t seed = 1;
  bool strict = false;
};

mlselect::TreeParams tree_params(const TrainOpts& o) {
  mlselect::TreeParams p;
  p.max_depth = o.max_depth;
  p.min_leaf_size = o.min_leaf;
  p.criterion = o.criterion == "gini" ? mlselect::Criterion::gini : mlselect::Criterion::entropy;
  p.target = o.target == "near_best" ? mlselect::Target::near_best : mlselect::Target::best;
  return p;
}

std::vector<mlselect::LabeledInstance> labelled(const TrainOpts& o) {
  const auto runs = mlselect::parse_corpus_csv(read_file(o.corpus.empty() ? share("corpus/linear_runs.csv")
                                                                           : fs::path(o.corpus)));
  auto report = mlselect::derive_labels(runs, o.tolerance, o.ratio);
  std::cerr << report.instances.size() << " labelled problems, " << report.excluded.size()
            << " without an eligible run\n";
  if (report.instances.empty()) fail(ErrorKind::domain, "no labelled problems to train on");
  return std::move(report.instances);
}

int run_train(const TrainOpts& o) {
  const auto data = labelled(o);
  const auto model = mlselect::induce_tree(data, tree_params(o));
  std::cerr << "tree: depth " << model.depth << ", " << model.leaf_count() << " leaves, training accuracy "
            << format_double(mlselect::accuracy(model, data, o.strict)) << "\n";
  write_output(o.output, model.to_json());
  return 0;
}

int run_cv(const TrainOpts& o) {
  const auto data = labelled(o);
  const auto cv = mlselect::cross_validate(data, o.folds, tree_params(o), o.seed, o.strict);
  for (std::size_t i = 0; i < cv.fold_accuracy.size(); ++i)
    std::cout << "fold " << (i + 1) << ": " << format_double(cv.fold_accuracy[i]) << " (" << cv.fold_sizes[i]
              << " problems)\n";
  std::cout << "mean accuracy: " << format_double(cv.mean_accuracy) << "\n";
  return 0;
}

int run_export_table(const std::string& model_path, const std::string& output) {
  const auto model = mlselect::ClassifierModel::load(model_path.empty() ? share("models/linear.json")
                                                                        : fs::path(model_path));
  write_output(output, mlselect::export_model(model).to_csv());
  return 0;
}

int run_synth(const mlselect::SynthParams& p, const std::string& output) {
  write_output(output, mlselect::to_corpus_csv(mlselect::synthetic_runs(p)));
  return 0;
}

// --- search -------------------------------------------------------------------------

int run_search(const std::vector<std::string>& words, const std::string& mode, bool complete) {
  const auto tax = taxonomy::Taxonomy::load(share("taxonomy/lapack_linear.json"));
  const auto index = textsearch::build_index(tax, textsearch::load_vocabulary(share("vocabulary.txt")));
  const auto text = join(words, " ");
  if (complete) {
    for (const auto& s : index.autocomplete(text)) std::cout << s << "\n";
    return 0;
  }
  std::vector<std::string> fixed;
  for (const auto& tok : textsearch::tokenize(text)) {
    const auto c = index.spell_correct(tok);
    if (c && *c != tok) std::cerr << "did you mean '" << *c << "' for '" << tok << "'?\n";
    fixed.push_back(c ? *c : tok);
  }
  const auto hits = index.query(join(fixed, " "), mode == "any" ? textsearch::Mode::any : textsearch::Mode::all);
  for (const auto& h : hits) {
    const auto& r = tax.routine(h.routine_id);
    std::cout << r.name << "\t" << h.score << "\t" << r.description << "\n";
  }
  if (hits.empty()) std::cerr << "no matching routines\n";
  return 0;
}

// --- serve --------------------------------------------------------------------------

struct ServeOpts {
  std::string addr;
  std::optional<long long> ttl;
  std::optional<std::size_t> upload_cap;
  std::string data_dir;
};

int run_serve(const ServeOpts& o) {
  auto config = service::Config::from_env();
  if (!o.addr.empty()) {
    const auto colon = o.addr.rfind(':');
    if (colon == std::string::npos) fail(ErrorKind::invalid_argument, "--addr must be host:port");
    config.host = o.addr.substr(0, colon);
    config.port = static_cast<int>(parse_int(o.addr.substr(colon + 1)));
  }
  if (o.ttl) config.ttl = std::chrono::seconds(*o.ttl);
  if (o.upload_cap) config.upload_cap = *o.upload_cap;
  if (!o.data_dir.empty()) config.data_dir = o.data_dir;

  // Signals are taken synchronously on this thread; server threads inherit the mask.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  service::App app(config);
  service::Server server(app);
  const int port = server.start();
  std::cout << "listening on http://" << config.host << ":" << port << std::endl;
  int sig = 0;
  sigwait(&set, &sig);
  std::cerr << "stopping\n";
  server.stop();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Solver recommendation, code bundles and kernel compilation for numerical linear algebra", "lh"};
  app.require_subcommand(1);
  std::string share_override;
  app.add_option("--share", share_override, "Data directory (taxonomy, vocabulary, templates, models)");
  std::function<int()> action;

  FeaturesOpts fo;
  auto* features = app.add_subcommand("features", "Print the matrix properties of a Matrix Market file");
  features->add_option("file", fo.file, "Matrix Market file")->required();
  features->add_flag("--extended", fo.extended, "Print all 30 properties");
  features->add_flag("--json", fo.json, "Print JSON");
  features->add_flag("--timing", fo.timing, "Report per-property timing on stderr");
  features->callback([&] { action = [&] { return run_features(fo); }; });

  PredictOpts ro;
  auto* recommend = app.add_subcommand("recommend", "Recommend solver configurations for a matrix");
  recommend->add_option("file", ro.file, "Matrix Market file")->required();
  recommend->add_option("--model", ro.model, "Model file (default: shipped linear model)");
  recommend->add_flag("--parallel", ro.parallel, "Solver options for parallel runs");
  recommend->callback([&] {
    ro.options = true;
    action = [&] { return run_predict(ro); };
  });

  PredictOpts po;
  auto* predict = app.add_subcommand("predict", "Apply a model to a matrix or to given properties");
  predict->add_option("file", po.file, "Matrix Market file");
  predict->add_option("--model", po.model, "Model file (default: shipped linear model)");
  predict->add_option("--feature", po.features, "Property as name=value (repeatable)");
  predict->callback([&] { action = [&] { return run_predict(po); }; });

  std::string library, taxonomy_path;
  auto* guided = app.add_subcommand("guided", "Interactive guided search");
  guided->add_option("library", library, "Library, e.g. LAPACK")->required();
  guided->add_option("--taxonomy", taxonomy_path, "Taxonomy document");
  guided->callback([&] { action = [&] { return run_guided(library, taxonomy_path); }; });

  BundleOpts bo;
  auto* bundle = app.add_subcommand("bundle", "Write a code bundle archive");
  bundle->add_option("--routine", bo.routines, "Routine id (repeatable)");
  bundle->add_option("--language", bo.language, "fortran90 or c")->capture_default_str();
  bundle->add_option("--solver", bo.solver, "Solver configuration key, e.g. gmres/ilu(1)");
  bundle->add_option("--kind", bo.kind, "properties_program, default_solver or recommended_solver");
  bundle->add_flag("--parallel", bo.parallel, "Parallel solver options");
  bundle->add_option("-o,--output", bo.output, "Archive path (default: <name>.zip, '-' for stdout)");
  bundle->add_option("--dir", bo.dir, "Write the files into a directory instead of an archive");
  bundle->callback([&] { action = [&] { return run_bundle(bo); }; });

  KernelOpts ko;
  auto* kernel = app.add_subcommand("kernel", "Compile a kernel script to C and a parameter manifest");
  kernel->add_option("file", ko.file, "Kernel script")->required();
  kernel->add_option("--declare", ko.declare, "name=words, e.g. x=column,in (repeatable)");
  kernel->add_option("-o,--out-dir", ko.out_dir, "Output directory")->capture_default_str();
  kernel->add_flag("--print", ko.print, "Print the C source instead of writing files");
  kernel->add_flag("--package", ko.package, "Also write a makefile and README");
  kernel->callback([&] { action = [&] { return run_kernel(ko); }; });

  TrainOpts to;
  auto add_training = [&](CLI::App* sub) {
    sub->add_option("--corpus", to.corpus, "Run corpus CSV (default: shipped corpus)");
    sub->add_option("--max-depth", to.max_depth, "Tree depth limit, negative for none")->capture_default_str();
    sub->add_option("--min-leaf", to.min_leaf, "Minimum problems per leaf")->capture_default_str();
    sub->add_option("--criterion", to.criterion, "entropy or gini")
        ->check(CLI::IsMember({"entropy", "gini"}))
        ->capture_default_str();
    sub->add_option("--target", to.target, "best or near_best")
        ->check(CLI::IsMember({"best", "near_best"}))
        ->capture_default_str();
    sub->add_option("--ratio", to.ratio, "Near-best time ratio")->capture_default_str();
    sub->add_option("--tolerance", to.tolerance, "Residual threshold for eligible runs");
    sub->add_flag("--strict", to.strict, "Count a hit only when the best config comes first");
  };
  auto* train = app.add_subcommand("train", "Induce a solver-selection tree from a run corpus");
  add_training(train);
  train->add_option("-o,--output", to.output, "Model path (default: stdout)");
  train->callback([&] { action = [&] { return run_train(to); }; });

  auto* cv = app.add_subcommand("cv", "Cross-validate tree induction on a run corpus");
  add_training(cv);
  cv->add_option("--folds", to.folds, "Number of folds")->capture_default_str();
  cv->add_option("--seed", to.seed, "Shuffle seed")->capture_default_str();
  cv->callback([&] { action = [&] { return run_cv(to); }; });

  std::string model_path, table_out;
  auto* export_table = app.add_subcommand("export-table", "Write a model as a path table (CSV)");
  export_table->add_option("--model", model_path, "Model file (default: shipped linear model)");
  export_table->add_option("-o,--output", table_out, "CSV path (default: stdout)");
  export_table->callback([&] { action = [&] { return run_export_table(model_path, table_out); }; });

  std::vector<std::string> words;
  std::string mode = "all";
  bool complete = false;
  auto* search = app.add_subcommand("search", "Keyword search over routine documentation");
  search->add_option("words", words, "Query words")->required();
  search->add_option("--mode", mode, "all or any")->check(CLI::IsMember({"all", "any"}))->capture_default_str();
  search->add_flag("--complete", complete, "Autocomplete the words as a prefix");
  search->callback([&] { action = [&] { return run_search(words, mode, complete); }; });

  ServeOpts so;
  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  serve->add_option("--addr", so.addr, "host:port (default: LH_ADDR or 127.0.0.1:8080)");
  serve->add_option("--ttl", so.ttl, "Seconds before sessions and files expire (default: LH_TTL_SECS or 1800)");
  serve->add_option("--upload-cap", so.upload_cap, "Upload size limit in bytes (default: LH_UPLOAD_CAP or 64 MiB)");
  serve->add_option("--data-dir", so.data_dir, "Storage for uploads and archives (default: LH_DATA_DIR or a temp dir)");
  serve->callback([&] { action = [&] { return run_serve(so); }; });

  mlselect::SynthParams sp;
  sp.problems = 400;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth-corpus", "Generate a synthetic run corpus");
  synth->add_option("--problems", sp.problems, "Number of problems")->capture_default_str();
  synth->add_option("--min-n", sp.min_n, "Smallest matrix order")->capture_default_str();
  synth->add_option("--max-n", sp.max_n, "Largest matrix order")->capture_default_str();
  synth->add_option("--seed", sp.seed, "Random seed")->capture_default_str();
  synth->add_option("-o,--output", synth_out, "CSV path (default: stdout)");
  synth->callback([&] { action = [&] { return run_synth(sp, synth_out); }; });

  CLI11_PARSE(app, argc, argv);
  try {
    if (!share_override.empty()) setenv("LH_SHARE_DIR", share_override.c_str(), 1);
    return action();
  } catch (const std::exception& e) {
    std::cerr << "lh: error: " << e.what() << "\n";
    return 1;
  }
}
