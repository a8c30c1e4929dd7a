#include "lh/service.hpp"

#include <algorithm>
#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <iomanip>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "lh/codegen.hpp"
#include "lh/error.hpp"
#include "lh/kernelc.hpp"
#include "lh/matfeat.hpp"
#include "lh/mlselect.hpp"
#include "lh/taxonomy.hpp"
#include "lh/textsearch.hpp"
#include "lh/util.hpp"

namespace lh::service {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Configuration

Config Config::from_env() {
  Config c;
  auto env = [](const char* name) -> std::optional<std::string> {
    const char* v = std::getenv(name);
    if (!v || !*v) return std::nullopt;
    return std::string(v);
  };
  auto positive = [](const std::string& name, const std::string& text) {
    long long v = 0;
    try {
      v = parse_int(text);
    } catch (const Error&) {
      fail(ErrorKind::invalid_argument, name + " must be an integer, got '" + text + "'");
    }
    if (v <= 0) fail(ErrorKind::invalid_argument, name + " must be positive, got '" + text + "'");
    return v;
  };
  if (auto addr = env("LH_ADDR")) {
    const auto colon = addr->rfind(':');
    if (colon == std::string::npos) fail(ErrorKind::invalid_argument, "LH_ADDR must be host:port, got '" + *addr + "'");
    c.host = addr->substr(0, colon);
    if (c.host.empty()) c.host = "127.0.0.1";
    long long port = 0;
    try {
      port = parse_int(addr->substr(colon + 1));
    } catch (const Error&) {
      port = -1;
    }
    if (port < 0 || port > 65535) fail(ErrorKind::invalid_argument, "LH_ADDR has an invalid port: '" + *addr + "'");
    c.port = static_cast<int>(port);
  }
  if (auto ttl = env("LH_TTL_SECS")) c.ttl = std::chrono::seconds(positive("LH_TTL_SECS", *ttl));
  if (auto cap = env("LH_UPLOAD_CAP")) c.upload_cap = static_cast<std::size_t>(positive("LH_UPLOAD_CAP", *cap));
  if (auto dir = env("LH_DATA_DIR")) c.data_dir = *dir;
  return c;
}

std::string SweepReport::to_json() const {
  json j;
  j["sessions"] = sessions;
  j["uploads"] = uploads;
  j["downloads"] = downloads;
  return j.dump();
}

// ---------------------------------------------------------------------------
// Helpers

namespace {

constexpr std::string_view kModelFile = "models/linear.json";

/// 128 random bits from the system entropy source, as 32 hex digits.
std::string new_id() {
  static std::mutex m;
  static std::random_device rd;
  std::lock_guard lock(m);
  static const char* hex = "0123456789abcdef";
  std::string id;
  for (int w = 0; w < 4; ++w) {
    auto v = static_cast<std::uint32_t>(rd());
    for (int k = 0; k < 8; ++k, v >>= 4) id.push_back(hex[v & 0xF]);
  }
  return id;
}

/// FNV-1a over the model file, used as its version tag.
std::string content_version(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

struct HttpError {
  int status;
  std::string kind;
  std::string message;
  json errors = json::array();
};

[[noreturn]] void http_fail(int status, std::string kind, std::string message) {
  throw HttpError{status, std::move(kind), std::move(message)};
}

int status_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument:
    case ErrorKind::parse: return 400;
    case ErrorKind::not_found: return 404;
    case ErrorKind::validation:
    case ErrorKind::unsupported:
    case ErrorKind::domain: return 422;
  }
  return 500;
}

Response json_response(json body, int status = 200) {
  json out;
  out["schema_version"] = schema_version;
  for (auto& [k, v] : body.items()) out[k] = std::move(v);
  Response r;
  r.status = status;
  r.body = out.dump();
  return r;
}

Response error_response(const HttpError& e) {
  json err;
  err["status"] = e.status;
  err["kind"] = e.kind;
  err["message"] = e.message;
  err["errors"] = e.errors.empty() ? json::array({json{{"message", e.message}}}) : e.errors;
  return json_response(json{{"error", err}}, e.status);
}

json parse_body(const Request& req) {
  if (trim(req.body).empty()) return json::object();
  try {
    auto j = json::parse(req.body);
    if (!j.is_object()) http_fail(400, "invalid_argument", "request body must be a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    http_fail(400, "parse", std::string("malformed JSON body: ") + e.what());
  }
}

std::string string_field(const json& body, const std::string& name, bool required = true) {
  if (!body.contains(name) || body[name].is_null()) {
    if (required) http_fail(400, "invalid_argument", "missing field '" + name + "'");
    return {};
  }
  if (!body[name].is_string()) http_fail(400, "invalid_argument", "field '" + name + "' must be a string");
  return body[name].get<std::string>();
}

bool bool_field(const json& body, const std::string& name) {
  if (!body.contains(name) || body[name].is_null()) return false;
  if (!body[name].is_boolean()) http_fail(400, "invalid_argument", "field '" + name + "' must be a boolean");
  return body[name].get<bool>();
}

json option_json(const taxonomy::Option& o) { return json{{"key", o.key}, {"text", o.text}}; }

json features_json(const matfeat::FeatureMap& map) {
  json j = json::object();
  for (const auto& [k, v] : map) j[k] = v;
  return j;
}

std::string archive_stem(std::string text) {
  for (auto& c : text)
    if (!std::isalnum(static_cast<unsigned char>(c))) c = '_';
  return to_lower(text);
}

struct SessionEntry {
  taxonomy::GuidedSession session;
  Clock::time_point last_used;
};

struct UploadEntry {
  std::string id;
  std::string filename;
  fs::path path;
  std::size_t bytes = 0;
  Clock::time_point created;
};

struct DownloadEntry {
  std::string id;
  std::string filename;
  fs::path path;
  std::size_t bytes = 0;
  Clock::time_point created;
  std::vector<std::string> uploads;  // delivered together with the archive
};

}  // namespace

// ---------------------------------------------------------------------------
// State

struct App::State {
  Config config;
  std::function<Clock::time_point()> clock;
  fs::path data_dir;
  bool owns_data_dir = false;

  taxonomy::Taxonomy taxonomy;
  std::optional<textsearch::SearchIndex> index;
  codegen::TemplateStore templates;
  mlselect::ClassifierModel model;
  std::string model_version;

  std::mutex mutex;
  std::map<std::string, SessionEntry> sessions;
  std::map<std::string, UploadEntry> uploads;
  std::map<std::string, DownloadEntry> downloads;
  std::map<std::string, Clock::time_point> gone;  // expired or delivered ids

  State(Config c, std::function<Clock::time_point()> clk)
      : config(std::move(c)),
        clock(clk ? std::move(clk) : [] { return Clock::now(); }),
        templates((config.share_dir.empty() ? share_dir() : config.share_dir) / "templates") {
    const auto share = config.share_dir.empty() ? share_dir() : config.share_dir;
    taxonomy = taxonomy::Taxonomy::load(share / "taxonomy" / "lapack_linear.json");
    index.emplace(textsearch::build_index(taxonomy, textsearch::load_vocabulary(share / "vocabulary.txt")));
    const auto model_text = read_file(share / kModelFile);
    model = mlselect::ClassifierModel::from_json(model_text);
    model_version = content_version(model_text);
    if (config.data_dir.empty()) {
      data_dir = fs::temp_directory_path() / ("lhkit-service-" + new_id());
      owns_data_dir = true;
    } else {
      data_dir = config.data_dir;
    }
    fs::create_directories(data_dir / "uploads");
    fs::create_directories(data_dir / "downloads");
  }

  ~State() {
    if (owns_data_dir) {
      std::error_code ec;
      fs::remove_all(data_dir, ec);
    }
  }

  bool expired(Clock::time_point since, Clock::time_point now) const { return now - since > config.ttl; }

  [[noreturn]] void missing(const std::string& what, const std::string& id) {
    if (gone.count(id)) http_fail(410, "gone", what + " " + id + " has expired or was already delivered");
    http_fail(404, "not_found", "unknown " + what + " " + id);
  }

  void remove_file(const fs::path& p) {
    std::error_code ec;
    fs::remove(p, ec);
  }

  // All store helpers below expect `mutex` to be held.

  SessionEntry& session(const std::string& id, Clock::time_point now) {
    auto it = sessions.find(id);
    if (it == sessions.end()) missing("session", id);
    if (expired(it->second.last_used, now)) {
      sessions.erase(it);
      gone[id] = now;
      missing("session", id);
    }
    it->second.last_used = now;
    return it->second;
  }

  UploadEntry& upload(const std::string& id, Clock::time_point now) {
    auto it = uploads.find(id);
    if (it == uploads.end()) missing("upload", id);
    if (expired(it->second.created, now)) {
      remove_file(it->second.path);
      uploads.erase(it);
      gone[id] = now;
      missing("upload", id);
    }
    return it->second;
  }

  void drop_upload(const std::string& id, Clock::time_point now) {
    auto it = uploads.find(id);
    if (it == uploads.end()) return;
    remove_file(it->second.path);
    uploads.erase(it);
    gone[id] = now;
  }
};

App::App(Config config, std::function<Clock::time_point()> clock)
    : state_(std::make_unique<State>(std::move(config), std::move(clock))) {}

App::~App() = default;

const Config& App::config() const { return state_->config; }
fs::path App::upload_dir() const { return state_->data_dir / "uploads"; }
fs::path App::download_dir() const { return state_->data_dir / "downloads"; }

SweepReport App::sweep() { return sweep(state_->clock()); }

SweepReport App::sweep(Clock::time_point now) {
  auto& s = *state_;
  std::lock_guard lock(s.mutex);
  SweepReport report;
  for (auto it = s.sessions.begin(); it != s.sessions.end();) {
    if (s.expired(it->second.last_used, now)) {
      report.sessions.push_back(it->first);
      s.gone[it->first] = now;
      it = s.sessions.erase(it);
    } else {
      ++it;
    }
  }
  for (auto it = s.uploads.begin(); it != s.uploads.end();) {
    if (s.expired(it->second.created, now)) {
      report.uploads.push_back(it->first);
      s.remove_file(it->second.path);
      s.gone[it->first] = now;
      it = s.uploads.erase(it);
    } else {
      ++it;
    }
  }
  for (auto it = s.downloads.begin(); it != s.downloads.end();) {
    if (s.expired(it->second.created, now)) {
      report.downloads.push_back(it->first);
      s.remove_file(it->second.path);
      s.gone[it->first] = now;
      it = s.downloads.erase(it);
    } else {
      ++it;
    }
  }
  // Tombstones only distinguish 410 from 404; keep them for a few lifetimes.
  for (auto it = s.gone.begin(); it != s.gone.end();)
    it = now - it->second > 4 * s.config.ttl ? s.gone.erase(it) : std::next(it);
  return report;
}

// ---------------------------------------------------------------------------
// Handlers

namespace {

class Handler {
 public:
  Handler(App::State& s, const Request& r) : s_(s), req_(r), now_(s.clock()) {}

  Response dispatch() {
    const auto parts = segments(req_.path);
    if (parts.size() < 2 || parts[0] != "api") http_fail(404, "not_found", "no route for " + req_.path);
    const auto& head = parts[1];
    const auto n = parts.size();
    if (head == "libraries" && n == 2) return method("GET"), libraries();
    if (head == "version" && n == 2) return method("GET"), version();
    if (head == "guided" && n == 4 && parts[3] == "start") return method("POST"), guided_start(parts[2]);
    if (head == "guided" && n == 4 && parts[3] == "answer") return method("POST"), guided_answer(parts[2]);
    if (head == "guided" && n == 4 && parts[3] == "back") return method("POST"), guided_back(parts[2]);
    if (head == "guided" && n == 3) return method("GET"), guided_get(parts[2]);
    if (head == "search" && n == 2) return method("GET"), search();
    if (head == "complete" && n == 2) return method("GET"), complete();
    if (head == "routines" && n == 3) return method("GET"), routine(parts[2]);
    if (head == "matrix" && n == 2) return method("POST"), upload();
    if (head == "matrix" && n == 3) return method("DELETE"), delete_upload(parts[2]);
    if (head == "matrix" && n == 4 && parts[3] == "features") return method("GET"), features(parts[2]);
    if (head == "recommend" && n == 2) return method("POST"), recommend();
    if (head == "bundle" && n == 2) return method("POST"), bundle();
    if (head == "download" && n == 3) return method("GET"), download(parts[2]);
    if (head == "kernel" && n == 2) return method("POST"), kernel();
    http_fail(404, "not_found", "no route for " + req_.path);
  }

 private:
  static std::vector<std::string> segments(const std::string& path) {
    std::vector<std::string> out;
    for (auto& p : split(path, '/'))
      if (!p.empty()) out.push_back(std::move(p));
    return out;
  }

  void method(const char* expected) const {
    if (req_.method != expected)
      http_fail(405, "method_not_allowed", req_.method + " is not allowed on " + req_.path + "; use " + expected);
  }

  std::string query(const std::string& name) const {
    auto it = req_.query.find(name);
    return it == req_.query.end() ? std::string() : it->second;
  }

  // --- catalogue --------------------------------------------------------------

  Response libraries() {
    json libs = json::array();
    for (auto lib : s_.taxonomy.libraries()) {
      std::size_t routines = 0;
      for (const auto& r : s_.taxonomy.routines()) routines += r.library == lib;
      libs.push_back({{"id", to_lower(taxonomy::to_string(lib))},
                      {"name", taxonomy::to_string(lib)},
                      {"guided", s_.taxonomy.tree(lib) != nullptr},
                      {"routines", routines}});
    }
    return json_response({{"libraries", libs}});
  }

  Response version() {
    return json_response({{"model", model_json()}, {"ttl_seconds", s_.config.ttl.count()},
                          {"upload_cap", s_.config.upload_cap}});
  }

  json candidate_json(const std::string& id) const {
    const auto& r = s_.taxonomy.routine(id);
    return {{"id", r.id}, {"name", r.name}, {"description", r.description}};
  }

  Response routine(const std::string& id) {
    if (!s_.taxonomy.find_routine(id)) http_fail(404, "not_found", "unknown routine " + id);
    const auto& r = s_.taxonomy.routine(id);
    json params = json::array();
    for (const auto& p : r.parameters)
      params.push_back({{"name", p.name},
                        {"kind", taxonomy::to_string(p.kind)},
                        {"intent", taxonomy::to_string(p.intent)},
                        {"description", p.description}});
    json facets = json::object();
    for (const auto* f : {"problem_class", "matrix_type", "storage", "precision", "scalar_field"}) {
      const auto v = r.facet_values(f);
      facets[f] = v.empty() ? "" : v.front();
    }
    for (const auto& [k, v] : r.facets) facets[k] = join(v, ";");
    return json_response({{"routine",
                           {{"id", r.id},
                            {"name", r.name},
                            {"library", taxonomy::to_string(r.library)},
                            {"description", r.description},
                            {"documentation", r.documentation},
                            {"facets", facets},
                            {"parameters", params}}}});
  }

  // --- guided search ----------------------------------------------------------

  json session_json(const taxonomy::GuidedSession& g) const {
    json j;
    j["session_id"] = g.session_id;
    j["library"] = taxonomy::to_string(g.library);
    j["finished"] = g.finished;
    const auto* q = taxonomy::current_question(s_.taxonomy, g);
    json options = json::array();
    if (q) {
      for (const auto& o : q->options) options.push_back(option_json(o));
      j["question"] = {{"id", q->id}, {"text", q->text}, {"facet", q->facet}};
    } else {
      j["question"] = nullptr;
    }
    j["options"] = options;
    json candidates = json::array();
    for (const auto& id : g.candidates) candidates.push_back(candidate_json(id));
    j["candidates"] = candidates;
    json history = json::array();
    const auto* tree = s_.taxonomy.tree(g.library);
    for (const auto& [qid, key] : g.history) {
      const auto& hq = tree->question(qid);
      const auto* o = hq.find(key);
      history.push_back({{"question_id", qid}, {"question", hq.text}, {"option", key}, {"option_text", o ? o->text : key}});
    }
    j["history"] = history;
    if (g.finished) {
      json names = json::array();
      for (const auto& id : g.candidates) names.push_back(s_.taxonomy.routine(id).name);
      j["result"] = names;
      j["message"] = taxonomy::completion_message;
    } else {
      j["result"] = json::array();
      j["message"] = nullptr;
    }
    return j;
  }

  Response guided_start(const std::string& library) {
    taxonomy::Library lib;
    try {
      lib = taxonomy::parse_library(library);
    } catch (const Error&) {
      http_fail(404, "not_found", "unknown library " + library);
    }
    if (!s_.taxonomy.tree(lib)) http_fail(404, "not_found", "no guided search for " + library);
    auto g = taxonomy::start_session(s_.taxonomy, lib, new_id());
    json body = session_json(g);
    const auto id = g.session_id;
    std::lock_guard lock(s_.mutex);
    s_.sessions[id] = {std::move(g), now_};
    return json_response(body, 201);
  }

  Response guided_get(const std::string& id) {
    std::lock_guard lock(s_.mutex);
    return json_response(session_json(s_.session(id, now_).session));
  }

  Response guided_answer(const std::string& id) {
    const auto body = parse_body(req_);
    if (!body.contains("option")) http_fail(400, "invalid_argument", "missing field 'option'");
    const auto input = body["option"].is_number_integer() ? std::to_string(body["option"].get<long long>())
                                                           : string_field(body, "option");
    std::lock_guard lock(s_.mutex);
    auto& entry = s_.session(id, now_);
    if (entry.session.finished) http_fail(422, "domain", "the guided search is already finished");
    const auto* q = taxonomy::current_question(s_.taxonomy, entry.session);
    const auto key = taxonomy::resolve_option(*q, input);
    if (!key) {
      HttpError e{400, "invalid_argument", "'" + input + "' is not an option of question " + q->id};
      for (const auto& o : q->options) e.errors.push_back({{"message", "valid option"}, {"option", o.key}});
      throw e;
    }
    entry.session = taxonomy::answer(s_.taxonomy, entry.session, *key);
    return json_response(session_json(entry.session));
  }

  Response guided_back(const std::string& id) {
    std::lock_guard lock(s_.mutex);
    auto& entry = s_.session(id, now_);
    if (entry.session.history.empty()) http_fail(422, "domain", "no answer to take back");
    entry.session = taxonomy::back(s_.taxonomy, entry.session);
    return json_response(session_json(entry.session));
  }

  // --- keyword search -----------------------------------------------------------

  Response search() {
    const auto q = query("q");
    if (trim(q).empty()) http_fail(400, "invalid_argument", "missing query parameter 'q'");
    const auto mode_text = query("mode").empty() ? std::string("all") : to_lower(query("mode"));
    if (mode_text != "all" && mode_text != "any")
      http_fail(400, "invalid_argument", "mode must be 'all' or 'any'");
    const auto mode = mode_text == "all" ? textsearch::Mode::all : textsearch::Mode::any;

    json corrections = json::array();
    std::vector<std::string> words;
    for (const auto& tok : textsearch::tokenize(q)) {
      const auto fixed = s_.index->spell_correct(tok);
      if (fixed && *fixed != tok) corrections.push_back({{"from", tok}, {"to", *fixed}});
      words.push_back(fixed ? *fixed : tok);
    }
    const auto effective = join(words, " ");
    std::vector<textsearch::Hit> hits;
    if (!words.empty()) hits = s_.index->query(effective, mode);
    json results = json::array();
    for (const auto& h : hits) {
      auto c = candidate_json(h.routine_id);
      c["score"] = h.score;
      c["exact_name"] = h.exact_name;
      results.push_back(std::move(c));
    }
    return json_response({{"query", q},
                          {"effective_query", effective},
                          {"mode", mode_text},
                          {"corrections", corrections},
                          {"tokens", s_.index->usable_tokens(effective)},
                          {"results", results}});
  }

  Response complete() {
    const auto prefix = query("prefix");
    if (trim(prefix).empty()) http_fail(400, "invalid_argument", "missing query parameter 'prefix'");
    return json_response({{"prefix", prefix}, {"suggestions", s_.index->autocomplete(prefix)}});
  }

  // --- matrices -----------------------------------------------------------------

  Response upload() {
    Upload up;
    if (req_.upload) {
      up = *req_.upload;
    } else {
      up.content = req_.body;
      up.filename = query("filename");
    }
    if (up.content.size() > s_.config.upload_cap)
      http_fail(413, "too_large", "upload of " + std::to_string(up.content.size()) + " bytes exceeds the cap of " +
                                      std::to_string(s_.config.upload_cap));
    if (up.content.empty()) http_fail(400, "invalid_argument", "empty upload; send a Matrix Market file as 'file'");
    matfeat::SparseMatrix m;
    try {
      m = matfeat::parse_matrix_market(up.content);
    } catch (const LocatedError& e) {
      HttpError err{400, "parse", std::string("not a Matrix Market file: ") + e.what()};
      err.errors.push_back({{"message", e.detail()}, {"line", e.line()}, {"column", e.column()}});
      throw err;
    }
    const auto id = new_id();
    const auto path = s_.data_dir / "uploads" / (id + ".mtx");
    write_file(path, up.content);
    // Only the base name is kept, as metadata.
    auto name = fs::path(up.filename).filename().string();
    if (name.empty()) name = "matrix.mtx";
    {
      std::lock_guard lock(s_.mutex);
      s_.uploads[id] = {id, name, path, up.content.size(), now_};
    }
    return json_response({{"upload_id", id},
                          {"filename", name},
                          {"bytes", up.content.size()},
                          {"n_rows", m.rows()},
                          {"n_cols", m.cols()},
                          {"nnz", m.nnz()}},
                         201);
  }

  matfeat::SparseMatrix load_upload(const std::string& id, std::string* filename = nullptr) {
    fs::path path;
    {
      std::lock_guard lock(s_.mutex);
      const auto& u = s_.upload(id, now_);
      path = u.path;
      if (filename) *filename = u.filename;
    }
    std::string text;
    try {
      text = read_file(path);
    } catch (const Error&) {
      std::lock_guard lock(s_.mutex);
      s_.missing("upload", id);
    }
    return matfeat::parse_matrix_market(text);
  }

  Response delete_upload(const std::string& id) {
    std::lock_guard lock(s_.mutex);
    s_.upload(id, now_);
    s_.drop_upload(id, now_);
    return json_response({{"upload_id", id}, {"deleted", true}});
  }

  Response features(const std::string& id) {
    std::string filename;
    const auto m = load_upload(id, &filename);
    if (!m.square())
      http_fail(422, "domain", "features need a square matrix; got " + std::to_string(m.rows()) + " x " +
                                   std::to_string(m.cols()));
    const auto [fv, timing] = matfeat::measure_features(m);
    json seconds = json::object();
    for (const auto& [k, v] : timing.seconds) seconds[k] = v;
    json body = {{"upload_id", id},
                 {"filename", filename},
                 {"n_rows", m.rows()},
                 {"n_cols", m.cols()},
                 {"nnz", m.nnz()},
                 {"features", features_json(matfeat::to_map(fv))},
                 {"timing", {{"seconds", seconds}, {"total", timing.total}}}};
    const auto ext = to_lower(query("extended"));
    if (ext == "1" || ext == "true") body["extended"] = features_json(matfeat::to_map(matfeat::compute_extended_features(m)));
    return json_response(body);
  }

  // --- recommendation -------------------------------------------------------------

  json model_json() const {
    return {{"name", "linear"},
            {"version", s_.model_version},
            {"leaves", s_.model.leaf_count()},
            {"depth", s_.model.depth}};
  }

  static json config_json(const mlselect::SolverConfig& c, bool parallel) {
    json extra = json::object();
    for (const auto& [k, v] : c.extra) extra[k] = v;
    return {{"key", c.key()},
            {"method", c.method},
            {"preconditioner", c.preconditioner ? json(*c.preconditioner) : json(nullptr)},
            {"extra", extra},
            {"options", codegen::solver_options(c, parallel)}};
  }

  Response recommend() {
    const auto body = parse_body(req_);
    const bool parallel = bool_field(body, "parallel");
    mlselect::Features features;
    json echoed = json::object();
    std::optional<std::string> upload_id;
    if (body.contains("upload_id")) {
      upload_id = string_field(body, "upload_id");
      const auto m = load_upload(*upload_id);
      if (!m.square()) http_fail(422, "domain", "features need a square matrix");
      const auto fv = matfeat::compute_features(m);
      features = mlselect::to_features(fv);
      echoed = features_json(matfeat::to_map(fv));
    } else if (body.contains("features")) {
      if (!body["features"].is_object()) http_fail(400, "invalid_argument", "'features' must be an object");
      for (const auto& [k, v] : body["features"].items()) {
        if (v.is_number()) features[k] = v.get<double>();
        else if (v.is_string()) features[k] = v.get<std::string>();
        else http_fail(400, "invalid_argument", "feature '" + k + "' must be a number or string");
        echoed[k] = v;
      }
    } else {
      http_fail(400, "invalid_argument", "send either 'upload_id' or 'features'");
    }
    std::vector<mlselect::SolverConfig> configs;
    try {
      configs = s_.model.predict(features);
    } catch (const Error& e) {
      http_fail(400, "invalid_argument", e.what());
    }
    if (configs.empty()) http_fail(422, "domain", "the model has no eligible solver for these features");
    json recs = json::array();
    for (const auto& c : configs) recs.push_back(config_json(c, parallel));
    json out = {{"recommendations", recs}, {"model", model_json()}, {"parallel", parallel}, {"features", echoed}};
    out["upload_id"] = upload_id ? json(*upload_id) : json(nullptr);
    return json_response(out);
  }

  // --- bundles and downloads ----------------------------------------------------------

  Response bundle() {
    const auto body = parse_body(req_);
    codegen::Bundle bundle;
    std::string stem;
    std::vector<std::string> linked;
    if (body.contains("routine_id") || body.contains("routine_ids")) {
      std::vector<std::string> ids;
      if (body.contains("routine_id")) ids.push_back(string_field(body, "routine_id"));
      if (body.contains("routine_ids")) {
        if (!body["routine_ids"].is_array()) http_fail(400, "invalid_argument", "'routine_ids' must be an array");
        for (const auto& v : body["routine_ids"]) {
          if (!v.is_string()) http_fail(400, "invalid_argument", "'routine_ids' must hold strings");
          ids.push_back(v.get<std::string>());
        }
      }
      if (ids.empty()) http_fail(400, "invalid_argument", "no routines selected");
      const auto lang = codegen::parse_language(
          body.contains("language") ? string_field(body, "language") : std::string("fortran90"));
      for (const auto& id : ids)
        if (!s_.taxonomy.find_routine(id)) http_fail(404, "not_found", "unknown routine " + id);
      if (ids.size() == 1) {
        bundle = codegen::routine_bundle(s_.taxonomy, ids[0], lang, s_.templates);
        stem = archive_stem(s_.taxonomy.routine(ids[0]).name) + "_" + std::string(codegen::to_string(lang));
      } else {
        // One directory per selected routine.
        for (const auto& id : ids) {
          const auto dir = archive_stem(s_.taxonomy.routine(id).name);
          for (auto& f : codegen::routine_bundle(s_.taxonomy, id, lang, s_.templates).files)
            bundle.files.push_back({dir + "/" + f.path, std::move(f.content)});
        }
        stem = "selection_" + std::string(codegen::to_string(lang));
      }
    } else {
      std::optional<mlselect::SolverConfig> config;
      if (body.contains("recommendation")) {
        const auto& r = body["recommendation"];
        if (r.is_string()) config = mlselect::SolverConfig::parse(r.get<std::string>());
        else if (r.is_object()) config = mlselect::SolverConfig::parse(string_field(r, "key"));
        else http_fail(400, "invalid_argument", "'recommendation' must be a key or an object with 'key'");
      } else if (body.contains("config")) {
        config = mlselect::SolverConfig::parse(string_field(body, "config"));
      }
      const auto kind_text = body.contains("kind") ? string_field(body, "kind")
                                                   : std::string(config ? "recommended_solver" : "");
      if (kind_text.empty())
        http_fail(400, "invalid_argument", "send 'routine_id', 'routine_ids', 'recommendation' or 'kind'");
      const auto kind = codegen::parse_solver_bundle_kind(kind_text);
      bundle = codegen::generate_solver_bundle(kind, config, bool_field(body, "parallel"), s_.templates);
      stem = archive_stem(std::string(codegen::to_string(kind)));
      if (body.contains("upload_id")) {
        const auto id = string_field(body, "upload_id");
        std::lock_guard lock(s_.mutex);
        s_.upload(id, now_);
        linked.push_back(id);
      }
    }
    codegen::validate_bundle(bundle);
    return store_download(bundle, stem + ".zip", linked);
  }

  Response store_download(const codegen::Bundle& bundle, const std::string& filename,
                          const std::vector<std::string>& linked) {
    const auto bytes = codegen::package_archive(bundle);
    const auto id = new_id();
    const auto path = s_.data_dir / "downloads" / (id + ".zip");
    write_file(path, bytes);
    {
      std::lock_guard lock(s_.mutex);
      s_.downloads[id] = {id, filename, path, bytes.size(), now_, linked};
    }
    json files = json::array();
    for (const auto& f : bundle.files) files.push_back(f.path);
    return json_response({{"download_id", id},
                          {"filename", filename},
                          {"bytes", bytes.size()},
                          {"files", files},
                          {"expires_in_seconds", s_.config.ttl.count()}},
                         201);
  }

  Response download(const std::string& id) {
    DownloadEntry entry;
    {
      std::lock_guard lock(s_.mutex);
      auto it = s_.downloads.find(id);
      if (it == s_.downloads.end()) s_.missing("download", id);
      entry = std::move(it->second);
      s_.downloads.erase(it);
      s_.gone[id] = now_;
      if (s_.expired(entry.created, now_)) {
        s_.remove_file(entry.path);
        s_.missing("download", id);
      }
      for (const auto& u : entry.uploads) s_.drop_upload(u, now_);
    }
    std::string bytes;
    try {
      bytes = read_file(entry.path);
    } catch (const Error&) {
      http_fail(410, "gone", "download " + id + " is no longer available");
    }
    s_.remove_file(entry.path);
    Response r;
    r.content_type = "application/zip";
    r.body = std::move(bytes);
    r.headers.emplace_back("Content-Disposition", "attachment; filename=\"" + entry.filename + "\"");
    r.headers.emplace_back("Cache-Control", "no-store");
    return r;
  }

  // --- kernels ----------------------------------------------------------------------

  Response kernel() {
    const auto body = parse_body(req_);
    const auto text = string_field(body, "text");
    std::map<std::string, kernelc::Seed> seeds;
    if (body.contains("seeds") && !body["seeds"].is_null()) {
      if (!body["seeds"].is_object()) http_fail(400, "invalid_argument", "'seeds' must be an object");
      for (const auto& [name, v] : body["seeds"].items()) {
        std::string words;
        if (v.is_string()) {
          words = v.get<std::string>();
        } else if (v.is_object()) {
          std::vector<std::string> parts;
          for (const auto* f : {"kind", "orientation", "intent"})
            if (v.contains(f) && v[f].is_string() && !v[f].get<std::string>().empty() && v[f].get<std::string>() != "none")
              parts.push_back(v[f].get<std::string>());
          words = join(parts, ",");
        } else {
          http_fail(400, "invalid_argument", "seed for '" + name + "' must be a string or object");
        }
        seeds[name] = kernelc::parse_seed(words);
      }
    }
    kernelc::CompiledKernel k;
    try {
      k = kernelc::compile(text, seeds);
    } catch (const LocatedError& e) {
      const int status = status_for(e.kind());
      HttpError err{status, std::string(lh::to_string(e.kind())), e.what()};
      err.errors.push_back({{"message", e.detail()}, {"line", e.line()}, {"column", e.column()}});
      throw err;
    }
    json out = {{"kernel", k.typed.program.name},
                {"source_file", k.source_file()},
                {"manifest_file", k.manifest_file()},
                {"manifest", json::parse(k.manifest)},
                {"source", k.source}};
    if (bool_field(body, "package")) {
      codegen::Bundle b;
      for (auto& [path, content] : kernelc::package_files(k)) b.files.push_back({path, std::move(content)});
      const auto stored = store_download(b, k.typed.program.name + ".zip", {});
      out["download_id"] = json::parse(stored.body)["download_id"];
    } else {
      out["download_id"] = nullptr;
    }
    return json_response(out);
  }

  App::State& s_;
  const Request& req_;
  Clock::time_point now_;
};

}  // namespace

Response App::handle(const Request& request) {
  try {
    return Handler(*state_, request).dispatch();
  } catch (const HttpError& e) {
    return error_response(e);
  } catch (const LocatedError& e) {
    HttpError err{status_for(e.kind()), std::string(lh::to_string(e.kind())), e.what()};
    err.errors.push_back({{"message", e.detail()}, {"line", e.line()}, {"column", e.column()}});
    return error_response(err);
  } catch (const Error& e) {
    return error_response({status_for(e.kind()), std::string(lh::to_string(e.kind())), e.what()});
  } catch (const std::exception& e) {
    return error_response({500, "internal", e.what()});
  }
}

// ---------------------------------------------------------------------------
// HTTP front end

struct Server::Impl {
  App& app;
  httplib::Server http;
  std::thread listener;
  std::thread sweeper;
  std::mutex mutex;
  std::condition_variable cv;
  bool stopping = false;
  bool stopped = false;
  int port = 0;

  explicit Impl(App& a) : app(a) {}

  static Request convert(const httplib::Request& in) {
    Request r;
    r.method = in.method;
    r.path = in.path;
    for (const auto& [k, v] : in.params) r.query[k] = v;
    if (in.is_multipart_form_data()) {
      if (in.has_file("file")) {
        const auto f = in.get_file_value("file");
        r.upload = Upload{f.filename, f.content};
      }
    } else {
      r.body = in.body;
    }
    return r;
  }

  void route(const httplib::Request& in, httplib::Response& out) {
    const auto res = app.handle(convert(in));
    out.status = res.status;
    for (const auto& [k, v] : res.headers) out.set_header(k, v);
    out.set_content(res.body, res.content_type);
  }
};

Server::Server(App& app) : impl_(std::make_unique<Impl>(app)) {
  auto& h = impl_->http;
  auto handler = [this](const httplib::Request& in, httplib::Response& out) { impl_->route(in, out); };
  const std::string pattern = R"(/api/.*)";
  h.Get(pattern, handler);
  h.Post(pattern, handler);
  h.Delete(pattern, handler);
  h.Put(pattern, handler);
  h.Patch(pattern, handler);
  // Multipart framing adds a little on top of the file itself.
  h.set_payload_max_length(app.config().upload_cap + 64 * 1024);
  h.set_error_handler([](const httplib::Request& in, httplib::Response& out) {
    if (!out.body.empty()) return;
    json err = {{"status", out.status},
                {"kind", out.status == 413 ? "too_large" : "http"},
                {"message", out.status == 413 ? "request body exceeds the upload cap" : "no route for " + in.path},
                {"errors", json::array()}};
    err["errors"].push_back({{"message", err["message"]}});
    out.set_content(json{{"schema_version", schema_version}, {"error", err}}.dump(), "application/json");
  });
}

Server::~Server() { stop(); }

int Server::start() {
  auto& im = *impl_;
  const auto& cfg = im.app.config();
  if (cfg.port == 0) {
    im.port = im.http.bind_to_any_port(cfg.host);
  } else {
    if (!im.http.bind_to_port(cfg.host, cfg.port)) im.port = -1;
    else im.port = cfg.port;
  }
  if (im.port <= 0)
    fail(ErrorKind::invalid_argument, "cannot listen on " + cfg.host + ":" + std::to_string(cfg.port));
  im.listener = std::thread([&im] { im.http.listen_after_bind(); });
  im.sweeper = std::thread([&im] {
    std::unique_lock lock(im.mutex);
    while (!im.stopping) {
      if (im.cv.wait_for(lock, im.app.config().sweep_interval, [&] { return im.stopping; })) break;
      lock.unlock();
      im.app.sweep();
      lock.lock();
    }
  });
  im.http.wait_until_ready();
  return im.port;
}

void Server::wait() {
  std::unique_lock lock(impl_->mutex);
  impl_->cv.wait(lock, [&] { return impl_->stopped; });
}

void Server::stop() {
  auto& im = *impl_;
  {
    std::lock_guard lock(im.mutex);
    if (im.stopping) return;
    im.stopping = true;
  }
  im.cv.notify_all();
  im.http.stop();
  if (im.listener.joinable()) im.listener.join();
  if (im.sweeper.joinable()) im.sweeper.join();
  {
    std::lock_guard lock(im.mutex);
    im.stopped = true;
  }
  im.cv.notify_all();
}

int Server::port() const { return impl_->port; }

}  // namespace lh::service
