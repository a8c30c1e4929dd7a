#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace lh::service {

/// Version stamped on every JSON response as "schema_version".
constexpr int schema_version = 1;

struct Config {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::chrono::seconds ttl{1800};
  std::size_t upload_cap = std::size_t{64} << 20;
  /// Uploads and archives live in <data_dir>/uploads and <data_dir>/downloads.
  /// Empty: a private temporary directory removed with the App.
  std::filesystem::path data_dir;
  /// Taxonomy, vocabulary, templates and models. Empty: lh::share_dir().
  std::filesystem::path share_dir;
  std::chrono::milliseconds sweep_interval{60000};

  /// Defaults overridden by LH_ADDR (host:port), LH_TTL_SECS, LH_UPLOAD_CAP
  /// (bytes) and LH_DATA_DIR. Throws invalid_argument on malformed values.
  static Config from_env();
};

using Clock = std::chrono::steady_clock;

struct Upload {
  std::string filename;
  std::string content;
};

struct Request {
  std::string method;
  std::string path;
  std::map<std::string, std::string> query;
  std::string body;
  std::optional<Upload> upload;  // multipart "file" field
};

struct Response {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
  std::vector<std::pair<std::string, std::string>> headers;
};

/// Ids removed by one sweep.
struct SweepReport {
  std::vector<std::string> sessions;
  std::vector<std::string> uploads;
  std::vector<std::string> downloads;

  bool empty() const { return sessions.empty() && uploads.empty() && downloads.empty(); }
  std::string to_json() const;
};

/// Transport-independent request handling over the taxonomy, search index,
/// feature extraction, recommendation model, code generation and kernel
/// compiler. Thread-safe.
class App {
 public:
  /// Loads <share>/taxonomy/lapack_linear.json, <share>/vocabulary.txt,
  /// <share>/templates and <share>/models/linear.json.
  explicit App(Config config, std::function<Clock::time_point()> clock = {});
  ~App();
  App(const App&) = delete;
  App& operator=(const App&) = delete;

  Response handle(const Request& request);

  /// Removes sessions idle for longer than the TTL and uploads and archives
  /// older than the TTL, files included. Idempotent.
  SweepReport sweep();
  SweepReport sweep(Clock::time_point now);

  const Config& config() const;
  std::filesystem::path upload_dir() const;
  std::filesystem::path download_dir() const;

  struct State;  // implementation detail

 private:
  std::unique_ptr<State> state_;
};

/// HTTP/1.1 front end for an App plus the periodic sweeper.
class Server {
 public:
  explicit Server(App& app);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds and starts serving in the background; returns the bound port.
  int start();
  /// Blocks until stop() is called from another thread or a signal handler.
  void wait();
  void stop();
  int port() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace lh::service
