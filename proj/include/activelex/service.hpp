#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "activelex/engine.hpp"

namespace httplib {
class Server;
}

namespace activelex {

inline constexpr std::string_view kVersion = "0.1.0";

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::filesystem::path data_dir = "data";
  std::filesystem::path checkpoint_dir = "checkpoints";
  std::string default_strategy = "entropy-top";
  std::size_t default_budget = 100;
  std::size_t default_warm_n = 100;
  std::uint64_t default_seed = 0;
  std::size_t hash_dims = kDefaultHashDims;
};

/// Reads a JSON config file; keys mirror ServiceConfig field names. Throws
/// DataError for unreadable or malformed files.
ServiceConfig load_service_config(const std::filesystem::path& path);

struct Response {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";

  nlohmann::json json() const { return nlohmann::json::parse(body); }
};

/// Session registry behind the HTTP API. Transport-independent so it can be
/// driven directly in tests; HttpServer maps routes onto it.
///
/// Mutations of one session are serialized; a training run marks the session
/// busy and concurrent mutating calls get 409. Metric and checkpoint reads are
/// served from the last committed snapshot.
class Service {
 public:
  explicit Service(ServiceConfig config);
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Loads every checkpoint in the checkpoint directory. Returns how many sessions were restored.
  std::size_t restore_checkpoints();

  Response health() const;
  Response put_dataset(const std::string& name, const std::string& body, DatasetFormat format);
  Response put_lexicon(const std::string& name, const std::string& body);
  Response put_filter(const std::string& name, const std::string& body);

  Response create_session(const std::string& body);
  Response list_sessions() const;
  Response get_suggestions(const std::string& session_id, std::optional<std::size_t> k);
  Response submit_annotations(const std::string& session_id, const std::string& body);
  Response trigger_update(const std::string& session_id);
  Response get_metrics(const std::string& session_id, bool as_csv) const;
  Response get_checkpoint(const std::string& session_id) const;

  /// Test seam: runs inside trigger_update after the session is marked busy.
  void set_training_hook(std::function<void()> hook) { training_hook_ = std::move(hook); }

  const ServiceConfig& config() const { return config_; }

 private:
  struct Slot;

  std::shared_ptr<Slot> find(const std::string& id) const;
  std::shared_ptr<const Dataset> dataset(const std::string& name);
  void commit(Slot& slot);

  ServiceConfig config_;
  mutable std::mutex registry_mutex_;
  std::map<std::string, std::shared_ptr<Slot>> sessions_;
  std::mutex data_mutex_;
  std::map<std::string, std::shared_ptr<const Dataset>> datasets_;
  std::function<void()> training_hook_;
  std::atomic<std::uint64_t> counter_{0};
};

/// cpp-httplib front end for a Service.
class HttpServer {
 public:
  explicit HttpServer(Service& service);
  ~HttpServer();

  /// Binds to host:port (port 0 picks a free port). Returns false when the address is unavailable.
  bool bind(const std::string& host, int port);
  int port() const { return port_; }
  /// Serves until stop() is called.
  void serve();
  /// bind + serve on a background thread.
  bool start(const std::string& host, int port);
  void stop();

 private:
  Service& service_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  std::atomic<bool> serving_{false};
  int port_ = -1;
};

}  // namespace activelex
