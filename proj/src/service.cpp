#include "activelex/service.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <random>
#include <regex>
#include <set>

#include <httplib.h>

#include "activelex/error.hpp"
#include "activelex/kernels/kernels.hpp"

namespace activelex {

using nlohmann::json;

namespace {

Response reply(int status, const json& body) { return {status, body.dump(), "application/json"}; }
Response error_reply(int status, const std::string& message) { return reply(status, {{"error", message}}); }

bool valid_name(const std::string& name) {
  static const std::regex pattern("[A-Za-z0-9_][A-Za-z0-9_.-]*");
  return std::regex_match(name, pattern);
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_atomically(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp);
    out << content;
  }
  std::filesystem::rename(tmp, path);
}

std::pair<std::string, std::string> term_pair(const json& j) {
  if (j.is_array() && j.size() == 2) return {j.at(0).get<std::string>(), j.at(1).get<std::string>()};
  if (j.is_object()) return {j.at("term").get<std::string>(), j.at("category").get<std::string>()};
  throw InvalidArgument("lexicon item must be [term, category] or {term, category}");
}

json suggestion_json(const Suggestion& s) {
  json features = json::array();
  for (const auto& f : s.top_features)
    features.push_back({{"name", f.name}, {"tokens", f.tokens}, {"contribution", f.contribution}});
  json hits = json::array();
  for (const auto& [term, category] : s.lexicon_hits) hits.push_back({{"term", term}, {"category", category}});
  return {{"instance_id", s.instance_id},   {"text", s.text},         {"predicted_label", s.predicted_label},
          {"probabilities", s.probabilities}, {"score", s.uncertainty}, {"top_features", std::move(features)},
          {"lexicon_hits", std::move(hits)}};
}

}  // namespace

ServiceConfig load_service_config(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": malformed config (" + e.what() + ")");
  }
  if (!doc.is_object()) throw DataError(path.string() + ": config must be a JSON object");
  ServiceConfig cfg;
  try {
    cfg.host = doc.value("host", cfg.host);
    cfg.port = doc.value("port", cfg.port);
    cfg.data_dir = doc.value("data_dir", cfg.data_dir.string());
    cfg.checkpoint_dir = doc.value("checkpoint_dir", cfg.checkpoint_dir.string());
    cfg.default_strategy = doc.value("default_strategy", cfg.default_strategy);
    cfg.default_budget = doc.value("default_budget", cfg.default_budget);
    cfg.default_warm_n = doc.value("default_warm_n", cfg.default_warm_n);
    cfg.default_seed = doc.value("default_seed", cfg.default_seed);
    cfg.hash_dims = doc.value("hash_dims", cfg.hash_dims);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  if (!parse_strategy(cfg.default_strategy)) throw DataError(path.string() + ": unknown default_strategy");
  // Relative directories are resolved against the config file's location.
  const auto base = path.parent_path();
  if (cfg.data_dir.is_relative()) cfg.data_dir = base / cfg.data_dir;
  if (cfg.checkpoint_dir.is_relative()) cfg.checkpoint_dir = base / cfg.checkpoint_dir;
  return cfg;
}

// ---------------------------------------------------------------------------
// Service
// ---------------------------------------------------------------------------

struct Service::Slot {
  std::string id;
  std::string created_at;
  std::mutex mutex;
  std::atomic<bool> training{false};
  SessionState state;
  std::vector<StagedLabel> staged_labels;
  Feedback staged_feedback;

  mutable std::mutex snapshot_mutex;
  std::vector<RoundMetrics> history;
  std::string checkpoint;

  json handle() const {
    return {{"session_id", id},
            {"created_at", created_at},
            {"dataset_name", state.dataset->name},
            {"status", training.load() ? "training" : "idle"}};
  }
};

Service::Service(ServiceConfig config) : config_(std::move(config)) {}
Service::~Service() = default;

std::shared_ptr<Service::Slot> Service::find(const std::string& id) const {
  std::lock_guard lock(registry_mutex_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

std::shared_ptr<const Dataset> Service::dataset(const std::string& name) {
  if (!valid_name(name)) return nullptr;
  std::lock_guard lock(data_mutex_);
  if (auto it = datasets_.find(name); it != datasets_.end()) return it->second;
  const auto dir = config_.data_dir / "datasets";
  for (const auto& [ext, format] : {std::pair{".jsonl", DatasetFormat::jsonl}, std::pair{".csv", DatasetFormat::csv}}) {
    const auto path = dir / (name + ext);
    if (!std::filesystem::exists(path)) continue;
    auto ds = std::make_shared<Dataset>(load_dataset(path, format));
    ds->name = name;
    datasets_[name] = ds;
    return ds;
  }
  return nullptr;
}

void Service::commit(Slot& slot) {
  json doc = {{"session", {{"session_id", slot.id}, {"created_at", slot.created_at}}},
              {"state", session_to_json(slot.state)}};
  std::string text = doc.dump();
  write_atomically(config_.checkpoint_dir / (slot.id + ".json"), text);
  std::lock_guard lock(slot.snapshot_mutex);
  slot.history = slot.state.history;
  slot.checkpoint = std::move(text);
}

std::size_t Service::restore_checkpoints() {
  if (!std::filesystem::is_directory(config_.checkpoint_dir)) return 0;
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(config_.checkpoint_dir))
    if (entry.path().extension() == ".json") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::size_t restored = 0;
  for (const auto& path : files) {
    const json doc = json::parse(read_file(path));
    auto slot = std::make_shared<Slot>();
    slot->id = doc.at("session").at("session_id").get<std::string>();
    slot->created_at = doc.at("session").at("created_at").get<std::string>();
    const auto ds = dataset(doc.at("state").at("dataset").get<std::string>());
    if (!ds) throw DataError(path.string() + ": dataset " + doc.at("state").at("dataset").get<std::string>() + " not found");
    slot->state = session_from_json(doc.at("state"), ds);
    slot->history = slot->state.history;
    slot->checkpoint = doc.dump();
    std::lock_guard lock(registry_mutex_);
    sessions_[slot->id] = std::move(slot);
    ++restored;
  }
  return restored;
}

Response Service::health() const {
  return reply(200, {{"status", "ok"},
                     {"name", "activelex"},
                     {"version", std::string(kVersion)},
                     {"simd", std::string(kernels::to_string(kernels::active().isa))}});
}

Response Service::put_dataset(const std::string& name, const std::string& body, DatasetFormat format) {
  if (!valid_name(name)) return error_reply(422, "invalid dataset name");
  try {
    auto ds = std::make_shared<Dataset>(parse_dataset(body, format, name));
    write_atomically(config_.data_dir / "datasets" / (name + ".jsonl"), serialize_dataset(*ds));
    std::lock_guard lock(data_mutex_);
    datasets_[name] = ds;
    return reply(201, {{"name", name}, {"instances", ds->size()}, {"labels", ds->label_set}});
  } catch (const Error& e) {
    return error_reply(422, e.what());
  }
}

Response Service::put_lexicon(const std::string& name, const std::string& body) {
  if (!valid_name(name)) return error_reply(422, "invalid lexicon name");
  try {
    const auto lex = parse_lexicon(body);
    write_atomically(config_.data_dir / "lexicons" / (name + ".csv"), body);
    return reply(201, {{"name", name}, {"entries", lex.entries().size()}, {"categories", lex.categories()}});
  } catch (const Error& e) {
    return error_reply(422, e.what());
  }
}

Response Service::put_filter(const std::string& name, const std::string& body) {
  if (!valid_name(name)) return error_reply(422, "invalid filter name");
  try {
    const auto filter = parse_negative_filter(body);
    write_atomically(config_.data_dir / "filters" / (name + ".txt"), body);
    return reply(201, {{"name", name}, {"terms", filter.terms().size()}});
  } catch (const Error& e) {
    return error_reply(422, e.what());
  }
}

Response Service::create_session(const std::string& body) {
  json req;
  try {
    req = body.empty() ? json::object() : json::parse(body);
  } catch (const json::exception& e) {
    return error_reply(400, std::string("malformed JSON: ") + e.what());
  }
  if (!req.is_object()) return error_reply(400, "request body must be a JSON object");
  try {
    const auto dataset_name = req.at("dataset").get<std::string>();
    auto ds = dataset(dataset_name);
    if (!ds) return error_reply(404, "unknown dataset \"" + dataset_name + "\"");

    Lexicon lexicon;
    if (auto name = req.value("lexicon", std::string()); !name.empty()) {
      const auto path = config_.data_dir / "lexicons" / (name + ".csv");
      if (!valid_name(name) || !std::filesystem::exists(path)) return error_reply(404, "unknown lexicon \"" + name + "\"");
      lexicon = load_lexicon(path);
    }
    NegativeFilter filter;
    if (auto name = req.value("filter", std::string()); !name.empty()) {
      const auto path = config_.data_dir / "filters" / (name + ".txt");
      if (!valid_name(name) || !std::filesystem::exists(path)) return error_reply(404, "unknown filter \"" + name + "\"");
      filter = load_negative_filter(path);
    }
    const auto strategy_text = req.value("strategy", config_.default_strategy);
    auto strategy = parse_strategy(strategy_text);
    if (!strategy) return error_reply(422, "unknown strategy \"" + strategy_text + "\"");
    strategy->k = req.value("budget", config_.default_budget);
    if (strategy->k == 0) return error_reply(422, "budget must be positive");
    const auto warm_n = req.value("warm_n", config_.default_warm_n);
    const auto seed = req.value("seed", config_.default_seed);

    EngineConfig cfg;
    cfg.hash_dims = req.value("hash_dims", config_.hash_dims);
    cfg.train.max_iterations = req.value("max_iterations", cfg.train.max_iterations);
    cfg.train.gradient_tolerance = req.value("gradient_tolerance", cfg.train.gradient_tolerance);
    cfg.cv_folds = req.value("cv_folds", cfg.cv_folds);
    if (req.contains("l2_grid")) cfg.l2_grid = req.at("l2_grid").get<std::vector<double>>();

    auto slot = std::make_shared<Slot>();
    slot->state = bootstrap(ds, std::move(lexicon), std::move(filter), *strategy, warm_n, seed, std::move(cfg));
    slot->created_at = utc_now();
    {
      std::random_device rd;
      const std::uint64_t r = (static_cast<std::uint64_t>(rd()) << 32) ^ rd() ^ (++counter_ << 48);
      char buf[24];
      std::snprintf(buf, sizeof buf, "s%016llx", static_cast<unsigned long long>(r));
      slot->id = buf;
    }
    commit(*slot);
    json out = slot->handle();
    out["strategy"] = strategy_name(slot->state.strategy);
    out["metrics"] = json::array({metrics_to_json(slot->state.history.front())});
    {
      std::lock_guard lock(registry_mutex_);
      sessions_[slot->id] = slot;
    }
    return reply(201, out);
  } catch (const json::exception& e) {
    return error_reply(422, std::string("bad request: ") + e.what());
  } catch (const Error& e) {
    return error_reply(422, e.what());
  }
}

Response Service::list_sessions() const {
  json out = json::array();
  std::lock_guard lock(registry_mutex_);
  for (const auto& [_, slot] : sessions_) out.push_back(slot->handle());
  return reply(200, {{"sessions", std::move(out)}});
}

Response Service::get_suggestions(const std::string& session_id, std::optional<std::size_t> k) {
  auto slot = find(session_id);
  if (!slot) return error_reply(404, "unknown session \"" + session_id + "\"");
  if (slot->training) return error_reply(409, "session is training");
  std::unique_lock lock(slot->mutex, std::try_to_lock);
  if (!lock.owns_lock() || slot->training) return error_reply(409, "session is busy");
  const auto& state = slot->state;
  const std::size_t count = k.value_or(state.strategy.k);
  json items = json::array();
  for (const auto& s : suggest(state, count)) items.push_back(suggestion_json(s));
  json phrases = json::array();
  for (const auto& [phrase, score] : pool_keyphrases(state, 20)) phrases.push_back({{"phrase", phrase}, {"score", score}});
  return reply(200, {{"classes", state.dataset->label_set},
                     {"round", state.round},
                     {"suggestions", std::move(items)},
                     {"keyphrases", std::move(phrases)}});
}

Response Service::submit_annotations(const std::string& session_id, const std::string& body) {
  auto slot = find(session_id);
  if (!slot) return error_reply(404, "unknown session \"" + session_id + "\"");
  if (slot->training) return error_reply(409, "session is training");
  json req;
  try {
    req = json::parse(body);
  } catch (const json::exception& e) {
    return error_reply(400, std::string("malformed JSON: ") + e.what());
  }
  const json* items = nullptr;
  if (req.is_array()) items = &req;
  else if (req.is_object() && req.contains("annotations")) items = &req.at("annotations");
  if (!items || !items->is_array()) return error_reply(400, "expected a list of annotations");

  std::unique_lock lock(slot->mutex, std::try_to_lock);
  if (!lock.owns_lock() || slot->training) return error_reply(409, "session is busy");
  auto& state = slot->state;
  try {
    std::vector<StagedLabel> labels;
    Feedback feedback;
    std::set<std::string> batch_ids;
    for (const auto& s : slot->staged_labels) batch_ids.insert(s.instance_id);
    for (const auto& item : *items) {
      const auto id = item.at("instance_id").get<std::string>();
      if (!state.is_remaining(id)) return error_reply(422, "instance \"" + id + "\" is not in the remaining pool");
      if (!batch_ids.insert(id).second) return error_reply(422, "instance \"" + id + "\" is already staged");
      StagedLabel staged{id, {}, Provenance::human};
      if (item.contains("label") && !item.at("label").is_null()) {
        staged.label = item.at("label").get<std::string>();
        if (!state.dataset->label_index(staged.label))
          return error_reply(422, "label \"" + staged.label + "\" is not in the class set");
      } else {
        const auto idx = state.train_index.find(id)->second;
        staged.label = state.dataset->label_set[predict(state.model, state.train_vectors[idx])];
        staged.provenance = Provenance::model_accepted;
      }
      labels.push_back(std::move(staged));
      for (const auto& t : item.value("useless_features", json::array()))
        feedback.useless_features.push_back(t.get<std::string>());
      for (const auto& p : item.value("lexicon_accepts", json::array())) feedback.accepted_lexicon.push_back(term_pair(p));
      for (const auto& p : item.value("lexicon_rejects", json::array())) feedback.rejected_lexicon.push_back(term_pair(p));
    }
    for (const auto& t : feedback.useless_features)
      if (lowercase_ascii(t).find_first_not_of(" \t") == std::string::npos) return error_reply(422, "empty feature term");
    for (const auto* list : {&feedback.accepted_lexicon, &feedback.rejected_lexicon})
      for (const auto& [term, category] : *list)
        if (term.empty() || category.empty()) return error_reply(422, "empty lexicon term or category");

    const std::size_t accepted = labels.size();
    for (auto& l : labels) slot->staged_labels.push_back(std::move(l));
    auto append = [](auto& to, auto& from) { to.insert(to.end(), from.begin(), from.end()); };
    append(slot->staged_feedback.useless_features, feedback.useless_features);
    append(slot->staged_feedback.accepted_lexicon, feedback.accepted_lexicon);
    append(slot->staged_feedback.rejected_lexicon, feedback.rejected_lexicon);
    return reply(200, {{"accepted", accepted}, {"staged", slot->staged_labels.size()}});
  } catch (const json::exception& e) {
    return error_reply(422, std::string("bad annotation: ") + e.what());
  } catch (const Error& e) {
    return error_reply(422, e.what());
  }
}

Response Service::trigger_update(const std::string& session_id) {
  auto slot = find(session_id);
  if (!slot) return error_reply(404, "unknown session \"" + session_id + "\"");
  if (slot->training.exchange(true)) return error_reply(409, "an update is already running");
  struct Release {
    std::atomic<bool>& flag;
    ~Release() { flag = false; }
  } release{slot->training};

  std::lock_guard lock(slot->mutex);
  if (training_hook_) training_hook_();
  if (slot->staged_labels.empty() && slot->staged_feedback.empty()) return error_reply(422, "nothing staged");
  try {
    SessionState next = slot->state;
    apply_feedback(next, slot->staged_feedback, /*retrain=*/false);
    const auto metrics = merge_and_retrain(next, slot->staged_labels);
    slot->state = std::move(next);
    slot->staged_labels.clear();
    slot->staged_feedback = {};
    commit(*slot);
    return reply(200, metrics_to_json(metrics));
  } catch (const Error& e) {
    return error_reply(422, e.what());
  }
}

Response Service::get_metrics(const std::string& session_id, bool as_csv) const {
  auto slot = find(session_id);
  if (!slot) return error_reply(404, "unknown session \"" + session_id + "\"");
  std::lock_guard lock(slot->snapshot_mutex);
  if (as_csv) return {200, metrics_to_csv(slot->history), "text/csv"};
  json rows = json::array();
  for (const auto& m : slot->history) rows.push_back(metrics_to_json(m));
  return reply(200, {{"session_id", session_id}, {"history", std::move(rows)}});
}

Response Service::get_checkpoint(const std::string& session_id) const {
  auto slot = find(session_id);
  if (!slot) return error_reply(404, "unknown session \"" + session_id + "\"");
  std::lock_guard lock(slot->snapshot_mutex);
  return {200, slot->checkpoint, "application/json"};
}

// ---------------------------------------------------------------------------
// HTTP
// ---------------------------------------------------------------------------

HttpServer::HttpServer(Service& service) : service_(service), server_(std::make_unique<httplib::Server>()) {
  auto& srv = *server_;
  // The library default adds SO_REUSEPORT, which would let a second server
  // share a port that is already in use.
  srv.set_socket_options([](socket_t sock) {
    int yes = 1;
    ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
  });
  auto send = [](httplib::Response& res, const Response& r) {
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  };
  srv.Get("/health", [this, send](const httplib::Request&, httplib::Response& res) { send(res, service_.health()); });
  srv.Put(R"(/datasets/([^/]+))", [this, send](const httplib::Request& req, httplib::Response& res) {
    const auto format = req.get_param_value("format") == "csv" ? DatasetFormat::csv : DatasetFormat::jsonl;
    send(res, service_.put_dataset(req.matches[1], req.body, format));
  });
  srv.Put(R"(/lexicons/([^/]+))", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service_.put_lexicon(req.matches[1], req.body));
  });
  srv.Put(R"(/filters/([^/]+))", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service_.put_filter(req.matches[1], req.body));
  });
  srv.Post("/sessions", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service_.create_session(req.body));
  });
  srv.Get("/sessions", [this, send](const httplib::Request&, httplib::Response& res) {
    send(res, service_.list_sessions());
  });
  srv.Get(R"(/sessions/([^/]+)/suggestions)", [this, send](const httplib::Request& req, httplib::Response& res) {
    std::optional<std::size_t> k;
    if (req.has_param("k")) {
      try {
        const long long v = std::stoll(req.get_param_value("k"));
        if (v < 0) throw std::invalid_argument("negative");
        k = static_cast<std::size_t>(v);
      } catch (const std::exception&) {
        send(res, error_reply(400, "k must be a non-negative integer"));
        return;
      }
    }
    send(res, service_.get_suggestions(req.matches[1], k));
  });
  srv.Post(R"(/sessions/([^/]+)/annotations)", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service_.submit_annotations(req.matches[1], req.body));
  });
  srv.Post(R"(/sessions/([^/]+)/update)", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service_.trigger_update(req.matches[1]));
  });
  srv.Get(R"(/sessions/([^/]+)/metrics)", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service_.get_metrics(req.matches[1], req.get_param_value("format") == "csv"));
  });
  srv.Get(R"(/sessions/([^/]+)/checkpoint)", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service_.get_checkpoint(req.matches[1]));
  });
}

HttpServer::~HttpServer() { stop(); }

bool HttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    port_ = server_->bind_to_any_port(host);
    return port_ > 0;
  }
  if (!server_->bind_to_port(host, port)) return false;
  port_ = port;
  return true;
}

void HttpServer::serve() {
  serving_ = true;
  server_->listen_after_bind();
}

bool HttpServer::start(const std::string& host, int port) {
  if (!bind(host, port)) return false;
  thread_ = std::thread([this] { serve(); });
  server_->wait_until_ready();
  return true;
}

void HttpServer::stop() {
  if (!server_) return;
  // httplib only closes its listening socket from a running accept loop, so a
  // bound server that never served is started briefly to release the port.
  if (port_ > 0 && !serving_ && !thread_.joinable()) {
    thread_ = std::thread([this] { serve(); });
    server_->wait_until_ready();
  }
  server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace activelex
