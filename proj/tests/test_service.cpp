#include <doctest.h>

#include <functional>
#include <fstream>
#include <future>
#include <httplib.h>

#include "activelex/service.hpp"
#include "activelex/synthetic.hpp"
#include "support.hpp"

using namespace activelex;
using nlohmann::json;

namespace {

std::string synthetic_jsonl(std::size_t train, std::size_t test = 50, std::uint64_t seed = 1) {
  SyntheticSpec spec;
  spec.train = train;
  spec.test = test;
  spec.seed = seed;
  spec.vocab_per_class = 60;
  return serialize_dataset(generate_synthetic(spec));
}

struct Fixture {
  testing::TempDir dir;
  ServiceConfig config;
  std::unique_ptr<Service> service;

  Fixture() {
    config.data_dir = dir / "data";
    config.checkpoint_dir = dir / "ckpt";
    config.hash_dims = 1 << 10;
    service = std::make_unique<Service>(config);
    REQUIRE(service->put_dataset("syn", synthetic_jsonl(300), DatasetFormat::jsonl).status == 201);
    REQUIRE(service->put_dataset("tiny", synthetic_jsonl(53), DatasetFormat::jsonl).status == 201);
  }

  std::string create(json body) {
    const auto r = service->create_session(body.dump());
    REQUIRE(r.status == 201);
    return r.json().at("session_id").get<std::string>();
  }
};

json gold_batch(const Dataset& ds, const json& suggestions) {
  json batch = json::array();
  for (const auto& s : suggestions) {
    const auto id = s.at("instance_id").get<std::string>();
    for (const auto& inst : ds.split(Split::train))
      if (inst.id == id) batch.push_back({{"instance_id", id}, {"label", *inst.gold_label}});
  }
  return batch;
}

}  // namespace

TEST_CASE("health reports the version") {
  Fixture f;
  const auto h = f.service->health().json();
  CHECK(h.at("status") == "ok");
  CHECK(h.at("version") == std::string(kVersion));
}

TEST_CASE("session creation") {
  Fixture f;
  const auto r = f.service->create_session(json{{"dataset", "syn"}, {"strategy", "entropy-top"}, {"seed", 4}}.dump());
  REQUIRE(r.status == 201);
  const auto body = r.json();
  CHECK_FALSE(body.at("session_id").get<std::string>().empty());
  CHECK(body.at("dataset_name") == "syn");
  CHECK(body.at("status") == "idle");
  REQUIRE(body.at("metrics").size() == 1);
  CHECK(body.at("metrics")[0].at("round") == 0);
  CHECK(body.at("metrics")[0].at("n_labeled") == 100);

  CHECK(f.service->create_session(json{{"dataset", "nope"}}.dump()).status == 404);
  const auto big = f.service->create_session(json{{"dataset", "tiny"}, {"warm_n", 1000}}.dump());
  CHECK(big.status == 422);
  CHECK(big.json().at("error").get<std::string>().find("warm_n") != std::string::npos);
  CHECK(f.service->create_session("{not json").status == 400);
  CHECK(f.service->create_session(json{{"dataset", "syn"}, {"strategy", "foo"}}.dump()).status == 422);
  CHECK(f.service->create_session(json{{"dataset", "syn"}, {"lexicon", "missing"}}.dump()).status == 404);

  const auto second = f.create({{"dataset", "syn"}});
  CHECK(second != body.at("session_id").get<std::string>());
  CHECK(f.service->list_sessions().json().at("sessions").size() == 2);
}

TEST_CASE("suggestions") {
  Fixture f;
  const auto id = f.create({{"dataset", "tiny"}, {"warm_n", 50}});
  const auto r = f.service->get_suggestions(id, 5);
  REQUIRE(r.status == 200);
  const auto body = r.json();
  CHECK(body.at("suggestions").size() == 3);
  CHECK(body.at("classes").size() == 3);
  CHECK(body.at("keyphrases").size() <= 20);
  const auto& s = body.at("suggestions")[0];
  for (const char* key : {"instance_id", "text", "predicted_label", "probabilities", "score", "top_features", "lexicon_hits"})
    CHECK(s.contains(key));
  CHECK(f.service->get_suggestions(id, 5).body == r.body);
  CHECK(f.service->get_suggestions("missing", 5).status == 404);
}

TEST_CASE("annotation staging") {
  Fixture f;
  const auto id = f.create({{"dataset", "syn"}});
  const auto sug = f.service->get_suggestions(id, 3).json().at("suggestions");
  json batch = json::array();
  for (const auto& s : sug) batch.push_back({{"instance_id", s.at("instance_id")}});
  batch[1]["label"] = "class2";
  const auto before = f.service->get_checkpoint(id).body;

  const auto r = f.service->submit_annotations(id, batch.dump());
  REQUIRE(r.status == 200);
  CHECK(r.json().at("accepted") == 3);

  // Staging alone does not train or checkpoint.
  CHECK(f.service->get_checkpoint(id).body == before);
  CHECK(f.service->get_metrics(id, false).json().at("history").size() == 1);

  const auto again = f.service->submit_annotations(id, json::array({batch[0]}).dump());
  CHECK(again.status == 422);

  const auto cp = json::parse(before);
  const auto labeled_id = cp.at("state").at("labeled")[0][0].get<std::string>();
  const auto bad = f.service->submit_annotations(id, json::array({{{"instance_id", labeled_id}}}).dump());
  CHECK(bad.status == 422);
  CHECK(bad.json().at("error").get<std::string>().find(labeled_id) != std::string::npos);

  const auto pool_id = f.service->get_suggestions(id, 10).json().at("suggestions")[5].at("instance_id");
  CHECK(f.service->submit_annotations(id, json::array({{{"instance_id", pool_id}, {"label", "nope"}}}).dump()).status == 422);
  CHECK(f.service->submit_annotations(id, json::array({{{"instance_id", "ghost"}}}).dump()).status == 422);
  CHECK(f.service->submit_annotations(id, "[").status == 400);

  const auto empty = f.service->submit_annotations(id, "[]");
  CHECK(empty.status == 200);
  CHECK(empty.json().at("accepted") == 0);

  const auto m = f.service->trigger_update(id);
  REQUIRE(m.status == 200);
  CHECK(m.json().at("n_labeled") == 103);
  const auto state = json::parse(f.service->get_checkpoint(id).body).at("state");
  std::map<std::string, std::string> provenance;
  for (const auto& l : state.at("labeled")) provenance[l[0]] = l[2];
  CHECK(provenance.at(sug[0].at("instance_id")) == "model_accepted");
  CHECK(provenance.at(sug[1].at("instance_id")) == "human");
}

TEST_CASE("updates and metrics history") {
  Fixture f;
  const auto id = f.create({{"dataset", "syn"}});
  CHECK(f.service->trigger_update(id).status == 422);
  CHECK(f.service->trigger_update("missing").status == 404);

  const auto ds = parse_dataset(synthetic_jsonl(300), DatasetFormat::jsonl, "syn");
  for (int round = 1; round <= 2; ++round) {
    const auto sug = f.service->get_suggestions(id, 100).json().at("suggestions");
    REQUIRE(f.service->submit_annotations(id, gold_batch(ds, sug).dump()).status == 200);
    const auto m = f.service->trigger_update(id).json();
    CHECK(m.at("round") == round);
    CHECK(m.at("n_labeled") == 100 + 100 * round);
  }
  const auto history = f.service->get_metrics(id, false).json().at("history");
  REQUIRE(history.size() == 3);
  for (std::size_t r = 0; r < 3; ++r) {
    CHECK(history[r].at("round") == r);
    if (r) CHECK(history[r].at("n_labeled") > history[r - 1].at("n_labeled"));
  }
  CHECK(history[2].at("f1_remaining").is_null());
  const auto csv = f.service->get_metrics(id, true);
  CHECK(csv.content_type == "text/csv");
  CHECK(csv.body.rfind(std::string(kMetricsCsvHeader), 0) == 0);
  CHECK(f.service->get_metrics("missing", false).status == 404);
}

TEST_CASE("feedback-only update") {
  Fixture f;
  REQUIRE(f.service->put_lexicon("lex", "word,sentiment\nc0w0,zero\n").status == 201);
  REQUIRE(f.service->put_filter("flt", "# none yet\n").status == 201);
  const auto id = f.create({{"dataset", "syn"}, {"lexicon", "lex"}, {"filter", "flt"}});
  const auto pool_id = f.service->get_suggestions(id, 1).json().at("suggestions")[0].at("instance_id");
  CHECK(f.service->submit_annotations(id, "[]").status == 200);
  json item = {{"instance_id", pool_id},
               {"useless_features", {"common1"}},
               {"lexicon_accepts", json::array({json::array({"c1w0", "one"})})},
               {"lexicon_rejects", {{{"term", "c0w0"}, {"category", "zero"}}}}};
  const auto staged = f.service->submit_annotations(id, json::array({item}).dump());
  INFO(staged.body);
  REQUIRE(staged.status == 200);
  const auto updated = f.service->trigger_update(id);
  INFO(updated.body);
  REQUIRE(updated.status == 200);
  const auto state = json::parse(f.service->get_checkpoint(id).body).at("state");
  CHECK(state.dump().find("common1") != std::string::npos);
  const auto sug = f.service->get_suggestions(id, 200).json();
  for (const auto& k : sug.at("keyphrases")) CHECK(k.at("phrase") != "common1");
}

TEST_CASE("reads do not mutate the session") {
  Fixture f;
  const auto id = f.create({{"dataset", "syn"}});
  const auto before = std::hash<std::string>{}(f.service->get_checkpoint(id).body);
  f.service->get_suggestions(id, 10);
  f.service->get_metrics(id, false);
  f.service->get_metrics(id, true);
  f.service->list_sessions();
  CHECK(std::hash<std::string>{}(f.service->get_checkpoint(id).body) == before);
}

TEST_CASE("concurrent triggers: one wins, one gets 409") {
  Fixture f;
  const auto id = f.create({{"dataset", "syn"}});
  const auto sug = f.service->get_suggestions(id, 10).json().at("suggestions");
  json batch = json::array();
  for (const auto& s : sug) batch.push_back({{"instance_id", s.at("instance_id")}});
  REQUIRE(f.service->submit_annotations(id, batch.dump()).status == 200);

  std::promise<void> entered, release;
  auto released = release.get_future().share();
  bool first = true;
  f.service->set_training_hook([&] {
    if (!first) return;
    first = false;
    entered.set_value();
    released.wait();
  });
  auto winner = std::async(std::launch::async, [&] { return f.service->trigger_update(id).status; });
  entered.get_future().wait();
  const int loser = f.service->trigger_update(id).status;
  CHECK(f.service->get_suggestions(id, 1).status == 409);
  CHECK(f.service->submit_annotations(id, "[]").status == 409);
  CHECK(f.service->get_metrics(id, false).status == 200);
  release.set_value();
  CHECK(winner.get() == 200);
  CHECK(loser == 409);
  CHECK(f.service->get_metrics(id, false).json().at("history").size() == 2);
}

TEST_CASE("concurrent submissions keep the pool consistent") {
  Fixture f;
  const auto id = f.create({{"dataset", "syn"}});
  const auto sug = f.service->get_suggestions(id, 40).json().at("suggestions");
  std::vector<std::future<Response>> futures;
  // Every id is submitted by two threads; exactly one submission per id may succeed.
  for (int t = 0; t < 4; ++t)
    futures.push_back(std::async(std::launch::async, [&, t] {
      json batch = json::array();
      for (std::size_t i = static_cast<std::size_t>(t % 2) * 20; i < static_cast<std::size_t>(t % 2) * 20 + 20; ++i)
        batch.push_back({{"instance_id", sug[i].at("instance_id")}});
      Response r;
      do r = f.service->submit_annotations(id, batch.dump());
      while (r.status == 409);
      return r;
    }));
  int ok = 0;
  for (auto& fu : futures) ok += fu.get().status == 200;
  CHECK(ok == 2);
  const auto m = f.service->trigger_update(id).json();
  CHECK(m.at("n_labeled") == 140);
  CHECK(m.at("n_remaining") == 160);
}

TEST_CASE("checkpoints survive a restart") {
  Fixture f;
  const auto id = f.create({{"dataset", "syn"}});
  const auto sug = f.service->get_suggestions(id, 20).json().at("suggestions");
  json batch = json::array();
  for (const auto& s : sug) batch.push_back({{"instance_id", s.at("instance_id")}});
  f.service->submit_annotations(id, batch.dump());
  f.service->trigger_update(id);
  const auto metrics = f.service->get_metrics(id, true).body;
  const auto suggestions = f.service->get_suggestions(id, 10).body;

  Service restarted(f.config);
  CHECK(restarted.restore_checkpoints() == 1);
  CHECK(restarted.get_metrics(id, true).body == metrics);
  CHECK(restarted.get_suggestions(id, 10).body == suggestions);
}

TEST_CASE("HTTP routes") {
  Fixture f;
  HttpServer server(*f.service);
  REQUIRE(server.start("127.0.0.1", 0));
  httplib::Client client("127.0.0.1", server.port());

  auto health = client.Get("/health");
  REQUIRE(health);
  CHECK(health->status == 200);

  auto put = client.Put("/datasets/web", synthetic_jsonl(200), "application/x-ndjson");
  REQUIRE(put);
  CHECK(put->status == 201);
  auto put_csv = client.Put("/datasets/webcsv?format=csv", "id,text,label\na,x y,p\nb,y z,q\n", "text/csv");
  REQUIRE(put_csv);
  CHECK(put_csv->status == 201);
  CHECK(client.Put("/lexicons/l1", "word,sentiment\ngood,positive\n", "text/csv")->status == 201);
  CHECK(client.Put("/filters/f1", "obama\n", "text/plain")->status == 201);

  auto created = client.Post("/sessions", json{{"dataset", "web"}, {"lexicon", "l1"}, {"filter", "f1"}}.dump(),
                             "application/json");
  REQUIRE(created);
  REQUIRE(created->status == 201);
  const auto id = json::parse(created->body).at("session_id").get<std::string>();

  auto sug = client.Get("/sessions/" + id + "/suggestions?k=4");
  REQUIRE(sug);
  CHECK(json::parse(sug->body).at("suggestions").size() == 4);
  CHECK(client.Get("/sessions/" + id + "/suggestions?k=abc")->status == 400);
  CHECK(client.Get("/sessions/nope/suggestions")->status == 404);

  json batch = json::array();
  const auto sug_body = json::parse(sug->body);
  for (const auto& s : sug_body.at("suggestions")) batch.push_back({{"instance_id", s.at("instance_id")}});
  auto ann = client.Post("/sessions/" + id + "/annotations", json{{"annotations", batch}}.dump(), "application/json");
  REQUIRE(ann);
  INFO(ann->body);
  CHECK(ann->status == 200);
  CHECK(json::parse(ann->body).at("accepted") == 4);
  auto upd = client.Post("/sessions/" + id + "/update", "", "application/json");
  REQUIRE(upd);
  INFO(upd->body);
  REQUIRE(upd->status == 200);
  CHECK(json::parse(upd->body).at("n_labeled") == 104);

  auto metrics = client.Get("/sessions/" + id + "/metrics");
  CHECK(json::parse(metrics->body).at("history").size() == 2);
  auto csv = client.Get("/sessions/" + id + "/metrics?format=csv");
  CHECK(csv->get_header_value("Content-Type").find("text/csv") != std::string::npos);
  auto cp = client.Get("/sessions/" + id + "/checkpoint");
  CHECK(json::parse(cp->body).at("state").at("labeled").size() == 104);
  CHECK(json::parse(client.Get("/sessions")->body).at("sessions").size() == 1);
  server.stop();
}

TEST_CASE("config file loading") {
  testing::TempDir dir;
  std::ofstream(dir / "cfg.json") << R"({"port": 9001, "data_dir": "d", "default_strategy": "margin-prop"})";
  const auto cfg = load_service_config(dir / "cfg.json");
  CHECK(cfg.port == 9001);
  CHECK(cfg.data_dir == dir.path() / "d");
  CHECK(cfg.default_strategy == "margin-prop");
  std::ofstream(dir / "bad.json") << "{";
  CHECK_THROWS(load_service_config(dir / "bad.json"));
  CHECK_THROWS(load_service_config(dir / "missing.json"));
  std::ofstream(dir / "strat.json") << R"({"default_strategy": "foo"})";
  CHECK_THROWS(load_service_config(dir / "strat.json"));
}
