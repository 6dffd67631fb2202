#include <catch2/catch_amalgamated.hpp>

#include <thread>

#include "maptter/service.hpp"
#include "support.hpp"

using namespace maptter;
using nlohmann::json;

namespace {

const char* kCorpus =
    R"({"article_id":"a1","source":"echorouk","topic":"political","title":"الانتخابات","text":"مقال جيد"}
{"article_id":"a1","source":"echorouk","topic":"political","title":"الانتخابات","text":"خبر سيء جدا"}
{"article_id":"a2","source":"elkhabar","topic":"sports","title":"المباراة","text":"فريق رائع"}
{"article_id":"a2","source":"elkhabar","topic":"sports","title":"المباراة","text":"حكم ظالم"}
{"article_id":"a2","source":"elkhabar","topic":"sports","title":"المباراة","text":"فريق  رائع"}
)";

class Running {
 public:
  explicit Running(service::ServiceConfig cfg = {}) : service_(bench, with_any_port(std::move(cfg))) {
    service_.bind();
    thread_ = std::thread([this] { service_.listen(); });
    service_.wait_until_ready();
    client = std::make_unique<httplib::Client>("127.0.0.1", service_.port());
  }
  ~Running() {
    service_.stop();
    thread_.join();
  }

  httplib::Result post(const std::string& path, const json& body, const std::string& token = {}) {
    httplib::Headers h;
    if (!token.empty()) h.emplace("Authorization", "Bearer " + token);
    return client->Post(path, h, body.dump(), "application/json");
  }
  httplib::Result get(const std::string& path, const std::string& token = {}) {
    httplib::Headers h;
    if (!token.empty()) h.emplace("Authorization", "Bearer " + token);
    return client->Get(path, h);
  }

  Workbench bench;
  std::unique_ptr<httplib::Client> client;

 private:
  static service::ServiceConfig with_any_port(service::ServiceConfig cfg) {
    cfg.port = 0;
    return cfg;
  }
  service::Service service_;
  std::thread thread_;
};

json body_of(const httplib::Result& r) {
  REQUIRE(r);
  return json::parse(r->body);
}

std::string open_round(Running& s, const std::string& policy, int version = 1) {
  const auto r = s.post("/projects/p/rounds",
                        {{"guidelines", {{"version", version}, {"text", "g"}, {"context_policy", policy}}},
                         {"annotators", {"A1", "A2"}}});
  REQUIRE(r->status == 201);
  return body_of(r)["round_id"];
}

void label_all(Running& s, const std::string& rid, const std::string& annotator, std::vector<std::string> labels) {
  for (const auto& label : labels) {
    const auto next = body_of(s.get("/rounds/" + rid + "/next?annotator=" + annotator));
    REQUIRE_FALSE(next["done"].get<bool>());
    const auto r = s.post("/rounds/" + rid + "/annotations",
                          {{"annotator_id", annotator}, {"comment_id", next["comment_id"]}, {"label", label}});
    REQUIRE(r->status == 201);
  }
}

}  // namespace

TEST_CASE("ingest, rounds and next item over HTTP") {
  Running s;
  CHECK(s.post("/projects", {{"project_id", "p"}})->status == 201);
  CHECK(s.post("/projects", {{"project_id", "p"}})->status == 200);
  const auto ingest = s.client->Post("/projects/p/ingest", kCorpus, "application/x-ndjson");
  REQUIRE(ingest->status == 200);
  CHECK(body_of(ingest)["added"] == 4);
  CHECK(body_of(ingest)["duplicates_dropped"] == 1);

  const auto export_sports = s.get("/projects/p/export?source=elkhabar");
  CHECK(std::count(export_sports->body.begin(), export_sports->body.end(), '\n') == 2);

  const auto with_ctx = open_round(s, "with_article");
  const auto item = body_of(s.get("/rounds/" + with_ctx + "/next?annotator=A1"));
  CHECK(item["article"]["title"] == "الانتخابات");
  CHECK(item["remaining"] == 4);

  const auto bare = open_round(s, "comment_only", 2);
  const auto bare_item = body_of(s.get("/rounds/" + bare + "/next?annotator=A1"));
  CHECK_FALSE(bare_item.contains("article"));
  CHECK(bare_item["text"] == "مقال جيد");

  const auto stale = s.post("/projects/p/rounds", {{"guidelines", {{"version", 2}}}});
  CHECK(stale->status == 409);
  CHECK(body_of(stale)["code"] == "StaleGuidelinesVersion");
  CHECK(s.get("/rounds/r77")->status == 404);
  CHECK(body_of(s.get("/rounds/r77"))["code"] == "UnknownRound");
  CHECK(s.client->Post("/projects", "{not json", "application/json")->status == 400);
}

TEST_CASE("a full round through the API matches direct core calls") {
  Running s;
  s.post("/projects", {{"project_id", "p"}});
  s.client->Post("/projects/p/ingest", kCorpus, "application/x-ndjson");
  const auto rid = open_round(s, "with_article");
  label_all(s, rid, "A1", {"positive", "negative", "positive", "negative"});

  const auto early = s.get("/rounds/" + rid + "/iaa");
  CHECK(early->status == 409);
  CHECK(body_of(early)["code"] == "IncompleteRound");
  CHECK(body_of(early)["details"]["remaining"]["A2"] == 4);

  label_all(s, rid, "A2", {"positive", "negative", "neutral", "negative"});
  CHECK(body_of(s.get("/rounds/" + rid + "/next?annotator=A2"))["done"] == true);
  const auto iaa = body_of(s.get("/rounds/" + rid + "/iaa"));
  CHECK(iaa["kappa"].get<double>() == s.bench.iaa(rid).kappa);

  const auto dis = body_of(s.get("/rounds/" + rid + "/disagreements"));
  REQUIRE(dis["items"].size() == 1);
  CHECK(dis["items"][0]["labels"]["A1"] == "positive");
  const auto cid = dis["items"][0]["comment_id"].get<std::string>();
  CHECK(s.post("/rounds/" + rid + "/adjudications", {{"comment_id", cid}, {"decision", "positive"}})->status == 201);
  CHECK(body_of(s.get("/rounds/" + rid + "/disagreements"))["adjudicated"] == 1);

  const auto gold = s.post("/rounds/" + rid + "/gold", {{"seed", 5}});
  REQUIRE(gold->status == 201);
  CHECK(body_of(gold)["counts"]["positive"] == 2);
  const auto jsonl = s.get("/rounds/" + rid + "/gold?format=jsonl");
  CHECK(jsonl->body == annotation::to_jsonl(s.bench.gold_documents(rid)));

  const auto started = s.post("/projects/p/experiments",
                              {{"round_id", rid},
                               {"config", "[grid]\nstem = no\nschemes = BTO\nngrams = 1\n[cv]\nk_folds = 2\n[knn]\nk = 1\n"},
                               {"seed", 3}});
  REQUIRE(started->status == 202);
  const auto eid = body_of(started)["experiment_id"].get<std::string>();
  json rec;
  for (int i = 0; i < 600; ++i) {
    rec = body_of(s.get("/experiments/" + eid));
    if (rec["status"] != "running") break;
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  REQUIRE(rec["status"] == "done");
  CHECK(rec["cells"].size() == 3);

  auto cfg = parse_experiment_config("[grid]\nstem = no\nschemes = BTO\nngrams = 1\n[cv]\nk_folds = 2\n[knn]\nk = 1\n");
  cfg.seed = 3;
  const auto direct = run_experiment(s.bench.gold_documents(rid), cfg);
  CHECK(s.get("/experiments/" + eid + "/report")->body == eval::render_csv(direct));
  CHECK(s.get("/experiments/" + eid + "/report?format=table")->body == eval::render_table(direct));
  CHECK(s.get("/experiments/e404")->status == 404);

  const auto cycle = s.post("/projects/p/cycle/events", {{"event", "annotate"}, {"payload_ref", rid}});
  CHECK(body_of(cycle)["phase"] == "Annotate");
  const auto gated = s.post("/projects/p/cycle/events", {{"event", "iaa"}, {"payload_ref", rid}});
  CHECK(body_of(gated)["phase"] == "Process");
  CHECK(body_of(gated)["current_iaa"].get<double>() == s.bench.iaa(rid).kappa);
  const auto illegal = s.post("/projects/p/cycle/events", {{"event", "accept"}});
  CHECK(illegal->status == 409);
  CHECK(body_of(illegal)["code"] == "IllegalTransition");
}

TEST_CASE("repeated request ids replay the first response") {
  Running s;
  s.post("/projects", {{"project_id", "p"}});
  s.client->Post("/projects/p/ingest", kCorpus, "application/x-ndjson");
  const auto rid = open_round(s, "with_article");
  const auto cid = body_of(s.get("/rounds/" + rid + "/next?annotator=A1"))["comment_id"];
  const json first{{"annotator_id", "A1"}, {"comment_id", cid}, {"label", "positive"}, {"request_id", "x1"}};
  const auto a = s.post("/rounds/" + rid + "/annotations", first);
  json changed = first;
  changed["label"] = "negative";
  const auto b = s.post("/rounds/" + rid + "/annotations", changed);
  CHECK(a->body == b->body);
  CHECK(a->status == b->status);
  CHECK(s.bench.round(rid).record_of("A1", cid)->label == Label::positive);

  httplib::Headers h{{"Idempotency-Key", "k1"}};
  const auto c = s.client->Post("/projects", h, R"({"project_id":"q"})", "application/json");
  const auto d = s.client->Post("/projects", h, R"({"project_id":"q"})", "application/json");
  CHECK(c->status == 201);
  CHECK(d->status == 201);
}

TEST_CASE("shared secret and annotator sessions") {
  service::ServiceConfig cfg;
  cfg.shared_secret = "s3cret";
  cfg.session_ttl = std::chrono::seconds(1);
  Running s(cfg);
  CHECK(s.post("/projects", {{"project_id", "p"}})->status == 401);
  CHECK(s.post("/projects", {{"project_id", "p"}}, "wrong")->status == 401);
  CHECK(s.post("/projects", {{"project_id", "p"}}, "s3cret")->status == 201);
  s.post("/projects", {{"project_id", "other"}}, "s3cret");
  httplib::Headers lead{{"Authorization", "Bearer s3cret"}};
  s.client->Post("/projects/p/ingest", lead, kCorpus, "application/x-ndjson");
  const auto rid = body_of(s.post("/projects/p/rounds", {{"guidelines", {{"version", 1}}}}, "s3cret"))["round_id"]
                       .get<std::string>();

  CHECK(s.post("/sessions", {{"annotator_id", "A1"}, {"project_id", "p"}, {"secret", "nope"}})->status == 401);
  const auto session = body_of(s.post("/sessions", {{"annotator_id", "A1"}, {"project_id", "p"}, {"secret", "s3cret"}}));
  const auto token = session["token"].get<std::string>();
  CHECK(s.get("/rounds/" + rid + "/next?annotator=A1", token)->status == 200);
  CHECK(s.get("/rounds/" + rid + "/next?annotator=A2", token)->status == 401);
  CHECK(s.get("/projects/other/cycle", token)->status == 401);
  CHECK(s.post("/rounds/" + rid + "/gold", {{"seed", 1}}, token)->status == 401);

  std::this_thread::sleep_for(std::chrono::milliseconds(1100));
  const auto expired = s.get("/rounds/" + rid + "/next?annotator=A1", token);
  CHECK(expired->status == 401);
  CHECK(body_of(expired)["code"] == "Unauthorized");
}

TEST_CASE("concurrent annotators submit without interference") {
  Running s;
  s.post("/projects", {{"project_id", "p"}});
  std::string jsonl;
  for (int i = 0; i < 40; ++i) {
    jsonl += json{{"article_id", "a1"}, {"source", "echorouk"}, {"topic", "news"}, {"title", "t"},
                  {"text", "تعليق رقم " + std::to_string(i)}}
                 .dump() +
             "\n";
  }
  s.client->Post("/projects/p/ingest", jsonl, "application/x-ndjson");
  const auto rid = open_round(s, "comment_only");
  const auto ids = s.bench.round(rid).snapshot();
  std::vector<std::thread> workers;
  for (const std::string who : {"A1", "A2"}) {
    workers.emplace_back([&, who] {
      httplib::Client c("127.0.0.1", s.client->port());
      for (const auto& cid : ids) {
        c.Post("/rounds/" + rid + "/annotations",
               json{{"annotator_id", who}, {"comment_id", cid}, {"label", "negative"}}.dump(), "application/json");
      }
    });
  }
  for (auto& t : workers) t.join();
  const auto view = body_of(s.get("/rounds/" + rid));
  CHECK(view["labeled"]["A1"] == 40);
  CHECK(view["labeled"]["A2"] == 40);
  CHECK(view["complete"] == true);
}

TEST_CASE("status mapping") {
  CHECK(service::http_status(Errc::unknown_project) == 404);
  CHECK(service::http_status(Errc::incomplete_round) == 409);
  CHECK(service::http_status(Errc::malformed_record) == 400);
  CHECK(service::http_status(Errc::unauthorized) == 401);
}

TEST_CASE("binding a busy port fails cleanly") {
  Workbench bench;
  service::ServiceConfig cfg;
  cfg.port = 0;
  service::Service first(bench, cfg);
  const int port = first.bind();
  cfg.port = port;
  service::Service second(bench, cfg);
  try {
    second.bind();
    FAIL("expected BindFailure");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::bind_failure);
  }
}
