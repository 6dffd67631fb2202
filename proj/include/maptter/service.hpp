#pragma once

// REST facade over a Workbench. JSON bodies, UTF-8; errors are
// {"code", "message", "details"}. Mutating endpoints accept a
// "request_id" body field (or Idempotency-Key header) and replay the first
// response for a repeated id.

#include <chrono>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <string>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "maptter/annotation.hpp"
#include "maptter/corpus_store.hpp"
#include "maptter/cycle_engine.hpp"
#include "maptter/error.hpp"
#include "maptter/evaluation.hpp"
#include "maptter/experiment_config.hpp"
#include "maptter/workbench.hpp"

namespace maptter::service {

using nlohmann::json;
using Clock = std::chrono::system_clock;

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::optional<std::string> shared_secret;  // unset = no auth
  std::chrono::seconds session_ttl{8 * 3600};
};

struct SessionToken {
  std::string annotator_id;
  std::string project_id;
  Clock::time_point expiry;
};

inline int http_status(Errc code) {
  switch (code) {
    case Errc::unknown_article:
    case Errc::unknown_project:
    case Errc::unknown_round:
    case Errc::unknown_comment:
    case Errc::unknown_annotator:
    case Errc::not_found:
      return 404;
    case Errc::empty_selection:
    case Errc::no_comments:
    case Errc::stale_guidelines_version:
    case Errc::round_closed:
    case Errc::incomplete_round:
    case Errc::degenerate_agreement:
    case Errc::not_a_disagreement:
    case Errc::incomplete_adjudication:
    case Errc::empty_class:
    case Errc::illegal_transition:
    case Errc::max_rounds_exceeded:
    case Errc::aborted_by_operator:
      return 409;
    case Errc::unauthorized:
      return 401;
    case Errc::io_error:
    case Errc::store_corrupt:
    case Errc::bind_failure:
      return 500;
    default:
      return 400;
  }
}

// -- wire encodings ---------------------------------------------------------

inline json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

inline json to_json(const eval::Metrics& m) {
  return {{"accuracy", opt_json(m.accuracy)},     {"precision_pos", opt_json(m.precision_pos)},
          {"precision_neg", opt_json(m.precision_neg)}, {"recall_pos", opt_json(m.recall_pos)},
          {"recall_neg", opt_json(m.recall_neg)}};
}

inline json to_json(const eval::ConfusionMatrix& cm) {
  return {{"tp", cm.tp}, {"fp", cm.fp}, {"fn", cm.fn}, {"tn", cm.tn}};
}

inline json to_json(const ExperimentRecord& rec) {
  json j{{"experiment_id", rec.id},
         {"project_id", rec.project_id},
         {"source", rec.source},
         {"status", to_string(rec.status)}};
  if (rec.status == ExperimentStatus::failed) j["error"] = {{"code", rec.error_code}, {"message", rec.error_message}};
  if (rec.report) {
    json cells = json::array();
    for (const auto& row : rec.report->rows) {
      cells.push_back({{"classifier", learn::to_string(row.key.classifier)},
                       {"stem", row.key.stem},
                       {"scheme", features::to_string(row.key.scheme)},
                       {"ngram", row.key.ngram},
                       {"metrics", to_json(row.metrics)},
                       {"confusion", to_json(row.confusion)}});
    }
    j["cells"] = std::move(cells);
  }
  return j;
}

inline json to_json(const corpus::Article& a) {
  return {{"article_id", a.article_id}, {"source", a.source.str()}, {"topic", a.topic.str()}, {"title", a.title}};
}

/// The article key is absent (not null) unless the round shows context.
inline json to_json(const std::optional<NextItem>& item) {
  if (!item) return {{"done", true}, {"remaining", 0}};
  json j{{"done", false}, {"comment_id", item->comment_id}, {"text", item->text}, {"remaining", item->remaining}};
  if (item->article) j["article"] = to_json(*item->article);
  return j;
}

inline json round_view(const annotation::Round& r) {
  const auto progress = r.progress();
  const auto& g = r.guidelines();
  json j{{"round_id", r.id()},
         {"project_id", r.project_id()},
         {"guidelines",
          {{"version", g.version}, {"text", g.text}, {"context_policy", annotation::to_string(g.context_policy)}}},
         {"context_policy", annotation::to_string(g.context_policy)},
         {"annotators", r.annotators()},
         {"total", progress.total},
         {"open", r.is_open()},
         {"complete", r.complete()}};
  for (size_t who = 0; who < 2; ++who) {
    j["labeled"][r.annotators()[who]] = progress.labeled[who];
    j["pending"][r.annotators()[who]] = progress.total - progress.labeled[who];
  }
  return j;
}

inline json to_json(const annotation::GoldCorpus& gold, const std::string& round_id) {
  json items = json::array();
  for (const auto& item : gold.items) items.push_back({{"comment_id", item.comment_id}, {"label", to_string(item.label)}});
  return {{"round_id", round_id},
          {"seed", gold.balance_seed},
          {"counts", {{"positive", gold.count(Label::positive)}, {"negative", gold.count(Label::negative)}}},
          {"items", std::move(items)}};
}

inline corpus::CommentSelector selector_from_json(const json& j) {
  corpus::CommentSelector s;
  if (j.is_null()) return s;
  if (j.contains("topic")) s.topic = j["topic"].get<std::string>();
  if (j.contains("source")) s.source = j["source"].get<std::string>();
  if (j.contains("article_ids")) s.article_ids = j["article_ids"].get<std::vector<std::string>>();
  if (j.contains("comment_ids")) s.comment_ids = j["comment_ids"].get<std::vector<std::string>>();
  return s;
}

inline annotation::Decision decision_from_string(const std::string& text) {
  if (text == "no_consensus") return annotation::Decision::no_consensus();
  return annotation::Decision::of(parse_label(text));
}

// -- server -----------------------------------------------------------------

struct Reply {
  int status = 200;
  std::string body;
  std::string content_type = "application/json; charset=utf-8";

  static Reply of(json j, int status = 200) { return {status, j.dump(), "application/json; charset=utf-8"}; }
  static Reply text(std::string body, std::string type) { return {200, std::move(body), std::move(type)}; }
};

inline Reply error_reply(const Error& e) {
  return Reply::of({{"code", e.name()}, {"message", e.what()}, {"details", e.details()}}, http_status(e.code()));
}

class Service {
 public:
  Service(Workbench& bench, ServiceConfig config) : bench_(bench), config_(std::move(config)) {
    server_.set_socket_options([](socket_t sock) {
      int yes = 1;
      setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
    });
    install_routes();
  }

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds the socket and returns the port.
  int bind() {
    const int port = config_.port == 0 ? server_.bind_to_any_port(config_.host)
                                       : (server_.bind_to_port(config_.host, config_.port) ? config_.port : -1);
    if (port < 0) {
      throw Error(Errc::bind_failure, "cannot bind " + config_.host + ":" + std::to_string(config_.port),
                  {{"host", config_.host}, {"port", config_.port}});
    }
    port_ = port;
    return port;
  }

  /// Blocks serving requests until stop().
  void listen() {
    if (port_ < 0) bind();
    server_.listen_after_bind();
  }

  void stop() { server_.stop(); }
  void wait_until_ready() const { server_.wait_until_ready(); }
  int port() const { return port_; }

 private:
  struct Caller {
    bool lead = true;
    std::optional<SessionToken> session;
  };

  using Handler = std::function<Reply(const httplib::Request&, const Caller&)>;

  void install_routes() {
    using R = const httplib::Request&;
    using C = const Caller&;

    server_.Post("/sessions", [this](R req, httplib::Response& res) { write(res, open_session(req)); });

    route("POST", "/projects", true, [this](R req, C) {
      const auto body = parse_body(req);
      const auto id = body.at("project_id").get<std::string>();
      const bool created = bench_.create_project(id);
      return Reply::of({{"project_id", id}, {"created", created}}, created ? 201 : 200);
    });
    route("GET", "/projects", false, [this](R, C) { return Reply::of({{"projects", bench_.project_ids()}}); });
    route("POST", "/projects/:p/ingest", true, [this](R req, C c) {
      const auto& p = req.path_params.at("p");
      require_project(c, p);
      std::vector<corpus::CorpusLine> lines;
      if (req.get_header_value("Content-Type").find("json") != std::string::npos &&
          req.get_header_value("Content-Type").find("ndjson") == std::string::npos) {
        std::string jsonl;
        for (const auto& rec : parse_body(req).at("records")) jsonl += rec.dump() + "\n";
        lines = corpus::parse_corpus_jsonl(jsonl);
      } else {
        lines = corpus::parse_corpus_jsonl(req.body);
      }
      const auto report = bench_.ingest(p, lines);
      return Reply::of({{"added", report.added},
                        {"duplicates_dropped", report.duplicates_dropped},
                        {"rejected_empty", report.rejected_empty},
                        {"total", report.total()}});
    });
    route("GET", "/projects/:p/export", false, [this](R req, C c) {
      const auto& p = req.path_params.at("p");
      require_project(c, p);
      corpus::CommentSelector s;
      if (req.has_param("topic")) s.topic = req.get_param_value("topic");
      if (req.has_param("source")) s.source = req.get_param_value("source");
      return Reply::text(bench_.export_corpus(p, s), "application/x-ndjson; charset=utf-8");
    });
    route("POST", "/projects/:p/rounds", true, [this](R req, C c) {
      const auto& p = req.path_params.at("p");
      require_lead(c);
      const auto body = parse_body(req);
      const auto& jg = body.at("guidelines");
      annotation::Guidelines g{jg.at("version").get<int>(), jg.value("text", std::string{}),
                               annotation::parse_context_policy(jg.value("context_policy", std::string("with_article")))};
      auto names = body.value("annotators", std::vector<std::string>{"A1", "A2"});
      if (names.size() != 2) throw Error(Errc::invalid_argument, "a round needs exactly two annotators");
      auto& round =
          bench_.open_round(p, std::move(g), selector_from_json(body.value("selector", json())), {names[0], names[1]});
      return Reply::of(round_view(round), 201);
    });
    route("GET", "/projects/:p/rounds", false, [this](R req, C c) {
      const auto& p = req.path_params.at("p");
      require_project(c, p);
      return Reply::of({{"rounds", bench_.round_ids(p)}});
    });
    route("GET", "/rounds/:r", false, [this](R req, C c) {
      const auto& r = bench_.round(req.path_params.at("r"));
      require_project(c, r.project_id());
      return Reply::of(round_view(r));
    });
    route("GET", "/rounds/:r/next", false, [this](R req, C c) {
      const auto& rid = req.path_params.at("r");
      const auto annotator = req.get_param_value("annotator");
      require_annotator(c, bench_.round(rid).project_id(), annotator);
      return Reply::of(to_json(bench_.next_item(rid, annotator)));
    });
    route("POST", "/rounds/:r/annotations", true, [this](R req, C c) {
      const auto& rid = req.path_params.at("r");
      const auto body = parse_body(req);
      const auto annotator = body.at("annotator_id").get<std::string>();
      require_annotator(c, bench_.round(rid).project_id(), annotator);
      const auto comment = body.at("comment_id").get<std::string>();
      const Label label = parse_label(body.at("label").get<std::string>());
      bench_.record_annotation(rid, annotator, comment, label);
      return Reply::of({{"round_id", rid},
                        {"annotator_id", annotator},
                        {"comment_id", comment},
                        {"label", to_string(label)},
                        {"remaining", bench_.round(rid).pending(annotator).size()}},
                       201);
    });
    route("GET", "/rounds/:r/iaa", false, [this](R req, C c) {
      const auto& rid = req.path_params.at("r");
      require_project(c, bench_.round(rid).project_id());
      auto j = annotation::to_json(bench_.iaa(rid));
      j["round_id"] = rid;
      return Reply::of(j);
    });
    route("GET", "/rounds/:r/disagreements", false, [this](R req, C c) {
      const auto& rid = req.path_params.at("r");
      const auto& round = bench_.round(rid);
      require_project(c, round.project_id());
      const auto& corpus = bench_.corpus(round.project_id());
      json items = json::array();
      size_t resolved = 0;
      for (const auto& d : bench_.disagreements(rid)) {
        const auto comment = corpus.find_comment(d.comment_id);
        const auto decided = round.gold_label(d.comment_id);
        resolved += decided.has_value();
        items.push_back({{"comment_id", d.comment_id},
                         {"text", comment ? comment->raw_text : std::string{}},
                         {"labels", {{round.annotators()[0], to_string(d.first)}, {round.annotators()[1], to_string(d.second)}}},
                         {"decision", decided ? json(to_string(*decided)) : json(nullptr)}});
      }
      return Reply::of({{"round_id", rid}, {"total", items.size()}, {"adjudicated", resolved}, {"items", items}});
    });
    route("POST", "/rounds/:r/adjudications", true, [this](R req, C c) {
      const auto& rid = req.path_params.at("r");
      require_lead(c);
      const auto body = parse_body(req);
      const auto comment = body.at("comment_id").get<std::string>();
      const Label label = bench_.adjudicate(rid, comment, decision_from_string(body.at("decision").get<std::string>()));
      return Reply::of({{"round_id", rid}, {"comment_id", comment}, {"label", to_string(label)}}, 201);
    });
    route("POST", "/rounds/:r/gold", true, [this](R req, C c) {
      const auto& rid = req.path_params.at("r");
      require_lead(c);
      const auto body = parse_body(req);
      const auto gold = bench_.build_gold(rid, body.at("seed").get<uint64_t>());
      return Reply::of(to_json(gold, rid), 201);
    });
    route("GET", "/rounds/:r/gold", false, [this](R req, C c) {
      const auto& rid = req.path_params.at("r");
      require_project(c, bench_.round(rid).project_id());
      if (req.get_param_value("format") == "jsonl") {
        return Reply::text(annotation::to_jsonl(bench_.gold_documents(rid)), "application/x-ndjson; charset=utf-8");
      }
      const auto gold = bench_.gold(rid);
      if (!gold) throw Error(Errc::not_found, "round " + rid + " has no gold standard yet");
      return Reply::of(to_json(*gold, rid));
    });
    route("POST", "/projects/:p/experiments", true, [this](R req, C c) {
      const auto& p = req.path_params.at("p");
      require_lead(c);
      const auto body = parse_body(req);
      ExperimentConfig config = body.contains("config") ? parse_experiment_config(body["config"].get<std::string>())
                                                        : ExperimentConfig::defaults();
      if (body.contains("seed")) config.seed = body["seed"].get<uint64_t>();
      std::vector<annotation::GoldDocument> gold;
      std::string source = "inline";
      if (body.contains("round_id")) {
        source = body["round_id"].get<std::string>();
        gold = bench_.gold_documents(source);
      } else {
        gold = annotation::parse_gold_jsonl(body.at("gold_jsonl").get<std::string>());
      }
      const auto id = bench_.start_experiment(p, std::move(gold), std::move(config), source);
      return Reply::of({{"experiment_id", id}, {"status", "running"}}, 202);
    });
    route("GET", "/experiments/:e", false, [this](R req, C c) {
      const auto rec = bench_.experiment(req.path_params.at("e"));
      require_project(c, rec.project_id);
      return Reply::of(to_json(rec));
    });
    route("GET", "/experiments/:e/report", false, [this](R req, C c) {
      const auto& eid = req.path_params.at("e");
      const auto rec = bench_.experiment(eid);
      require_project(c, rec.project_id);
      if (!rec.report) {
        throw Error(rec.status == ExperimentStatus::failed ? Errc::invalid_argument : Errc::not_found,
                    "experiment " + eid + " has no report (" + to_string(rec.status) + ")",
                    {{"status", to_string(rec.status)}});
      }
      const auto format = req.has_param("format") ? req.get_param_value("format") : std::string("csv");
      if (format == "csv") return Reply::text(eval::render_csv(*rec.report), "text/csv; charset=utf-8");
      if (format == "table") return Reply::text(eval::render_table(*rec.report), "text/plain; charset=utf-8");
      throw Error(Errc::invalid_argument, "format must be csv or table");
    });
    route("GET", "/projects/:p/cycle", false, [this](R req, C c) {
      const auto& p = req.path_params.at("p");
      require_project(c, p);
      return Reply::of(cycle::to_json(bench_.cycle_state(p)));
    });
    route("POST", "/projects/:p/cycle/events", true, [this](R req, C c) {
      const auto& p = req.path_params.at("p");
      require_lead(c);
      const auto body = parse_body(req);
      cycle::Event event{cycle::parse_event_kind(body.at("event").get<std::string>()), std::nullopt,
                         body.value("payload_ref", std::string{})};
      if (body.contains("kappa")) {
        event.kappa = body["kappa"].get<double>();
      } else if (event.kind == cycle::EventKind::iaa) {
        event.kappa = bench_.iaa(event.payload_ref).kappa;
      }
      return Reply::of(cycle::to_json(bench_.cycle_event(p, event)));
    });
  }

  void route(const std::string& method, const std::string& pattern, bool mutating, Handler handler) {
    auto wrapped = [this, method, mutating, handler = std::move(handler)](const httplib::Request& req,
                                                                         httplib::Response& res) {
      write(res, dispatch(method, req, mutating, handler));
    };
    if (method == "GET") {
      server_.Get(pattern, wrapped);
    } else {
      server_.Post(pattern, wrapped);
    }
  }

  Reply dispatch(const std::string& method, const httplib::Request& req, bool mutating, const Handler& handler) {
    try {
      const Caller caller = authenticate(req);
      const auto request_id = mutating ? request_id_of(req) : std::nullopt;
      if (!request_id) return handler(req, caller);

      const std::string key = method + " " + req.path + " " + *request_id;
      std::lock_guard lock(idempotency_mutex_);
      if (auto it = replies_.find(key); it != replies_.end()) return it->second;
      Reply reply = run(req, caller, handler);
      replies_.emplace(key, reply);
      return reply;
    } catch (const Error& e) {
      return error_reply(e);
    } catch (const json::exception& e) {
      return error_reply(Error(Errc::parse_error, std::string("bad request body: ") + e.what()));
    } catch (const std::exception& e) {
      return Reply::of({{"code", "Internal"}, {"message", e.what()}, {"details", json::object()}}, 500);
    }
  }

  static Reply run(const httplib::Request& req, const Caller& caller, const Handler& handler) {
    try {
      return handler(req, caller);
    } catch (const Error& e) {
      return error_reply(e);
    } catch (const json::exception& e) {
      return error_reply(Error(Errc::parse_error, std::string("bad request body: ") + e.what()));
    }
  }

  static void write(httplib::Response& res, const Reply& reply) {
    res.status = reply.status;
    res.set_content(reply.body, reply.content_type);
  }

  static json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    auto j = json::parse(req.body);
    if (!j.is_object()) throw Error(Errc::parse_error, "request body must be a JSON object");
    return j;
  }

  static std::optional<std::string> request_id_of(const httplib::Request& req) {
    if (req.has_header("Idempotency-Key")) return req.get_header_value("Idempotency-Key");
    if (req.body.empty() || req.body.front() != '{') return std::nullopt;
    const auto j = json::parse(req.body, nullptr, false);
    if (j.is_object() && j.contains("request_id") && j["request_id"].is_string()) {
      return j["request_id"].get<std::string>();
    }
    return std::nullopt;
  }

  // -- auth -----------------------------------------------------------------

  Reply open_session(const httplib::Request& req) {
    try {
      if (!config_.shared_secret) throw Error(Errc::invalid_argument, "sessions are disabled (no shared secret)");
      const auto body = parse_body(req);
      if (body.value("secret", std::string{}) != *config_.shared_secret) {
        throw Error(Errc::unauthorized, "bad shared secret");
      }
      SessionToken session{body.at("annotator_id").get<std::string>(), body.at("project_id").get<std::string>(),
                           Clock::now() + config_.session_ttl};
      const std::string token = random_token();
      {
        std::lock_guard lock(sessions_mutex_);
        sessions_[token] = session;
      }
      const auto expiry = std::chrono::duration_cast<std::chrono::seconds>(session.expiry.time_since_epoch()).count();
      return Reply::of({{"token", token},
                        {"annotator_id", session.annotator_id},
                        {"project_id", session.project_id},
                        {"expiry", expiry}},
                       201);
    } catch (const Error& e) {
      return error_reply(e);
    } catch (const json::exception& e) {
      return error_reply(Error(Errc::parse_error, std::string("bad request body: ") + e.what()));
    }
  }

  Caller authenticate(const httplib::Request& req) {
    if (!config_.shared_secret) return {};
    const auto header = req.get_header_value("Authorization");
    const std::string prefix = "Bearer ";
    if (header.rfind(prefix, 0) != 0) throw Error(Errc::unauthorized, "missing bearer token");
    const auto token = header.substr(prefix.size());
    if (token == *config_.shared_secret) return {};
    std::lock_guard lock(sessions_mutex_);
    auto it = sessions_.find(token);
    if (it == sessions_.end()) throw Error(Errc::unauthorized, "unknown session token");
    if (Clock::now() >= it->second.expiry) {
      sessions_.erase(it);
      throw Error(Errc::unauthorized, "session expired");
    }
    return {false, it->second};
  }

  static void require_lead(const Caller& c) {
    if (!c.lead) throw Error(Errc::unauthorized, "operation needs the shared secret");
  }

  static void require_project(const Caller& c, const std::string& project_id) {
    if (!c.lead && c.session->project_id != project_id) {
      throw Error(Errc::unauthorized, "session is bound to project " + c.session->project_id);
    }
  }

  static void require_annotator(const Caller& c, const std::string& project_id, const std::string& annotator_id) {
    require_project(c, project_id);
    if (!c.lead && c.session->annotator_id != annotator_id) {
      throw Error(Errc::unauthorized, "session is bound to annotator " + c.session->annotator_id);
    }
  }

  static std::string random_token() {
    std::random_device rd;
    std::string out;
    static constexpr char kHex[] = "0123456789abcdef";
    for (int i = 0; i < 8; ++i) {
      uint32_t v = rd();
      for (int j = 0; j < 8; ++j, v >>= 4) out.push_back(kHex[v & 0xF]);
    }
    return out;
  }

  Workbench& bench_;
  ServiceConfig config_;
  httplib::Server server_;
  int port_ = -1;

  std::mutex idempotency_mutex_;
  std::map<std::string, Reply> replies_;

  std::mutex sessions_mutex_;
  std::map<std::string, SessionToken> sessions_;
};

}  // namespace maptter::service
