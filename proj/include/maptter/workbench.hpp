#pragma once

// Application facade shared by the CLI and the HTTP service: projects,
// annotation rounds, gold standards, experiments and cycle state, with
// optional on-disk persistence (one JSON snapshot per project plus an
// append-only cycle history log).

#include <algorithm>
#include <array>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "maptter/annotation.hpp"
#include "maptter/corpus_store.hpp"
#include "maptter/cycle_engine.hpp"
#include "maptter/error.hpp"
#include "maptter/evaluation.hpp"
#include "maptter/experiment_config.hpp"

namespace maptter {

namespace fs = std::filesystem;
using nlohmann::json;

struct NextItem {
  std::string comment_id;
  std::string text;
  std::optional<corpus::Article> article;  // only under ContextPolicy::with_article
  size_t remaining = 0;
};

enum class ExperimentStatus { running, done, failed };

inline const char* to_string(ExperimentStatus s) {
  switch (s) {
    case ExperimentStatus::running: return "running";
    case ExperimentStatus::done: return "done";
    case ExperimentStatus::failed: return "failed";
  }
  return "?";
}

struct ExperimentRecord {
  std::string id;
  std::string project_id;
  std::string source;  // round id or "inline"
  ExperimentStatus status = ExperimentStatus::running;
  std::string error_code;
  std::string error_message;
  std::optional<eval::EvaluationReport> report;
  eval::GridResults results;
};

/// Runs a configured grid and assembles the report.
inline eval::EvaluationReport run_experiment(std::span<const annotation::GoldDocument> gold,
                                             const ExperimentConfig& config, unsigned workers = 0) {
  if (!config.seed) throw Error(Errc::invalid_argument, "experiment seed is required");
  const auto results = eval::run_grid(gold, config.axes, config.k_folds, *config.seed, config.text, workers);
  return eval::build_report(results, config.axes);
}

class Workbench {
 public:
  explicit Workbench(std::optional<fs::path> store_dir = std::nullopt) : store_dir_(std::move(store_dir)) {
    if (store_dir_) load_all();
  }

  ~Workbench() {
    std::vector<std::jthread> runners;
    {
      std::lock_guard lock(experiments_mutex_);
      runners = std::move(runners_);
    }
  }

  Workbench(const Workbench&) = delete;
  Workbench& operator=(const Workbench&) = delete;

  const std::optional<fs::path>& store_dir() const { return store_dir_; }

  // -- projects -------------------------------------------------------------

  /// Returns false if the project already existed.
  bool create_project(const std::string& project_id) {
    if (project_id.empty() || project_id.find_first_of("/\\.") != std::string::npos) {
      throw Error(Errc::invalid_argument, "invalid project id '" + project_id + "'");
    }
    {
      std::unique_lock lock(mutex_);
      if (projects_.contains(project_id)) return false;
      projects_.emplace(project_id, std::make_unique<ProjectState>(std::make_unique<corpus::Project>(project_id)));
    }
    persist(project_id);
    return true;
  }

  std::vector<std::string> project_ids() const {
    std::shared_lock lock(mutex_);
    std::vector<std::string> out;
    for (const auto& [id, _] : projects_) out.push_back(id);
    return out;
  }

  const corpus::Project& corpus(const std::string& project_id) const { return *state(project_id).corpus; }

  corpus::IngestReport ingest(const std::string& project_id, std::span<const corpus::CorpusLine> lines) {
    auto report = state(project_id).corpus->ingest_lines(lines);
    persist(project_id);
    return report;
  }

  std::string export_corpus(const std::string& project_id, const corpus::CommentSelector& selector) const {
    return state(project_id).corpus->export_corpus(selector);
  }

  // -- rounds ---------------------------------------------------------------

  annotation::Round& open_round(const std::string& project_id, annotation::Guidelines guidelines,
                                const corpus::CommentSelector& selector, std::array<std::string, 2> annotators) {
    ProjectState& ps = state(project_id);
    std::vector<std::string> ids;
    for (const auto& c : ps.corpus->select(selector)) ids.push_back(c.comment_id);
    annotation::Round* created = nullptr;
    {
      std::unique_lock lock(mutex_);
      std::optional<int> previous;
      if (!ps.round_ids.empty()) previous = rounds_.at(ps.round_ids.back())->guidelines().version;
      auto round = annotation::open_round("r" + std::to_string(next_round_), project_id, std::move(guidelines),
                                          std::move(ids), previous, std::move(annotators));
      ++next_round_;
      created = round.get();
      ps.round_ids.push_back(round->id());
      rounds_.emplace(round->id(), std::move(round));
    }
    persist(project_id);
    return *created;
  }

  annotation::Round& round(const std::string& round_id) const {
    std::shared_lock lock(mutex_);
    auto it = rounds_.find(round_id);
    if (it == rounds_.end()) throw Error(Errc::unknown_round, "unknown round '" + round_id + "'");
    return *it->second;
  }

  std::vector<std::string> round_ids(const std::string& project_id) const {
    const ProjectState& ps = state(project_id);
    std::shared_lock lock(mutex_);
    return ps.round_ids;
  }

  std::optional<NextItem> next_item(const std::string& round_id, const std::string& annotator_id) const {
    const auto& r = round(round_id);
    const auto pending = r.pending(annotator_id);
    if (pending.empty()) return std::nullopt;
    const auto& corpus = *state(r.project_id()).corpus;
    const auto comment = corpus.find_comment(pending.front());
    if (!comment) throw Error(Errc::store_corrupt, "round references missing comment " + pending.front());
    NextItem item{comment->comment_id, comment->raw_text, std::nullopt, pending.size()};
    if (r.guidelines().context_policy == annotation::ContextPolicy::with_article) {
      item.article = corpus.find_article(comment->article_id);
    }
    return item;
  }

  void record_annotation(const std::string& round_id, const std::string& annotator_id, const std::string& comment_id,
                         Label label) {
    auto& r = round(round_id);
    r.record(annotator_id, comment_id, label);
    persist(r.project_id());
  }

  annotation::IAAResult iaa(const std::string& round_id) const { return round(round_id).compute_kappa(); }

  std::vector<annotation::Disagreement> disagreements(const std::string& round_id) const {
    return round(round_id).list_disagreements();
  }

  Label adjudicate(const std::string& round_id, const std::string& comment_id, annotation::Decision decision) {
    auto& r = round(round_id);
    const Label label = r.adjudicate(comment_id, decision);
    persist(r.project_id());
    return label;
  }

  annotation::GoldCorpus build_gold(const std::string& round_id, uint64_t seed) {
    auto& r = round(round_id);
    auto gold = r.build_gold_standard(seed);
    {
      std::unique_lock lock(mutex_);
      golds_[round_id] = gold;
    }
    persist(r.project_id());
    return gold;
  }

  std::optional<annotation::GoldCorpus> gold(const std::string& round_id) const {
    std::shared_lock lock(mutex_);
    auto it = golds_.find(round_id);
    if (it == golds_.end()) return std::nullopt;
    return it->second;
  }

  /// Gold items joined with their comment text, in gold order.
  std::vector<annotation::GoldDocument> gold_documents(const std::string& round_id) const {
    const auto g = gold(round_id);
    if (!g) throw Error(Errc::not_found, "round " + round_id + " has no gold standard yet");
    const auto& corpus = *state(round(round_id).project_id()).corpus;
    std::vector<annotation::GoldDocument> docs;
    for (const auto& item : g->items) {
      const auto comment = corpus.find_comment(item.comment_id);
      if (!comment) throw Error(Errc::store_corrupt, "gold references missing comment " + item.comment_id);
      docs.push_back({item.comment_id, comment->raw_text, item.label});
    }
    return docs;
  }

  // -- experiments ----------------------------------------------------------

  /// Starts a grid run; with `async` the call returns immediately and the
  /// record moves from running to done/failed.
  std::string start_experiment(const std::string& project_id, std::vector<annotation::GoldDocument> gold,
                               ExperimentConfig config, std::string source, bool async = true) {
    state(project_id);
    if (!config.seed) throw Error(Errc::invalid_argument, "experiment seed is required");
    std::string id;
    {
      std::lock_guard lock(experiments_mutex_);
      id = "e" + std::to_string(next_experiment_++);
      auto rec = std::make_shared<ExperimentRecord>();
      rec->id = id;
      rec->project_id = project_id;
      rec->source = std::move(source);
      experiments_.emplace(id, rec);
    }
    auto job = [this, id, gold = std::move(gold), config = std::move(config)] {
      ExperimentRecord done;
      try {
        done.results = eval::run_grid(gold, config.axes, config.k_folds, *config.seed, config.text);
        done.report = eval::build_report(done.results, config.axes);
        done.status = ExperimentStatus::done;
      } catch (const Error& e) {
        done.status = ExperimentStatus::failed;
        done.error_code = e.name();
        done.error_message = e.what();
      } catch (const std::exception& e) {
        done.status = ExperimentStatus::failed;
        done.error_code = "Internal";
        done.error_message = e.what();
      }
      std::lock_guard lock(experiments_mutex_);
      auto& rec = *experiments_.at(id);
      rec.status = done.status;
      rec.error_code = std::move(done.error_code);
      rec.error_message = std::move(done.error_message);
      rec.report = std::move(done.report);
      rec.results = std::move(done.results);
    };
    if (async) {
      std::lock_guard lock(experiments_mutex_);
      runners_.emplace_back(std::move(job));
    } else {
      job();
    }
    return id;
  }

  ExperimentRecord experiment(const std::string& experiment_id) const {
    std::lock_guard lock(experiments_mutex_);
    auto it = experiments_.find(experiment_id);
    if (it == experiments_.end()) throw Error(Errc::not_found, "unknown experiment '" + experiment_id + "'");
    return *it->second;
  }

  // -- cycle ----------------------------------------------------------------

  cycle::CycleState cycle_state(const std::string& project_id) const {
    const ProjectState& ps = state(project_id);
    std::lock_guard lock(ps.cycle_mutex);
    return ps.cycle;
  }

  /// Applies one event; transitions for a project are serialized.
  cycle::CycleState cycle_event(const std::string& project_id, const cycle::Event& event) {
    ProjectState& ps = state(project_id);
    std::lock_guard lock(ps.cycle_mutex);
    cycle::CycleState next = cycle::advance(ps.cycle, event, utc_timestamp());
    if (store_dir_) cycle::HistoryLog(history_path(project_id)).append(next.history.back());
    ps.cycle = std::move(next);
    return ps.cycle;
  }

  void set_max_rounds(const std::string& project_id, int max_rounds) {
    ProjectState& ps = state(project_id);
    std::lock_guard lock(ps.cycle_mutex);
    ps.cycle.max_rounds = max_rounds;
  }

 private:
  struct ProjectState {
    explicit ProjectState(std::unique_ptr<corpus::Project> c) : corpus(std::move(c)) {}
    std::unique_ptr<corpus::Project> corpus;
    std::vector<std::string> round_ids;
    cycle::CycleState cycle;
    mutable std::mutex cycle_mutex;
  };

  ProjectState& state(const std::string& project_id) const {
    std::shared_lock lock(mutex_);
    auto it = projects_.find(project_id);
    if (it == projects_.end()) {
      throw Error(Errc::unknown_project, "unknown project '" + project_id + "'", {{"project_id", project_id}});
    }
    return *it->second;
  }

  fs::path snapshot_path(const std::string& project_id) const { return *store_dir_ / (project_id + ".json"); }
  fs::path history_path(const std::string& project_id) const { return *store_dir_ / (project_id + ".history.jsonl"); }

  void persist(const std::string& project_id) {
    if (!store_dir_) return;
    const ProjectState& ps = state(project_id);
    std::lock_guard persist_lock(persist_mutex_);
    json j;
    j["corpus"] = ps.corpus->to_json();
    j["rounds"] = json::array();
    j["gold"] = json::object();
    {
      std::shared_lock lock(mutex_);
      for (const auto& rid : ps.round_ids) {
        j["rounds"].push_back(rounds_.at(rid)->to_json());
        if (auto it = golds_.find(rid); it != golds_.end()) {
          json items = json::array();
          for (const auto& item : it->second.items) items.push_back({item.comment_id, to_string(item.label)});
          j["gold"][rid] = {{"seed", it->second.balance_seed}, {"items", items}};
        }
      }
    }
    write_file_atomic(snapshot_path(project_id), j.dump());
  }

  void load_all() {
    fs::create_directories(*store_dir_);
    for (const auto& entry : fs::directory_iterator(*store_dir_)) {
      const auto& path = entry.path();
      if (path.extension() != ".json") continue;
      json j;
      try {
        j = json::parse(read_file(path));
      } catch (const json::exception& e) {
        throw Error(Errc::store_corrupt, path.string() + ": " + e.what());
      }
      auto ps = std::make_unique<ProjectState>(corpus::Project::from_json(j.at("corpus")));
      const std::string id = ps->corpus->id();
      try {
        for (const auto& jr : j.at("rounds")) {
          auto round = annotation::Round::from_json(jr);
          const int n = std::stoi(round->id().substr(1));
          next_round_ = std::max(next_round_, n + 1);
          ps->round_ids.push_back(round->id());
          rounds_.emplace(round->id(), std::move(round));
        }
        for (const auto& [rid, jg] : j.at("gold").items()) {
          annotation::GoldCorpus g;
          g.balance_seed = jg.at("seed").get<uint64_t>();
          g.provenance = rid;
          for (const auto& item : jg.at("items")) {
            g.items.push_back({item.at(0).get<std::string>(), parse_label(item.at(1).get<std::string>())});
          }
          golds_.emplace(rid, std::move(g));
        }
      } catch (const json::exception& e) {
        throw Error(Errc::store_corrupt, path.string() + ": " + e.what());
      }
      ps->cycle = cycle::replay(cycle::HistoryLog(history_path(id)).load());
      projects_.emplace(id, std::move(ps));
    }
  }

  std::optional<fs::path> store_dir_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, std::unique_ptr<ProjectState>> projects_;
  std::map<std::string, std::unique_ptr<annotation::Round>> rounds_;
  std::map<std::string, annotation::GoldCorpus> golds_;
  int next_round_ = 1;
  std::mutex persist_mutex_;

  mutable std::mutex experiments_mutex_;
  std::map<std::string, std::shared_ptr<ExperimentRecord>> experiments_;
  int next_experiment_ = 1;
  std::vector<std::jthread> runners_;
};

}  // namespace maptter
