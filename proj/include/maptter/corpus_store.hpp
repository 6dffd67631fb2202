#pragma once

// Projects, articles and comments; batch ingest with exact-duplicate
// elimination; JSONL corpus interchange.

#include <algorithm>
#include <cstdio>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "maptter/error.hpp"
#include "maptter/unicode.hpp"
#include "maptter/util.hpp"

namespace maptter::corpus {

using nlohmann::json;

enum class Source { echorouk, elkhabar, ennahar, other };
enum class Topic { news, political, religion, sports, society, other };

/// Closed enum with an escape hatch: `other` carries the free-form name.
template <typename Enum>
struct Tagged {
  Enum kind{Enum::other};
  std::string name;

  std::string str() const { return name; }
  friend bool operator==(const Tagged& a, const Tagged& b) { return a.kind == b.kind && a.name == b.name; }
};

using SourceTag = Tagged<Source>;
using TopicTag = Tagged<Topic>;

inline SourceTag parse_source(std::string_view text) {
  if (text == "echorouk") return {Source::echorouk, "echorouk"};
  if (text == "elkhabar") return {Source::elkhabar, "elkhabar"};
  if (text == "ennahar") return {Source::ennahar, "ennahar"};
  return {Source::other, std::string(text)};
}

inline TopicTag parse_topic(std::string_view text) {
  if (text == "news") return {Topic::news, "news"};
  if (text == "political") return {Topic::political, "political"};
  if (text == "religion") return {Topic::religion, "religion"};
  if (text == "sports") return {Topic::sports, "sports"};
  if (text == "society") return {Topic::society, "society"};
  return {Topic::other, std::string(text)};
}

struct Article {
  std::string article_id;
  SourceTag source;
  TopicTag topic;
  std::string title;
  std::optional<std::string> url;
};

struct Comment {
  std::string comment_id;
  std::string article_id;
  std::string raw_text;  // input bytes, never rewritten
  std::string dedup_key;
  std::string ingested_at;  // UTC, ISO-8601
};

struct IngestRecord {
  std::string article_id;
  std::string raw_text;
};

struct IngestReport {
  size_t added = 0;
  size_t duplicates_dropped = 0;
  size_t rejected_empty = 0;

  size_t total() const { return added + duplicates_dropped + rejected_empty; }
};

/// NFC, trim, and collapse internal whitespace runs to one space. Nothing else.
inline std::string canonicalize_for_dedup(std::string_view raw_text) {
  const std::u32string cps = unicode::decode(unicode::nfc(raw_text));
  std::string out;
  out.reserve(raw_text.size());
  bool pending_space = false;
  for (char32_t cp : cps) {
    if (unicode::is_whitespace(cp)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    unicode::append(out, cp);
  }
  return out;
}

/// One line of the JSONL interchange format.
struct CorpusLine {
  std::string article_id;
  std::string source;
  std::string topic;
  std::string title;
  std::string text;
  std::optional<std::string> comment_id;  // written on export, ignored on ingest
};

inline std::vector<CorpusLine> parse_corpus_jsonl(std::string_view text) {
  std::vector<CorpusLine> out;
  size_t line_no = 0;
  for (const auto& line : split_lines(text)) {
    ++line_no;
    if (trim(line).empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(Errc::malformed_record, "line " + std::to_string(line_no) + ": " + e.what(), {{"line", line_no}});
    }
    CorpusLine rec;
    auto field = [&](const char* key) -> std::string {
      auto it = obj.find(key);
      if (it == obj.end() || !it->is_string()) {
        throw Error(Errc::malformed_record, "line " + std::to_string(line_no) + ": missing string field '" + key + "'",
                    {{"line", line_no}, {"field", key}});
      }
      return it->get<std::string>();
    };
    rec.article_id = field("article_id");
    rec.source = field("source");
    rec.topic = field("topic");
    rec.title = field("title");
    rec.text = field("text");
    if (auto it = obj.find("comment_id"); it != obj.end() && it->is_string()) rec.comment_id = it->get<std::string>();
    out.push_back(std::move(rec));
  }
  return out;
}

inline std::string to_jsonl(const CorpusLine& line) {
  json obj = json::object();
  obj["article_id"] = line.article_id;
  obj["source"] = line.source;
  obj["topic"] = line.topic;
  obj["title"] = line.title;
  obj["text"] = line.text;
  if (line.comment_id) obj["comment_id"] = *line.comment_id;
  return obj.dump();
}

/// Empty optionals match everything.
struct CommentSelector {
  std::optional<std::string> topic;
  std::optional<std::string> source;
  std::optional<std::vector<std::string>> article_ids;
  std::optional<std::vector<std::string>> comment_ids;

  bool matches(const Article& article, const Comment& comment) const {
    if (topic && article.topic.name != *topic) return false;
    if (source && article.source.name != *source) return false;
    if (article_ids && std::find(article_ids->begin(), article_ids->end(), comment.article_id) == article_ids->end()) {
      return false;
    }
    if (comment_ids && std::find(comment_ids->begin(), comment_ids->end(), comment.comment_id) == comment_ids->end()) {
      return false;
    }
    return true;
  }
};

/// A project's corpus. All operations are serialized through a
/// reader/writer lock; concurrent ingests behave as some total order.
class Project {
 public:
  explicit Project(std::string id) : id_(std::move(id)) {}
  Project(const Project&) = delete;
  Project& operator=(const Project&) = delete;

  const std::string& id() const { return id_; }

  /// Registers an article; an existing id keeps its first definition.
  bool add_article(Article article) {
    std::unique_lock lock(mutex_);
    return add_article_locked(std::move(article));
  }

  IngestReport ingest_comments(std::span<const IngestRecord> records) {
    std::unique_lock lock(mutex_);
    for (const auto& rec : records) {
      if (!articles_.contains(rec.article_id)) {
        throw Error(Errc::unknown_article, "unknown article '" + rec.article_id + "'", {{"article_id", rec.article_id}});
      }
    }
    return ingest_locked(records);
  }

  /// Ingest of interchange lines: articles are registered first, then comments.
  IngestReport ingest_lines(std::span<const CorpusLine> lines) {
    std::unique_lock lock(mutex_);
    std::vector<IngestRecord> records;
    records.reserve(lines.size());
    for (const auto& line : lines) {
      add_article_locked(Article{line.article_id, parse_source(line.source), parse_topic(line.topic), line.title, {}});
      records.push_back({line.article_id, line.text});
    }
    return ingest_locked(records);
  }

  std::vector<Comment> select(const CommentSelector& selector) const {
    std::shared_lock lock(mutex_);
    std::vector<Comment> out;
    for (const auto& comment : comments_) {
      if (selector.matches(articles_.at(comment.article_id), comment)) out.push_back(comment);
    }
    return out;
  }

  std::string export_corpus(const CommentSelector& selector) const {
    std::shared_lock lock(mutex_);
    std::string out;
    size_t n = 0;
    for (const auto& comment : comments_) {
      const Article& article = articles_.at(comment.article_id);
      if (!selector.matches(article, comment)) continue;
      out += to_jsonl({article.article_id, article.source.str(), article.topic.str(), article.title, comment.raw_text,
                       comment.comment_id});
      out.push_back('\n');
      ++n;
    }
    if (n == 0) throw Error(Errc::empty_selection, "selection matched no comments in project '" + id_ + "'");
    return out;
  }

  std::optional<Comment> find_comment(const std::string& comment_id) const {
    std::shared_lock lock(mutex_);
    auto it = by_id_.find(comment_id);
    if (it == by_id_.end()) return std::nullopt;
    return comments_[it->second];
  }

  std::optional<Article> find_article(const std::string& article_id) const {
    std::shared_lock lock(mutex_);
    auto it = articles_.find(article_id);
    if (it == articles_.end()) return std::nullopt;
    return it->second;
  }

  size_t comment_count() const {
    std::shared_lock lock(mutex_);
    return comments_.size();
  }

  json to_json() const {
    std::shared_lock lock(mutex_);
    json j;
    j["id"] = id_;
    j["next_seq"] = next_seq_;
    j["articles"] = json::array();
    for (const auto& id : article_order_) {
      const Article& a = articles_.at(id);
      json ja{{"article_id", a.article_id}, {"source", a.source.str()}, {"topic", a.topic.str()}, {"title", a.title}};
      if (a.url) ja["url"] = *a.url;
      j["articles"].push_back(std::move(ja));
    }
    j["comments"] = json::array();
    for (const auto& c : comments_) {
      j["comments"].push_back({{"comment_id", c.comment_id},
                               {"article_id", c.article_id},
                               {"raw_text", c.raw_text},
                               {"ingested_at", c.ingested_at}});
    }
    return j;
  }

  static std::unique_ptr<Project> from_json(const json& j) {
    try {
      auto project = std::make_unique<Project>(j.at("id").get<std::string>());
      for (const auto& ja : j.at("articles")) {
        Article a{ja.at("article_id").get<std::string>(), parse_source(ja.at("source").get<std::string>()),
                  parse_topic(ja.at("topic").get<std::string>()), ja.at("title").get<std::string>(), {}};
        if (ja.contains("url")) a.url = ja["url"].get<std::string>();
        project->add_article_locked(std::move(a));
      }
      for (const auto& jc : j.at("comments")) {
        Comment c{jc.at("comment_id").get<std::string>(), jc.at("article_id").get<std::string>(),
                  jc.at("raw_text").get<std::string>(), "", jc.at("ingested_at").get<std::string>()};
        c.dedup_key = canonicalize_for_dedup(c.raw_text);
        if (!project->articles_.contains(c.article_id) || project->by_key_.contains(c.dedup_key)) {
          throw Error(Errc::store_corrupt, "inconsistent comment " + c.comment_id);
        }
        project->by_key_.emplace(c.dedup_key, project->comments_.size());
        project->by_id_.emplace(c.comment_id, project->comments_.size());
        project->comments_.push_back(std::move(c));
      }
      project->next_seq_ = j.at("next_seq").get<uint64_t>();
      return project;
    } catch (const json::exception& e) {
      throw Error(Errc::store_corrupt, std::string("corrupt project record: ") + e.what());
    }
  }

 private:
  bool add_article_locked(Article article) {
    if (articles_.contains(article.article_id)) return false;
    article_order_.push_back(article.article_id);
    articles_.emplace(article.article_id, std::move(article));
    return true;
  }

  IngestReport ingest_locked(std::span<const IngestRecord> records) {
    IngestReport report;
    const std::string now = utc_timestamp();
    for (const auto& rec : records) {
      std::string key = canonicalize_for_dedup(rec.raw_text);
      if (key.empty()) {
        ++report.rejected_empty;
        continue;
      }
      if (by_key_.contains(key)) {
        ++report.duplicates_dropped;
        continue;
      }
      char id[24];
      std::snprintf(id, sizeof id, "c%06llu", static_cast<unsigned long long>(++next_seq_));
      by_key_.emplace(key, comments_.size());
      by_id_.emplace(id, comments_.size());
      comments_.push_back(Comment{id, rec.article_id, rec.raw_text, std::move(key), now});
      ++report.added;
    }
    return report;
  }

  std::string id_;
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::string, Article> articles_;
  std::vector<std::string> article_order_;
  std::vector<Comment> comments_;
  std::unordered_map<std::string, size_t> by_key_;
  std::unordered_map<std::string, size_t> by_id_;
  uint64_t next_seq_ = 0;
};

}  // namespace maptter::corpus
