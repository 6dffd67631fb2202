#pragma once

// Annotation rounds: two-annotator labeling, Cohen's kappa, adjudication
// and class-balanced gold standard construction.

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "maptter/error.hpp"
#include "maptter/labels.hpp"
#include "maptter/util.hpp"

namespace maptter::annotation {

using nlohmann::json;

/// The model triplet M = {T, R, I}.
struct RoundModel {
  std::vector<std::string> terms;
  std::string relations;
  std::map<Label, std::string> interpretation;

  static RoundModel standard() {
    return RoundModel{
        {"Comment-classe", "Positive", "Negative", "Neutral"},
        "Comment-classe:= Positive| Negative| Neutral",
        {{Label::positive, "Subjective with positive sentiment"},
         {Label::negative, "Subjective with negative sentiment"},
         {Label::neutral, "out of topic or without sentiment (objective)"}},
    };
  }

  bool allows(Label label) const { return interpretation.contains(label); }
};

enum class ContextPolicy { with_article, comment_only };

inline const char* to_string(ContextPolicy policy) {
  return policy == ContextPolicy::with_article ? "with_article" : "comment_only";
}

inline ContextPolicy parse_context_policy(std::string_view text) {
  if (text == "with_article") return ContextPolicy::with_article;
  if (text == "comment_only") return ContextPolicy::comment_only;
  throw Error(Errc::parse_error, "unknown context policy '" + std::string(text) + "'");
}

struct Guidelines {
  int version = 1;
  std::string text;
  ContextPolicy context_policy = ContextPolicy::with_article;
};

struct AnnotationRecord {
  std::string round_id;
  std::string annotator_id;
  std::string comment_id;
  Label label = Label::neutral;
  std::string decided_at;
};

// ---------------------------------------------------------------------------
// Agreement

/// Rows index the first annotator's label, columns the second's.
using Contingency = std::array<std::array<uint64_t, 3>, 3>;

struct IAAResult {
  double pr_a = 0;
  double pr_e = 0;
  double kappa = 0;
  size_t n_items = 0;
  Contingency contingency{};
};

inline double kappa_from_proportions(double pr_a, double pr_e) {
  if (pr_e >= 1.0) throw Error(Errc::degenerate_agreement, "Pr(e) = 1: kappa undefined");
  return (pr_a - pr_e) / (1.0 - pr_e);
}

/// Cohen's kappa: Pr(e) is the sum over labels of the product of the two
/// annotators' marginal proportions.
inline IAAResult kappa_from_contingency(const Contingency& table) {
  uint64_t n = 0;
  uint64_t agree = 0;
  std::array<uint64_t, 3> rows{};
  std::array<uint64_t, 3> cols{};
  for (size_t i = 0; i < 3; ++i) {
    for (size_t j = 0; j < 3; ++j) {
      n += table[i][j];
      rows[i] += table[i][j];
      cols[j] += table[i][j];
    }
    agree += table[i][i];
  }
  if (n == 0) throw Error(Errc::incomplete_round, "no labeled items");
  uint64_t chance = 0;
  for (size_t l = 0; l < 3; ++l) chance += rows[l] * cols[l];
  if (chance == n * n) {
    throw Error(Errc::degenerate_agreement, "both annotators used one identical label for every item; kappa undefined",
                {{"n_items", n}});
  }
  IAAResult result;
  result.n_items = static_cast<size_t>(n);
  result.contingency = table;
  const double nd = static_cast<double>(n);
  result.pr_a = static_cast<double>(agree) / nd;
  result.pr_e = static_cast<double>(chance) / (nd * nd);
  result.kappa = kappa_from_proportions(result.pr_a, result.pr_e);
  return result;
}

inline Contingency contingency_of(std::span<const Label> first, std::span<const Label> second) {
  if (first.size() != second.size()) {
    throw Error(Errc::invalid_argument, "label vectors differ in length");
  }
  Contingency table{};
  for (size_t i = 0; i < first.size(); ++i) {
    ++table[static_cast<size_t>(first[i])][static_cast<size_t>(second[i])];
  }
  return table;
}

inline IAAResult cohen_kappa(std::span<const Label> first, std::span<const Label> second) {
  return kappa_from_contingency(contingency_of(first, second));
}

inline json to_json(const IAAResult& r) {
  json table = json::array();
  for (const auto& row : r.contingency) table.push_back(json(row));
  return {{"pr_a", r.pr_a}, {"pr_e", r.pr_e}, {"kappa", r.kappa}, {"n_items", r.n_items}, {"contingency", table}};
}

// ---------------------------------------------------------------------------
// Gold standard

struct GoldItem {
  std::string comment_id;
  Label label = Label::positive;
};

struct GoldCorpus {
  std::vector<GoldItem> items;
  uint64_t balance_seed = 0;
  std::string provenance;

  size_t count(Label label) const {
    size_t n = 0;
    for (const auto& item : items) n += item.label == label;
    return n;
  }
};

/// Drops neutral items and down-samples the majority class to the minority
/// size with a seeded draw without replacement. Output keeps input order.
inline GoldCorpus balance_gold(std::span<const GoldItem> adjudicated, uint64_t seed, std::string provenance) {
  std::vector<size_t> pos;
  std::vector<size_t> neg;
  for (size_t i = 0; i < adjudicated.size(); ++i) {
    if (adjudicated[i].label == Label::positive) pos.push_back(i);
    if (adjudicated[i].label == Label::negative) neg.push_back(i);
  }
  const size_t m = std::min(pos.size(), neg.size());
  if (m == 0) {
    throw Error(Errc::empty_class, "gold standard needs both classes",
                {{"positive", pos.size()}, {"negative", neg.size()}});
  }
  std::vector<size_t>& majority = pos.size() > neg.size() ? pos : neg;
  Rng rng(seed);
  seeded_shuffle(std::span<size_t>(majority), rng);
  majority.resize(m);

  std::vector<bool> keep(adjudicated.size(), false);
  for (size_t i : pos) keep[i] = true;
  for (size_t i : neg) keep[i] = true;

  GoldCorpus gold;
  gold.balance_seed = seed;
  gold.provenance = std::move(provenance);
  for (size_t i = 0; i < adjudicated.size(); ++i) {
    if (keep[i]) gold.items.push_back(adjudicated[i]);
  }
  return gold;
}

/// One gold document as exported: {"comment_id", "text", "label"}.
struct GoldDocument {
  std::string comment_id;
  std::string text;
  Label label = Label::positive;
};

inline std::string to_jsonl(std::span<const GoldDocument> docs) {
  std::string out;
  for (const auto& d : docs) {
    out += json{{"comment_id", d.comment_id}, {"text", d.text}, {"label", to_string(d.label)}}.dump();
    out.push_back('\n');
  }
  return out;
}

inline std::vector<GoldDocument> parse_gold_jsonl(std::string_view text) {
  std::vector<GoldDocument> docs;
  size_t line_no = 0;
  for (const auto& line : split_lines(text)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const json obj = json::parse(line);
      GoldDocument doc{obj.at("comment_id").get<std::string>(), obj.at("text").get<std::string>(),
                       parse_label(obj.at("label").get<std::string>())};
      if (doc.label == Label::neutral) {
        throw Error(Errc::malformed_record, "line " + std::to_string(line_no) + ": neutral is not a gold label");
      }
      docs.push_back(std::move(doc));
    } catch (const json::exception& e) {
      throw Error(Errc::malformed_record, "line " + std::to_string(line_no) + ": " + e.what(), {{"line", line_no}});
    }
  }
  return docs;
}

// ---------------------------------------------------------------------------
// Annotation CSV: comment_id,annotator_id,label

struct LabelRow {
  std::string comment_id;
  std::string annotator_id;
  Label label = Label::neutral;
  std::string text;  // optional trailing column, used by adjudicated files
};

inline std::vector<LabelRow> parse_annotation_csv(std::string_view text) {
  const auto rows = csv::parse(text);
  if (rows.empty()) throw Error(Errc::malformed_record, "empty annotation CSV");
  const auto& header = rows.front();
  auto column = [&](std::string_view name) -> std::optional<size_t> {
    for (size_t i = 0; i < header.size(); ++i) {
      if (trim(header[i]) == name) return i;
    }
    return std::nullopt;
  };
  const auto c_comment = column("comment_id");
  const auto c_label = column("label");
  const auto c_annotator = column("annotator_id");
  const auto c_text = column("text");
  if (!c_comment || !c_label) {
    throw Error(Errc::malformed_record, "annotation CSV header must contain comment_id and label");
  }
  std::vector<LabelRow> out;
  for (size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() == 1 && trim(row[0]).empty()) continue;
    auto cell = [&](std::optional<size_t> c) -> std::string {
      if (!c) return {};
      if (*c >= row.size()) {
        throw Error(Errc::malformed_record, "CSV row " + std::to_string(r + 1) + " is short", {{"row", r + 1}});
      }
      return row[*c];
    };
    LabelRow lr;
    lr.comment_id = std::string(trim(cell(c_comment)));
    lr.annotator_id = std::string(trim(cell(c_annotator)));
    try {
      lr.label = parse_label(trim(cell(c_label)));
    } catch (const Error& e) {
      throw Error(Errc::malformed_record, "CSV row " + std::to_string(r + 1) + ": " + e.what(), {{"row", r + 1}});
    }
    lr.text = cell(c_text);
    if (lr.comment_id.empty()) {
      throw Error(Errc::malformed_record, "CSV row " + std::to_string(r + 1) + ": empty comment_id", {{"row", r + 1}});
    }
    out.push_back(std::move(lr));
  }
  return out;
}

inline std::string to_annotation_csv(std::span<const AnnotationRecord> records) {
  std::string out = "comment_id,annotator_id,label\n";
  for (const auto& rec : records) {
    out += csv::join({rec.comment_id, rec.annotator_id, to_string(rec.label)});
    out.push_back('\n');
  }
  return out;
}

/// Pairs two annotators' files by comment id, in the first file's order.
/// Both files must cover the same comments exactly once.
inline std::pair<std::vector<Label>, std::vector<Label>> align_annotations(std::span<const LabelRow> first,
                                                                            std::span<const LabelRow> second) {
  std::unordered_map<std::string, Label> by_id;
  for (const auto& row : second) {
    if (!by_id.emplace(row.comment_id, row.label).second) {
      throw Error(Errc::malformed_record, "duplicate comment " + row.comment_id + " in second file");
    }
  }
  std::unordered_set<std::string> seen;
  std::pair<std::vector<Label>, std::vector<Label>> out;
  for (const auto& row : first) {
    if (!seen.insert(row.comment_id).second) {
      throw Error(Errc::malformed_record, "duplicate comment " + row.comment_id + " in first file");
    }
    auto it = by_id.find(row.comment_id);
    if (it == by_id.end()) {
      throw Error(Errc::incomplete_round, "comment " + row.comment_id + " is missing from the second file",
                  {{"comment_id", row.comment_id}});
    }
    out.first.push_back(row.label);
    out.second.push_back(it->second);
  }
  if (seen.size() != by_id.size()) {
    throw Error(Errc::incomplete_round, "second file labels comments the first file does not",
                {{"first", seen.size()}, {"second", by_id.size()}});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rounds

struct Disagreement {
  std::string comment_id;
  Label first;
  Label second;
};

/// Either an explicit label or "no consensus" (which resolves to neutral).
struct Decision {
  std::optional<Label> label;

  static Decision of(Label l) { return Decision{l}; }
  static Decision no_consensus() { return Decision{std::nullopt}; }
  Label resolved() const { return label.value_or(Label::neutral); }
};

struct Progress {
  size_t total = 0;
  std::array<size_t, 2> labeled{};
};

/// One annotation round over an immutable snapshot of comments and exactly
/// two annotators. Thread-safe; labels are last-write-wins while open.
class Round {
 public:
  Round(std::string id, std::string project_id, Guidelines guidelines, std::vector<std::string> snapshot,
        std::array<std::string, 2> annotators, RoundModel model = RoundModel::standard())
      : id_(std::move(id)),
        project_id_(std::move(project_id)),
        guidelines_(std::move(guidelines)),
        model_(std::move(model)),
        snapshot_(std::move(snapshot)),
        annotators_(std::move(annotators)) {
    if (annotators_[0].empty() || annotators_[1].empty() || annotators_[0] == annotators_[1]) {
      throw Error(Errc::invalid_argument, "a round needs two distinct annotators");
    }
    for (size_t i = 0; i < snapshot_.size(); ++i) {
      if (!position_.emplace(snapshot_[i], i).second) {
        throw Error(Errc::invalid_argument, "duplicate comment in snapshot: " + snapshot_[i]);
      }
    }
    labels_.resize(snapshot_.size());
    decisions_.resize(snapshot_.size());
  }

  Round(const Round&) = delete;
  Round& operator=(const Round&) = delete;

  const std::string& id() const { return id_; }
  const std::string& project_id() const { return project_id_; }
  const Guidelines& guidelines() const { return guidelines_; }
  const RoundModel& model() const { return model_; }
  const std::vector<std::string>& snapshot() const { return snapshot_; }
  const std::array<std::string, 2>& annotators() const { return annotators_; }

  bool is_open() const {
    std::lock_guard lock(mutex_);
    return open_;
  }

  void record(const std::string& annotator_id, const std::string& comment_id, Label label,
              std::string decided_at = utc_timestamp()) {
    std::lock_guard lock(mutex_);
    const size_t who = annotator_index(annotator_id);
    const size_t pos = position(comment_id);
    if (!open_) throw Error(Errc::round_closed, "round " + id_ + " is closed");
    if (!model_.allows(label)) throw Error(Errc::invalid_argument, "label not in the round's model");
    labels_[pos][who] = AnnotationRecord{id_, annotator_id, comment_id, label, std::move(decided_at)};
  }

  std::optional<AnnotationRecord> record_of(const std::string& annotator_id, const std::string& comment_id) const {
    std::lock_guard lock(mutex_);
    return labels_[position(comment_id)][annotator_index(annotator_id)];
  }

  /// Unlabeled comments for one annotator, in snapshot order.
  std::vector<std::string> pending(const std::string& annotator_id) const {
    std::lock_guard lock(mutex_);
    const size_t who = annotator_index(annotator_id);
    std::vector<std::string> out;
    for (size_t i = 0; i < snapshot_.size(); ++i) {
      if (!labels_[i][who]) out.push_back(snapshot_[i]);
    }
    return out;
  }

  Progress progress() const {
    std::lock_guard lock(mutex_);
    Progress p;
    p.total = snapshot_.size();
    for (const auto& pair : labels_) {
      for (size_t who = 0; who < 2; ++who) p.labeled[who] += pair[who].has_value();
    }
    return p;
  }

  bool complete() const {
    std::lock_guard lock(mutex_);
    return complete_locked();
  }

  /// Freezes labels; requires full coverage by both annotators.
  void close() {
    std::lock_guard lock(mutex_);
    require_complete();
    open_ = false;
  }

  IAAResult compute_kappa() const {
    std::lock_guard lock(mutex_);
    require_complete();
    auto [first, second] = label_vectors();
    return cohen_kappa(first, second);
  }

  std::vector<Disagreement> list_disagreements() const {
    std::lock_guard lock(mutex_);
    require_complete();
    std::vector<Disagreement> out;
    for (size_t i = 0; i < snapshot_.size(); ++i) {
      const Label a = labels_[i][0]->label;
      const Label b = labels_[i][1]->label;
      if (a != b) out.push_back({snapshot_[i], a, b});
    }
    return out;
  }

  /// Resolves one disagreement. Closes the round on first use.
  Label adjudicate(const std::string& comment_id, Decision decision) {
    std::lock_guard lock(mutex_);
    require_complete();
    const size_t pos = position(comment_id);
    if (labels_[pos][0]->label == labels_[pos][1]->label) {
      throw Error(Errc::not_a_disagreement, "annotators agree on " + comment_id, {{"comment_id", comment_id}});
    }
    open_ = false;
    decisions_[pos] = decision.resolved();
    return *decisions_[pos];
  }

  /// Agreed items resolve to the agreed label; disagreements to their decision.
  std::optional<Label> gold_label(const std::string& comment_id) const {
    std::lock_guard lock(mutex_);
    return gold_label_at(position(comment_id));
  }

  /// Disagreements still waiting for a decision.
  std::vector<std::string> unadjudicated() const {
    std::lock_guard lock(mutex_);
    require_complete();
    std::vector<std::string> out;
    for (size_t i = 0; i < snapshot_.size(); ++i) {
      if (!gold_label_at(i)) out.push_back(snapshot_[i]);
    }
    return out;
  }

  /// All resolved labels in snapshot order.
  std::vector<GoldItem> adjudicated_items() const {
    std::lock_guard lock(mutex_);
    require_complete();
    std::vector<GoldItem> items;
    std::vector<std::string> missing;
    for (size_t i = 0; i < snapshot_.size(); ++i) {
      if (auto l = gold_label_at(i)) {
        items.push_back({snapshot_[i], *l});
      } else {
        missing.push_back(snapshot_[i]);
      }
    }
    if (!missing.empty()) {
      throw Error(Errc::incomplete_adjudication, std::to_string(missing.size()) + " disagreements not adjudicated",
                  {{"remaining", missing}});
    }
    return items;
  }

  GoldCorpus build_gold_standard(uint64_t balance_seed) {
    auto items = adjudicated_items();
    {
      std::lock_guard lock(mutex_);
      open_ = false;
    }
    return balance_gold(items, balance_seed, id_);
  }

  std::vector<AnnotationRecord> records() const {
    std::lock_guard lock(mutex_);
    std::vector<AnnotationRecord> out;
    for (size_t who = 0; who < 2; ++who) {
      for (const auto& pair : labels_) {
        if (pair[who]) out.push_back(*pair[who]);
      }
    }
    return out;
  }

  json to_json() const {
    std::lock_guard lock(mutex_);
    json j;
    j["id"] = id_;
    j["project_id"] = project_id_;
    j["guidelines"] = {{"version", guidelines_.version},
                       {"text", guidelines_.text},
                       {"context_policy", to_string(guidelines_.context_policy)}};
    j["snapshot"] = snapshot_;
    j["annotators"] = annotators_;
    j["open"] = open_;
    j["records"] = json::array();
    j["decisions"] = json::object();
    for (size_t i = 0; i < snapshot_.size(); ++i) {
      for (const auto& rec : labels_[i]) {
        if (rec) {
          j["records"].push_back({{"annotator_id", rec->annotator_id},
                                  {"comment_id", rec->comment_id},
                                  {"label", to_string(rec->label)},
                                  {"decided_at", rec->decided_at}});
        }
      }
      if (decisions_[i]) j["decisions"][snapshot_[i]] = to_string(*decisions_[i]);
    }
    return j;
  }

  static std::unique_ptr<Round> from_json(const json& j) {
    try {
      Guidelines g{j.at("guidelines").at("version").get<int>(), j.at("guidelines").at("text").get<std::string>(),
                   parse_context_policy(j.at("guidelines").at("context_policy").get<std::string>())};
      auto round = std::make_unique<Round>(j.at("id").get<std::string>(), j.at("project_id").get<std::string>(),
                                           std::move(g), j.at("snapshot").get<std::vector<std::string>>(),
                                           j.at("annotators").get<std::array<std::string, 2>>());
      for (const auto& r : j.at("records")) {
        round->record(r.at("annotator_id").get<std::string>(), r.at("comment_id").get<std::string>(),
                      parse_label(r.at("label").get<std::string>()), r.at("decided_at").get<std::string>());
      }
      for (const auto& [comment, label] : j.at("decisions").items()) {
        round->decisions_[round->position(comment)] = parse_label(label.get<std::string>());
      }
      round->open_ = j.at("open").get<bool>();
      return round;
    } catch (const json::exception& e) {
      throw Error(Errc::store_corrupt, std::string("corrupt round record: ") + e.what());
    }
  }

 private:
  size_t annotator_index(const std::string& annotator_id) const {
    if (annotator_id == annotators_[0]) return 0;
    if (annotator_id == annotators_[1]) return 1;
    throw Error(Errc::unknown_annotator, "annotator '" + annotator_id + "' is not assigned to round " + id_,
                {{"annotator_id", annotator_id}});
  }

  size_t position(const std::string& comment_id) const {
    auto it = position_.find(comment_id);
    if (it == position_.end()) {
      throw Error(Errc::unknown_comment, "comment '" + comment_id + "' is not in round " + id_,
                  {{"comment_id", comment_id}});
    }
    return it->second;
  }

  bool complete_locked() const {
    for (const auto& pair : labels_) {
      if (!pair[0] || !pair[1]) return false;
    }
    return true;
  }

  void require_complete() const {
    if (complete_locked()) return;
    json remaining = json::object();
    for (size_t who = 0; who < 2; ++who) {
      size_t n = 0;
      for (const auto& pair : labels_) n += !pair[who].has_value();
      remaining[annotators_[who]] = n;
    }
    throw Error(Errc::incomplete_round, "round " + id_ + " is not fully labeled", {{"remaining", remaining}});
  }

  std::pair<std::vector<Label>, std::vector<Label>> label_vectors() const {
    std::vector<Label> first;
    std::vector<Label> second;
    for (const auto& pair : labels_) {
      first.push_back(pair[0]->label);
      second.push_back(pair[1]->label);
    }
    return {first, second};
  }

  std::optional<Label> gold_label_at(size_t pos) const {
    const auto& pair = labels_[pos];
    if (!pair[0] || !pair[1]) return std::nullopt;
    if (pair[0]->label == pair[1]->label) return pair[0]->label;
    return decisions_[pos];
  }

  std::string id_;
  std::string project_id_;
  Guidelines guidelines_;
  RoundModel model_;
  std::vector<std::string> snapshot_;
  std::unordered_map<std::string, size_t> position_;
  std::array<std::string, 2> annotators_;
  std::vector<std::array<std::optional<AnnotationRecord>, 2>> labels_;
  std::vector<std::optional<Label>> decisions_;
  bool open_ = true;
  mutable std::mutex mutex_;
};

/// Creates a round over the selected comments. `previous_version` is the
/// guidelines version of the project's latest round, if any.
inline std::unique_ptr<Round> open_round(std::string round_id, std::string project_id, Guidelines guidelines,
                                         std::vector<std::string> comment_ids, std::optional<int> previous_version,
                                         std::array<std::string, 2> annotators) {
  if (comment_ids.empty()) throw Error(Errc::no_comments, "selection contains no comments");
  if (guidelines.version < 1) throw Error(Errc::invalid_argument, "guidelines version must be >= 1");
  if (previous_version && guidelines.version <= *previous_version) {
    throw Error(Errc::stale_guidelines_version,
                "guidelines version " + std::to_string(guidelines.version) + " does not exceed previous version " +
                    std::to_string(*previous_version),
                {{"version", guidelines.version}, {"previous", *previous_version}});
  }
  return std::make_unique<Round>(std::move(round_id), std::move(project_id), std::move(guidelines),
                                 std::move(comment_ids), std::move(annotators));
}

}  // namespace maptter::annotation
