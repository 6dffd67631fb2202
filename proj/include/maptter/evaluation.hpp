#pragma once

// Stratified k-fold cross-validation, confusion-derived metrics, and the
// experiment grid over {stem} x {scheme} x {n-gram} x {classifier}.

#include <algorithm>
#include <atomic>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "maptter/annotation.hpp"
#include "maptter/arabic_text.hpp"
#include "maptter/classifiers.hpp"
#include "maptter/error.hpp"
#include "maptter/featurization.hpp"
#include "maptter/labels.hpp"
#include "maptter/util.hpp"

namespace maptter::eval {

using features::Scheme;
using learn::ModelKind;

/// Counts relative to the positive class.
struct ConfusionMatrix {
  uint64_t tp = 0;
  uint64_t fp = 0;
  uint64_t fn = 0;
  uint64_t tn = 0;

  uint64_t total() const { return tp + fp + fn + tn; }

  void add(Label truth, Label predicted) {
    if (truth == Label::positive) {
      ++(predicted == Label::positive ? tp : fn);
    } else {
      ++(predicted == Label::positive ? fp : tn);
    }
  }

  ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

/// nullopt marks an undefined 0/0 ratio.
struct Metrics {
  std::optional<double> accuracy;
  std::optional<double> precision_pos;
  std::optional<double> precision_neg;
  std::optional<double> recall_pos;
  std::optional<double> recall_neg;
};

namespace detail {
inline std::optional<double> ratio(uint64_t num, uint64_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}
}  // namespace detail

inline Metrics compute_metrics(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw Error(Errc::empty_matrix, "confusion matrix is empty");
  return Metrics{
      detail::ratio(cm.tp + cm.tn, cm.total()),
      detail::ratio(cm.tp, cm.tp + cm.fp),
      detail::ratio(cm.tn, cm.tn + cm.fn),
      detail::ratio(cm.tp, cm.tp + cm.fn),
      detail::ratio(cm.tn, cm.tn + cm.fp),
  };
}

// ---------------------------------------------------------------------------
// Folds

struct FoldPlan {
  size_t k = 10;
  uint64_t seed = 0;
  std::vector<std::vector<size_t>> folds;
};

/// Per-class index lists are shuffled with the seed and dealt round-robin;
/// the deal continues across classes so fold sizes differ by at most one.
inline FoldPlan stratified_folds(std::span<const Label> labels, size_t k, uint64_t seed) {
  if (k < 2 || k > labels.size()) {
    throw Error(Errc::bad_k, "k = " + std::to_string(k) + " is invalid for " + std::to_string(labels.size()) + " items",
                {{"k", k}, {"n", labels.size()}});
  }
  std::array<std::vector<size_t>, 3> by_class;
  for (size_t i = 0; i < labels.size(); ++i) by_class[static_cast<size_t>(labels[i])].push_back(i);
  if (by_class[0].empty() || by_class[1].empty()) {
    throw Error(Errc::empty_class, "both classes must be present to stratify");
  }
  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  plan.folds.resize(k);
  Rng rng(seed);
  size_t next = 0;
  for (auto& members : by_class) {
    seeded_shuffle(std::span<size_t>(members), rng);
    for (size_t idx : members) {
      plan.folds[next].push_back(idx);
      next = (next + 1) % k;
    }
  }
  for (auto& fold : plan.folds) std::sort(fold.begin(), fold.end());
  return plan;
}

// ---------------------------------------------------------------------------
// Pipeline configuration

struct ClassifierConfig {
  ModelKind kind = ModelKind::naive_bayes;
  double nb_alpha = 1.0;
  learn::SvmOptions svm;
  size_t knn_k = 5;
};

struct TextOptions {
  text::StemmerRules stemmer = text::StemmerRules::light_default();
  std::vector<std::string> stop_words = text::default_stop_words();
};

struct PipelineConfig {
  bool stem = false;
  Scheme scheme = Scheme::TO;
  int ngram = 1;
  ClassifierConfig classifier;
  size_t min_df = 1;
};

inline learn::TrainedModel train(const learn::LabeledDataset& data, const ClassifierConfig& cfg) {
  switch (cfg.kind) {
    case ModelKind::naive_bayes: return learn::train_naive_bayes(data, cfg.nb_alpha);
    case ModelKind::linear_svm: return learn::train_linear_svm(data, cfg.svm);
    case ModelKind::knn: return learn::train_knn(data, cfg.knn_k);
  }
  throw Error(Errc::invalid_argument, "unknown classifier");
}

struct CvResult {
  ConfusionMatrix pooled;
  Metrics metrics;
  std::vector<ConfusionMatrix> per_fold;
  std::vector<Metrics> per_fold_metrics;  // entries may be undefined on tiny folds
  bool converged = true;                  // false if any SVM fit hit max_iters
};

/// Cross-validation over already-processed term sequences. For each fold the
/// feature space and model are built from the other k-1 folds only.
inline CvResult cross_validate_terms(std::span<const std::vector<std::string>> docs, std::span<const Label> labels,
                                     Scheme scheme, const ClassifierConfig& classifier, size_t min_df,
                                     const FoldPlan& plan) {
  if (docs.size() != labels.size()) throw Error(Errc::invalid_argument, "documents and labels differ in length");
  std::vector<int> fold_of(docs.size(), -1);
  for (size_t f = 0; f < plan.folds.size(); ++f) {
    for (size_t idx : plan.folds[f]) fold_of.at(idx) = static_cast<int>(f);
  }
  CvResult result;
  for (size_t f = 0; f < plan.folds.size(); ++f) {
    std::vector<std::vector<std::string>> train_docs;
    std::vector<Label> train_labels;
    for (size_t i = 0; i < docs.size(); ++i) {
      if (fold_of[i] != static_cast<int>(f)) {
        train_docs.push_back(docs[i]);
        train_labels.push_back(labels[i]);
      }
    }
    const bool has_pos = std::find(train_labels.begin(), train_labels.end(), Label::positive) != train_labels.end();
    const bool has_neg = std::find(train_labels.begin(), train_labels.end(), Label::negative) != train_labels.end();
    if (!has_pos || !has_neg) {
      throw Error(Errc::fold_too_small, "training split for fold " + std::to_string(f) + " lost a class",
                  {{"fold", f}});
    }
    const auto space = features::build_feature_space(train_docs, min_df);
    learn::LabeledDataset data;
    data.dim = space.size();
    data.labels = std::move(train_labels);
    for (const auto& d : train_docs) data.vectors.push_back(features::vectorize(d, space, scheme));
    const auto model = train(data, classifier);
    if (const auto* svm = std::get_if<learn::SvmParams>(&model.params); svm && !svm->converged) {
      result.converged = false;
    }
    ConfusionMatrix cm;
    for (size_t idx : plan.folds[f]) {
      cm.add(labels[idx], learn::predict(model, features::vectorize(docs[idx], space, scheme)).label);
    }
    result.per_fold.push_back(cm);
    result.per_fold_metrics.push_back(cm.total() ? compute_metrics(cm) : Metrics{});
    result.pooled += cm;
  }
  result.metrics = compute_metrics(result.pooled);
  return result;
}

/// Processed, n-grammed term sequences for a gold corpus, per stem flag and order.
class PreparedCorpus {
 public:
  PreparedCorpus(std::span<const annotation::GoldDocument> gold, const TextOptions& options,
                 const std::vector<bool>& stems, const std::vector<int>& ngrams) {
    for (const auto& doc : gold) labels_.push_back(doc.label);
    for (bool stem : stems) {
      const text::ProcessingChain chain(stem, options.stemmer, options.stop_words);
      std::vector<std::vector<std::string>> tokens;
      for (const auto& doc : gold) tokens.push_back(chain.process(doc.text, doc.comment_id).tokens);
      for (int n : ngrams) {
        auto& terms = terms_[{stem, n}];
        for (const auto& t : tokens) terms.push_back(features::generate_ngrams(t, {n, "_"}));
      }
    }
  }

  const std::vector<Label>& labels() const { return labels_; }

  const std::vector<std::vector<std::string>>& terms(bool stem, int ngram) const {
    auto it = terms_.find({stem, ngram});
    if (it == terms_.end()) throw Error(Errc::invalid_argument, "corpus not prepared for this stem/n-gram setting");
    return it->second;
  }

 private:
  std::vector<Label> labels_;
  std::map<std::pair<bool, int>, std::vector<std::vector<std::string>>> terms_;
};

inline CvResult cross_validate(std::span<const annotation::GoldDocument> gold, const PipelineConfig& config,
                               size_t k, uint64_t seed, const TextOptions& options = {}) {
  const PreparedCorpus prepared(gold, options, {config.stem}, {config.ngram});
  const FoldPlan plan = stratified_folds(prepared.labels(), k, seed);
  return cross_validate_terms(prepared.terms(config.stem, config.ngram), prepared.labels(), config.scheme,
                              config.classifier, config.min_df, plan);
}

// ---------------------------------------------------------------------------
// Experiment grid and report

struct CellKey {
  ModelKind classifier = ModelKind::naive_bayes;
  bool stem = false;
  Scheme scheme = Scheme::TO;
  int ngram = 1;

  auto operator<=>(const CellKey&) const = default;
};

inline std::string describe(const CellKey& key) {
  return std::string(learn::to_string(key.classifier)) + "/stem=" + (key.stem ? "yes" : "no") + "/" +
         features::to_string(key.scheme) + "/ngram=" + std::to_string(key.ngram);
}

struct GridAxes {
  std::vector<bool> stems{false, true};
  std::vector<Scheme> schemes{Scheme::TO, Scheme::TF, Scheme::TFIDF, Scheme::BTO};
  std::vector<int> ngrams{1, 2, 3};
  std::vector<ClassifierConfig> classifiers;
  size_t min_df = 1;

  /// Canonical presentation order: stem no/yes; TO, TF, TF-IDF, BTO;
  /// n ascending; classifiers SVM, NB, KNN.
  void canonicalize() {
    auto rank_scheme = [](Scheme s) {
      switch (s) {
        case Scheme::TO: return 0;
        case Scheme::TF: return 1;
        case Scheme::TFIDF: return 2;
        case Scheme::BTO: return 3;
      }
      return 4;
    };
    auto rank_kind = [](ModelKind m) {
      switch (m) {
        case ModelKind::linear_svm: return 0;
        case ModelKind::naive_bayes: return 1;
        case ModelKind::knn: return 2;
      }
      return 3;
    };
    std::sort(stems.begin(), stems.end());
    stems.erase(std::unique(stems.begin(), stems.end()), stems.end());
    std::sort(schemes.begin(), schemes.end(), [&](Scheme a, Scheme b) { return rank_scheme(a) < rank_scheme(b); });
    schemes.erase(std::unique(schemes.begin(), schemes.end()), schemes.end());
    std::sort(ngrams.begin(), ngrams.end());
    ngrams.erase(std::unique(ngrams.begin(), ngrams.end()), ngrams.end());
    std::stable_sort(classifiers.begin(), classifiers.end(),
                     [&](const auto& a, const auto& b) { return rank_kind(a.kind) < rank_kind(b.kind); });
  }

  std::vector<CellKey> cells() const {
    std::vector<CellKey> out;
    for (const auto& c : classifiers) {
      for (bool stem : stems) {
        for (Scheme s : schemes) {
          for (int n : ngrams) out.push_back({c.kind, stem, s, n});
        }
      }
    }
    return out;
  }
};

using GridResults = std::map<CellKey, CvResult>;

/// Runs every cell of the grid. Cells are independent and spread over
/// `workers` threads; the result does not depend on execution order.
inline GridResults run_grid(std::span<const annotation::GoldDocument> gold, GridAxes axes, size_t k, uint64_t seed,
                            const TextOptions& options = {}, unsigned workers = 0) {
  axes.canonicalize();
  if (axes.stems.empty() || axes.schemes.empty() || axes.ngrams.empty() || axes.classifiers.empty()) {
    throw Error(Errc::invalid_argument, "every grid axis needs at least one value");
  }
  const PreparedCorpus prepared(gold, options, axes.stems, axes.ngrams);
  const FoldPlan plan = stratified_folds(prepared.labels(), k, seed);

  struct Job {
    CellKey key;
    const ClassifierConfig* classifier;
  };
  std::vector<Job> jobs;
  for (const auto& c : axes.classifiers) {
    for (bool stem : axes.stems) {
      for (Scheme s : axes.schemes) {
        for (int n : axes.ngrams) jobs.push_back({{c.kind, stem, s, n}, &c});
      }
    }
  }
  std::vector<std::optional<CvResult>> results(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<size_t> cursor{0};
  auto work = [&] {
    for (size_t j; (j = cursor.fetch_add(1)) < jobs.size();) {
      try {
        const auto& key = jobs[j].key;
        results[j] = cross_validate_terms(prepared.terms(key.stem, key.ngram), prepared.labels(), key.scheme,
                                          *jobs[j].classifier, axes.min_df, plan);
      } catch (...) {
        errors[j] = std::current_exception();
      }
    }
  };
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<size_t>(workers, jobs.size()));
  std::vector<std::jthread> pool;
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  pool.clear();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  GridResults out;
  for (size_t j = 0; j < jobs.size(); ++j) out.emplace(jobs[j].key, std::move(*results[j]));
  return out;
}

struct ReportRow {
  CellKey key;
  ConfusionMatrix confusion;
  Metrics metrics;
};

/// Rows in canonical order; one table per classifier, rows stem x scheme,
/// column groups per n-gram order.
struct EvaluationReport {
  GridAxes axes;
  std::vector<ReportRow> rows;

  const ReportRow& row(const CellKey& key) const {
    for (const auto& r : rows) {
      if (r.key == key) return r;
    }
    throw Error(Errc::missing_cell, "no result for " + describe(key));
  }
};

inline EvaluationReport build_report(const GridResults& results, GridAxes axes) {
  axes.canonicalize();
  EvaluationReport report;
  report.axes = axes;
  for (const auto& key : axes.cells()) {
    auto it = results.find(key);
    if (it == results.end()) {
      throw Error(Errc::missing_cell, "missing grid cell " + describe(key), {{"cell", describe(key)}});
    }
    report.rows.push_back({key, it->second.pooled, it->second.metrics});
  }
  return report;
}

namespace detail {

inline std::string csv_metric(const std::optional<double>& v) { return v ? format_fixed(*v, 6) : "NA"; }

inline std::string pct(const std::optional<double>& v) { return v ? format_fixed(*v * 100.0, 2) : "-"; }

inline const char* scheme_label(Scheme s) { return s == Scheme::TFIDF ? "TF-IDF" : features::to_string(s); }

inline const char* classifier_title(ModelKind kind) {
  switch (kind) {
    case ModelKind::linear_svm: return "SVM";
    case ModelKind::naive_bayes: return "NB";
    case ModelKind::knn: return "KNN";
  }
  return "?";
}

inline const char* ngram_title(int n) {
  switch (n) {
    case 1: return "Unigram";
    case 2: return "Bigram";
    case 3: return "Tri-gram";
  }
  return "?";
}

inline size_t display_width(std::string_view s) {
  size_t w = 0;
  for (unsigned char c : s) w += (c & 0xC0) != 0x80;
  return w;
}

inline std::string pad(std::string_view s, size_t width, bool right = false) {
  const size_t w = display_width(s);
  const std::string fill(w < width ? width - w : 0, ' ');
  return right ? fill + std::string(s) : std::string(s) + fill;
}

}  // namespace detail

inline std::string render_csv(const EvaluationReport& report) {
  std::string out =
      "classifier,stem,scheme,ngram,accuracy,precision_pos,precision_neg,recall_pos,recall_neg,tp,fp,fn,tn\n";
  for (const auto& r : report.rows) {
    out += csv::join({learn::to_string(r.key.classifier), r.key.stem ? "yes" : "no", features::to_string(r.key.scheme),
                      std::to_string(r.key.ngram), detail::csv_metric(r.metrics.accuracy),
                      detail::csv_metric(r.metrics.precision_pos), detail::csv_metric(r.metrics.precision_neg),
                      detail::csv_metric(r.metrics.recall_pos), detail::csv_metric(r.metrics.recall_neg),
                      std::to_string(r.confusion.tp), std::to_string(r.confusion.fp), std::to_string(r.confusion.fn),
                      std::to_string(r.confusion.tn)});
    out.push_back('\n');
  }
  return out;
}

/// Percent cells for one classifier: one row per (stem, scheme), five values
/// (Acc, P pos, P neg, R pos, R neg) per n-gram order.
inline std::vector<std::vector<std::string>> table_cells(const EvaluationReport& report, ModelKind classifier) {
  std::vector<std::vector<std::string>> rows;
  for (bool stem : report.axes.stems) {
    for (Scheme s : report.axes.schemes) {
      std::vector<std::string> cells;
      for (int n : report.axes.ngrams) {
        const auto& m = report.row({classifier, stem, s, n}).metrics;
        for (const auto& v : {m.accuracy, m.precision_pos, m.precision_neg, m.recall_pos, m.recall_neg}) {
          cells.push_back(detail::pct(v));
        }
      }
      rows.push_back(std::move(cells));
    }
  }
  return rows;
}

inline std::string render_table(const EvaluationReport& report) {
  constexpr size_t kCol = 8;
  std::string out;
  for (size_t c = 0; c < report.axes.classifiers.size(); ++c) {
    const ModelKind kind = report.axes.classifiers[c].kind;
    if (c) out += "\n";
    out += std::string("Classification with ") + detail::classifier_title(kind) + "\n";
    std::string group = detail::pad("", 20);
    std::string head = detail::pad("Light Stem", 12) + detail::pad("", 8);
    for (int n : report.axes.ngrams) {
      group += "| " + detail::pad(detail::ngram_title(n), 5 * kCol);
      head += "| ";
      for (const char* h : {"Acc", "P.pos", "P.neg", "R.pos", "R.neg"}) head += detail::pad(h, kCol, true);
    }
    out += group + "\n" + head + "\n";
    const auto cells = table_cells(report, kind);
    size_t r = 0;
    for (bool stem : report.axes.stems) {
      bool first = true;
      for (Scheme s : report.axes.schemes) {
        std::string line = detail::pad(first ? (stem ? "Yes" : "No") : "", 12) + detail::pad(detail::scheme_label(s), 8);
        first = false;
        const auto& row = cells[r++];
        for (size_t i = 0; i < row.size(); ++i) {
          if (i % 5 == 0) line += "| ";
          line += detail::pad(row[i], kCol, true);
        }
        out += line + "\n";
      }
    }
  }
  return out;
}

}  // namespace maptter::eval
