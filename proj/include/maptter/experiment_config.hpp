#pragma once

// Declarative experiment grid file. INI syntax:
//
//   [grid]
//   stem = both            ; yes | no | both
//   schemes = TO, BTO, TF, TFIDF
//   ngrams = 1, 2, 3
//   classifiers = nb, svm, knn
//   [cv]
//   k_folds = 10
//   seed = 7
//   [nb]   alpha = 1
//   [svm]  cost = 1, tolerance = 1e-4, max_iters = 1000000
//   [knn]  k = 5
//   [text] stemmer_rules = <path>, stoplist = <path>, min_df = 1

#include <charconv>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "maptter/error.hpp"
#include "maptter/evaluation.hpp"
#include "maptter/util.hpp"

namespace maptter {

struct ExperimentConfig {
  eval::GridAxes axes;
  size_t k_folds = 10;
  std::optional<uint64_t> seed;  // required before running; no clock default
  eval::TextOptions text;

  static ExperimentConfig defaults() {
    ExperimentConfig cfg;
    for (auto kind : {learn::ModelKind::naive_bayes, learn::ModelKind::linear_svm, learn::ModelKind::knn}) {
      eval::ClassifierConfig c;
      c.kind = kind;
      cfg.axes.classifiers.push_back(c);
    }
    return cfg;
  }
};

namespace detail {

inline std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto t = trim(item);
    if (!t.empty()) out.emplace_back(t);
  }
  return out;
}

template <typename T>
T get_or(const boost::property_tree::ptree& tree, const std::string& path, T fallback) {
  try {
    return tree.get<T>(path, fallback);
  } catch (const boost::property_tree::ptree_error& e) {
    throw Error(Errc::parse_error, "config key '" + path + "': " + e.what());
  }
}

}  // namespace detail

/// `base_dir` resolves relative file paths in the [text] section.
inline ExperimentConfig parse_experiment_config(const std::string& contents,
                                                const std::filesystem::path& base_dir = {}) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(contents);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(Errc::parse_error, std::string("experiment config: ") + e.what());
  }

  ExperimentConfig cfg;
  const std::string stem = detail::get_or<std::string>(tree, "grid.stem", "both");
  if (stem == "both") {
    cfg.axes.stems = {false, true};
  } else if (stem == "yes") {
    cfg.axes.stems = {true};
  } else if (stem == "no") {
    cfg.axes.stems = {false};
  } else {
    throw Error(Errc::parse_error, "grid.stem must be yes, no or both");
  }

  cfg.axes.schemes.clear();
  for (const auto& s : detail::split_list(detail::get_or<std::string>(tree, "grid.schemes", "TO, BTO, TF, TFIDF"))) {
    cfg.axes.schemes.push_back(features::parse_scheme(s));
  }
  cfg.axes.ngrams.clear();
  for (const auto& s : detail::split_list(detail::get_or<std::string>(tree, "grid.ngrams", "1, 2, 3"))) {
    if (s != "1" && s != "2" && s != "3") throw Error(Errc::parse_error, "grid.ngrams entries must be 1, 2 or 3");
    cfg.axes.ngrams.push_back(std::stoi(s));
  }

  eval::ClassifierConfig base;
  base.nb_alpha = detail::get_or<double>(tree, "nb.alpha", 1.0);
  base.svm.cost = detail::get_or<double>(tree, "svm.cost", 1.0);
  base.svm.tolerance = detail::get_or<double>(tree, "svm.tolerance", 1e-4);
  base.svm.max_iters = detail::get_or<uint64_t>(tree, "svm.max_iters", 1'000'000);
  base.knn_k = detail::get_or<size_t>(tree, "knn.k", 5);
  for (const auto& s : detail::split_list(detail::get_or<std::string>(tree, "grid.classifiers", "nb, svm, knn"))) {
    eval::ClassifierConfig c = base;
    c.kind = learn::parse_model_kind(s);
    cfg.axes.classifiers.push_back(c);
  }

  cfg.k_folds = detail::get_or<size_t>(tree, "cv.k_folds", 10);
  if (auto seed = tree.get_optional<std::string>("cv.seed")) {
    const std::string text(trim(*seed));
    uint64_t value = 0;
    const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || end != text.data() + text.size() || text.empty()) {
      throw Error(Errc::parse_error, "cv.seed must be a non-negative integer");
    }
    cfg.seed = value;
  }
  cfg.axes.min_df = detail::get_or<size_t>(tree, "text.min_df", 1);

  auto resolve = [&](const std::string& p) { return base_dir.empty() ? std::filesystem::path(p) : base_dir / p; };
  if (auto rules = tree.get_optional<std::string>("text.stemmer_rules")) {
    cfg.text.stemmer = text::StemmerRules::load(resolve(*rules));
  }
  if (auto stoplist = tree.get_optional<std::string>("text.stoplist")) {
    cfg.text.stop_words = read_list_file(resolve(*stoplist));
  }

  if (cfg.axes.stems.empty() || cfg.axes.schemes.empty() || cfg.axes.ngrams.empty() || cfg.axes.classifiers.empty()) {
    throw Error(Errc::parse_error, "every grid axis needs at least one value");
  }
  for (const auto& c : cfg.axes.classifiers) {
    if (c.svm.cost <= 0 || c.svm.tolerance <= 0 || c.nb_alpha < 0 || c.knn_k < 1) {
      throw Error(Errc::parse_error, "classifier hyperparameter out of range");
    }
  }
  cfg.axes.canonicalize();
  return cfg;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  return parse_experiment_config(read_file(path), path.parent_path());
}

}  // namespace maptter
