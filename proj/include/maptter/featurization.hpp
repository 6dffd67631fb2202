#pragma once

// Word n-grams, vocabularies with document frequencies, and the four
// weighting schemes (TO, BTO, TF, TF-IDF) as sparse vectors.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "maptter/error.hpp"

namespace maptter::features {

struct NGramConfig {
  int max_n = 1;
  std::string joiner = "_";
};

/// All contiguous k-grams for k = 1..max_n, ordered by (k, position).
inline std::vector<std::string> generate_ngrams(std::span<const std::string> tokens, const NGramConfig& config) {
  if (config.max_n < 1 || config.max_n > 3) {
    throw Error(Errc::invalid_argument, "n-gram order must be 1, 2 or 3");
  }
  std::vector<std::string> grams;
  for (size_t k = 1; k <= static_cast<size_t>(config.max_n) && k <= tokens.size(); ++k) {
    for (size_t i = 0; i + k <= tokens.size(); ++i) {
      std::string gram = tokens[i];
      for (size_t j = 1; j < k; ++j) {
        gram += config.joiner;
        gram += tokens[i + j];
      }
      grams.push_back(std::move(gram));
    }
  }
  return grams;
}

enum class Scheme { TO, BTO, TF, TFIDF };

inline constexpr const char* to_string(Scheme scheme) {
  switch (scheme) {
    case Scheme::TO: return "TO";
    case Scheme::BTO: return "BTO";
    case Scheme::TF: return "TF";
    case Scheme::TFIDF: return "TFIDF";
  }
  return "?";
}

inline Scheme parse_scheme(std::string_view text) {
  if (text == "TO") return Scheme::TO;
  if (text == "BTO") return Scheme::BTO;
  if (text == "TF") return Scheme::TF;
  if (text == "TFIDF" || text == "TF-IDF") return Scheme::TFIDF;
  throw Error(Errc::parse_error, "unknown weighting scheme '" + std::string(text) + "'");
}

/// Immutable vocabulary; indices are dense and follow first appearance.
class FeatureSpace {
 public:
  const std::vector<std::string>& terms() const { return terms_; }
  size_t size() const { return terms_.size(); }
  size_t n_docs() const { return n_docs_; }
  size_t min_df() const { return min_df_; }

  std::optional<uint32_t> index_of(const std::string& term) const {
    auto it = index_.find(term);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  size_t doc_freq(uint32_t index) const { return doc_freq_.at(index); }

  size_t doc_freq(const std::string& term) const {
    auto idx = index_of(term);
    return idx ? doc_freq_[*idx] : 0;
  }

  /// term<TAB>index<TAB>doc_freq, one line per term in index order.
  std::string dump_tsv() const {
    std::string out;
    for (size_t i = 0; i < terms_.size(); ++i) {
      out += terms_[i];
      out += '\t';
      out += std::to_string(i);
      out += '\t';
      out += std::to_string(doc_freq_[i]);
      out += '\n';
    }
    return out;
  }

  friend FeatureSpace build_feature_space(std::span<const std::vector<std::string>> documents, size_t min_df);

 private:
  std::vector<std::string> terms_;
  std::unordered_map<std::string, uint32_t> index_;
  std::vector<size_t> doc_freq_;
  size_t n_docs_ = 0;
  size_t min_df_ = 1;
};

inline FeatureSpace build_feature_space(std::span<const std::vector<std::string>> documents, size_t min_df = 1) {
  if (documents.empty()) throw Error(Errc::empty_corpus, "cannot build a feature space from zero documents");
  if (min_df < 1) throw Error(Errc::invalid_argument, "min_df must be >= 1");
  std::vector<std::string> order;
  std::unordered_map<std::string, size_t> df;
  for (const auto& doc : documents) {
    std::unordered_set<std::string_view> seen;
    for (const auto& term : doc) {
      if (!seen.insert(term).second) continue;
      auto [it, inserted] = df.try_emplace(term, 0);
      if (inserted) order.push_back(term);
      ++it->second;
    }
  }
  FeatureSpace space;
  space.n_docs_ = documents.size();
  space.min_df_ = min_df;
  for (const auto& term : order) {
    const size_t count = df.at(term);
    if (count < min_df) continue;
    space.index_.emplace(term, static_cast<uint32_t>(space.terms_.size()));
    space.terms_.push_back(term);
    space.doc_freq_.push_back(count);
  }
  return space;
}

/// Sparse vector sorted by index, no explicit zeros. `dim` is the size of
/// the space it was built in.
struct DocumentVector {
  std::vector<std::pair<uint32_t, double>> entries;
  Scheme scheme = Scheme::TO;
  size_t dim = 0;

  double weight(uint32_t index) const {
    for (const auto& [i, w] : entries) {
      if (i == index) return w;
    }
    return 0.0;
  }
};

inline double dot(const DocumentVector& a, const DocumentVector& b) {
  double sum = 0;
  auto ia = a.entries.begin();
  auto ib = b.entries.begin();
  while (ia != a.entries.end() && ib != b.entries.end()) {
    if (ia->first < ib->first) {
      ++ia;
    } else if (ib->first < ia->first) {
      ++ib;
    } else {
      sum += ia->second * ib->second;
      ++ia;
      ++ib;
    }
  }
  return sum;
}

inline double squared_norm(const DocumentVector& v) {
  double sum = 0;
  for (const auto& [i, w] : v.entries) sum += w * w;
  return sum;
}

/// With c(t) the in-vocabulary count and L the in-vocabulary length:
/// TO c(t); BTO 1; TF c(t)/L; TF-IDF c(t)/L * ln(N/df(t)). OOV terms are ignored.
inline DocumentVector vectorize(std::span<const std::string> terms, const FeatureSpace& space, Scheme scheme) {
  std::unordered_map<uint32_t, uint64_t> counts;
  uint64_t length = 0;
  for (const auto& term : terms) {
    if (auto idx = space.index_of(term)) {
      ++counts[*idx];
      ++length;
    }
  }
  DocumentVector vec;
  vec.scheme = scheme;
  vec.dim = space.size();
  vec.entries.reserve(counts.size());
  const double n_docs = static_cast<double>(space.n_docs());
  for (const auto& [idx, c] : counts) {
    double w = 0;
    switch (scheme) {
      case Scheme::TO: w = static_cast<double>(c); break;
      case Scheme::BTO: w = 1.0; break;
      case Scheme::TF: w = static_cast<double>(c) / static_cast<double>(length); break;
      case Scheme::TFIDF:
        w = static_cast<double>(c) / static_cast<double>(length) *
            std::log(n_docs / static_cast<double>(space.doc_freq(idx)));
        break;
    }
    if (w != 0.0) vec.entries.emplace_back(idx, w);
  }
  std::sort(vec.entries.begin(), vec.entries.end());
  return vec;
}

}  // namespace maptter::features
