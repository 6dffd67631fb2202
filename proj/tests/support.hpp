#pragma once

// Reference implementations and data generators shared by the unit tests
// and the acceptance runner. Oracles are written from the definitions,
// without reusing library internals.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "maptter/annotation.hpp"
#include "maptter/classifiers.hpp"
#include "maptter/featurization.hpp"
#include "maptter/labels.hpp"

namespace testing_support {

using maptter::Label;

/// Kappa straight from the formula over raw label sequences.
inline double oracle_kappa(const std::vector<Label>& a, const std::vector<Label>& b) {
  const double n = static_cast<double>(a.size());
  double agree = 0;
  double chance = 0;
  for (size_t i = 0; i < a.size(); ++i) agree += a[i] == b[i];
  for (Label l : {Label::positive, Label::negative, Label::neutral}) {
    double ca = 0;
    double cb = 0;
    for (size_t i = 0; i < a.size(); ++i) {
      ca += a[i] == l;
      cb += b[i] == l;
    }
    chance += (ca / n) * (cb / n);
  }
  const double pa = agree / n;
  return (pa - chance) / (1 - chance);
}

/// Expands a 3x3 contingency table into two aligned label sequences.
inline std::pair<std::vector<Label>, std::vector<Label>> expand(const maptter::annotation::Contingency& t) {
  std::pair<std::vector<Label>, std::vector<Label>> out;
  for (size_t i = 0; i < 3; ++i) {
    for (size_t j = 0; j < 3; ++j) {
      for (uint64_t c = 0; c < t[i][j]; ++c) {
        out.first.push_back(static_cast<Label>(i));
        out.second.push_back(static_cast<Label>(j));
      }
    }
  }
  return out;
}

/// Ternary search for the minimum of a convex function on [lo, hi].
inline double ternary_min(const std::function<double(double)>& f, double lo, double hi, int iters = 100) {
  for (int i = 0; i < iters; ++i) {
    const double m1 = lo + (hi - lo) / 3;
    const double m2 = hi - (hi - lo) / 3;
    if (f(m1) <= f(m2)) {
      hi = m2;
    } else {
      lo = m1;
    }
  }
  return f((lo + hi) / 2);
}

/// Primal hinge objective minimum for 2-D data by nested ternary search over
/// (b, w1, w2); partial minima of a jointly convex function stay convex.
inline double oracle_svm_optimum(const std::vector<std::array<double, 2>>& x, const std::vector<int>& y, double cost,
                                 double box = 4.0, int iters = 80) {
  auto objective = [&](double w1, double w2, double b) {
    double loss = 0;
    for (size_t i = 0; i < x.size(); ++i) {
      loss += std::max(0.0, 1.0 - y[i] * (w1 * x[i][0] + w2 * x[i][1] + b));
    }
    return 0.5 * (w1 * w1 + w2 * w2) + cost * loss;
  };
  return ternary_min(
      [&](double b) {
        return ternary_min(
            [&](double w1) { return ternary_min([&](double w2) { return objective(w1, w2, b); }, -box, box, iters); },
            -box, box, iters);
      },
      -box, box, iters);
}

/// Exhaustive-scan KNN: dense cosine, stable order (similarity desc, index asc),
/// majority vote with the nearest neighbor breaking a split.
inline Label oracle_knn(const std::vector<std::vector<double>>& train, const std::vector<Label>& labels,
                        const std::vector<double>& query, size_t k) {
  auto sq = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x * x;
    return s;
  };
  std::vector<std::pair<double, size_t>> sims;
  const double nq = std::sqrt(sq(query));
  for (size_t i = 0; i < train.size(); ++i) {
    double d = 0;
    for (size_t t = 0; t < query.size(); ++t) {
      if (query[t] != 0 && train[i][t] != 0) d += query[t] * train[i][t];
    }
    const double nt = std::sqrt(sq(train[i]));
    sims.push_back({nq == 0 || nt == 0 ? 0.0 : d / (nq * nt), i});
  }
  std::stable_sort(sims.begin(), sims.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  int pos = 0;
  int neg = 0;
  for (size_t r = 0; r < k; ++r) (labels[sims[r].second] == Label::positive ? pos : neg)++;
  if (pos == neg) return labels[sims[0].second];
  return pos > neg ? Label::positive : Label::negative;
}

inline maptter::features::DocumentVector sparse_of(const std::vector<double>& dense) {
  maptter::features::DocumentVector v;
  v.dim = dense.size();
  for (size_t i = 0; i < dense.size(); ++i) {
    if (dense[i] != 0) v.entries.push_back({static_cast<uint32_t>(i), dense[i]});
  }
  return v;
}

/// Class-separable Arabic corpus: each class draws words from its own
/// letter alphabet and every document carries its class marker word.
inline std::vector<maptter::annotation::GoldDocument> separable_gold(size_t per_class, uint64_t seed) {
  const std::vector<std::string> pos_letters{"ب", "ث", "ج", "ح", "خ", "ذ"};
  const std::vector<std::string> neg_letters{"س", "ش", "ص", "ض", "ط", "ظ"};
  std::mt19937_64 rng(seed);
  auto vocab = [&](const std::vector<std::string>& letters) {
    std::vector<std::string> words;
    for (size_t w = 0; w < 12; ++w) {
      std::string word;
      const size_t len = 3 + rng() % 3;
      for (size_t c = 0; c < len; ++c) word += letters[rng() % letters.size()];
      words.push_back(word);
    }
    return words;
  };
  const auto pos_vocab = vocab(pos_letters);
  const auto neg_vocab = vocab(neg_letters);
  std::vector<maptter::annotation::GoldDocument> docs;
  for (size_t i = 0; i < 2 * per_class; ++i) {
    const bool positive = i % 2 == 0;
    const auto& words = positive ? pos_vocab : neg_vocab;
    std::string text = positive ? "بثجح" : "سشصض";
    const size_t len = 3 + rng() % 4;
    for (size_t w = 0; w < len; ++w) text += " " + words[rng() % words.size()];
    docs.push_back({"d" + std::to_string(i), text, positive ? Label::positive : Label::negative});
  }
  return docs;
}

inline std::vector<Label> random_labels(std::mt19937_64& rng, size_t n, int classes = 3) {
  std::vector<Label> out(n);
  for (auto& l : out) l = static_cast<Label>(rng() % static_cast<uint64_t>(classes));
  return out;
}

/// The ten-point separable set used for the SVM optimality checks.
inline const std::vector<std::array<double, 2>>& svm_points() {
  static const std::vector<std::array<double, 2>> points{{2, 2},   {3, 1},     {2.5, 3},   {4, 2},      {3, 3.5},
                                                         {-1, -1}, {-2, 0.5}, {0, -2},    {-1.5, -2.5}, {-3, -1}};
  return points;
}

inline const std::vector<int>& svm_signs() {
  static const std::vector<int> signs{1, 1, 1, 1, 1, -1, -1, -1, -1, -1};
  return signs;
}

inline maptter::learn::LabeledDataset svm_dataset() {
  maptter::learn::LabeledDataset data;
  data.dim = 2;
  for (size_t i = 0; i < svm_points().size(); ++i) {
    data.vectors.push_back(sparse_of({svm_points()[i][0], svm_points()[i][1]}));
    data.labels.push_back(svm_signs()[i] > 0 ? Label::positive : Label::negative);
  }
  return data;
}

}  // namespace testing_support
