#pragma once

// Naive Bayes, linear SVM and KNN behind one train/predict contract.
// Labels map positive -> +1, negative -> -1 throughout.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "maptter/error.hpp"
#include "maptter/featurization.hpp"
#include "maptter/labels.hpp"
#include "maptter/util.hpp"

namespace maptter::learn {

using features::DocumentVector;
using nlohmann::json;

struct LabeledDataset {
  std::vector<DocumentVector> vectors;
  std::vector<Label> labels;
  size_t dim = 0;

  size_t count(Label label) const { return static_cast<size_t>(std::count(labels.begin(), labels.end(), label)); }
};

namespace detail {

inline void check_vector(const DocumentVector& v, size_t dim) {
  if (!v.entries.empty() && v.entries.back().first >= dim) {
    throw Error(Errc::dimension_mismatch,
                "feature index " + std::to_string(v.entries.back().first) + " outside model dimension " +
                    std::to_string(dim),
                {{"dim", dim}, {"index", v.entries.back().first}});
  }
}

inline void validate(const LabeledDataset& data) {
  if (data.vectors.size() != data.labels.size()) {
    throw Error(Errc::invalid_argument, "vectors and labels differ in length");
  }
  for (Label l : data.labels) {
    if (l == Label::neutral) throw Error(Errc::invalid_argument, "training labels must be positive or negative");
  }
  if (data.count(Label::positive) == 0 || data.count(Label::negative) == 0) {
    throw Error(Errc::single_class, "training data must contain both classes",
                {{"positive", data.count(Label::positive)}, {"negative", data.count(Label::negative)}});
  }
  for (const auto& v : data.vectors) check_vector(v, data.dim);
}

inline constexpr size_t cls(Label l) { return l == Label::positive ? 0 : 1; }

}  // namespace detail

enum class ModelKind { naive_bayes, linear_svm, knn };

inline const char* to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::naive_bayes: return "nb";
    case ModelKind::linear_svm: return "svm";
    case ModelKind::knn: return "knn";
  }
  return "?";
}

inline ModelKind parse_model_kind(std::string_view text) {
  if (text == "nb" || text == "naive_bayes") return ModelKind::naive_bayes;
  if (text == "svm" || text == "linear_svm") return ModelKind::linear_svm;
  if (text == "knn") return ModelKind::knn;
  throw Error(Errc::parse_error, "unknown classifier '" + std::string(text) + "'");
}

struct NaiveBayesParams {
  std::array<double, 2> log_prior{};                 // [positive, negative]
  std::array<std::vector<double>, 2> log_likelihood;  // per class, length dim
  double alpha = 1.0;
};

struct SvmParams {
  std::vector<double> w;
  double b = 0;
  double cost = 1.0;
  bool converged = true;
  uint64_t iterations = 0;
};

struct KnnParams {
  std::vector<DocumentVector> vectors;
  std::vector<Label> labels;
  size_t k = 5;
};

struct TrainedModel {
  ModelKind kind = ModelKind::naive_bayes;
  size_t dim = 0;
  std::variant<NaiveBayesParams, SvmParams, KnnParams> params;
};

struct Prediction {
  Label label = Label::positive;
  double score = 0;  // NB log-posterior margin, SVM signed distance, KNN vote fraction
};

// ---------------------------------------------------------------------------
// Multinomial naive Bayes

inline TrainedModel train_naive_bayes(const LabeledDataset& data, double alpha = 1.0) {
  detail::validate(data);
  if (!(alpha >= 0)) throw Error(Errc::invalid_argument, "alpha must be >= 0");
  NaiveBayesParams p;
  p.alpha = alpha;
  std::array<std::vector<double>, 2> mass{std::vector<double>(data.dim, 0.0), std::vector<double>(data.dim, 0.0)};
  std::array<double, 2> total{};
  std::array<double, 2> docs{};
  for (size_t i = 0; i < data.vectors.size(); ++i) {
    const size_t c = detail::cls(data.labels[i]);
    docs[c] += 1;
    for (const auto& [idx, w] : data.vectors[i].entries) {
      mass[c][idx] += w;
      total[c] += w;
    }
  }
  const double n = static_cast<double>(data.vectors.size());
  for (size_t c = 0; c < 2; ++c) {
    p.log_prior[c] = std::log(docs[c] / n);
    const double denom = total[c] + alpha * static_cast<double>(data.dim);
    p.log_likelihood[c].resize(data.dim);
    for (size_t t = 0; t < data.dim; ++t) p.log_likelihood[c][t] = std::log((mass[c][t] + alpha) / denom);
  }
  return TrainedModel{ModelKind::naive_bayes, data.dim, std::move(p)};
}

// ---------------------------------------------------------------------------
// Linear SVM

struct SvmOptions {
  double cost = 1.0;
  double tolerance = 1e-4;
  uint64_t max_iters = 1'000'000;
  uint64_t seed = 0;
};

/// Primal objective 1/2 |w|^2 + C * sum hinge(y (w.x + b)).
inline double svm_objective(std::span<const double> w, double b, double cost, const LabeledDataset& data) {
  double reg = 0;
  for (double x : w) reg += x * x;
  double loss = 0;
  for (size_t i = 0; i < data.vectors.size(); ++i) {
    double f = b;
    for (const auto& [idx, x] : data.vectors[i].entries) f += w[idx] * x;
    loss += std::max(0.0, 1.0 - label_sign(data.labels[i]) * f);
  }
  return 0.5 * reg + cost * loss;
}

namespace detail {

/// Linear-kernel Gram matrix, cached when it fits in a modest budget.
class Gram {
 public:
  explicit Gram(const std::vector<DocumentVector>& vectors) : vectors_(vectors), n_(vectors.size()) {
    if (n_ <= kCacheLimit) {
      cache_.resize(n_ * n_);
      for (size_t i = 0; i < n_; ++i) {
        for (size_t j = i; j < n_; ++j) cache_[i * n_ + j] = cache_[j * n_ + i] = features::dot(vectors[i], vectors[j]);
      }
    }
  }

  double operator()(size_t i, size_t j) const {
    return cache_.empty() ? features::dot(vectors_[i], vectors_[j]) : cache_[i * n_ + j];
  }

 private:
  static constexpr size_t kCacheLimit = 4096;
  const std::vector<DocumentVector>& vectors_;
  size_t n_;
  std::vector<double> cache_;
};

}  // namespace detail

/// Soft-margin linear SVM with an unregularized bias, solved in the dual by
/// SMO with second-order working-set selection. Stops when the maximal KKT
/// violation drops below `tolerance`. The seed fixes the scan order used to
/// break ties between equally violating pairs.
inline TrainedModel train_linear_svm(const LabeledDataset& data, const SvmOptions& options = {}) {
  detail::validate(data);
  if (!(options.cost > 0)) throw Error(Errc::invalid_argument, "SVM cost must be > 0");
  if (!(options.tolerance > 0)) throw Error(Errc::invalid_argument, "SVM tolerance must be > 0");

  const size_t n = data.vectors.size();
  const double C = options.cost;
  constexpr double kTau = 1e-12;

  std::vector<double> y(n);
  for (size_t i = 0; i < n; ++i) y[i] = label_sign(data.labels[i]);
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  Rng rng(options.seed);
  seeded_shuffle(std::span<size_t>(order), rng);

  const detail::Gram K(data.vectors);
  std::vector<double> alpha(n, 0.0);
  std::vector<double> grad(n, -1.0);  // gradient of 1/2 a'Qa - e'a

  auto in_up = [&](size_t t) { return (y[t] > 0 && alpha[t] < C) || (y[t] < 0 && alpha[t] > 0); };
  auto in_low = [&](size_t t) { return (y[t] > 0 && alpha[t] > 0) || (y[t] < 0 && alpha[t] < C); };

  SvmParams p;
  p.cost = C;
  p.converged = false;
  uint64_t iter = 0;
  for (; iter < options.max_iters; ++iter) {
    double g_max = -std::numeric_limits<double>::infinity();
    size_t i = n;
    for (size_t t : order) {
      if (in_up(t) && -y[t] * grad[t] > g_max) {
        g_max = -y[t] * grad[t];
        i = t;
      }
    }
    double g_min = std::numeric_limits<double>::infinity();
    size_t j = n;
    double best = std::numeric_limits<double>::infinity();
    for (size_t t : order) {
      if (!in_low(t)) continue;
      const double v = -y[t] * grad[t];
      g_min = std::min(g_min, v);
      if (i == n) continue;
      const double diff = g_max - v;
      if (diff > 0) {
        double a = K(i, i) + K(t, t) - 2.0 * K(i, t);
        if (a <= 0) a = kTau;
        const double obj = -(diff * diff) / a;
        if (obj < best) {
          best = obj;
          j = t;
        }
      }
    }
    if (i == n || j == n || g_max - g_min < options.tolerance) {
      p.converged = true;
      break;
    }

    const double old_ai = alpha[i];
    const double old_aj = alpha[j];
    double quad = K(i, i) + K(j, j) - 2.0 * K(i, j);
    if (quad <= 0) quad = kTau;
    if (y[i] != y[j]) {
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0) {
        if (alpha[j] < 0) {
          alpha[j] = 0;
          alpha[i] = diff;
        }
      } else if (alpha[i] < 0) {
        alpha[i] = 0;
        alpha[j] = -diff;
      }
      if (diff > 0) {
        if (alpha[i] > C) {
          alpha[i] = C;
          alpha[j] = C - diff;
        }
      } else if (alpha[j] > C) {
        alpha[j] = C;
        alpha[i] = C + diff;
      }
    } else {
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > C) {
        if (alpha[i] > C) {
          alpha[i] = C;
          alpha[j] = sum - C;
        }
      } else if (alpha[j] < 0) {
        alpha[j] = 0;
        alpha[i] = sum;
      }
      if (sum > C) {
        if (alpha[j] > C) {
          alpha[j] = C;
          alpha[i] = sum - C;
        }
      } else if (alpha[i] < 0) {
        alpha[i] = 0;
        alpha[j] = sum;
      }
    }
    const double di = (alpha[i] - old_ai) * y[i];
    const double dj = (alpha[j] - old_aj) * y[j];
    for (size_t t = 0; t < n; ++t) grad[t] += y[t] * (K(t, i) * di + K(t, j) * dj);
  }
  p.iterations = iter;

  // Bias from free support vectors, else the midpoint of the feasible interval.
  double ub = std::numeric_limits<double>::infinity();
  double lb = -std::numeric_limits<double>::infinity();
  double free_sum = 0;
  size_t free_count = 0;
  for (size_t t = 0; t < n; ++t) {
    const double yg = y[t] * grad[t];
    if (alpha[t] >= C) {
      if (y[t] < 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else if (alpha[t] <= 0) {
      if (y[t] > 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else {
      free_sum += yg;
      ++free_count;
    }
  }
  const double rho = free_count > 0 ? free_sum / static_cast<double>(free_count) : (ub + lb) / 2;
  p.b = -rho;

  p.w.assign(data.dim, 0.0);
  for (size_t t = 0; t < n; ++t) {
    if (alpha[t] == 0) continue;
    for (const auto& [idx, x] : data.vectors[t].entries) p.w[idx] += alpha[t] * y[t] * x;
  }
  return TrainedModel{ModelKind::linear_svm, data.dim, std::move(p)};
}

// ---------------------------------------------------------------------------
// KNN

inline TrainedModel train_knn(const LabeledDataset& data, size_t k = 5) {
  detail::validate(data);
  if (k < 1) throw Error(Errc::invalid_argument, "k must be >= 1");
  if (k > data.vectors.size()) {
    throw Error(Errc::k_too_large, "k = " + std::to_string(k) + " exceeds training size " +
                                       std::to_string(data.vectors.size()));
  }
  return TrainedModel{ModelKind::knn, data.dim, KnnParams{data.vectors, data.labels, k}};
}

/// Cosine similarity; a zero-norm side gives 0.
inline double cosine(const DocumentVector& a, const DocumentVector& b) {
  const double na = std::sqrt(features::squared_norm(a));
  const double nb = std::sqrt(features::squared_norm(b));
  if (na == 0 || nb == 0) return 0;
  return features::dot(a, b) / (na * nb);
}

// ---------------------------------------------------------------------------
// Prediction

namespace detail {

inline Prediction predict_nb(const NaiveBayesParams& p, const DocumentVector& v) {
  std::array<double, 2> joint = p.log_prior;
  for (size_t c = 0; c < 2; ++c) {
    for (const auto& [idx, w] : v.entries) joint[c] += w * p.log_likelihood[c][idx];
  }
  double margin = joint[0] - joint[1];
  if (std::isnan(margin)) margin = p.log_prior[0] - p.log_prior[1];
  return {margin >= 0 ? Label::positive : Label::negative, margin};
}

inline Prediction predict_svm(const SvmParams& p, const DocumentVector& v) {
  double f = p.b;
  for (const auto& [idx, x] : v.entries) f += p.w[idx] * x;
  return {f >= 0 ? Label::positive : Label::negative, f};
}

/// Neighbors ordered by (similarity desc, training index asc); a split vote
/// goes to the nearest neighbor's label.
inline Prediction predict_knn(const KnnParams& p, const DocumentVector& v) {
  std::vector<std::pair<double, size_t>> sims(p.vectors.size());
  for (size_t i = 0; i < p.vectors.size(); ++i) sims[i] = {cosine(v, p.vectors[i]), i};
  auto nearer = [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); };
  std::partial_sort(sims.begin(), sims.begin() + static_cast<std::ptrdiff_t>(p.k), sims.end(), nearer);
  size_t positive = 0;
  for (size_t r = 0; r < p.k; ++r) positive += p.labels[sims[r].second] == Label::positive;
  const size_t negative = p.k - positive;
  Label label;
  if (positive != negative) {
    label = positive > negative ? Label::positive : Label::negative;
  } else {
    label = p.labels[sims.front().second];
  }
  const size_t votes = label == Label::positive ? positive : negative;
  return {label, static_cast<double>(votes) / static_cast<double>(p.k)};
}

}  // namespace detail

inline Prediction predict(const TrainedModel& model, const DocumentVector& vector) {
  detail::check_vector(vector, model.dim);
  if (vector.dim != 0 && vector.dim != model.dim) {
    throw Error(Errc::dimension_mismatch,
                "vector built in a space of size " + std::to_string(vector.dim) + ", model expects " +
                    std::to_string(model.dim),
                {{"dim", model.dim}, {"vector_dim", vector.dim}});
  }
  switch (model.kind) {
    case ModelKind::naive_bayes: return detail::predict_nb(std::get<NaiveBayesParams>(model.params), vector);
    case ModelKind::linear_svm: return detail::predict_svm(std::get<SvmParams>(model.params), vector);
    case ModelKind::knn: return detail::predict_knn(std::get<KnnParams>(model.params), vector);
  }
  throw Error(Errc::invalid_argument, "unknown model kind");
}

// ---------------------------------------------------------------------------
// Serialization. Reals are written as 17-significant-digit strings so a
// round trip is bit-exact.

inline constexpr int kModelFormatVersion = 1;

namespace detail {

inline json reals(std::span<const double> xs) {
  json out = json::array();
  for (double x : xs) out.push_back(format_double17(x));
  return out;
}

inline std::vector<double> parse_reals(const json& j) {
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& x : j) out.push_back(parse_double(x.get<std::string>()));
  return out;
}

inline json vector_json(const DocumentVector& v) {
  json entries = json::array();
  for (const auto& [idx, w] : v.entries) entries.push_back(json::array({idx, format_double17(w)}));
  return {{"scheme", features::to_string(v.scheme)}, {"dim", v.dim}, {"entries", entries}};
}

inline DocumentVector vector_from_json(const json& j) {
  DocumentVector v;
  v.scheme = features::parse_scheme(j.at("scheme").get<std::string>());
  v.dim = j.at("dim").get<size_t>();
  for (const auto& e : j.at("entries")) {
    v.entries.emplace_back(e.at(0).get<uint32_t>(), parse_double(e.at(1).get<std::string>()));
  }
  return v;
}

}  // namespace detail

inline json to_json(const TrainedModel& model) {
  json j{{"format", "maptter-model"}, {"version", kModelFormatVersion}, {"kind", to_string(model.kind)},
         {"dim", model.dim}};
  switch (model.kind) {
    case ModelKind::naive_bayes: {
      const auto& p = std::get<NaiveBayesParams>(model.params);
      j["params"] = {{"alpha", format_double17(p.alpha)},
                     {"log_prior", detail::reals(p.log_prior)},
                     {"log_likelihood", json::array({detail::reals(p.log_likelihood[0]), detail::reals(p.log_likelihood[1])})}};
      break;
    }
    case ModelKind::linear_svm: {
      const auto& p = std::get<SvmParams>(model.params);
      j["params"] = {{"w", detail::reals(p.w)},
                     {"b", format_double17(p.b)},
                     {"cost", format_double17(p.cost)},
                     {"converged", p.converged},
                     {"iterations", p.iterations}};
      break;
    }
    case ModelKind::knn: {
      const auto& p = std::get<KnnParams>(model.params);
      json vectors = json::array();
      json labels = json::array();
      for (size_t i = 0; i < p.vectors.size(); ++i) {
        vectors.push_back(detail::vector_json(p.vectors[i]));
        labels.push_back(to_string(p.labels[i]));
      }
      j["params"] = {{"k", p.k}, {"vectors", vectors}, {"labels", labels}};
      break;
    }
  }
  return j;
}

inline TrainedModel model_from_json(const json& j) {
  try {
    if (j.at("format").get<std::string>() != "maptter-model") throw Error(Errc::parse_error, "not a model file");
    if (j.at("version").get<int>() != kModelFormatVersion) {
      throw Error(Errc::parse_error, "unsupported model format version " + j.at("version").dump());
    }
    TrainedModel model;
    model.kind = parse_model_kind(j.at("kind").get<std::string>());
    model.dim = j.at("dim").get<size_t>();
    const json& pj = j.at("params");
    switch (model.kind) {
      case ModelKind::naive_bayes: {
        NaiveBayesParams p;
        p.alpha = parse_double(pj.at("alpha").get<std::string>());
        const auto prior = detail::parse_reals(pj.at("log_prior"));
        if (prior.size() != 2) throw Error(Errc::parse_error, "log_prior must have two entries");
        p.log_prior = {prior[0], prior[1]};
        p.log_likelihood[0] = detail::parse_reals(pj.at("log_likelihood").at(0));
        p.log_likelihood[1] = detail::parse_reals(pj.at("log_likelihood").at(1));
        model.params = std::move(p);
        break;
      }
      case ModelKind::linear_svm: {
        SvmParams p;
        p.w = detail::parse_reals(pj.at("w"));
        p.b = parse_double(pj.at("b").get<std::string>());
        p.cost = parse_double(pj.at("cost").get<std::string>());
        p.converged = pj.at("converged").get<bool>();
        p.iterations = pj.at("iterations").get<uint64_t>();
        model.params = std::move(p);
        break;
      }
      case ModelKind::knn: {
        KnnParams p;
        p.k = pj.at("k").get<size_t>();
        for (const auto& v : pj.at("vectors")) p.vectors.push_back(detail::vector_from_json(v));
        for (const auto& l : pj.at("labels")) p.labels.push_back(parse_label(l.get<std::string>()));
        model.params = std::move(p);
        break;
      }
    }
    return model;
  } catch (const json::exception& e) {
    throw Error(Errc::parse_error, std::string("malformed model JSON: ") + e.what());
  }
}

}  // namespace maptter::learn
