#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "maptter/featurization.hpp"

using namespace maptter;
using namespace maptter::features;
using Catch::Matchers::WithinAbs;

using Terms = std::vector<std::string>;

TEST_CASE("generate_ngrams examples") {
  const Terms abc{"a", "b", "c"};
  CHECK(generate_ngrams(abc, {2, "_"}) == Terms{"a", "b", "c", "a_b", "b_c"});
  CHECK(generate_ngrams(abc, {3, "_"}) == Terms{"a", "b", "c", "a_b", "b_c", "a_b_c"});
  CHECK(generate_ngrams(Terms{"a"}, {3, "_"}) == Terms{"a"});
  CHECK(generate_ngrams(Terms{}, {2, "_"}).empty());
  CHECK(generate_ngrams(abc, {2, "+"})[3] == "a+b");
  CHECK_THROWS_AS(generate_ngrams(abc, {4, "_"}), Error);
}

TEST_CASE("build_feature_space examples") {
  const std::vector<Terms> docs{{"a", "b"}, {"b", "c"}};
  const auto space = build_feature_space(docs);
  CHECK(space.terms() == Terms{"a", "b", "c"});
  CHECK(space.doc_freq("b") == 2);
  CHECK(space.n_docs() == 2);
  const auto filtered = build_feature_space(docs, 2);
  CHECK(filtered.terms() == Terms{"b"});
  CHECK(*filtered.index_of("b") == 0);
  CHECK_FALSE(filtered.index_of("a").has_value());
  CHECK_THROWS_AS(build_feature_space(std::vector<Terms>{}), Error);
  CHECK(space.dump_tsv() == "a\t0\t1\nb\t1\t2\nc\t2\t1\n");
}

TEST_CASE("vectorize scheme formulas") {
  const std::vector<Terms> docs{{"a", "b"}};
  const auto space = build_feature_space(docs);
  const Terms doc{"a", "a", "b"};
  const auto to = vectorize(doc, space, Scheme::TO);
  CHECK(to.weight(0) == 2);
  CHECK(to.weight(1) == 1);
  const auto bto = vectorize(doc, space, Scheme::BTO);
  CHECK(bto.weight(0) == 1);
  CHECK(bto.weight(1) == 1);
  const auto tf = vectorize(doc, space, Scheme::TF);
  CHECK_THAT(tf.weight(0), WithinAbs(2.0 / 3.0, 1e-15));
  CHECK_THAT(tf.weight(1), WithinAbs(1.0 / 3.0, 1e-15));
  CHECK(to.dim == 2);
  for (Scheme s : {Scheme::TO, Scheme::BTO, Scheme::TF, Scheme::TFIDF}) {
    CHECK(vectorize(Terms{"zz", "yy"}, space, s).entries.empty());
  }
}

TEST_CASE("TF-IDF hand-computed corpus") {
  const std::vector<Terms> docs{{"a", "b"}, {"a", "c"}, {"a", "a", "d"}};
  const auto space = build_feature_space(docs);
  const auto d3 = vectorize(docs[2], space, Scheme::TFIDF);
  CHECK(d3.weight(*space.index_of("a")) == 0.0);
  CHECK_THAT(d3.weight(*space.index_of("d")), WithinAbs(std::log(3.0) / 3.0, 1e-12));
  REQUIRE(d3.entries.size() == 1);  // zero weights are not stored
  const auto d1 = vectorize(docs[0], space, Scheme::TFIDF);
  CHECK_THAT(d1.weight(*space.index_of("b")), WithinAbs(0.5 * std::log(3.0), 1e-12));
}

TEST_CASE("vector invariants on random corpora") {
  std::mt19937_64 rng(4);
  const Terms vocab{"a", "b", "c", "d", "e", "f", "g"};
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Terms> docs(1 + rng() % 8);
    for (auto& d : docs) {
      const size_t len = rng() % 6;
      for (size_t i = 0; i < len; ++i) d.push_back(vocab[rng() % vocab.size()]);
    }
    const auto space = build_feature_space(docs);
    for (size_t i = 0; i < space.size(); ++i) {
      CHECK(space.doc_freq(static_cast<uint32_t>(i)) >= 1);
      CHECK(space.doc_freq(static_cast<uint32_t>(i)) <= space.n_docs());
    }
    for (const auto& d : docs) {
      const auto to = vectorize(d, space, Scheme::TO);
      const auto bto = vectorize(d, space, Scheme::BTO);
      const auto tf = vectorize(d, space, Scheme::TF);
      const auto tfidf = vectorize(d, space, Scheme::TFIDF);
      REQUIRE(to.entries.size() == bto.entries.size());
      REQUIRE(to.entries.size() == tf.entries.size());
      double tf_sum = 0;
      for (size_t k = 0; k < to.entries.size(); ++k) {
        CHECK(to.entries[k].first == bto.entries[k].first);
        CHECK(to.entries[k].first == tf.entries[k].first);
        CHECK(to.entries[k].second == std::floor(to.entries[k].second));
        CHECK(bto.entries[k].second == 1.0);
        tf_sum += tf.entries[k].second;
        if (k > 0) CHECK(to.entries[k - 1].first < to.entries[k].first);
      }
      if (!d.empty()) CHECK_THAT(tf_sum, WithinAbs(1.0, 1e-12));
      // TF-IDF support is the TO support minus terms present in every document
      size_t expected = 0;
      for (const auto& [idx, w] : to.entries) expected += space.doc_freq(idx) < space.n_docs();
      CHECK(tfidf.entries.size() == expected);
      for (const auto& [idx, w] : tfidf.entries) CHECK(w > 0);
    }
  }
}

TEST_CASE("dot product and norm on sparse vectors") {
  DocumentVector a{{{0, 1.0}, {2, 2.0}}, Scheme::TO, 4};
  DocumentVector b{{{1, 5.0}, {2, 3.0}, {3, 1.0}}, Scheme::TO, 4};
  CHECK(dot(a, b) == 6.0);
  CHECK(squared_norm(b) == 35.0);
}

TEST_CASE("scheme names") {
  CHECK(parse_scheme("TF-IDF") == Scheme::TFIDF);
  CHECK(parse_scheme("BTO") == Scheme::BTO);
  CHECK(std::string(to_string(Scheme::TFIDF)) == "TFIDF");
  CHECK_THROWS_AS(parse_scheme("BM25"), Error);
}
