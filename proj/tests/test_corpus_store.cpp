#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <set>
#include <thread>

#include "maptter/corpus_store.hpp"

using namespace maptter;
using namespace maptter::corpus;

namespace {

Article article(const std::string& id, const std::string& topic = "news", const std::string& source = "echorouk") {
  return {id, parse_source(source), parse_topic(topic), "title " + id, std::nullopt};
}

std::vector<IngestRecord> records(const std::string& article_id, std::initializer_list<std::string> texts) {
  std::vector<IngestRecord> out;
  for (const auto& t : texts) out.push_back({article_id, t});
  return out;
}

}  // namespace

TEST_CASE("canonicalize_for_dedup examples") {
  CHECK(canonicalize_for_dedup("  مقال جيد  ") == "مقال جيد");
  CHECK(canonicalize_for_dedup("a\n\nb") == "a b");
  CHECK(canonicalize_for_dedup("already canonical") == "already canonical");
  CHECK(canonicalize_for_dedup(" \t\n ").empty());
  CHECK(canonicalize_for_dedup("e\xCC\x81") == "\xC3\xA9");
}

TEST_CASE("ingest drops duplicates, rejects empties, keeps first") {
  Project p("p");
  p.add_article(article("a1"));
  const auto r = p.ingest_comments(records("a1", {"خبر سيء", "خبر سيء", "   ", "خبر  جيد"}));
  CHECK(r.added == 2);
  CHECK(r.duplicates_dropped == 1);
  CHECK(r.rejected_empty == 1);
  CHECK(r.total() == 4);
  CHECK(p.comment_count() == 2);
  // raw text bytes are preserved, not the canonical form
  CHECK(p.find_comment("c000002")->raw_text == "خبر  جيد");
  CHECK(p.find_comment("c000002")->dedup_key == "خبر جيد");

  const auto again = p.ingest_comments(records("a1", {"خبر سيء", "خبر  جيد"}));
  CHECK(again.added == 0);
  CHECK(again.duplicates_dropped == 2);
}

TEST_CASE("unknown article rejects the whole batch") {
  Project p("p");
  p.add_article(article("a1"));
  std::vector<IngestRecord> batch{{"a1", "ok"}, {"missing", "x"}};
  try {
    p.ingest_comments(batch);
    FAIL("expected UnknownArticle");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::unknown_article);
    CHECK(e.details()["article_id"] == "missing");
  }
  CHECK(p.comment_count() == 0);
}

TEST_CASE("corpus JSONL parse reports the bad line") {
  const std::string good = R"({"article_id":"a","source":"ennahar","topic":"sports","title":"t","text":"x"})";
  CHECK(parse_corpus_jsonl(good + "\n\n" + good + "\n").size() == 2);
  try {
    parse_corpus_jsonl(good + "\n" + R"({"article_id":"a","source":"s","topic":"t","title":"t"})");
    FAIL("expected MalformedRecord");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::malformed_record);
    CHECK(e.details()["line"] == 2);
  }
  CHECK_THROWS_AS(parse_corpus_jsonl("{not json"), Error);
}

TEST_CASE("export then re-ingest is idempotent") {
  Project p("p");
  std::vector<CorpusLine> lines;
  for (int i = 0; i < 10; ++i) {
    lines.push_back({i % 2 ? "a1" : "a2", "elkhabar", i % 2 ? "sports" : "political", "t", "تعليق رقم " + std::to_string(i)});
  }
  CHECK(p.ingest_lines(lines).added == 10);
  const auto exported = p.export_corpus({});
  const auto back = parse_corpus_jsonl(exported);
  REQUIRE(back.size() == 10);
  CHECK(back[0].comment_id == "c000001");
  const auto r = p.ingest_lines(back);
  CHECK(r.added == 0);
  CHECK(r.duplicates_dropped == 10);

  Project fresh("q");
  CHECK(fresh.ingest_lines(back).added == 10);
  CHECK(fresh.export_corpus({}) == exported);
}

TEST_CASE("export selectors and empty selection") {
  Project p("p");
  CHECK_THROWS_MATCHES(p.export_corpus({}), Error, Catch::Matchers::Predicate<Error>([](const Error& e) {
                         return e.code() == Errc::empty_selection;
                       }));
  p.add_article(article("s", "sports"));
  p.add_article(article("n", "news", "oued_kniss"));
  p.ingest_comments(records("s", {"هدف جميل", "حكم ظالم"}));
  p.ingest_comments(records("n", {"خبر عاجل"}));

  CommentSelector sports;
  sports.topic = "sports";
  const auto out = parse_corpus_jsonl(p.export_corpus(sports));
  REQUIRE(out.size() == 2);
  for (const auto& l : out) CHECK(l.topic == "sports");

  CommentSelector other_source;
  other_source.source = "oued_kniss";
  CHECK(p.select(other_source).size() == 1);
  CHECK(p.find_article("n")->source.kind == Source::other);

  CommentSelector none;
  none.topic = "religion";
  CHECK_THROWS_AS(p.export_corpus(none), Error);
}

TEST_CASE("project JSON snapshot round trip") {
  Project p("p");
  p.add_article(article("a"));
  p.ingest_comments(records("a", {"واحد", "اثنان"}));
  const auto copy = Project::from_json(p.to_json());
  CHECK(copy->to_json() == p.to_json());
  CHECK(copy->ingest_comments(records("a", {"واحد", "ثلاثة"})).added == 1);
  CHECK(copy->find_comment("c000003").has_value());

  auto broken = p.to_json();
  broken["comments"][1]["raw_text"] = "واحد";
  CHECK_THROWS_AS(Project::from_json(broken), Error);
}

TEST_CASE("randomized batches: counts match multiplicities") {
  std::mt19937_64 rng(5);
  const std::vector<std::string> pool{"تعليق", "خبر", "مقال", "رأي", "سؤال", "شكر", "نقد", "دعم"};
  for (int trial = 0; trial < 100; ++trial) {
    Project p("p");
    p.add_article(article("a"));
    std::set<std::string> seen;
    for (int batch = 0; batch < 5; ++batch) {
      std::vector<IngestRecord> recs;
      size_t expect_added = 0;
      size_t expect_dup = 0;
      for (int i = 0; i < 12; ++i) {
        const std::string w1 = pool[rng() % pool.size()];
        const std::string w2 = pool[rng() % pool.size()];
        const std::string sep = rng() % 2 ? " " : " \n\t ";
        const std::string text = (rng() % 3 == 0 ? "  " : "") + w1 + sep + w2;
        if (seen.insert(w1 + " " + w2).second) {
          ++expect_added;
        } else {
          ++expect_dup;
        }
        recs.push_back({"a", text});
      }
      const auto r = p.ingest_comments(recs);
      CHECK(r.added == expect_added);
      CHECK(r.duplicates_dropped == expect_dup);
    }
    CHECK(p.comment_count() == seen.size());
  }
}

TEST_CASE("concurrent ingests behave as a total order") {
  Project p("p");
  p.add_article(article("a"));
  std::vector<std::string> texts;
  for (int i = 0; i < 200; ++i) texts.push_back("نص " + std::to_string(i % 150));
  std::array<IngestReport, 4> reports;
  {
    std::vector<std::jthread> threads;
    for (size_t t = 0; t < 4; ++t) {
      threads.emplace_back([&, t] {
        std::vector<IngestRecord> recs;
        for (const auto& s : texts) recs.push_back({"a", s});
        reports[t] = p.ingest_comments(recs);
      });
    }
  }
  size_t added = 0;
  for (const auto& r : reports) added += r.added;
  CHECK(added == 150);
  CHECK(p.comment_count() == 150);
  std::set<std::string> keys;
  for (const auto& c : p.select({})) keys.insert(c.dedup_key);
  CHECK(keys.size() == 150);
}
