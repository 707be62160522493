#include <doctest.h>

#include <atomic>

#include "sagcn/aspect_pipeline.hpp"
#include "sagcn/llm_backend.hpp"
#include "test_helpers.hpp"

using namespace sagcn;

TEST_CASE("mock backend resolves canned before rules before synthesis") {
  MockBackend mock;
  mock.add_canned("exact prompt", "canned answer");
  mock.add_rule({"alpha", "beta"}, "rule answer");
  CHECK(mock.complete("exact prompt") == "canned answer");
  CHECK(mock.complete("has alpha and beta inside") == "rule answer");
  CHECK(mock.complete("has alpha only") != "rule answer");
  CHECK(mock.call_count() == 3);
}

TEST_CASE("mock rules require every needle and first added wins") {
  MockBackend mock;
  mock.add_rule({"x"}, "first");
  mock.add_rule({"x", "y"}, "second");
  CHECK(mock.complete("x and y") == "first");
}

TEST_CASE("mock failure injection raises BackendError") {
  MockBackend mock;
  mock.fail_when_contains("poison");
  CHECK_THROWS_AS(mock.complete("this is poison here"), BackendError);
  CHECK(mock.complete("clean") != "");
}

TEST_CASE("mock without synthesis throws on unknown prompts") {
  MockBackend mock;
  mock.set_synthesize(false);
  CHECK_THROWS_AS(mock.complete("nothing matches"), BackendError);
}

TEST_CASE("mock fixtures file loads both entry kinds") {
  testutil::TempDir tmp("fix");
  write_file_atomic(tmp.path / "f.json",
                    R"([{"prompt":"p1","response":"r1"},)"
                    R"({"contains":"needle","response":"r2"},)"
                    R"({"contains":["a","b"],"response":"r3"}])");
  MockBackend mock;
  mock.load_fixtures(tmp.path / "f.json");
  CHECK(mock.complete("p1") == "r1");
  CHECK(mock.complete("has needle here") == "r2");
  CHECK(mock.complete("a plus b") == "r3");
}

TEST_CASE("mock synthesis answers discovery prompts from the review text") {
  MockBackend mock;
  const std::string prompt =
      aspect_discovery_prompt("The quality is excellent but the price was steep.");
  const std::string response = mock.complete(prompt);
  const auto labels = parse_point_by_point_labels(response);
  CHECK(std::find(labels.begin(), labels.end(), "quality") != labels.end());
  CHECK(std::find(labels.begin(), labels.end(), "price") != labels.end());
  CHECK(mock.complete(prompt) == response);  /* deterministic */
}

TEST_CASE("mock synthesis answers annotation prompts per vocabulary aspect") {
  MockBackend mock;
  const std::string prompt = aspect_annotation_prompt("The quality is excellent.", {"quality", "price"});
  const std::string response = mock.complete(prompt);
  CHECK(response.find("mentioned the quality") != std::string::npos);
  CHECK(response.find("did not mention anything about the price") != std::string::npos);
}

TEST_CASE("mock synthesis rates rank prompts with parseable lines") {
  std::vector<RankHistoryItem> history{{"Item One", "AAA", 5.0}};
  std::vector<RankCandidate> cands{{"Cand One", "B01"}, {"Cand Two", "B02"}};
  const std::string prompt = rank_prompt(history, cands);
  CHECK(mock_detail::looks_like_rank_prompt(prompt));

  MockBackend mock;
  const std::string response = mock.complete(prompt);
  CHECK(response.find("(item id: B01)") != std::string::npos);
  CHECK(response.find("(item id: B02)") != std::string::npos);
  CHECK(response.find("- Rating:") != std::string::npos);
  CHECK(mock.complete(prompt) == response);
}

TEST_CASE("cached backend serves repeats from disk") {
  testutil::TempDir tmp("cache");
  auto mock = std::make_shared<MockBackend>();
  CachedBackend cached(mock, tmp.path / "cache");

  const std::string r1 = cached.complete("prompt a");
  CHECK(cached.misses() == 1);
  CHECK(mock->call_count() == 1);

  const std::string r2 = cached.complete("prompt a");
  CHECK(r2 == r1);
  CHECK(cached.hits() == 1);
  CHECK(mock->call_count() == 1);  /* no second inner call */

  /* a fresh wrapper sees the same disk entries */
  auto mock2 = std::make_shared<MockBackend>();
  CachedBackend cached2(mock2, tmp.path / "cache");
  CHECK(cached2.complete("prompt a") == r1);
  CHECK(mock2->call_count() == 0);
}

TEST_CASE("cached backend overwrites corrupt entries") {
  testutil::TempDir tmp("cachebad");
  auto mock = std::make_shared<MockBackend>();
  CachedBackend cached(mock, tmp.path / "cache");
  cached.complete("prompt x");

  /* clobber the single cache file */
  for (const auto& entry : std::filesystem::directory_iterator(tmp.path / "cache"))
    write_file_atomic(entry.path(), "{broken");
  const std::string r = cached.complete("prompt x");
  CHECK(!r.empty());
  CHECK(mock->call_count() == 2);
}

TEST_CASE("parallel_for covers every index once") {
  std::vector<std::atomic<int>> hits(257);
  parallel_for(257, 8, [&](std::size_t i) { hits[i].fetch_add(1); });
  for (const auto& h : hits) CHECK(h.load() == 1);
}

TEST_CASE("parallel_for rethrows worker exceptions") {
  CHECK_THROWS_AS(parallel_for(64, 4,
                               [](std::size_t i) {
                                 if (i == 13) throw BackendError("boom");
                               }),
                  BackendError);
}
