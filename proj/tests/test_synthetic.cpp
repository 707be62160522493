#include <doctest.h>

#include <map>
#include <set>

#include "sagcn/aspect_pipeline.hpp"
#include "sagcn/corpus.hpp"
#include "sagcn/llm_backend.hpp"
#include "sagcn/synthetic.hpp"
#include "test_helpers.hpp"

using namespace sagcn;

namespace {

SyntheticConfig small_config() {
  SyntheticConfig c;
  c.num_users = 40;
  c.num_items = 32;
  c.blocks_per_aspect = 4;
  c.within_block_p = 0.8;
  c.noise_per_user = 2;
  c.seed = 11;
  return c;
}

std::set<Edge> edge_set(const std::vector<Edge>& edges) {
  return {edges.begin(), edges.end()};
}

Idx parse_padded(const std::string& id) { return std::stoll(id.substr(1)); }

}  // namespace

TEST_CASE("planted aspects live on disjoint item halves") {
  const auto cfg = small_config();
  const auto data = gen_synthetic(cfg);
  const auto& store = data.store;

  REQUIRE(store.aspect_names == std::vector<std::string>{"quality", "price"});
  REQUIRE(store.num_users == cfg.num_users);
  REQUIRE(store.num_items == cfg.num_items);
  CHECK(store.base_edges.size() == data.records.size());

  const Idx half = cfg.num_items / 2;
  for (const Edge& e : store.aspect_edges[0]) CHECK(e.item < half);
  for (const Edge& e : store.aspect_edges[1]) CHECK(e.item >= half);

  const auto base = edge_set(store.base_edges);
  for (const auto& edges : store.aspect_edges)
    for (const Edge& e : edges) CHECK(base.count(e) == 1);

  /* every user received its noise interactions */
  std::map<Idx, Idx> degree;
  for (const Edge& e : store.base_edges) ++degree[e.user];
  for (Idx u = 0; u < cfg.num_users; ++u) CHECK(degree[u] >= cfg.noise_per_user);
}

TEST_CASE("review text carries an aspect phrase exactly when the edge does") {
  const auto data = gen_synthetic(small_config());
  const auto quality = edge_set(data.store.aspect_edges[0]);
  const auto price = edge_set(data.store.aspect_edges[1]);

  const std::set<std::string> noise_phrases{
      "Arrived promptly and exactly as described.",
      "Packaging was intact and delivery was quick.",
      "Second one of these for the office.",
  };

  for (const auto& rec : data.records) {
    const Edge e{parse_padded(rec.user_id), parse_padded(rec.item_id)};
    const bool says_quality = rec.review_text.find("quality") != std::string::npos;
    const bool says_price = rec.review_text.find("price") != std::string::npos;
    CHECK(says_quality == (quality.count(e) == 1));
    CHECK(says_price == (price.count(e) == 1));
    if (!says_quality && !says_price) CHECK(noise_phrases.count(rec.review_text) == 1);
  }
}

TEST_CASE("generation is a pure function of its config") {
  const auto cfg = small_config();
  const auto a = gen_synthetic(cfg);
  const auto b = gen_synthetic(cfg);
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].user_id == b.records[i].user_id);
    CHECK(a.records[i].item_id == b.records[i].item_id);
    CHECK(a.records[i].rating == b.records[i].rating);
    CHECK(a.records[i].review_text == b.records[i].review_text);
    CHECK(a.records[i].timestamp == b.records[i].timestamp);
  }
  CHECK(a.store.base_edges == b.store.base_edges);
  CHECK(a.store.aspect_edges == b.store.aspect_edges);

  auto other = cfg;
  other.seed = 12;
  CHECK(gen_synthetic(other).store.base_edges != a.store.base_edges);
}

TEST_CASE("the control aspect tags structured edges only") {
  auto cfg = small_config();
  cfg.control_aspect = true;
  const auto data = gen_synthetic(cfg);
  REQUIRE(data.store.aspect_names ==
          std::vector<std::string>{"quality", "price", "style"});
  const auto structured = [&] {
    auto s = edge_set(data.store.aspect_edges[0]);
    for (const Edge& e : data.store.aspect_edges[1]) s.insert(e);
    return s;
  }();
  REQUIRE(!data.store.aspect_edges[2].empty());
  for (const Edge& e : data.store.aspect_edges[2]) CHECK(structured.count(e) == 1);
}

TEST_CASE("invalid configs are rejected") {
  auto cfg = small_config();
  cfg.num_items = 1;
  CHECK_THROWS_AS(static_cast<void>(gen_synthetic(cfg)), std::invalid_argument);
  cfg = small_config();
  cfg.within_block_p = 0.0;
  CHECK_THROWS_AS(static_cast<void>(gen_synthetic(cfg)), std::invalid_argument);
  cfg = small_config();
  cfg.blocks_per_aspect = 20;  /* more blocks than half the items */
  CHECK_THROWS_AS(static_cast<void>(gen_synthetic(cfg)), std::invalid_argument);
}

TEST_CASE("the written corpus loads back to the same interactions") {
  const testutil::TempDir tmp("synth");
  const auto data = gen_synthetic(small_config());
  const auto path = tmp.path / "corpus.jsonl";
  write_synthetic_corpus(path, data);

  const Corpus corpus = load_corpus(path, CorpusFormat::AmazonJsonLines);
  REQUIRE(corpus.records.size() == data.records.size());
  CHECK(corpus.ids.num_users() == data.store.num_users);

  /* users appear in natural order, so dense user index == planted index */
  for (Idx u = 0; u < corpus.ids.num_users(); ++u)
    CHECK(parse_padded(corpus.ids.user_ids[static_cast<std::size_t>(u)]) == u);

  /* map dense pairs back through the raw ids and compare the edge sets */
  std::set<Edge> loaded;
  const auto pairs = corpus.pairs();
  for (std::size_t r = 0; r < pairs.size(); ++r) {
    loaded.insert({parse_padded(corpus.ids.user_ids[static_cast<std::size_t>(pairs[r].user)]),
                   parse_padded(corpus.ids.item_ids[static_cast<std::size_t>(pairs[r].item)])});
    CHECK(corpus.records[r].rating == data.records[r].rating);
    CHECK(corpus.records[r].review_text == data.records[r].review_text);
  }
  CHECK(loaded == edge_set(data.store.base_edges));
}

TEST_CASE("the mock annotator recovers the planted aspects") {
  const auto data = gen_synthetic(small_config());
  MockBackend backend;
  AspectVocabulary vocab;
  vocab.names = {"quality", "price"};
  vocab.counts = {2, 1};

  const auto quality = edge_set(data.store.aspect_edges[0]);
  const auto price = edge_set(data.store.aspect_edges[1]);

  for (const auto& rec : data.records) {
    const Edge e{parse_padded(rec.user_id), parse_padded(rec.item_id)};
    const auto ann = annotate_review(rec.review_text, vocab, backend);
    CHECK(ann.status == ParseStatus::Clean);
    std::set<std::string> present(ann.present_aspects.begin(), ann.present_aspects.end());
    CHECK(present.count("quality") == (quality.count(e) ? 1u : 0u));
    CHECK(present.count("price") == (price.count(e) ? 1u : 0u));
  }
}

TEST_CASE("mock discovery counts the planted mentions and flags noise") {
  const testutil::TempDir tmp("synthdisc");
  const auto data = gen_synthetic(small_config());
  const auto path = tmp.path / "corpus.jsonl";
  write_synthetic_corpus(path, data);
  const Corpus corpus = load_corpus(path, CorpusFormat::AmazonJsonLines);

  MockBackend backend;
  const auto result = run_discovery(corpus, backend);
  CHECK(result.reviews_processed == static_cast<std::int64_t>(corpus.records.size()));
  CHECK(result.failures.empty());
  CHECK(result.raw_counts.at("quality") ==
        static_cast<std::int64_t>(data.store.aspect_edges[0].size()));
  CHECK(result.raw_counts.at("price") ==
        static_cast<std::int64_t>(data.store.aspect_edges[1].size()));

  std::int64_t noise = 0;
  for (const auto& rec : data.records) {
    if (rec.review_text.find("quality") == std::string::npos &&
        rec.review_text.find("price") == std::string::npos)
      ++noise;
  }
  CHECK(result.fallback_reviews == noise);
}
