#include <doctest.h>
#include <json.hpp>

#include <fstream>

#include "sagcn/common.hpp"
#include "test_helpers.hpp"

using testutil::run_cli;
using testutil::TempDir;

namespace {

std::string ws_args(const TempDir& tmp, std::uint64_t seed) {
  return "--workspace " + tmp.path.string() + " --seed " + std::to_string(seed) + " ";
}

void run_mini_corpus(const std::string& g) {
  auto r = run_cli(g + "gen-synthetic --users 24 --items 16 --blocks 2 --noise 1");
  REQUIRE(r.exit_code == 0);
  r = run_cli(g + "extract");
  REQUIRE(r.exit_code == 0);
  r = run_cli(g + "consolidate --n 2");
  REQUIRE(r.exit_code == 0);
  r = run_cli(g + "annotate");
  REQUIRE(r.exit_code == 0);
  r = run_cli(g + "build-graphs");
  REQUIRE(r.exit_code == 0);
}

}  // namespace

TEST_CASE("the mock pipeline runs end to end with reproducible metrics") {
  const TempDir tmp("cli-e2e");
  const std::string g = ws_args(tmp, 5);

  auto r = run_cli(g + "gen-synthetic --users 40 --items 30 --blocks 3 --noise 2");
  REQUIRE_MESSAGE(r.exit_code == 0, r.output);
  CHECK(r.output.find("wrote") != std::string::npos);

  r = run_cli(g + "extract");
  REQUIRE_MESSAGE(r.exit_code == 0, r.output);
  CHECK(r.output.find("extract:") != std::string::npos);

  /* a second invocation is a manifest no-op */
  r = run_cli(g + "extract");
  REQUIRE(r.exit_code == 0);
  CHECK(r.output.find("extract: up to date") != std::string::npos);

  r = run_cli(g + "consolidate --n 2");
  REQUIRE_MESSAGE(r.exit_code == 0, r.output);
  CHECK(r.output.find("kept 2 aspects") != std::string::npos);
  CHECK(r.output.find("quality") != std::string::npos);
  CHECK(r.output.find("price") != std::string::npos);

  r = run_cli(g + "annotate");
  REQUIRE_MESSAGE(r.exit_code == 0, r.output);

  r = run_cli(g + "build-graphs");
  REQUIRE_MESSAGE(r.exit_code == 0, r.output);
  CHECK(r.output.find("train/val/test") != std::string::npos);

  r = run_cli(g + "train --embed-dim 8 --layers 2 --epochs 4 --patience 4 --batch-size 128 --eval-k 5");
  REQUIRE_MESSAGE(r.exit_code == 0, r.output);
  CHECK(r.output.find("train:") != std::string::npos);
  CHECK(r.output.find("best epoch") != std::string::npos);
  CHECK(std::filesystem::exists(tmp.path / "model.ckpt"));
  CHECK(std::filesystem::exists(tmp.path / "model.meta.json"));
  CHECK(std::filesystem::exists(tmp.path / "training_log.jsonl"));

  r = run_cli(g + "eval --k 5");
  REQUIRE_MESSAGE(r.exit_code == 0, r.output);
  CHECK(r.output.find("recall@5") != std::string::npos);
  const std::string metrics_first = sagcn::read_file(tmp.path / "metrics.json");

  /* byte-identical on a repeat run */
  r = run_cli(g + "eval --k 5");
  REQUIRE(r.exit_code == 0);
  CHECK(sagcn::read_file(tmp.path / "metrics.json") == metrics_first);

  r = run_cli(g + "eval --k 5 --per-aspect --independence");
  REQUIRE_MESSAGE(r.exit_code == 0, r.output);
  const auto contrib =
      nlohmann::json::parse(sagcn::read_file(tmp.path / "aspect_contribution.json"));
  CHECK(contrib.at("per_aspect").size() == 2);
  /* header is vocabulary order (frequency-ranked), so only check membership */
  const std::string csv = sagcn::read_file(tmp.path / "independence.csv");
  CHECK(csv.rfind("aspect,", 0) == 0);
  CHECK(csv.find("quality") != std::string::npos);
  CHECK(csv.find("price") != std::string::npos);

  r = run_cli(g + "explain --user u0000 --item 0");
  REQUIRE_MESSAGE(r.exit_code == 0, r.output);
  CHECK(r.output.find("preference of user u0000") != std::string::npos);
  CHECK(r.output.find("total") != std::string::npos);

  r = run_cli(g + "llm-rank --users 6 --negatives 4 --history-max 10");
  REQUIRE_MESSAGE(r.exit_code == 0, r.output);
  CHECK(r.output.find("llm-rank:") != std::string::npos);
  const auto rank_metrics =
      nlohmann::json::parse(sagcn::read_file(tmp.path / "llm_rank_metrics.json"));
  CHECK(rank_metrics.at("sampled_users").get<std::int64_t>() <= 6);
  CHECK(rank_metrics.at("backend_failures").get<std::int64_t>() == 0);

  r = run_cli(g + "sweep --n 1 --n 2 --embed-dim 4 --layers 1 --epochs 2 --patience 2");
  REQUIRE_MESSAGE(r.exit_code == 0, r.output);
  CHECK(r.output.find("sweep n=1") != std::string::npos);
  CHECK(r.output.find("sweep n=2") != std::string::npos);
  CHECK(sagcn::read_file(tmp.path / "sweep.csv").find("n,k,recall,ndcg\n") == 0);
}

TEST_CASE("downstream commands name the missing stage") {
  const TempDir tmp("cli-missing");
  const std::string g = ws_args(tmp, 1);

  auto r = run_cli(g + "eval");
  CHECK(r.exit_code == 2);
  CHECK(r.output.find("stage 'train' has not run") != std::string::npos);
  CHECK(r.output.find("run `sagcn train` first") != std::string::npos);

  r = run_cli(g + "consolidate --n 2");
  CHECK(r.exit_code == 2);
  CHECK(r.output.find("stage 'extract' has not run") != std::string::npos);
}

TEST_CASE("tampered artifacts are refused instead of consumed") {
  const TempDir tmp("cli-tamper");
  const std::string g = ws_args(tmp, 3);
  run_mini_corpus(g);

  {
    std::ofstream f(tmp.path / "graphs.bin", std::ios::app | std::ios::binary);
    f << "junk";
  }
  const auto r = run_cli(g + "train --embed-dim 4 --layers 1 --epochs 2 --patience 2");
  CHECK(r.exit_code == 2);
  CHECK(r.output.find("changed on disk") != std::string::npos);
  CHECK(r.output.find("build-graphs") != std::string::npos);
}

TEST_CASE("a config file supplies defaults and flags still win") {
  const TempDir tmp("cli-config");
  const auto ws1 = tmp.path / "ws1";
  const auto ws2 = tmp.path / "ws2";
  const auto cfg = tmp.path / "cfg.toml";
  sagcn::write_file_atomic(cfg, "workspace = \"" + ws1.string() +
                                    "\"\nseed = 9\n\n[gen-synthetic]\nusers = 12\nitems = 12\n"
                                    "blocks = 2\nnoise = 1\n");

  auto r = run_cli("--config " + cfg.string() + " gen-synthetic");
  REQUIRE_MESSAGE(r.exit_code == 0, r.output);
  CHECK(r.output.find("12 users") != std::string::npos);
  CHECK(std::filesystem::exists(ws1 / "corpus.jsonl"));

  /* an explicit flag overrides the config value */
  r = run_cli("--config " + cfg.string() + " --workspace " + ws2.string() + " gen-synthetic");
  REQUIRE_MESSAGE(r.exit_code == 0, r.output);
  CHECK(std::filesystem::exists(ws2 / "corpus.jsonl"));
}

TEST_CASE("usage errors come from the parser, not a crash") {
  auto r = run_cli("");
  CHECK(r.exit_code != 0);
  r = run_cli("no-such-command");
  CHECK(r.exit_code != 0);
  r = run_cli("explain");  /* missing required --user/--item */
  CHECK(r.exit_code != 0);
}

TEST_CASE("split seeds change the split but not the corpus") {
  const TempDir tmp("cli-split");
  const std::string g = ws_args(tmp, 4);
  run_mini_corpus(g);
  const std::string split_a = sagcn::read_file(tmp.path / "split.json");

  auto r = run_cli(g + "build-graphs --split-seed 99 --force");
  REQUIRE_MESSAGE(r.exit_code == 0, r.output);
  const std::string split_b = sagcn::read_file(tmp.path / "split.json");
  CHECK(split_a != split_b);

  r = run_cli(g + "build-graphs --force");
  REQUIRE(r.exit_code == 0);
  CHECK(sagcn::read_file(tmp.path / "split.json") == split_a);
}
