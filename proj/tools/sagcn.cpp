#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <iostream>
#include <sstream>

#include "sagcn/aspect_pipeline.hpp"
#include "sagcn/corpus.hpp"
#include "sagcn/eval.hpp"
#include "sagcn/graphs.hpp"
#include "sagcn/llm_backend.hpp"
#include "sagcn/manifest.hpp"
#include "sagcn/model.hpp"
#include "sagcn/synthetic.hpp"
#include "sagcn/trainer.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct GlobalOpts {
  std::string workspace = "workspace";
  std::uint64_t seed = 42;
};

struct BackendOpts {
  std::string backend = "mock";
  std::string fixtures;
  std::string endpoint;
  std::string model = "vicuna-13b";
  int concurrency = 4;
  bool resume = false;  /* resumption via the response cache is always on */
};

void add_backend_options(CLI::App* cmd, BackendOpts& opts) {
  cmd->add_option("--backend", opts.backend, "Completion backend")
      ->check(CLI::IsMember({"mock", "http"}))
      ->capture_default_str();
  cmd->add_option("--fixtures", opts.fixtures, "Canned-response JSON for the mock backend");
  cmd->add_option("--endpoint", opts.endpoint, "http backend base URL");
  cmd->add_option("--model", opts.model, "Model name sent to the http backend")->capture_default_str();
  cmd->add_option("--concurrency", opts.concurrency, "Concurrent backend requests")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_flag("--resume", opts.resume,
                "Continue an interrupted run (cached prompts are never re-queried)");
}

std::shared_ptr<sagcn::LlmBackend> make_backend(const BackendOpts& opts, const fs::path& cache_dir) {
  std::shared_ptr<sagcn::LlmBackend> inner;
  if (opts.backend == "mock") {
    auto mock = std::make_shared<sagcn::MockBackend>();
    mock->set_concurrency(opts.concurrency);
    if (!opts.fixtures.empty()) mock->load_fixtures(opts.fixtures);
    inner = std::move(mock);
  } else {
    if (opts.endpoint.empty())
      throw std::invalid_argument("--endpoint is required with --backend http");
    sagcn::HttpBackendConfig config;
    config.endpoint = opts.endpoint;
    config.model = opts.model;
    config.max_concurrency = opts.concurrency;
    inner = std::make_shared<sagcn::HttpBackend>(std::move(config));
  }
  return std::make_shared<sagcn::CachedBackend>(std::move(inner), cache_dir);
}

sagcn::CorpusFormat parse_format(const std::string& s) {
  if (s == "amazon-json-lines" || s == "jsonl") return sagcn::CorpusFormat::AmazonJsonLines;
  if (s == "csv") return sagcn::CorpusFormat::Csv;
  throw std::invalid_argument("unknown corpus format: " + s);
}

std::string json_line(const json& j) { return j.dump() + "\n"; }

void write_failures(const fs::path& path, const std::vector<sagcn::PipelineFailure>& failures,
                    bool append) {
  std::ostringstream out;
  for (const auto& f : failures) {
    out << json_line({{"user", f.user}, {"item", f.item}, {"stage", f.stage}, {"message", f.message}});
  }
  if (append && fs::exists(path)) {
    sagcn::write_file_atomic(path, sagcn::read_file(path) + out.str());
  } else {
    sagcn::write_file_atomic(path, out.str());
  }
}

/* Stage configs are hashed into the manifest so a changed flag re-runs the
   stage and a stale artifact refuses downstream use. */
struct StageIo {
  std::vector<fs::path> inputs;
  std::vector<fs::path> outputs;
  std::map<std::string, std::string> config;
};

bool stage_guard(sagcn::PipelineManifest& manifest, const std::string& stage, const StageIo& io,
                 bool force) {
  if (!force && manifest.is_fresh(stage, io.inputs, sagcn::config_digest(io.config))) {
    std::printf("%s: up to date\n", stage.c_str());
    return false;
  }
  return true;
}

void stage_done(sagcn::PipelineManifest& manifest, const std::string& stage, const StageIo& io) {
  manifest.record(stage, io.inputs, io.outputs, sagcn::config_digest(io.config));
}

sagcn::Corpus load_corpus_checked(const fs::path& path, const std::string& format) {
  if (!fs::exists(path))
    throw sagcn::ManifestError("corpus not found at " + path.string() +
                               "; run `sagcn gen-synthetic` or pass --corpus");
  return sagcn::load_corpus(path, parse_format(format));
}

/* ------------------------------------------------------------------ */

int cmd_gen_synthetic(const GlobalOpts& g, const sagcn::SyntheticConfig& cfg_in,
                      const std::string& out_name) {
  sagcn::SyntheticConfig cfg = cfg_in;
  cfg.seed = g.seed;
  const auto data = sagcn::gen_synthetic(cfg);
  const fs::path out = fs::path(g.workspace) / out_name;
  fs::create_directories(g.workspace);
  sagcn::write_synthetic_corpus(out, data);
  std::printf("wrote %s: %zu interactions, %lld users, %lld items, %zu aspects\n",
              out.string().c_str(), data.records.size(), static_cast<long long>(cfg.num_users),
              static_cast<long long>(cfg.num_items), data.store.aspect_names.size());
  return 0;
}

int cmd_extract(const GlobalOpts& g, const BackendOpts& b, const std::string& corpus_name,
                const std::string& format, bool force) {
  const fs::path ws(g.workspace);
  sagcn::PipelineManifest manifest = sagcn::PipelineManifest::load(ws);
  const fs::path corpus_path = fs::path(corpus_name).is_absolute() ? fs::path(corpus_name) : ws / corpus_name;

  StageIo io;
  io.inputs = {corpus_path};
  if (!b.fixtures.empty()) io.inputs.push_back(b.fixtures);
  io.outputs = {ws / "idmaps.json", ws / "raw_aspect_counts.json"};
  io.config = {{"backend", b.backend}, {"model", b.model}, {"format", format}};
  if (!stage_guard(manifest, "extract", io, force || b.resume)) return 0;

  const auto corpus = load_corpus_checked(corpus_path, format);
  auto backend = make_backend(b, ws / "llm_cache");
  const auto result = sagcn::run_discovery(corpus, *backend);

  corpus.ids.save(ws / "idmaps.json");
  json counts;
  counts["counts"] = result.raw_counts;
  counts["reviews_processed"] = result.reviews_processed;
  counts["fallback_reviews"] = result.fallback_reviews;
  counts["failures"] = static_cast<std::int64_t>(result.failures.size());
  sagcn::write_file_atomic(ws / "raw_aspect_counts.json", counts.dump(2) + "\n");
  write_failures(ws / "failures.jsonl", result.failures, false);

  stage_done(manifest, "extract", io);
  std::printf("extract: %lld reviews, %zu raw aspects, %zu failures, %lld fallbacks\n",
              static_cast<long long>(result.reviews_processed), result.raw_counts.size(),
              result.failures.size(), static_cast<long long>(result.fallback_reviews));
  return 0;
}

int cmd_consolidate(const GlobalOpts& g, sagcn::Idx n, const std::string& merge_path, bool force) {
  const fs::path ws(g.workspace);
  sagcn::PipelineManifest manifest = sagcn::PipelineManifest::load(ws);
  manifest.require("extract");

  StageIo io;
  io.inputs = {ws / "raw_aspect_counts.json"};
  if (!merge_path.empty()) io.inputs.push_back(merge_path);
  io.outputs = {ws / "aspects.json"};
  io.config = {{"n", std::to_string(n)}};
  if (!stage_guard(manifest, "consolidate", io, force)) return 0;

  const json counts_json = json::parse(sagcn::read_file(ws / "raw_aspect_counts.json"));
  std::map<std::string, std::int64_t> raw_counts;
  for (auto it = counts_json.at("counts").begin(); it != counts_json.at("counts").end(); ++it)
    raw_counts[it.key()] = it.value().get<std::int64_t>();
  std::map<std::string, std::string> merges;
  if (!merge_path.empty()) merges = sagcn::load_merge_rules(merge_path);

  const auto vocab = sagcn::consolidate_aspects(raw_counts, n, merges);
  vocab.save(ws / "aspects.json");
  stage_done(manifest, "consolidate", io);

  std::printf("consolidate: kept %zu aspects:", vocab.names.size());
  for (std::size_t i = 0; i < vocab.names.size(); ++i)
    std::printf(" %s(%lld)", vocab.names[i].c_str(), static_cast<long long>(vocab.counts[i]));
  std::printf("\n");
  return 0;
}

int cmd_annotate(const GlobalOpts& g, const BackendOpts& b, const std::string& corpus_name,
                 const std::string& format, bool force) {
  const fs::path ws(g.workspace);
  sagcn::PipelineManifest manifest = sagcn::PipelineManifest::load(ws);
  manifest.require("consolidate");
  const fs::path corpus_path = fs::path(corpus_name).is_absolute() ? fs::path(corpus_name) : ws / corpus_name;

  StageIo io;
  io.inputs = {corpus_path, ws / "aspects.json"};
  if (!b.fixtures.empty()) io.inputs.push_back(b.fixtures);
  io.outputs = {ws / "annotations.jsonl"};
  io.config = {{"backend", b.backend}, {"model", b.model}, {"format", format}};
  if (!stage_guard(manifest, "annotate", io, force || b.resume)) return 0;

  const auto corpus = load_corpus_checked(corpus_path, format);
  const auto vocab = sagcn::AspectVocabulary::load(ws / "aspects.json");
  auto backend = make_backend(b, ws / "llm_cache");
  const auto run = sagcn::run_annotation(corpus, vocab, *backend);

  sagcn::save_annotations(ws / "annotations.jsonl", run.annotations);
  write_failures(ws / "failures.jsonl", run.failures, true);
  stage_done(manifest, "annotate", io);

  std::int64_t clean = 0, fallback = 0, failed = 0;
  for (const auto& a : run.annotations) {
    if (a.status == sagcn::ParseStatus::Clean) ++clean;
    if (a.status == sagcn::ParseStatus::Fallback) ++fallback;
    if (a.status == sagcn::ParseStatus::Failed) ++failed;
  }
  std::printf("annotate: %zu annotations (%lld clean, %lld fallback, %lld failed)\n",
              run.annotations.size(), static_cast<long long>(clean),
              static_cast<long long>(fallback), static_cast<long long>(failed));
  return 0;
}

int cmd_build_graphs(const GlobalOpts& g, const std::string& corpus_name, const std::string& format,
                     double ratio_test, double ratio_val, std::uint64_t split_seed, bool force) {
  const fs::path ws(g.workspace);
  sagcn::PipelineManifest manifest = sagcn::PipelineManifest::load(ws);
  manifest.require("annotate");
  const fs::path corpus_path = fs::path(corpus_name).is_absolute() ? fs::path(corpus_name) : ws / corpus_name;

  StageIo io;
  io.inputs = {corpus_path, ws / "aspects.json", ws / "annotations.jsonl"};
  io.outputs = {ws / "split.json", ws / "graphs.bin", ws / "graphs.summary.json"};
  io.config = {{"ratio_test", std::to_string(ratio_test)},
               {"ratio_val", std::to_string(ratio_val)},
               {"split_seed", std::to_string(split_seed)}};
  if (!stage_guard(manifest, "build-graphs", io, force)) return 0;

  const auto corpus = load_corpus_checked(corpus_path, format);
  const auto vocab = sagcn::AspectVocabulary::load(ws / "aspects.json");
  const auto annotations = sagcn::load_annotations(ws / "annotations.jsonl");
  const auto pairs = corpus.pairs();

  const auto store = sagcn::build_aspect_interactions(annotations, pairs, corpus.ids.num_users(),
                                                      corpus.ids.num_items(), vocab);
  const auto split = sagcn::split_interactions(pairs, corpus.ids.num_users(), ratio_test,
                                               ratio_val, split_seed);
  split.save(ws / "split.json");
  const auto graph = sagcn::build_graphs(store, split.train);
  sagcn::save_graphs(ws / "graphs.bin", graph);
  sagcn::write_graph_summary(ws / "graphs.summary.json", graph);
  stage_done(manifest, "build-graphs", io);

  std::printf("build-graphs: %lld users, %lld items, train/val/test = %zu/%zu/%zu\n",
              static_cast<long long>(graph.num_users), static_cast<long long>(graph.num_items),
              split.train.size(), split.validation.size(), split.test.size());
  for (const auto& a : graph.aspects)
    std::printf("  aspect %s: %lld training edges\n", a.name.c_str(),
                static_cast<long long>(a.num_edges));
  return 0;
}

struct TrainOpts {
  sagcn::Idx embed_dim = 64;
  sagcn::Idx num_layers = 3;
  double init_scale = 0.01;
  bool include_initial_block = false;
  sagcn::Idx batch_size = 1024;
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  sagcn::Idx max_epochs = 200;
  sagcn::Idx patience = 20;
  int eval_k = 10;
};

void add_train_options(CLI::App* cmd, TrainOpts& t) {
  cmd->add_option("--embed-dim", t.embed_dim, "Embedding size per aspect")->capture_default_str();
  cmd->add_option("--layers", t.num_layers, "Propagation depth K")->capture_default_str();
  cmd->add_option("--init-scale", t.init_scale, "Stddev of the normal initializer")->capture_default_str();
  cmd->add_flag("--include-initial-block", t.include_initial_block,
                "Concatenate a raw id embedding block alongside the aspect aggregates");
  cmd->add_option("--batch-size", t.batch_size)->capture_default_str();
  cmd->add_option("--lr,--learning-rate", t.learning_rate)->capture_default_str();
  cmd->add_option("--weight-decay", t.weight_decay, "L2 weight on batch-touched rows")->capture_default_str();
  cmd->add_option("--epochs", t.max_epochs, "Maximum training epochs")->capture_default_str();
  cmd->add_option("--patience", t.patience, "Early-stop patience in epochs")->capture_default_str();
  cmd->add_option("--eval-k", t.eval_k, "Validation recall cutoff")->capture_default_str();
}

std::pair<sagcn::ModelConfig, sagcn::TrainConfig> make_configs(const TrainOpts& t,
                                                               sagcn::Idx num_aspects,
                                                               std::uint64_t seed) {
  sagcn::ModelConfig model;
  model.num_aspects = num_aspects;
  model.embed_dim = t.embed_dim;
  model.num_layers = t.num_layers;
  model.init_scale = t.init_scale;
  model.include_initial_block = t.include_initial_block;
  model.seed = seed;
  sagcn::TrainConfig train;
  train.batch_size = t.batch_size;
  train.learning_rate = t.learning_rate;
  train.weight_decay = t.weight_decay;
  train.max_epochs = t.max_epochs;
  train.patience = t.patience;
  train.eval_k = t.eval_k;
  train.seed = seed;
  return {model, train};
}

std::map<std::string, std::string> train_config_map(const TrainOpts& t, std::uint64_t seed) {
  return {{"embed_dim", std::to_string(t.embed_dim)},
          {"layers", std::to_string(t.num_layers)},
          {"init_scale", std::to_string(t.init_scale)},
          {"include_initial_block", t.include_initial_block ? "1" : "0"},
          {"batch_size", std::to_string(t.batch_size)},
          {"learning_rate", std::to_string(t.learning_rate)},
          {"weight_decay", std::to_string(t.weight_decay)},
          {"max_epochs", std::to_string(t.max_epochs)},
          {"patience", std::to_string(t.patience)},
          {"eval_k", std::to_string(t.eval_k)},
          {"seed", std::to_string(seed)}};
}

int cmd_train(const GlobalOpts& g, const TrainOpts& t, bool force) {
  const fs::path ws(g.workspace);
  sagcn::PipelineManifest manifest = sagcn::PipelineManifest::load(ws);
  manifest.require("build-graphs");

  StageIo io;
  io.inputs = {ws / "graphs.bin", ws / "split.json"};
  io.outputs = {ws / "model.ckpt", ws / "model.meta.json", ws / "training_log.jsonl"};
  io.config = train_config_map(t, g.seed);
  if (!stage_guard(manifest, "train", io, force)) return 0;

  const auto graph = sagcn::load_graphs(ws / "graphs.bin");
  const auto split = sagcn::SplitSpec::load(ws / "split.json");
  const auto vocab = sagcn::AspectVocabulary::load(ws / "aspects.json");
  auto [model_config, train_config] = make_configs(t, graph.num_aspects(), g.seed);

  const auto result = sagcn::train(split, graph, model_config, train_config);

  sagcn::save_checkpoint(ws / "model.ckpt", result.best_table, model_config);
  json meta;
  meta["aspects"] = vocab.names;
  meta["num_users"] = graph.num_users;
  meta["num_items"] = graph.num_items;
  meta["best_epoch"] = result.best_epoch;
  meta["best_val_recall"] = result.best_val_recall;
  meta["epochs_run"] = result.epochs_run;
  meta["graphs_sha256"] = sagcn::sha256_file_hex(ws / "graphs.bin");
  meta["split_sha256"] = sagcn::sha256_file_hex(ws / "split.json");
  meta["config"] = train_config_map(t, g.seed);
  sagcn::write_file_atomic(ws / "model.meta.json", meta.dump(2) + "\n");

  std::ostringstream log;
  const std::string rk = "val_recall@" + std::to_string(t.eval_k);
  const std::string nk = "val_ndcg@" + std::to_string(t.eval_k);
  for (const auto& e : result.log) {
    log << json_line({{"epoch", e.epoch},
                      {"mean_loss", e.mean_loss},
                      {rk, e.val_recall},
                      {nk, e.val_ndcg},
                      {"elapsed_s", e.elapsed_s}});
  }
  sagcn::write_file_atomic(ws / "training_log.jsonl", log.str());
  stage_done(manifest, "train", io);

  std::printf("train: %lld epochs, best epoch %lld, best %s %.6f\n",
              static_cast<long long>(result.epochs_run), static_cast<long long>(result.best_epoch),
              rk.c_str(), result.best_val_recall);
  return 0;
}

/* Shared by eval/explain: load checkpoint, verify it matches the graphs on
   disk, and run the forward pass. */
struct LoadedModel {
  sagcn::NormalizedAspectGraph graph;
  sagcn::SplitSpec split;
  sagcn::EmbeddingTable table;
  sagcn::ModelConfig config;
  std::vector<std::string> aspect_names;
  sagcn::ForwardCache cache;
};

LoadedModel load_model(const fs::path& ws) {
  sagcn::PipelineManifest manifest = sagcn::PipelineManifest::load(ws);
  manifest.require("train");

  const json meta = json::parse(sagcn::read_file(ws / "model.meta.json"));
  const std::string graphs_hash = sagcn::sha256_file_hex(ws / "graphs.bin");
  if (meta.at("graphs_sha256").get<std::string>() != graphs_hash)
    throw sagcn::ManifestError(
        "model.ckpt was trained against different graphs (hash mismatch); re-run `sagcn train`");
  const std::string split_hash = sagcn::sha256_file_hex(ws / "split.json");
  if (meta.at("split_sha256").get<std::string>() != split_hash)
    throw sagcn::ManifestError(
        "model.ckpt was trained against a different split (hash mismatch); re-run `sagcn train`");

  LoadedModel m;
  m.graph = sagcn::load_graphs(ws / "graphs.bin");
  m.split = sagcn::SplitSpec::load(ws / "split.json");
  auto [table, config] = sagcn::load_checkpoint(ws / "model.ckpt");
  m.table = std::move(table);
  m.config = config;
  for (const auto& name : meta.at("aspects")) m.aspect_names.push_back(name.get<std::string>());
  m.cache = sagcn::forward(m.table, m.graph, m.config);
  return m;
}

int cmd_eval(const GlobalOpts& g, std::vector<int> ks, bool per_aspect, bool independence,
             std::string independence_user) {
  const fs::path ws(g.workspace);
  LoadedModel m = load_model(ws);
  if (ks.empty()) ks = {10, 20};

  const auto train_lists = sagcn::group_by_user(m.split.train, m.graph.num_users);
  const auto val_lists = sagcn::group_by_user(m.split.validation, m.graph.num_users);
  const auto test_lists = sagcn::group_by_user(m.split.test, m.graph.num_users);
  const auto excluded = sagcn::merge_lists(train_lists, val_lists);

  const auto report = sagcn::evaluate(m.cache, excluded, test_lists, ks);
  sagcn::write_file_atomic(ws / "metrics.json", sagcn::metric_report_to_json(report));
  std::printf("eval: %lld test users\n", static_cast<long long>(report.num_eval_users));
  for (int k : report.ks)
    std::printf("  recall@%d %.6f  ndcg@%d %.6f\n", k, report.recall.at(k), k, report.ndcg.at(k));

  if (per_aspect) {
    json contrib;
    contrib["full"] = json::parse(sagcn::metric_report_to_json(report));
    contrib["per_aspect"] = json::array();
    for (sagcn::Idx a = 0; a < m.cache.num_semantic_aspects; ++a) {
      const auto part = sagcn::aspect_contribution(m.cache, excluded, test_lists, ks, {a});
      contrib["per_aspect"].push_back(
          {{"aspect", m.aspect_names[static_cast<std::size_t>(a)]},
           {"report", json::parse(sagcn::metric_report_to_json(part))}});
    }
    sagcn::write_file_atomic(ws / "aspect_contribution.json", contrib.dump(2) + "\n");
    std::printf("  wrote aspect_contribution.json\n");
  }

  if (independence) {
    sagcn::Idx user = -1;
    if (!independence_user.empty()) {
      const auto ids = sagcn::IdMaps::load(ws / "idmaps.json");
      const auto it = ids.user_index.find(independence_user);
      if (it != ids.user_index.end()) {
        user = it->second;
      } else {
        try {
          user = std::stoll(independence_user);
        } catch (const std::exception&) {
          throw std::invalid_argument("unknown user id: " + independence_user);
        }
      }
    } else {
      user = static_cast<sagcn::Idx>(sagcn::mix_seed(g.seed, 0xA5u) %
                                     static_cast<std::uint64_t>(m.graph.num_users));
    }
    const sagcn::Mat sim = sagcn::aspect_independence(m.cache, sagcn::Entity::User, user);
    std::ostringstream csv;
    csv << "aspect";
    for (const auto& name : m.aspect_names) csv << "," << name;
    csv << "\n";
    for (sagcn::Idx a = 0; a < sim.rows; ++a) {
      csv << m.aspect_names[static_cast<std::size_t>(a)];
      for (sagcn::Idx b = 0; b < sim.cols; ++b) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.6f", sim.at(a, b));
        csv << "," << buf;
      }
      csv << "\n";
    }
    sagcn::write_file_atomic(ws / "independence.csv", csv.str());
    std::printf("  wrote independence.csv (user %lld)\n", static_cast<long long>(user));
  }
  return 0;
}

int cmd_explain(const GlobalOpts& g, const std::string& user_id, const std::string& item_id) {
  const fs::path ws(g.workspace);
  LoadedModel m = load_model(ws);
  const auto ids = sagcn::IdMaps::load(ws / "idmaps.json");

  auto resolve = [](const std::unordered_map<std::string, sagcn::Idx>& index,
                    const std::string& raw, sagcn::Idx limit, const char* what) {
    const auto it = index.find(raw);
    if (it != index.end()) return it->second;
    try {
      const sagcn::Idx idx = std::stoll(raw);
      if (idx >= 0 && idx < limit) return idx;
    } catch (const std::exception&) {
    }
    throw std::invalid_argument(std::string("unknown ") + what + " id: " + raw);
  };
  const sagcn::Idx u = resolve(ids.user_index, user_id, m.graph.num_users, "user");
  const sagcn::Idx i = resolve(ids.item_index, item_id, m.graph.num_items, "item");

  const auto parts = sagcn::score_by_aspect(m.cache, u, i);
  std::printf("preference of user %s for item %s\n", user_id.c_str(), item_id.c_str());
  std::printf("%-16s %12s\n", "aspect", "score");
  double total = 0.0;
  for (sagcn::Idx a = 0; a < m.cache.num_semantic_aspects; ++a) {
    std::printf("%-16s %12.6f\n", m.aspect_names[static_cast<std::size_t>(a)].c_str(),
                parts[static_cast<std::size_t>(a)]);
    total += parts[static_cast<std::size_t>(a)];
  }
  if (m.cache.num_blocks() > m.cache.num_semantic_aspects) {
    std::printf("%-16s %12.6f\n", "(base)", parts.back());
    total += parts.back();
  }
  std::printf("%-16s %12.6f\n", "total", total);
  return 0;
}

int cmd_sweep(const GlobalOpts& g, const TrainOpts& t, std::vector<sagcn::Idx> n_values) {
  const fs::path ws(g.workspace);
  sagcn::PipelineManifest manifest = sagcn::PipelineManifest::load(ws);
  manifest.require("build-graphs");
  if (n_values.empty()) throw std::invalid_argument("sweep: pass at least one --n");

  /* rebuild the store from annotations so aspect subsets can be cut */
  const auto vocab = sagcn::AspectVocabulary::load(ws / "aspects.json");
  const auto annotations = sagcn::load_annotations(ws / "annotations.jsonl");
  const auto split = sagcn::SplitSpec::load(ws / "split.json");
  const auto full_graph = sagcn::load_graphs(ws / "graphs.bin");
  std::vector<sagcn::Edge> base;
  for (const auto& a : annotations) base.push_back({a.user, a.item});
  const auto store = sagcn::build_aspect_interactions(annotations, base, full_graph.num_users,
                                                      full_graph.num_items, vocab);

  const auto train_lists = sagcn::group_by_user(split.train, full_graph.num_users);
  const auto val_lists = sagcn::group_by_user(split.validation, full_graph.num_users);
  const auto test_lists = sagcn::group_by_user(split.test, full_graph.num_users);
  const auto excluded = sagcn::merge_lists(train_lists, val_lists);

  std::ostringstream csv;
  csv << "n,k,recall,ndcg\n";
  for (sagcn::Idx n : n_values) {
    const auto sub = store.with_first_aspects(n);
    const auto graph = sagcn::build_graphs(sub, split.train);
    auto [model_config, train_config] = make_configs(t, n, g.seed);
    const auto result = sagcn::train(split, graph, model_config, train_config);
    const auto cache = sagcn::forward(result.best_table, graph, model_config);
    const auto report = sagcn::evaluate(cache, excluded, test_lists, {10, 20});
    for (int k : report.ks) {
      csv << n << "," << k << "," << report.recall.at(k) << "," << report.ndcg.at(k) << "\n";
      std::printf("sweep n=%lld: recall@%d %.6f ndcg@%d %.6f\n", static_cast<long long>(n), k,
                  report.recall.at(k), k, report.ndcg.at(k));
    }
  }
  sagcn::write_file_atomic(ws / "sweep.csv", csv.str());
  return 0;
}

int cmd_llm_rank(const GlobalOpts& g, const BackendOpts& b, const std::string& corpus_name,
                 const std::string& format, sagcn::Idx num_sample_users, sagcn::Idx num_negatives,
                 sagcn::Idx history_max) {
  const fs::path ws(g.workspace);
  sagcn::PipelineManifest manifest = sagcn::PipelineManifest::load(ws);
  manifest.require("build-graphs");
  const fs::path corpus_path = fs::path(corpus_name).is_absolute() ? fs::path(corpus_name) : ws / corpus_name;

  const auto corpus = load_corpus_checked(corpus_path, format);
  const auto split = sagcn::SplitSpec::load(ws / "split.json");
  const sagcn::Idx num_users = corpus.ids.num_users();
  const sagcn::Idx num_items = corpus.ids.num_items();
  auto backend = make_backend(b, ws / "llm_cache");

  const auto train_lists = sagcn::group_by_user(split.train, num_users);
  const auto val_lists = sagcn::group_by_user(split.validation, num_users);
  const auto test_lists = sagcn::group_by_user(split.test, num_users);

  /* ratings for history lines */
  std::map<std::pair<sagcn::Idx, sagcn::Idx>, double> rating_of;
  const auto pairs = corpus.pairs();
  for (std::size_t r = 0; r < pairs.size(); ++r)
    rating_of[{pairs[r].user, pairs[r].item}] = corpus.records[r].rating;

  std::vector<sagcn::Idx> eligible;
  for (sagcn::Idx u = 0; u < num_users; ++u) {
    if (!test_lists.by_user[static_cast<std::size_t>(u)].empty() &&
        !train_lists.by_user[static_cast<std::size_t>(u)].empty())
      eligible.push_back(u);
  }
  sagcn::Rng rng(sagcn::mix_seed(g.seed, 0x77u));
  rng.shuffle(eligible);
  if (static_cast<sagcn::Idx>(eligible.size()) > num_sample_users)
    eligible.resize(static_cast<std::size_t>(num_sample_users));
  std::sort(eligible.begin(), eligible.end());

  const std::vector<int> ks{1, 3, 5, 7};
  std::map<int, double> recall_sum, ndcg_sum;
  sagcn::Idx evaluated = 0, failures = 0;

  for (const sagcn::Idx u : eligible) {
    sagcn::Rng user_rng(sagcn::mix_seed(g.seed ^ 0x51CA5EEDull, static_cast<std::uint64_t>(u)));
    const auto& test_items = test_lists.by_user[static_cast<std::size_t>(u)];
    const sagcn::Idx positive =
        test_items[static_cast<std::size_t>(user_rng.below(test_items.size()))];

    std::vector<sagcn::Idx> candidates{positive};
    while (static_cast<sagcn::Idx>(candidates.size()) < num_negatives + 1) {
      const sagcn::Idx j = static_cast<sagcn::Idx>(user_rng.below(static_cast<std::uint64_t>(num_items)));
      if (train_lists.contains(u, j) || val_lists.contains(u, j) ||
          std::binary_search(test_items.begin(), test_items.end(), j))
        continue;
      if (std::find(candidates.begin(), candidates.end(), j) != candidates.end()) continue;
      candidates.push_back(j);
    }
    user_rng.shuffle(candidates);

    std::vector<sagcn::RankHistoryItem> history;
    for (const sagcn::Idx i : train_lists.by_user[static_cast<std::size_t>(u)]) {
      if (static_cast<sagcn::Idx>(history.size()) >= history_max) break;
      const auto r = rating_of.find({u, i});
      history.push_back({corpus.ids.item_ids[static_cast<std::size_t>(i)],
                         corpus.ids.item_ids[static_cast<std::size_t>(i)],
                         r == rating_of.end() ? 0.0 : r->second});
    }
    std::vector<sagcn::RankCandidate> cands;
    for (const sagcn::Idx i : candidates)
      cands.push_back({corpus.ids.item_ids[static_cast<std::size_t>(i)],
                       corpus.ids.item_ids[static_cast<std::size_t>(i)]});

    std::vector<std::string> ranked;
    try {
      ranked = sagcn::llm_rank_candidates(history, cands, *backend);
    } catch (const sagcn::BackendError&) {
      ++failures;
      continue;
    }
    const std::string positive_id = corpus.ids.item_ids[static_cast<std::size_t>(positive)];
    sagcn::Idx rank = -1;
    for (std::size_t r = 0; r < ranked.size(); ++r) {
      if (ranked[r] == positive_id) {
        rank = static_cast<sagcn::Idx>(r) + 1;
        break;
      }
    }
    ++evaluated;
    for (int k : ks) {
      const bool hit = rank >= 1 && rank <= k;
      recall_sum[k] += hit ? 1.0 : 0.0;
      ndcg_sum[k] += hit ? 1.0 / std::log2(static_cast<double>(rank) + 1.0) : 0.0;
    }
  }

  json out;
  out["sampled_users"] = static_cast<std::int64_t>(eligible.size());
  out["evaluated_users"] = evaluated;
  out["backend_failures"] = failures;
  out["metrics"] = json::array();
  for (int k : ks) {
    const double denom = evaluated > 0 ? static_cast<double>(evaluated) : 1.0;
    out["metrics"].push_back(
        {{"k", k}, {"recall", recall_sum[k] / denom}, {"ndcg", ndcg_sum[k] / denom}});
  }
  sagcn::write_file_atomic(ws / "llm_rank_metrics.json", out.dump(2) + "\n");
  std::printf("llm-rank: %lld users evaluated, %lld failures\n", static_cast<long long>(evaluated),
              static_cast<long long>(failures));
  for (int k : ks) {
    const double denom = evaluated > 0 ? static_cast<double>(evaluated) : 1.0;
    std::printf("  recall@%d %.6f  ndcg@%d %.6f\n", k, recall_sum[k] / denom, k,
                ndcg_sum[k] / denom);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semantic-aspect graph collaborative filtering pipeline"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML-style config file; command-line flags win");

  GlobalOpts g;
  app.add_option("--workspace", g.workspace, "Artifact directory")->capture_default_str();
  app.add_option("--seed", g.seed, "Global RNG seed")->capture_default_str();

  /* gen-synthetic */
  auto* gen = app.add_subcommand("gen-synthetic", "Write a planted-aspect corpus for testing");
  sagcn::SyntheticConfig gen_cfg;
  std::string gen_out = "corpus.jsonl";
  gen->add_option("--users", gen_cfg.num_users)->capture_default_str();
  gen->add_option("--items", gen_cfg.num_items)->capture_default_str();
  gen->add_option("--blocks", gen_cfg.blocks_per_aspect)->capture_default_str();
  gen->add_option("--density", gen_cfg.within_block_p)->capture_default_str();
  gen->add_option("--noise", gen_cfg.noise_per_user)->capture_default_str();
  gen->add_flag("--control-aspect", gen_cfg.control_aspect, "Add an unstructured control aspect");
  gen->add_option("--out", gen_out, "Corpus filename inside the workspace")->capture_default_str();

  /* extract */
  auto* extract = app.add_subcommand("extract", "Discover raw aspects from every review");
  BackendOpts extract_b;
  std::string extract_corpus = "corpus.jsonl", extract_format = "amazon-json-lines";
  bool extract_force = false;
  add_backend_options(extract, extract_b);
  extract->add_option("--corpus", extract_corpus)->capture_default_str();
  extract->add_option("--format", extract_format)->capture_default_str();
  extract->add_flag("--force", extract_force, "Re-run even when up to date");

  /* consolidate */
  auto* consolidate = app.add_subcommand("consolidate", "Merge and rank aspects into a vocabulary");
  sagcn::Idx consolidate_n = 8;
  std::string consolidate_merge;
  bool consolidate_force = false;
  consolidate->add_option("--n", consolidate_n, "Vocabulary size")->capture_default_str();
  consolidate->add_option("--merge", consolidate_merge, "Synonym merge rules file");
  consolidate->add_flag("--force", consolidate_force);

  /* annotate */
  auto* annotate = app.add_subcommand("annotate", "Annotate every review against the vocabulary");
  BackendOpts annotate_b;
  std::string annotate_corpus = "corpus.jsonl", annotate_format = "amazon-json-lines";
  bool annotate_force = false;
  add_backend_options(annotate, annotate_b);
  annotate->add_option("--corpus", annotate_corpus)->capture_default_str();
  annotate->add_option("--format", annotate_format)->capture_default_str();
  annotate->add_flag("--force", annotate_force);

  /* build-graphs */
  auto* build = app.add_subcommand("build-graphs", "Split interactions and build normalized graphs");
  std::string build_corpus = "corpus.jsonl", build_format = "amazon-json-lines";
  double ratio_test = 0.2, ratio_val = 0.1;
  std::uint64_t split_seed = 0;
  bool split_seed_set = false, build_force = false;
  build->add_option("--corpus", build_corpus)->capture_default_str();
  build->add_option("--format", build_format)->capture_default_str();
  build->add_option("--ratio-test", ratio_test)->capture_default_str();
  build->add_option("--ratio-val", ratio_val)->capture_default_str();
  build->add_option("--split-seed", split_seed, "Defaults to --seed")
      ->each([&](const std::string&) { split_seed_set = true; });
  build->add_flag("--force", build_force);

  /* train */
  auto* train_cmd = app.add_subcommand("train", "Optimize embeddings with the ranking objective");
  TrainOpts train_opts;
  bool train_force = false;
  add_train_options(train_cmd, train_opts);
  train_cmd->add_flag("--force", train_force);

  /* eval */
  auto* eval_cmd = app.add_subcommand("eval", "Top-K metrics on the test split");
  std::vector<int> eval_ks;
  bool eval_per_aspect = false, eval_independence = false;
  std::string independence_user;
  eval_cmd->add_option("--k", eval_ks, "Cutoffs (repeatable; default 10 and 20)");
  eval_cmd->add_flag("--per-aspect", eval_per_aspect, "Also evaluate each aspect alone");
  eval_cmd->add_flag("--independence", eval_independence, "Write the aspect cosine matrix");
  eval_cmd->add_option("--user", independence_user, "User for --independence (default: sampled)");

  /* explain */
  auto* explain = app.add_subcommand("explain", "Per-aspect preference scores for one pair");
  std::string explain_user, explain_item;
  explain->add_option("--user", explain_user)->required();
  explain->add_option("--item", explain_item)->required();

  /* sweep */
  auto* sweep = app.add_subcommand("sweep", "Train and evaluate over aspect-count prefixes");
  TrainOpts sweep_opts;
  std::vector<sagcn::Idx> sweep_ns;
  add_train_options(sweep, sweep_opts);
  sweep->add_option("--n", sweep_ns, "Aspect counts (repeatable)")->required();

  /* llm-rank */
  auto* rank = app.add_subcommand("llm-rank", "Zero-shot ranking baseline over sampled users");
  BackendOpts rank_b;
  std::string rank_corpus = "corpus.jsonl", rank_format = "amazon-json-lines";
  sagcn::Idx rank_users = 200, rank_negatives = 9, rank_history_max = 50;
  add_backend_options(rank, rank_b);
  rank->add_option("--corpus", rank_corpus)->capture_default_str();
  rank->add_option("--format", rank_format)->capture_default_str();
  rank->add_option("--users", rank_users, "Users to sample")->capture_default_str();
  rank->add_option("--negatives", rank_negatives)->capture_default_str();
  rank->add_option("--history-max", rank_history_max)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_synthetic(g, gen_cfg, gen_out);
    if (extract->parsed()) return cmd_extract(g, extract_b, extract_corpus, extract_format, extract_force);
    if (consolidate->parsed())
      return cmd_consolidate(g, consolidate_n, consolidate_merge, consolidate_force);
    if (annotate->parsed())
      return cmd_annotate(g, annotate_b, annotate_corpus, annotate_format, annotate_force);
    if (build->parsed())
      return cmd_build_graphs(g, build_corpus, build_format, ratio_test, ratio_val,
                              split_seed_set ? split_seed : g.seed, build_force);
    if (train_cmd->parsed()) return cmd_train(g, train_opts, train_force);
    if (eval_cmd->parsed())
      return cmd_eval(g, eval_ks, eval_per_aspect, eval_independence, independence_user);
    if (explain->parsed()) return cmd_explain(g, explain_user, explain_item);
    if (sweep->parsed()) return cmd_sweep(g, sweep_opts, sweep_ns);
    if (rank->parsed())
      return cmd_llm_rank(g, rank_b, rank_corpus, rank_format, rank_users, rank_negatives,
                          rank_history_max);
  } catch (const sagcn::TrainDivergence& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const sagcn::BackendError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const sagcn::ManifestError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const sagcn::CorpusError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::out_of_range& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
