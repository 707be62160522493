#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "sagcn/common.hpp"

namespace sagcn {

struct BackendError : std::runtime_error {
  explicit BackendError(const std::string& msg) : std::runtime_error(msg) {}
};

/* Completion provider. Implementations must be safe to call from multiple
   threads at once. */
class LlmBackend {
 public:
  virtual ~LlmBackend() = default;
  virtual std::string complete(const std::string& prompt) = 0;
  /* Stable identity used in cache keys, e.g. "mock" or "http:vicuna-13b". */
  virtual std::string id() const = 0;
  virtual int max_concurrency() const { return 1; }
};

struct HttpBackendConfig {
  std::string endpoint;      /* http(s)://host:port */
  std::string model;
  std::string api_key_env = "SAGCN_API_KEY";
  int max_concurrency = 4;
  int max_retries = 3;
  std::chrono::milliseconds timeout{120000};
  std::chrono::milliseconds retry_backoff{500};
};

/* OpenAI-compatible chat completions client (temperature 0). Retries
   transport errors and 5xx responses with linear backoff; any 4xx fails
   immediately. */
class HttpBackend : public LlmBackend {
 public:
  explicit HttpBackend(HttpBackendConfig config);
  std::string complete(const std::string& prompt) override;
  std::string id() const override { return "http:" + config_.model; }
  int max_concurrency() const override { return config_.max_concurrency; }

 private:
  HttpBackendConfig config_;
  std::string api_key_;
};

/* Offline stand-in used by tests and the pipeline's mock mode. Resolution
   order per prompt: exact canned response, first matching substring rule,
   then (if enabled) a deterministic synthesizer that echoes plausible
   completions derived from the prompt text itself. */
class MockBackend : public LlmBackend {
 public:
  MockBackend() = default;

  std::string complete(const std::string& prompt) override;
  std::string id() const override { return "mock"; }
  int max_concurrency() const override { return concurrency_; }

  void set_concurrency(int n) { concurrency_ = n; }
  void set_synthesize(bool on) { synthesize_ = on; }

  void add_canned(const std::string& prompt, const std::string& response);
  /* Rule matches when every needle occurs in the prompt. First added wins. */
  void add_rule(std::vector<std::string> contains_all, std::string response);
  /* Prompts containing the needle raise BackendError (failure injection). */
  void fail_when_contains(const std::string& needle) { fail_needles_.push_back(needle); }

  /* JSON array of {"prompt": ..., "response": ...} or
     {"contains": "str" | ["s", ...], "response": ...}. */
  void load_fixtures(const std::filesystem::path& path);

  std::int64_t call_count() const { return calls_.load(); }

 private:
  struct Rule {
    std::vector<std::string> needles;
    std::string response;
  };
  std::map<std::string, std::string> canned_;  /* keyed by sha256(prompt) */
  std::vector<Rule> rules_;
  std::vector<std::string> fail_needles_;
  std::atomic<std::int64_t> calls_{0};
  bool synthesize_ = true;
  int concurrency_ = 4;
};

/* Pieces of the mock synthesizer exposed for reuse and direct testing. */
namespace mock_detail {
std::string synthesize(const std::string& prompt);
bool looks_like_rank_prompt(const std::string& prompt);
}  // namespace mock_detail

/* Write-once disk cache wrapped around another backend. Entries are keyed
   by sha256(backend id + prompt) so switching models never aliases. */
class CachedBackend : public LlmBackend {
 public:
  CachedBackend(std::shared_ptr<LlmBackend> inner, std::filesystem::path cache_dir);

  std::string complete(const std::string& prompt) override;
  std::string id() const override { return inner_->id(); }
  int max_concurrency() const override { return inner_->max_concurrency(); }

  std::int64_t hits() const { return hits_.load(); }
  std::int64_t misses() const { return misses_.load(); }

 private:
  std::shared_ptr<LlmBackend> inner_;
  std::filesystem::path dir_;
  std::atomic<std::int64_t> hits_{0};
  std::atomic<std::int64_t> misses_{0};
};

/* Runs fn(0..n-1) on a small worker pool. fn must handle its own errors;
   any escaped exception is rethrown on the caller thread after the pool
   drains. */
void parallel_for(std::size_t n, int concurrency, const std::function<void(std::size_t)>& fn);

}  // namespace sagcn
