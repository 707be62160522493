#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "sagcn/llm_backend.hpp"

#include <httplib.h>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <thread>

namespace sagcn {

using nlohmann::json;

/* ------------------------------------------------------------------ */
/* HttpBackend                                                         */

HttpBackend::HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
  if (config_.endpoint.empty()) throw BackendError("http backend: empty endpoint");
  if (const char* key = std::getenv(config_.api_key_env.c_str())) api_key_ = key;
}

std::string HttpBackend::complete(const std::string& prompt) {
  json body;
  body["model"] = config_.model;
  body["messages"] = json::array({json{{"role", "user"}, {"content", prompt}}});
  body["temperature"] = 0;
  const std::string payload = body.dump();

  std::string last_error;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(config_.retry_backoff * attempt);

    httplib::Client client(config_.endpoint);
    client.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(config_.timeout));
    client.set_read_timeout(std::chrono::duration_cast<std::chrono::seconds>(config_.timeout));
    client.set_write_timeout(std::chrono::duration_cast<std::chrono::seconds>(config_.timeout));
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

    auto res = client.Post("/v1/chat/completions", headers, payload, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_error = "server error: HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw BackendError("http backend: HTTP " + std::to_string(res->status) + ": " + res->body);
    }
    try {
      const json reply = json::parse(res->body);
      return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
      throw BackendError(std::string("http backend: malformed response: ") + e.what());
    }
  }
  throw BackendError("http backend: retries exhausted: " + last_error);
}

/* ------------------------------------------------------------------ */
/* Mock synthesizer                                                    */

namespace mock_detail {

namespace {

struct LexiconEntry {
  const char* name;
  std::vector<const char*> needles;
};

/* Canonical aspect cues the synthesizer recognizes inside review text. */
const std::vector<LexiconEntry>& lexicon() {
  static const std::vector<LexiconEntry> table = {
      {"quality", {"quality", "well made", "well-made", "sturdy", "cheaply made"}},
      {"functionality", {"function", "works", "feature", "versatile"}},
      {"ease of use", {"easy to use", "ease of use", "user friendly", "user-friendly", "hard to use"}},
      {"convenience", {"convenien"}},
      {"comfort", {"comfort"}},
      {"durability", {"durab", "broke", "flimsy", "fell apart", "melted", "wore out"}},
      {"design", {"design", "aesthetic", "color"}},
      {"price", {"price", "expensive", "cheap", "cost", "bargain", "value"}},
      {"style", {"style", "stylish"}},
  };
  return table;
}

bool mentions(const std::string& review_lower, const std::string& aspect_name) {
  for (const auto& entry : lexicon()) {
    if (aspect_name == entry.name) {
      for (const char* needle : entry.needles) {
        if (review_lower.find(needle) != std::string::npos) return true;
      }
      return false;
    }
  }
  return review_lower.find(aspect_name) != std::string::npos;
}

std::string title_case(const std::string& s) {
  std::string out = s;
  if (!out.empty()) out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
  return out;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const std::size_t comma = s.find(", ", pos);
    if (comma == std::string::npos) {
      const std::string part = trim(s.substr(pos));
      if (!part.empty()) out.push_back(part);
      break;
    }
    const std::string part = trim(s.substr(pos, comma - pos));
    if (!part.empty()) out.push_back(part);
    pos = comma + 2;
  }
  return out;
}

double hashed_rating(const std::string& prompt, const std::string& item_id) {
  const std::string digest = sha256_hex(item_id + "\n" + prompt);
  std::uint64_t x = 0;
  for (int i = 0; i < 16; ++i) {
    const char c = digest[static_cast<std::size_t>(i)];
    x = (x << 4) | static_cast<std::uint64_t>(c <= '9' ? c - '0' : c - 'a' + 10);
  }
  Rng rng(x);
  const double r = 1.0 + 4.0 * rng.uniform();
  return std::floor(r * 10.0 + 0.5) / 10.0;
}

std::string synthesize_rankings(const std::string& prompt) {
  const std::string open_marker = "(1 being lowest and 5 being highest) ";
  const std::string close_marker = ". Importantly,";
  const std::size_t open = prompt.find(open_marker);
  const std::size_t close = prompt.rfind(close_marker);
  if (open == std::string::npos || close == std::string::npos || close <= open)
    return "I cannot rate these products.";
  const std::string block = prompt.substr(open + open_marker.size(), close - open - open_marker.size());

  std::string out;
  int n = 0;
  std::size_t pos = 0;
  while (pos < block.size()) {
    std::size_t eol = block.find('\n', pos);
    if (eol == std::string::npos) eol = block.size();
    const std::string line = trim(block.substr(pos, eol - pos));
    pos = eol + 1;
    if (line.empty()) continue;
    const std::size_t id_open = line.rfind("(item id: ");
    if (id_open == std::string::npos) continue;
    const std::size_t id_close = line.find(')', id_open);
    if (id_close == std::string::npos) continue;
    const std::string id = line.substr(id_open + 10, id_close - id_open - 10);
    std::size_t title_begin = line.find(". ");
    title_begin = title_begin == std::string::npos ? 0 : title_begin + 2;
    const std::string title = trim(line.substr(title_begin, id_open - title_begin));
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f", hashed_rating(prompt, id));
    if (n > 0) out += "\n";
    out += std::to_string(++n) + ". " + title + " (item id: " + id + ") - Rating: " + buf + " stars";
  }
  return n == 0 ? "I cannot rate these products." : out;
}

}  // namespace

bool looks_like_rank_prompt(const std::string& prompt) {
  return starts_with(prompt, "I want you to rate every candidate product");
}

std::string synthesize(const std::string& prompt) {
  if (looks_like_rank_prompt(prompt)) return synthesize_rankings(prompt);

  const std::string review_open = "commented that ";
  const std::string review_close = ". Tell me from which perspectives the customer gave this review, e.g., ";
  const std::string tail = ". Answer point by point.";
  const std::size_t open = prompt.find(review_open);
  const std::size_t close = prompt.rfind(review_close);
  const std::size_t end = prompt.rfind(tail);
  if (open == std::string::npos || close == std::string::npos || end == std::string::npos ||
      close <= open || end <= close) {
    return "I am not sure how to respond to that.";
  }
  const std::string review = to_lower(prompt.substr(open + review_open.size(), close - open - review_open.size()));
  std::string listed = prompt.substr(close + review_close.size(), end - close - review_close.size());

  bool discovery = false;
  {
    std::string probe = trim(listed);
    while (!probe.empty() && probe.back() == '.') probe.pop_back();
    if (probe.size() >= 3 && probe.substr(probe.size() - 3) == "etc") discovery = true;
  }

  std::string out;
  int n = 0;
  if (discovery) {
    for (const auto& entry : lexicon()) {
      if (!mentions(review, entry.name)) continue;
      if (n > 0) out += "\n";
      out += std::to_string(++n) + ". " + title_case(entry.name) +
             ": The customer commented on the " + entry.name + " of the product.";
    }
    if (n == 0) return "The review does not give enough detail to identify specific perspectives.";
    return out;
  }

  for (const auto& name : split_list(to_lower(listed))) {
    if (n > 0) out += "\n";
    ++n;
    if (mentions(review, name)) {
      out += std::to_string(n) + ". " + title_case(name) + ": The customer mentioned the " + name +
             " of the product.";
    } else {
      out += std::to_string(n) + ". " + title_case(name) +
             ": The customer did not mention anything about the " + name + ".";
    }
  }
  return n == 0 ? "I am not sure how to respond to that." : out;
}

}  // namespace mock_detail

/* ------------------------------------------------------------------ */
/* MockBackend                                                         */

void MockBackend::add_canned(const std::string& prompt, const std::string& response) {
  canned_[sha256_hex(prompt)] = response;
}

void MockBackend::add_rule(std::vector<std::string> contains_all, std::string response) {
  rules_.push_back({std::move(contains_all), std::move(response)});
}

void MockBackend::load_fixtures(const std::filesystem::path& path) {
  const json j = json::parse(read_file(path));
  if (!j.is_array()) throw BackendError("mock fixtures: expected a JSON array: " + path.string());
  for (const auto& entry : j) {
    const std::string response = entry.at("response").get<std::string>();
    if (entry.contains("prompt")) {
      add_canned(entry["prompt"].get<std::string>(), response);
    } else if (entry.contains("contains")) {
      std::vector<std::string> needles;
      if (entry["contains"].is_string()) {
        needles.push_back(entry["contains"].get<std::string>());
      } else {
        for (const auto& s : entry["contains"]) needles.push_back(s.get<std::string>());
      }
      add_rule(std::move(needles), response);
    } else {
      throw BackendError("mock fixtures: entry needs 'prompt' or 'contains'");
    }
  }
}

std::string MockBackend::complete(const std::string& prompt) {
  calls_.fetch_add(1);
  for (const auto& needle : fail_needles_) {
    if (prompt.find(needle) != std::string::npos)
      throw BackendError("mock backend: injected failure for needle '" + needle + "'");
  }
  const auto canned = canned_.find(sha256_hex(prompt));
  if (canned != canned_.end()) return canned->second;
  for (const auto& rule : rules_) {
    bool all = true;
    for (const auto& needle : rule.needles) {
      if (prompt.find(needle) == std::string::npos) {
        all = false;
        break;
      }
    }
    if (all) return rule.response;
  }
  if (synthesize_) return mock_detail::synthesize(prompt);
  throw BackendError("mock backend: no response registered for prompt");
}

/* ------------------------------------------------------------------ */
/* CachedBackend                                                       */

CachedBackend::CachedBackend(std::shared_ptr<LlmBackend> inner, std::filesystem::path cache_dir)
    : inner_(std::move(inner)), dir_(std::move(cache_dir)) {
  std::filesystem::create_directories(dir_);
}

std::string CachedBackend::complete(const std::string& prompt) {
  const std::string key = sha256_hex(inner_->id() + "\n" + prompt);
  const std::filesystem::path entry = dir_ / (key + ".json");
  if (std::filesystem::exists(entry)) {
    try {
      const json j = json::parse(read_file(entry));
      hits_.fetch_add(1);
      return j.at("response").get<std::string>();
    } catch (const std::exception&) {
      /* corrupt entry: fall through and overwrite */
    }
  }
  const std::string response = inner_->complete(prompt);
  misses_.fetch_add(1);
  json j;
  j["backend"] = inner_->id();
  j["prompt"] = prompt;
  j["response"] = response;
  write_file_atomic(entry, j.dump(2) + "\n");
  return response;
}

/* ------------------------------------------------------------------ */

void parallel_for(std::size_t n, int concurrency, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, concurrency)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace sagcn
