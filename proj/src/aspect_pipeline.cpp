#include "sagcn/aspect_pipeline.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <tuple>

namespace sagcn {

using nlohmann::json;

/* ------------------------------------------------------------------ */
/* Prompts                                                             */

std::string aspect_discovery_prompt(const std::string& review) {
  return "A person bought a product and commented that " + trim(review) +
         ". Tell me from which perspectives the customer gave this review, "
         "e.g., quality, comfort, etc. Answer point by point.";
}

std::string aspect_annotation_prompt(const std::string& review,
                                     const std::vector<std::string>& aspect_names) {
  std::string listed;
  for (std::size_t i = 0; i < aspect_names.size(); ++i) {
    if (i > 0) listed += ", ";
    listed += aspect_names[i];
  }
  return "A person bought a product and commented that " + trim(review) +
         ". Tell me from which perspectives the customer gave this review, e.g., " + listed +
         ". Answer point by point.";
}

/* ------------------------------------------------------------------ */
/* Vocabulary                                                          */

int AspectVocabulary::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return static_cast<int>(i);
  }
  return -1;
}

void AspectVocabulary::save(const std::filesystem::path& path) const {
  json j;
  j["aspects"] = json::array();
  for (std::size_t i = 0; i < names.size(); ++i) {
    j["aspects"].push_back({{"name", names[i]}, {"count", counts[i]}});
  }
  j["merge_rules"] = merge_rules;
  write_file_atomic(path, j.dump(2) + "\n");
}

AspectVocabulary AspectVocabulary::load(const std::filesystem::path& path) {
  const json j = json::parse(read_file(path));
  AspectVocabulary v;
  for (const auto& a : j.at("aspects")) {
    v.names.push_back(a.at("name").get<std::string>());
    v.counts.push_back(a.at("count").get<std::int64_t>());
  }
  if (j.contains("merge_rules")) {
    for (auto it = j["merge_rules"].begin(); it != j["merge_rules"].end(); ++it) {
      v.merge_rules[it.key()] = it.value().get<std::string>();
    }
  }
  return v;
}

AspectVocabulary consolidate_aspects(const std::map<std::string, std::int64_t>& raw_counts,
                                     Idx target_n,
                                     const std::map<std::string, std::string>& merge_rules) {
  if (target_n <= 0) throw std::invalid_argument("consolidate: target_n must be positive");

  std::map<std::string, std::int64_t> merged;
  for (const auto& [raw, count] : raw_counts) {
    const std::string name = to_lower(trim(raw));
    if (name.empty()) continue;
    auto rule = merge_rules.find(name);
    merged[rule == merge_rules.end() ? name : rule->second] += count;
  }
  if (static_cast<Idx>(merged.size()) < target_n) {
    throw std::invalid_argument("consolidate: only " + std::to_string(merged.size()) +
                                " distinct aspects, need " + std::to_string(target_n));
  }

  std::vector<std::pair<std::string, std::int64_t>> ranked(merged.begin(), merged.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  AspectVocabulary vocab;
  vocab.merge_rules = merge_rules;
  for (Idx i = 0; i < target_n; ++i) {
    vocab.names.push_back(ranked[static_cast<std::size_t>(i)].first);
    vocab.counts.push_back(ranked[static_cast<std::size_t>(i)].second);
  }
  return vocab;
}

std::map<std::string, std::string> load_merge_rules(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open merge rules: " + path.string());
  std::map<std::string, std::string> rules;
  std::string line;
  std::int64_t line_no = 0;
  auto unquote = [](std::string s) {
    s = trim(s);
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
    return to_lower(trim(s));
  };
  while (std::getline(in, line)) {
    ++line_no;
    /* strip comments outside quotes */
    bool quoted = false;
    std::string body;
    for (char c : line) {
      if (c == '"') quoted = !quoted;
      if (c == '#' && !quoted) break;
      body.push_back(c);
    }
    body = trim(body);
    if (body.empty()) continue;
    const std::size_t eq = body.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("merge rules: expected `synonym = \"canonical\"` at line " +
                               std::to_string(line_no));
    const std::string key = unquote(body.substr(0, eq));
    const std::string value = unquote(body.substr(eq + 1));
    if (key.empty() || value.empty())
      throw std::runtime_error("merge rules: empty key or value at line " + std::to_string(line_no));
    rules[key] = value;
  }
  return rules;
}

/* ------------------------------------------------------------------ */
/* Response parsing                                                    */

namespace {

/* Strips "1.", "2)", "-", "*" style prefixes. Returns true when the line
   carried one, which marks it as a list entry. */
bool strip_list_prefix(std::string& line) {
  std::size_t i = 0;
  while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
  std::size_t start = i;
  if (i < line.size() && (line[i] == '-' || line[i] == '*')) {
    ++i;
    line = trim(line.substr(i));
    return true;
  }
  while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
  if (i > start && i < line.size() && (line[i] == '.' || line[i] == ')')) {
    line = trim(line.substr(i + 1));
    return true;
  }
  line = trim(line.substr(start));
  return false;
}

std::string strip_markdown(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    if (c != '*' && c != '_' && c != '`') out.push_back(c);
  }
  return out;
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) {
      lines.push_back(text.substr(pos));
      break;
    }
    lines.push_back(text.substr(pos, eol - pos));
    pos = eol + 1;
  }
  return lines;
}

}  // namespace

std::vector<std::string> parse_point_by_point_labels(const std::string& response) {
  std::vector<std::string> labels;
  for (std::string line : split_lines(response)) {
    const bool listed = strip_list_prefix(line);
    if (line.empty()) continue;
    const std::size_t colon = line.find(':');
    std::string label;
    if (colon != std::string::npos) {
      label = line.substr(0, colon);
    } else if (listed) {
      label = line;  /* bare "3. Durability" style entries */
    } else {
      continue;
    }
    label = to_lower(trim(strip_markdown(label)));
    while (!label.empty() && label.back() == '.') label.pop_back();
    label = trim(label);
    if (label.empty() || label.size() > 80) continue;
    if (std::find(labels.begin(), labels.end(), label) == labels.end()) labels.push_back(label);
  }
  return labels;
}

const char* to_string(ParseStatus s) {
  switch (s) {
    case ParseStatus::Clean: return "clean";
    case ParseStatus::Fallback: return "fallback";
    case ParseStatus::Failed: return "failed";
  }
  return "unknown";
}

ParseStatus parse_status_from_string(const std::string& s) {
  if (s == "clean") return ParseStatus::Clean;
  if (s == "fallback") return ParseStatus::Fallback;
  if (s == "failed") return ParseStatus::Failed;
  throw std::invalid_argument("unknown parse status: " + s);
}

const std::vector<std::string>& negation_patterns() {
  static const std::vector<std::string> patterns = {
      "did not mention",  "didn't mention", "does not mention", "no mention",
      "not mentioned",    "not addressed",  "no information",
  };
  return patterns;
}

int match_line_to_aspect(const std::string& line, const AspectVocabulary& vocab) {
  const std::string lower = to_lower(line);
  std::size_t best_pos = std::string::npos;
  std::size_t best_len = 0;
  int best_aspect = -1;

  auto consider = [&](const std::string& needle, int aspect) {
    const std::size_t pos = lower.find(needle);
    if (pos == std::string::npos) return;
    if (pos < best_pos || (pos == best_pos && needle.size() > best_len) ||
        (pos == best_pos && needle.size() == best_len && best_aspect > aspect)) {
      best_pos = pos;
      best_len = needle.size();
      best_aspect = aspect;
    }
  };

  for (std::size_t a = 0; a < vocab.names.size(); ++a) {
    consider(vocab.names[a], static_cast<int>(a));
  }
  for (const auto& [synonym, canonical] : vocab.merge_rules) {
    const int a = vocab.index_of(canonical);
    if (a >= 0) consider(synonym, a);
  }
  return best_aspect;
}

AspectAnnotation parse_annotation_response(const std::string& response,
                                           const AspectVocabulary& vocab) {
  AspectAnnotation ann;
  ann.raw_response = response;

  /* -1 unseen, 0 absent, 1 present; only the first attributed line counts. */
  std::vector<int> state(vocab.names.size(), -1);
  bool any = false;
  for (const std::string& line : split_lines(response)) {
    if (trim(line).empty()) continue;
    const int aspect = match_line_to_aspect(line, vocab);
    if (aspect < 0) continue;
    any = true;
    if (state[static_cast<std::size_t>(aspect)] != -1) continue;
    const std::string lower = to_lower(line);
    bool negated = false;
    for (const auto& pattern : negation_patterns()) {
      if (lower.find(pattern) != std::string::npos) {
        negated = true;
        break;
      }
    }
    state[static_cast<std::size_t>(aspect)] = negated ? 0 : 1;
  }

  if (!any) {
    ann.status = ParseStatus::Fallback;
    return ann;
  }
  ann.status = ParseStatus::Clean;
  for (std::size_t a = 0; a < vocab.names.size(); ++a) {
    if (state[a] == 1) ann.present_aspects.push_back(vocab.names[a]);
  }
  return ann;
}

/* ------------------------------------------------------------------ */
/* Drivers                                                             */

std::vector<std::string> discover_aspects(const std::string& review, LlmBackend& backend) {
  if (trim(review).empty()) throw std::invalid_argument("discover_aspects: empty review");
  return parse_point_by_point_labels(backend.complete(aspect_discovery_prompt(review)));
}

AspectAnnotation annotate_review(const std::string& review, const AspectVocabulary& vocab,
                                 LlmBackend& backend) {
  if (vocab.names.empty()) throw std::invalid_argument("annotate_review: empty vocabulary");
  return parse_annotation_response(backend.complete(aspect_annotation_prompt(review, vocab.names)),
                                   vocab);
}

DiscoveryResult run_discovery(const Corpus& corpus, LlmBackend& backend) {
  DiscoveryResult result;
  const auto pairs = corpus.pairs();
  std::vector<std::vector<std::string>> per_record(corpus.records.size());
  std::vector<PipelineFailure> failures;
  std::vector<std::int64_t> fallbacks;
  std::mutex mu;

  parallel_for(corpus.records.size(), backend.max_concurrency(), [&](std::size_t r) {
    const auto& rec = corpus.records[r];
    if (trim(rec.review_text).empty()) {
      std::lock_guard<std::mutex> lock(mu);
      failures.push_back({pairs[r].user, pairs[r].item, "discovery", "empty review"});
      return;
    }
    try {
      auto labels = discover_aspects(rec.review_text, backend);
      if (labels.empty()) {
        std::lock_guard<std::mutex> lock(mu);
        fallbacks.push_back(static_cast<std::int64_t>(r));
      }
      per_record[r] = std::move(labels);
    } catch (const BackendError& e) {
      std::lock_guard<std::mutex> lock(mu);
      failures.push_back({pairs[r].user, pairs[r].item, "discovery", e.what()});
    }
  });

  for (std::size_t r = 0; r < per_record.size(); ++r) {
    if (trim(corpus.records[r].review_text).empty()) continue;
    ++result.reviews_processed;
    for (const auto& label : per_record[r]) ++result.raw_counts[label];
  }
  result.fallback_reviews = static_cast<std::int64_t>(fallbacks.size());
  std::sort(failures.begin(), failures.end(), [](const auto& a, const auto& b) {
    return std::tie(a.user, a.item) < std::tie(b.user, b.item);
  });
  result.failures = std::move(failures);
  return result;
}

AnnotationRun run_annotation(const Corpus& corpus, const AspectVocabulary& vocab,
                             LlmBackend& backend) {
  AnnotationRun run;
  const auto pairs = corpus.pairs();
  run.annotations.resize(corpus.records.size());
  std::mutex mu;

  parallel_for(corpus.records.size(), backend.max_concurrency(), [&](std::size_t r) {
    AspectAnnotation ann;
    const auto& rec = corpus.records[r];
    if (trim(rec.review_text).empty()) {
      ann.status = ParseStatus::Failed;
      std::lock_guard<std::mutex> lock(mu);
      run.failures.push_back({pairs[r].user, pairs[r].item, "annotation", "empty review"});
    } else {
      try {
        ann = annotate_review(rec.review_text, vocab, backend);
      } catch (const BackendError& e) {
        ann = AspectAnnotation{};
        ann.status = ParseStatus::Failed;
        std::lock_guard<std::mutex> lock(mu);
        run.failures.push_back({pairs[r].user, pairs[r].item, "annotation", e.what()});
      }
    }
    ann.user = pairs[r].user;
    ann.item = pairs[r].item;
    run.annotations[r] = std::move(ann);
  });

  std::sort(run.annotations.begin(), run.annotations.end(), [](const auto& a, const auto& b) {
    return std::tie(a.user, a.item) < std::tie(b.user, b.item);
  });
  std::sort(run.failures.begin(), run.failures.end(), [](const auto& a, const auto& b) {
    return std::tie(a.user, a.item) < std::tie(b.user, b.item);
  });
  return run;
}

void save_annotations(const std::filesystem::path& path,
                      std::span<const AspectAnnotation> annotations) {
  std::ostringstream out;
  for (const auto& ann : annotations) {
    json j;
    j["user"] = ann.user;
    j["item"] = ann.item;
    j["present"] = ann.present_aspects;
    j["status"] = to_string(ann.status);
    j["raw"] = ann.raw_response;
    out << j.dump() << "\n";
  }
  write_file_atomic(path, out.str());
}

std::vector<AspectAnnotation> load_annotations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open annotations: " + path.string());
  std::vector<AspectAnnotation> out;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const json j = json::parse(line);
    AspectAnnotation ann;
    ann.user = j.at("user").get<Idx>();
    ann.item = j.at("item").get<Idx>();
    for (const auto& name : j.at("present")) ann.present_aspects.push_back(name.get<std::string>());
    ann.status = parse_status_from_string(j.at("status").get<std::string>());
    if (j.contains("raw")) ann.raw_response = j["raw"].get<std::string>();
    out.push_back(std::move(ann));
  }
  return out;
}

AspectInteractionStore build_aspect_interactions(std::span<const AspectAnnotation> annotations,
                                                 std::span<const Edge> base_pairs,
                                                 Idx num_users, Idx num_items,
                                                 const AspectVocabulary& vocab) {
  AspectInteractionStore store;
  store.num_users = num_users;
  store.num_items = num_items;
  store.aspect_names = vocab.names;
  store.base_edges.assign(base_pairs.begin(), base_pairs.end());
  std::sort(store.base_edges.begin(), store.base_edges.end());
  store.base_edges.erase(std::unique(store.base_edges.begin(), store.base_edges.end()),
                         store.base_edges.end());

  store.aspect_edges.resize(vocab.names.size());
  for (const auto& ann : annotations) {
    const Edge pair{ann.user, ann.item};
    if (!std::binary_search(store.base_edges.begin(), store.base_edges.end(), pair))
      throw std::logic_error("annotation for unknown pair (" + std::to_string(ann.user) + ", " +
                             std::to_string(ann.item) + ")");
    for (const auto& name : ann.present_aspects) {
      const int a = vocab.index_of(name);
      if (a < 0) throw std::logic_error("annotation references unknown aspect: " + name);
      store.aspect_edges[static_cast<std::size_t>(a)].push_back({ann.user, ann.item});
    }
  }
  for (auto& edges : store.aspect_edges) {
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  }
  store.validate();
  return store;
}

/* ------------------------------------------------------------------ */
/* Zero-shot ranking baseline                                          */

std::string rank_prompt(const std::vector<RankHistoryItem>& history,
                        const std::vector<RankCandidate>& candidates) {
  std::string hist_block;
  for (std::size_t i = 0; i < history.size(); ++i) {
    char rating[32];
    std::snprintf(rating, sizeof(rating), "%.1f", history[i].rating);
    hist_block += "\n" + std::to_string(i + 1) + ". " + history[i].title + " (item id: " +
                  history[i].id + ") - Rating: " + rating + " stars";
  }
  std::string cand_block;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    cand_block += "\n" + std::to_string(i + 1) + ". " + candidates[i].title + " (item id: " +
                  candidates[i].id + ")";
  }
  return "I want you to rate every candidate product's historical record of purchased habits. "
         "You are encouraged to learn his preferences from the historical records he has "
         "purchased. Here are The historical interactions of a user include: " +
         hist_block +
         ". Now, how will the user rate these candidate products? (1 being lowest and 5 being "
         "highest) " +
         cand_block +
         ". Importantly, the interacted items should have been excluded from the rating. "
         "Finally, Only output rating item list, which template is: 1. Swingline GBC UltraClear "
         "Thermal Laminating Pouches, Menu Size, 3 Mil, 25 Pack (item id: B00006IA2K) - Rating: "
         "4.0 stars";
}

std::vector<std::string> llm_rank_candidates(const std::vector<RankHistoryItem>& history,
                                             const std::vector<RankCandidate>& candidates,
                                             LlmBackend& backend) {
  const std::string response = backend.complete(rank_prompt(history, candidates));

  struct Scored {
    double rating = 0.0;
    std::size_t response_pos = std::numeric_limits<std::size_t>::max();
  };
  std::map<std::string, Scored> by_id;

  std::size_t order = 0;
  for (const std::string& raw : split_lines(response)) {
    const std::string line = trim(raw);
    const std::size_t id_open = line.find("(item id: ");
    if (id_open == std::string::npos) continue;
    const std::size_t id_close = line.find(')', id_open);
    if (id_close == std::string::npos) continue;
    const std::string id = trim(line.substr(id_open + 10, id_close - id_open - 10));
    const std::size_t rating_pos = line.find("Rating:", id_close);
    if (rating_pos == std::string::npos) continue;
    double rating = 0.0;
    try {
      rating = std::stod(line.substr(rating_pos + 7));
    } catch (const std::exception&) {
      continue;
    }
    if (!by_id.count(id)) by_id[id] = {rating, order++};
  }

  std::vector<std::size_t> perm(candidates.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  std::stable_sort(perm.begin(), perm.end(), [&](std::size_t a, std::size_t b) {
    const auto ia = by_id.find(candidates[a].id);
    const auto ib = by_id.find(candidates[b].id);
    const Scored sa = ia == by_id.end() ? Scored{} : ia->second;
    const Scored sb = ib == by_id.end() ? Scored{} : ib->second;
    if (sa.rating != sb.rating) return sa.rating > sb.rating;
    return sa.response_pos < sb.response_pos;
  });

  std::vector<std::string> ranked;
  ranked.reserve(candidates.size());
  for (std::size_t i : perm) ranked.push_back(candidates[i].id);
  return ranked;
}

}  // namespace sagcn
