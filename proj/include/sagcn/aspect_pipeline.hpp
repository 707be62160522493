#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "sagcn/corpus.hpp"
#include "sagcn/interaction_store.hpp"
#include "sagcn/llm_backend.hpp"

namespace sagcn {

/* ------------------------------------------------------------------ */
/* Prompts                                                             */

std::string aspect_discovery_prompt(const std::string& review);
std::string aspect_annotation_prompt(const std::string& review,
                                     const std::vector<std::string>& aspect_names);

/* ------------------------------------------------------------------ */
/* Vocabulary                                                          */

struct AspectVocabulary {
  std::vector<std::string> names;    /* descending review frequency */
  std::vector<std::int64_t> counts;  /* aligned with names */
  std::map<std::string, std::string> merge_rules;  /* synonym -> canonical */

  int index_of(const std::string& name) const;
  bool contains(const std::string& name) const { return index_of(name) >= 0; }

  void save(const std::filesystem::path& path) const;
  static AspectVocabulary load(const std::filesystem::path& path);
};

/* Merges synonyms, sums counts, ranks by frequency (ties lexicographic) and
   keeps the top target_n aspects. Throws std::invalid_argument when fewer
   than target_n distinct aspects exist. */
AspectVocabulary consolidate_aspects(const std::map<std::string, std::int64_t>& raw_counts,
                                     Idx target_n,
                                     const std::map<std::string, std::string>& merge_rules);

/* Flat `key = "value"` file, one synonym per line, # comments allowed. */
std::map<std::string, std::string> load_merge_rules(const std::filesystem::path& path);

/* ------------------------------------------------------------------ */
/* Response parsing                                                    */

/* Extracts lowercased aspect labels from a point-by-point response:
   numbered or bulleted lines, label taken before the colon, markdown
   emphasis stripped. Order preserved, duplicates removed. */
std::vector<std::string> parse_point_by_point_labels(const std::string& response);

enum class ParseStatus { Clean, Fallback, Failed };

const char* to_string(ParseStatus s);
ParseStatus parse_status_from_string(const std::string& s);

struct AspectAnnotation {
  Idx user = -1;
  Idx item = -1;
  std::vector<std::string> present_aspects;  /* vocabulary order */
  std::string raw_response;
  ParseStatus status = ParseStatus::Clean;
};

/* Phrases that mark an aspect line as reporting absence. A negative opinion
   ("the bins were not durable") is still presence; only statements that the
   review did not cover the aspect count as absence. */
const std::vector<std::string>& negation_patterns();

/* Maps one response line to a vocabulary aspect: the aspect whose canonical
   name or registered synonym occurs earliest wins; ties prefer the longest
   match, then vocabulary order. Returns -1 when nothing matches. */
int match_line_to_aspect(const std::string& line, const AspectVocabulary& vocab);

/* Applies the line rules to a full response. The first line attributed to an
   aspect decides its presence; zero attributed lines yields Fallback with no
   aspects present. */
AspectAnnotation parse_annotation_response(const std::string& response,
                                           const AspectVocabulary& vocab);

/* ------------------------------------------------------------------ */
/* Corpus-level drivers                                                */

std::vector<std::string> discover_aspects(const std::string& review, LlmBackend& backend);

AspectAnnotation annotate_review(const std::string& review, const AspectVocabulary& vocab,
                                 LlmBackend& backend);

struct PipelineFailure {
  Idx user = -1;
  Idx item = -1;
  std::string stage;
  std::string message;
};

struct DiscoveryResult {
  std::map<std::string, std::int64_t> raw_counts;  /* label -> #reviews mentioning it */
  std::int64_t reviews_processed = 0;
  std::int64_t fallback_reviews = 0;
  std::vector<PipelineFailure> failures;
};

/* Runs discovery over every record. A failed or empty review never aborts
   the run; it is skipped and logged. */
DiscoveryResult run_discovery(const Corpus& corpus, LlmBackend& backend);

struct AnnotationRun {
  std::vector<AspectAnnotation> annotations;  /* sorted by (user, item) */
  std::vector<PipelineFailure> failures;
};

AnnotationRun run_annotation(const Corpus& corpus, const AspectVocabulary& vocab,
                             LlmBackend& backend);

void save_annotations(const std::filesystem::path& path, std::span<const AspectAnnotation> annotations);
std::vector<AspectAnnotation> load_annotations(const std::filesystem::path& path);

/* Every annotated pair lands in base_edges; pairs whose annotation lists an
   aspect land in that aspect's edge list too. Fallback and failed
   annotations contribute the base edge only. */
AspectInteractionStore build_aspect_interactions(std::span<const AspectAnnotation> annotations,
                                                 std::span<const Edge> base_pairs,
                                                 Idx num_users, Idx num_items,
                                                 const AspectVocabulary& vocab);

/* ------------------------------------------------------------------ */
/* Zero-shot ranking baseline                                          */

struct RankHistoryItem {
  std::string title;
  std::string id;
  double rating = 0.0;
};

struct RankCandidate {
  std::string title;
  std::string id;
};

std::string rank_prompt(const std::vector<RankHistoryItem>& history,
                        const std::vector<RankCandidate>& candidates);

/* Asks the backend to rate the candidates and returns their ids best-first.
   Candidates missing from the response score 0; ties keep response order,
   then prompt order. */
std::vector<std::string> llm_rank_candidates(const std::vector<RankHistoryItem>& history,
                                             const std::vector<RankCandidate>& candidates,
                                             LlmBackend& backend);

}  // namespace sagcn
