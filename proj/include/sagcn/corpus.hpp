#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "sagcn/common.hpp"

namespace sagcn {

struct InteractionRecord {
  std::string user_id;
  std::string item_id;
  double rating = 0.0;
  std::string review_text;
  std::optional<std::int64_t> timestamp;
};

struct CorpusError : std::runtime_error {
  explicit CorpusError(const std::string& msg, std::int64_t line_no = -1)
      : std::runtime_error(line_no >= 0 ? msg + " (line " + std::to_string(line_no) + ")" : msg),
        line(line_no) {}
  std::int64_t line;
};

/* Bidirectional mapping between raw string ids and dense indices.
   Indices are assigned in order of first appearance in the input file. */
struct IdMaps {
  std::unordered_map<std::string, Idx> user_index;
  std::unordered_map<std::string, Idx> item_index;
  std::vector<std::string> user_ids;
  std::vector<std::string> item_ids;

  Idx num_users() const { return static_cast<Idx>(user_ids.size()); }
  Idx num_items() const { return static_cast<Idx>(item_ids.size()); }

  Idx user(const std::string& raw);  /* insert-or-lookup */
  Idx item(const std::string& raw);

  void save(const std::filesystem::path& path) const;
  static IdMaps load(const std::filesystem::path& path);
};

enum class CorpusFormat { AmazonJsonLines, Csv };

struct Corpus {
  std::vector<InteractionRecord> records;  /* one per unique (user, item) pair */
  IdMaps ids;

  /* Dense (user, item) pairs aligned with records. */
  std::vector<Edge> pairs() const;
};

/* Parses a review corpus. Duplicate (user, item) pairs collapse to a single
   record keeping the most recent review (timestamp first, file order as the
   tiebreak). Malformed lines and empty inputs raise CorpusError. */
Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format);

struct SplitSpec {
  std::vector<Edge> train;
  std::vector<Edge> validation;
  std::vector<Edge> test;
  std::uint64_t rng_seed = 0;

  void save(const std::filesystem::path& path) const;
  static SplitSpec load(const std::filesystem::path& path);
};

/* Per-user holdout. Users with a single interaction stay entirely in train.
   Otherwise |test| = max(1, round(ratio_test * degree)) and |validation| =
   round(ratio_val * remaining), rounding half up; validation never empties
   train. Each partition is stored sorted by (user, item). */
SplitSpec split_interactions(std::span<const Edge> interactions, Idx num_users,
                             double ratio_test, double ratio_val, std::uint64_t seed);

}  // namespace sagcn
