#pragma once

#include <string>
#include <vector>

#include "sagcn/corpus.hpp"
#include "sagcn/interaction_store.hpp"

namespace sagcn {

/* Planted-aspect corpus: two aspects ("quality" over the first half of the
   items, "price" over the second half), each split into blocks_per_aspect
   item blocks. Every user belongs to one block per aspect through two
   independent group assignments, and interacts with items inside its blocks
   with probability within_block_p. Noise interactions carry no aspect
   mention. The optional control aspect ("style") tags structured edges at
   random without any block structure, giving evaluations a shuffled-edges
   reference. */
struct SyntheticConfig {
  Idx num_users = 200;
  Idx num_items = 100;
  Idx blocks_per_aspect = 5;
  double within_block_p = 0.8;
  Idx noise_per_user = 3;
  bool control_aspect = false;
  std::uint64_t seed = 7;
};

struct SyntheticData {
  AspectInteractionStore store;           /* ground truth, natural indices */
  std::vector<InteractionRecord> records; /* user-major, items ascending */
};

SyntheticData gen_synthetic(const SyntheticConfig& config);

/* JSON-lines corpus file in the same schema load_corpus expects. */
void write_synthetic_corpus(const std::filesystem::path& path, const SyntheticData& data);

}  // namespace sagcn
