#pragma once

#include <string>
#include <vector>

#include "sagcn/common.hpp"
#include "sagcn/graphs.hpp"

namespace sagcn {

enum class Entity { User, Item };

struct ModelConfig {
  Idx num_aspects = 1;   /* semantic aspects, matching the graph */
  Idx embed_dim = 64;    /* d, per aspect */
  Idx num_layers = 3;    /* K */
  double init_scale = 0.01;
  std::uint64_t seed = 42;
  /* When set, one extra identity block (never propagated) joins the
     concatenation, the literal reading of the final representation that
     keeps a raw id embedding alongside the aspect aggregates. */
  bool include_initial_block = false;

  Idx num_blocks() const { return num_aspects + (include_initial_block ? 1 : 0); }
};

/* Per-block layer-0 embeddings. Semantic aspect a lives at block index a;
   the optional identity block sits last. */
struct EmbeddingTable {
  std::vector<Mat> user_blocks;
  std::vector<Mat> item_blocks;

  Idx num_blocks() const { return static_cast<Idx>(user_blocks.size()); }
  Idx num_users() const { return user_blocks.empty() ? 0 : user_blocks[0].rows; }
  Idx num_items() const { return item_blocks.empty() ? 0 : item_blocks[0].rows; }
  Idx dim() const { return user_blocks.empty() ? 0 : user_blocks[0].cols; }

  void zero();
  double squared_norm() const;
};

EmbeddingTable init_embeddings(const ModelConfig& config, Idx num_users, Idx num_items);

/* All layer outputs plus the per-block aggregates (the layer sum). The
   identity block, if present, has a single layer equal to its aggregate. */
struct ForwardCache {
  std::vector<std::vector<Mat>> user_layers;  /* [block][layer] */
  std::vector<std::vector<Mat>> item_layers;
  std::vector<Mat> user_agg;
  std::vector<Mat> item_agg;
  Idx num_semantic_aspects = 0;
  Idx num_layers = 0;

  Idx num_blocks() const { return static_cast<Idx>(user_agg.size()); }
  Idx num_users() const { return user_agg.empty() ? 0 : user_agg[0].rows; }
  Idx num_items() const { return item_agg.empty() ? 0 : item_agg[0].rows; }
  Idx dim() const { return user_agg.empty() ? 0 : user_agg[0].cols; }
};

ForwardCache forward(const EmbeddingTable& table, const NormalizedAspectGraph& graph,
                     const ModelConfig& config);

/* Concatenated blocks. The identity block, if present, leads. */
std::vector<double> final_representation(const ForwardCache& cache, Entity entity, Idx index);

/* Inner product of the concatenated representations, accumulated block by
   block so it decomposes exactly into the per-aspect components. */
double score(const ForwardCache& cache, Idx user, Idx item);
std::vector<double> score_by_aspect(const ForwardCache& cache, Idx user, Idx item);
double score_masked(const ForwardCache& cache, Idx user, Idx item,
                    const std::vector<bool>& block_mask);

/* Pairwise cosine similarity between the semantic aspect aggregates of one
   entity. Blocks with zero norm yield NaN rows/columns. */
Mat aspect_independence(const ForwardCache& cache, Entity entity, Idx index);

struct CheckpointMeta {
  std::vector<std::string> aspect_names;
  ModelConfig config;
};

/* Binary checkpoint, float32 little-endian payload, magic "SAGM". */
void save_checkpoint(const std::filesystem::path& path, const EmbeddingTable& table,
                     const ModelConfig& config);
std::pair<EmbeddingTable, ModelConfig> load_checkpoint(const std::filesystem::path& path);

}  // namespace sagcn
