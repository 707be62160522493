#pragma once

#include <span>
#include <vector>

#include "sagcn/corpus.hpp"
#include "sagcn/eval.hpp"
#include "sagcn/graphs.hpp"
#include "sagcn/model.hpp"

namespace sagcn {

struct TrainDivergence : std::runtime_error {
  explicit TrainDivergence(const std::string& msg) : std::runtime_error(msg) {}
};

struct TrainConfig {
  Idx batch_size = 1024;
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;  /* lambda on the layer-0 rows each batch touches */
  Idx max_epochs = 200;
  Idx patience = 20;
  int eval_k = 10;
  std::uint64_t seed = 42;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
};

struct Triplet {
  Idx user = 0;
  Idx pos_item = 0;
  Idx neg_item = 0;
};

/* One uniformly drawn uninteracted negative per training edge, positives
   visited in shuffled order. Deterministic for a fixed seed. Users who
   interacted with every item are skipped with a warning. */
std::vector<Triplet> sample_triplets(std::span<const Edge> train_edges,
                                     const UserItemLists& train_by_user, Idx num_items,
                                     std::uint64_t epoch_seed);

/* Pairwise ranking objective: sum of -ln sigmoid(pos - neg) plus
   lambda * params_sq_norm. Throws TrainDivergence on non-finite scores. */
double bpr_loss(std::span<const double> pos_scores, std::span<const double> neg_scores,
                double lambda, double params_sq_norm);

/* Squared norm of the layer-0 rows referenced by the batch, one term per
   triplet occurrence (the params_sq_norm fed to bpr_loss). */
double batch_param_sq_norm(const ForwardCache& cache, std::span<const Triplet> batch);

/* Gradient of the batch objective with respect to every layer-0 block:
   score gradients scatter into per-block aggregate gradients, each is pulled
   back through the propagation adjoint once per layer and summed, and the
   regularization adds 2*lambda times the touched rows. */
EmbeddingTable backward(const ForwardCache& cache, const NormalizedAspectGraph& graph,
                        std::span<const Triplet> batch, double lambda);

struct AdamState {
  std::vector<Mat> m_user, v_user, m_item, v_item;
  std::int64_t step = 0;
};

void adam_step(EmbeddingTable& table, const EmbeddingTable& grad, AdamState& state,
               const TrainConfig& config);

struct EpochStats {
  double mean_loss = 0.0;
  Idx num_triplets = 0;
};

/* One pass over the triplets in batches: forward, loss, backward, Adam. */
EpochStats train_epoch(EmbeddingTable& table, AdamState& adam,
                       const NormalizedAspectGraph& graph, const ModelConfig& model_config,
                       const TrainConfig& train_config, std::span<const Triplet> triplets);

/* Strict-improvement early stopping. */
class EarlyStopper {
 public:
  explicit EarlyStopper(Idx patience);
  bool observe(double metric);  /* true when metric strictly improves */
  bool should_stop() const { return since_improvement_ >= patience_; }
  Idx best_index() const { return best_index_; }
  double best() const { return best_; }

 private:
  Idx patience_;
  double best_;
  Idx best_index_ = -1;
  Idx since_improvement_ = 0;
  Idx observed_ = 0;
};

struct EpochLog {
  Idx epoch = 0;  /* 1-based */
  double mean_loss = 0.0;
  double val_recall = 0.0;
  double val_ndcg = 0.0;
  double elapsed_s = 0.0;  /* wall time; everything else is deterministic */
};

struct TrainResult {
  EmbeddingTable best_table;
  Idx best_epoch = -1;
  double best_val_recall = 0.0;
  Idx epochs_run = 0;
  std::vector<EpochLog> log;
};

/* Full training loop with per-epoch validation recall@eval_k and early
   stopping (skipped when the validation split is empty; the final table is
   returned instead). Throws TrainDivergence when the loss leaves the finite
   range. */
TrainResult train(const SplitSpec& split, const NormalizedAspectGraph& graph,
                  const ModelConfig& model_config, const TrainConfig& train_config);

}  // namespace sagcn
