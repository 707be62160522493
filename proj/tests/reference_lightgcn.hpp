#pragma once

#include <cstdint>
#include <vector>

#include "sagcn/common.hpp"
#include "sagcn/trainer.hpp"

/* Dense LightGCN written from scratch against the stacked (N+M)-node view
   of the bipartite graph, with its own matmul, backward pass and Adam.
   Shares only plain data types with the library so it can serve as an
   independent oracle for the single-aspect reduction. */
namespace refimpl {

class RefLightGcn {
 public:
  RefLightGcn(std::int64_t num_users, std::int64_t num_items, std::int64_t dim,
              std::int64_t num_layers, const std::vector<sagcn::Edge>& edges);

  /* Layer-0 parameters, user rows first. Both inputs are row-major. */
  void set_embeddings(const std::vector<double>& user0, const std::vector<double>& item0);

  /* Layer k output for all N+M nodes, row-major. */
  std::vector<double> layer_output(std::int64_t k) const;

  /* Unweighted sum of layers 0..K. */
  std::vector<double> aggregate() const;

  double score(std::int64_t user, std::int64_t item) const;

  /* One epoch of BPR over the triplets in sequential batches, dense Adam,
     no weight decay. Returns the mean per-triplet loss. */
  double run_epoch(const std::vector<sagcn::Triplet>& triplets, std::int64_t batch_size,
                   double lr, double beta1, double beta2, double eps);

  const std::vector<double>& embeddings() const { return emb_; }
  std::int64_t num_users() const { return n_; }
  std::int64_t num_items() const { return m_; }
  std::int64_t dim() const { return d_; }

 private:
  std::int64_t n_, m_, d_, layers_;
  std::int64_t nodes_;
  std::vector<double> adj_;  /* (N+M) x (N+M), symmetric */
  std::vector<double> emb_;  /* (N+M) x d */
  std::vector<double> adam_m_, adam_v_;
  std::int64_t adam_step_ = 0;

  std::vector<double> propagate_once(const std::vector<double>& x) const;
  std::vector<std::vector<double>> all_layers() const;
};

}  // namespace refimpl
