#pragma once

#include <span>
#include <string>
#include <vector>

#include "sagcn/common.hpp"
#include "sagcn/interaction_store.hpp"

namespace sagcn {

/* One direction of a bipartite operator in CSR form. Row r holds the
   neighbor columns (ascending) with their normalization coefficients. */
struct CsrMatrix {
  Idx rows = 0;
  Idx cols = 0;
  std::vector<Idx> indptr;  /* rows + 1 */
  std::vector<Idx> col;
  std::vector<double> val;

  /* out (rows x d) = this * in (cols x d). Shapes must already agree. */
  void multiply(const Mat& in, Mat& out) const;
};

struct AspectGraph {
  std::string name;
  Idx num_edges = 0;
  std::vector<Idx> user_degree;
  std::vector<Idx> item_degree;
  CsrMatrix user_from_item;  /* user rows gather from item neighbors */
  CsrMatrix item_from_user;  /* transpose with identical coefficients */
};

struct NormalizedAspectGraph {
  Idx num_users = 0;
  Idx num_items = 0;
  std::vector<AspectGraph> aspects;

  Idx num_aspects() const { return static_cast<Idx>(aspects.size()); }
};

/* Normalizes each aspect's edges restricted to the training set with the
   coefficient 1 / (sqrt(deg_u) * sqrt(deg_i)), degrees taken per aspect on
   the restricted edge set. Isolated nodes simply receive no messages. An
   aspect left with zero training edges is permitted but reported via a
   warning line on stderr. */
NormalizedAspectGraph build_graphs(const AspectInteractionStore& store,
                                   std::span<const Edge> train_edges);

/* One propagation hop: users gather from item neighbors and vice versa.
   Returns {next_user_block, next_item_block}. */
std::pair<Mat, Mat> propagate(const NormalizedAspectGraph& graph, Idx aspect,
                              const Mat& user_block, const Mat& item_block);

/* Adjoint of propagate. The bipartite operator is symmetric, so this is the
   same computation; it exists so gradient code states its intent. */
std::pair<Mat, Mat> propagate_transpose(const NormalizedAspectGraph& graph, Idx aspect,
                                        const Mat& user_block, const Mat& item_block);

void save_graphs(const std::filesystem::path& path, const NormalizedAspectGraph& graph);
NormalizedAspectGraph load_graphs(const std::filesystem::path& path);

/* Human-auditable companion: per-aspect edge counts and degree histograms. */
void write_graph_summary(const std::filesystem::path& path, const NormalizedAspectGraph& graph);

}  // namespace sagcn
