#pragma once

#include <string>
#include <vector>

#include "sagcn/common.hpp"

namespace sagcn {

/* Base interactions plus one edge subset per semantic aspect. Every aspect
   edge is also a base edge; edge lists are sorted and unique. */
struct AspectInteractionStore {
  Idx num_users = 0;
  Idx num_items = 0;
  std::vector<Edge> base_edges;
  std::vector<std::string> aspect_names;
  std::vector<std::vector<Edge>> aspect_edges;

  Idx num_aspects() const { return static_cast<Idx>(aspect_names.size()); }

  /* Throws std::logic_error when an invariant is broken. */
  void validate() const;

  /* Keeps the first n aspects (vocabulary order). */
  AspectInteractionStore with_first_aspects(Idx n) const;

  /* Single-graph view: one pseudo-aspect holding the union of all aspect
     edges, used by ablations that collapse the semantic structure. */
  AspectInteractionStore merged() const;
};

}  // namespace sagcn
