#include "sagcn/interaction_store.hpp"

#include <algorithm>
#include <set>

namespace sagcn {

void AspectInteractionStore::validate() const {
  if (aspect_names.size() != aspect_edges.size())
    throw std::logic_error("store: aspect name/edge list size mismatch");
  auto check_edges = [&](const std::vector<Edge>& edges, const std::string& label) {
    for (std::size_t i = 0; i < edges.size(); ++i) {
      const Edge& e = edges[i];
      if (e.user < 0 || e.user >= num_users || e.item < 0 || e.item >= num_items)
        throw std::logic_error("store: " + label + " edge out of range");
      if (i > 0 && !(edges[i - 1] < e))
        throw std::logic_error("store: " + label + " edges not sorted unique");
    }
  };
  check_edges(base_edges, "base");
  for (std::size_t a = 0; a < aspect_edges.size(); ++a) {
    check_edges(aspect_edges[a], aspect_names[a]);
    /* every aspect edge must be a base edge */
    for (const Edge& e : aspect_edges[a]) {
      if (!std::binary_search(base_edges.begin(), base_edges.end(), e))
        throw std::logic_error("store: aspect edge missing from base: " + aspect_names[a]);
    }
  }
}

AspectInteractionStore AspectInteractionStore::with_first_aspects(Idx n) const {
  if (n < 1 || n > num_aspects())
    throw std::invalid_argument("store: aspect count out of range: " + std::to_string(n));
  AspectInteractionStore out;
  out.num_users = num_users;
  out.num_items = num_items;
  out.base_edges = base_edges;
  out.aspect_names.assign(aspect_names.begin(), aspect_names.begin() + n);
  out.aspect_edges.assign(aspect_edges.begin(), aspect_edges.begin() + n);
  return out;
}

AspectInteractionStore AspectInteractionStore::merged() const {
  AspectInteractionStore out;
  out.num_users = num_users;
  out.num_items = num_items;
  out.base_edges = base_edges;
  std::set<Edge> merged_edges;
  for (const auto& edges : aspect_edges) merged_edges.insert(edges.begin(), edges.end());
  out.aspect_names = {"merged"};
  out.aspect_edges = {std::vector<Edge>(merged_edges.begin(), merged_edges.end())};
  return out;
}

}  // namespace sagcn
