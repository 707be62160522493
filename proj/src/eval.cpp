#include "sagcn/eval.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>

#include "sagcn/llm_backend.hpp"

namespace sagcn {

using nlohmann::json;

bool UserItemLists::contains(Idx user, Idx item) const {
  if (user < 0 || user >= static_cast<Idx>(by_user.size())) return false;
  const auto& items = by_user[static_cast<std::size_t>(user)];
  return std::binary_search(items.begin(), items.end(), item);
}

Idx UserItemLists::total() const {
  Idx n = 0;
  for (const auto& items : by_user) n += static_cast<Idx>(items.size());
  return n;
}

UserItemLists group_by_user(std::span<const Edge> edges, Idx num_users) {
  UserItemLists lists;
  lists.by_user.resize(static_cast<std::size_t>(num_users));
  for (const Edge& e : edges) {
    if (e.user < 0 || e.user >= num_users) throw std::invalid_argument("group_by_user: user out of range");
    lists.by_user[static_cast<std::size_t>(e.user)].push_back(e.item);
  }
  for (auto& items : lists.by_user) {
    std::sort(items.begin(), items.end());
    items.erase(std::unique(items.begin(), items.end()), items.end());
  }
  return lists;
}

UserItemLists merge_lists(const UserItemLists& a, const UserItemLists& b) {
  if (a.by_user.size() != b.by_user.size()) throw std::invalid_argument("merge_lists: size mismatch");
  UserItemLists out;
  out.by_user.resize(a.by_user.size());
  for (std::size_t u = 0; u < a.by_user.size(); ++u) {
    auto& dst = out.by_user[u];
    std::set_union(a.by_user[u].begin(), a.by_user[u].end(), b.by_user[u].begin(),
                   b.by_user[u].end(), std::back_inserter(dst));
  }
  return out;
}

RankingResult rank_all(const ForwardCache& cache, const UserItemLists& excluded,
                       const UserItemLists& targets, int k,
                       const std::vector<bool>* block_mask, int concurrency) {
  if (k < 1) throw std::invalid_argument("rank_all: k must be positive");
  const Idx num_users = cache.num_users();
  const Idx num_items = cache.num_items();
  const Idx d = cache.dim();
  if (static_cast<Idx>(targets.by_user.size()) != num_users ||
      static_cast<Idx>(excluded.by_user.size()) != num_users)
    throw std::invalid_argument("rank_all: split lists do not match the model's user count");
  if (block_mask && static_cast<Idx>(block_mask->size()) != cache.num_blocks())
    throw std::invalid_argument("rank_all: block mask size mismatch");

  RankingResult result;
  result.k = k;
  for (Idx u = 0; u < num_users; ++u) {
    if (!targets.by_user[static_cast<std::size_t>(u)].empty()) result.users.push_back(u);
  }
  result.ranked.resize(result.users.size());
  result.targets.resize(result.users.size());

  parallel_for(result.users.size(), concurrency, [&](std::size_t slot) {
    const Idx u = result.users[slot];
    std::vector<double> scores(static_cast<std::size_t>(num_items), 0.0);
    for (Idx b = 0; b < cache.num_blocks(); ++b) {
      if (block_mask && !(*block_mask)[static_cast<std::size_t>(b)]) continue;
      const double* ur = cache.user_agg[static_cast<std::size_t>(b)].row(u);
      const Mat& items = cache.item_agg[static_cast<std::size_t>(b)];
      for (Idx i = 0; i < num_items; ++i) {
        const double* ir = items.row(i);
        double dot = 0.0;
        for (Idx c = 0; c < d; ++c) dot += ur[c] * ir[c];
        scores[static_cast<std::size_t>(i)] += dot;
      }
    }
    std::vector<Idx> candidates;
    candidates.reserve(static_cast<std::size_t>(num_items));
    const auto& skip = excluded.by_user[static_cast<std::size_t>(u)];
    for (Idx i = 0; i < num_items; ++i) {
      if (!std::binary_search(skip.begin(), skip.end(), i)) candidates.push_back(i);
    }
    const std::size_t keep = std::min<std::size_t>(static_cast<std::size_t>(k), candidates.size());
    auto better = [&](Idx a, Idx b) {
      const double sa = scores[static_cast<std::size_t>(a)];
      const double sb = scores[static_cast<std::size_t>(b)];
      if (sa != sb) return sa > sb;
      return a < b;
    };
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep),
                      candidates.end(), better);
    candidates.resize(keep);
    result.ranked[slot] = std::move(candidates);
    result.targets[slot] = targets.by_user[static_cast<std::size_t>(u)];
  });
  return result;
}

double recall_at_k(const RankingResult& result, int k) {
  if (k < 1 || k > result.k) throw std::invalid_argument("recall_at_k: k out of range");
  if (result.users.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t s = 0; s < result.users.size(); ++s) {
    const auto& tgt = result.targets[s];
    const auto& ranked = result.ranked[s];
    const std::size_t upto = std::min<std::size_t>(static_cast<std::size_t>(k), ranked.size());
    Idx hits = 0;
    for (std::size_t r = 0; r < upto; ++r) {
      if (std::binary_search(tgt.begin(), tgt.end(), ranked[r])) ++hits;
    }
    total += static_cast<double>(hits) / static_cast<double>(tgt.size());
  }
  return total / static_cast<double>(result.users.size());
}

double ndcg_at_k(const RankingResult& result, int k) {
  if (k < 1 || k > result.k) throw std::invalid_argument("ndcg_at_k: k out of range");
  if (result.users.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t s = 0; s < result.users.size(); ++s) {
    const auto& tgt = result.targets[s];
    const auto& ranked = result.ranked[s];
    const std::size_t upto = std::min<std::size_t>(static_cast<std::size_t>(k), ranked.size());
    double dcg = 0.0;
    for (std::size_t r = 0; r < upto; ++r) {
      if (std::binary_search(tgt.begin(), tgt.end(), ranked[r]))
        dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    }
    double idcg = 0.0;
    const std::size_t ideal = std::min<std::size_t>(static_cast<std::size_t>(k), tgt.size());
    for (std::size_t r = 0; r < ideal; ++r) idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    total += idcg > 0.0 ? dcg / idcg : 0.0;
  }
  return total / static_cast<double>(result.users.size());
}

MetricReport evaluate(const ForwardCache& cache, const UserItemLists& excluded,
                      const UserItemLists& targets, const std::vector<int>& ks,
                      const std::vector<bool>* block_mask, int concurrency) {
  if (ks.empty()) throw std::invalid_argument("evaluate: no cutoffs given");
  const int k_max = *std::max_element(ks.begin(), ks.end());
  const RankingResult result = rank_all(cache, excluded, targets, k_max, block_mask, concurrency);
  MetricReport report;
  report.ks = ks;
  std::sort(report.ks.begin(), report.ks.end());
  report.ks.erase(std::unique(report.ks.begin(), report.ks.end()), report.ks.end());
  report.num_eval_users = static_cast<Idx>(result.users.size());
  for (int k : report.ks) {
    report.recall[k] = recall_at_k(result, k);
    report.ndcg[k] = ndcg_at_k(result, k);
  }
  return report;
}

MetricReport aspect_contribution(const ForwardCache& cache, const UserItemLists& excluded,
                                 const UserItemLists& targets, const std::vector<int>& ks,
                                 const std::vector<Idx>& aspect_subset, int concurrency) {
  if (aspect_subset.empty()) throw std::invalid_argument("aspect_contribution: empty subset");
  std::vector<bool> mask(static_cast<std::size_t>(cache.num_blocks()), false);
  for (Idx a : aspect_subset) {
    if (a < 0 || a >= cache.num_semantic_aspects)
      throw std::invalid_argument("aspect_contribution: aspect index out of range");
    mask[static_cast<std::size_t>(a)] = true;
  }
  /* the full semantic subset also keeps the identity block so that it
     reproduces the full model exactly */
  bool all = true;
  for (Idx a = 0; a < cache.num_semantic_aspects; ++a) {
    if (!mask[static_cast<std::size_t>(a)]) all = false;
  }
  if (all && cache.num_blocks() > cache.num_semantic_aspects)
    mask[static_cast<std::size_t>(cache.num_semantic_aspects)] = true;
  return evaluate(cache, excluded, targets, ks, &mask, concurrency);
}

std::string metric_report_to_json(const MetricReport& report) {
  json j;
  j["num_eval_users"] = report.num_eval_users;
  j["metrics"] = json::array();
  for (int k : report.ks) {
    j["metrics"].push_back(
        {{"k", k}, {"recall", report.recall.at(k)}, {"ndcg", report.ndcg.at(k)}});
  }
  return j.dump(2) + "\n";
}

}  // namespace sagcn
