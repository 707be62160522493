#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "sagcn/common.hpp"
#include "sagcn/model.hpp"

namespace sagcn {

/* Per-user sorted item lists, the working form of a split partition. */
struct UserItemLists {
  std::vector<std::vector<Idx>> by_user;

  bool contains(Idx user, Idx item) const;
  Idx total() const;
};

UserItemLists group_by_user(std::span<const Edge> edges, Idx num_users);

/* Merged copy: union of a and b per user. */
UserItemLists merge_lists(const UserItemLists& a, const UserItemLists& b);

struct RankingResult {
  int k = 0;
  std::vector<Idx> users;                 /* users with non-empty targets, ascending */
  std::vector<std::vector<Idx>> ranked;   /* per user: top-k items, best first */
  std::vector<std::vector<Idx>> targets;  /* per user: sorted target items */
};

/* Scores every non-excluded item for each evaluated user and keeps the
   top k, ties broken by ascending item index. Users with no targets are
   skipped. An optional block mask restricts scoring to chosen blocks. */
RankingResult rank_all(const ForwardCache& cache, const UserItemLists& excluded,
                       const UserItemLists& targets, int k,
                       const std::vector<bool>* block_mask = nullptr, int concurrency = 1);

double recall_at_k(const RankingResult& result, int k);
double ndcg_at_k(const RankingResult& result, int k);

struct MetricReport {
  std::vector<int> ks;
  std::map<int, double> recall;
  std::map<int, double> ndcg;
  Idx num_eval_users = 0;
};

MetricReport evaluate(const ForwardCache& cache, const UserItemLists& excluded,
                      const UserItemLists& targets, const std::vector<int>& ks,
                      const std::vector<bool>* block_mask = nullptr, int concurrency = 1);

/* Metrics with scoring restricted to a subset of semantic aspects (other
   blocks zeroed). The full subset reproduces full-model metrics exactly. */
MetricReport aspect_contribution(const ForwardCache& cache, const UserItemLists& excluded,
                                 const UserItemLists& targets, const std::vector<int>& ks,
                                 const std::vector<Idx>& aspect_subset, int concurrency = 1);

std::string metric_report_to_json(const MetricReport& report);

}  // namespace sagcn
