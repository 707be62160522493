#include "sagcn/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>

namespace sagcn {

std::vector<Triplet> sample_triplets(std::span<const Edge> train_edges,
                                     const UserItemLists& train_by_user, Idx num_items,
                                     std::uint64_t epoch_seed) {
  std::vector<Edge> positives(train_edges.begin(), train_edges.end());
  Rng rng(epoch_seed);
  rng.shuffle(positives);

  std::vector<Triplet> triplets;
  triplets.reserve(positives.size());
  for (const Edge& e : positives) {
    const auto& interacted = train_by_user.by_user[static_cast<std::size_t>(e.user)];
    if (static_cast<Idx>(interacted.size()) >= num_items) {
      std::fprintf(stderr, "warning: user %lld interacted with every item, skipping\n",
                   static_cast<long long>(e.user));
      continue;
    }
    Idx neg = -1;
    while (true) {
      const Idx j = static_cast<Idx>(rng.below(static_cast<std::uint64_t>(num_items)));
      if (!std::binary_search(interacted.begin(), interacted.end(), j)) {
        neg = j;
        break;
      }
    }
    triplets.push_back({e.user, e.item, neg});
  }
  return triplets;
}

namespace {

double softplus(double t) {
  return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

double bpr_loss(std::span<const double> pos_scores, std::span<const double> neg_scores,
                double lambda, double params_sq_norm) {
  if (pos_scores.size() != neg_scores.size())
    throw std::invalid_argument("bpr_loss: score vectors differ in length");
  double total = 0.0;
  for (std::size_t t = 0; t < pos_scores.size(); ++t) {
    if (!std::isfinite(pos_scores[t]) || !std::isfinite(neg_scores[t]))
      throw TrainDivergence("bpr_loss: non-finite score");
    total += softplus(-(pos_scores[t] - neg_scores[t]));
  }
  total += lambda * params_sq_norm;
  if (!std::isfinite(total)) throw TrainDivergence("bpr_loss: non-finite loss");
  return total;
}

double batch_param_sq_norm(const ForwardCache& cache, std::span<const Triplet> batch) {
  const Idx d = cache.dim();
  double total = 0.0;
  auto row_sq = [d](const Mat& m, Idx r) {
    const double* p = m.row(r);
    double sq = 0.0;
    for (Idx k = 0; k < d; ++k) sq += p[k] * p[k];
    return sq;
  };
  for (const Triplet& t : batch) {
    for (Idx b = 0; b < cache.num_blocks(); ++b) {
      const Mat& u0 = cache.user_layers[static_cast<std::size_t>(b)][0];
      const Mat& i0 = cache.item_layers[static_cast<std::size_t>(b)][0];
      total += row_sq(u0, t.user) + row_sq(i0, t.pos_item) + row_sq(i0, t.neg_item);
    }
  }
  return total;
}

EmbeddingTable backward(const ForwardCache& cache, const NormalizedAspectGraph& graph,
                        std::span<const Triplet> batch, double lambda) {
  const Idx blocks = cache.num_blocks();
  const Idx d = cache.dim();
  const Idx num_users = cache.num_users();
  const Idx num_items = cache.num_items();

  /* gradients with respect to the per-block aggregates */
  std::vector<Mat> agg_user(static_cast<std::size_t>(blocks));
  std::vector<Mat> agg_item(static_cast<std::size_t>(blocks));
  for (Idx b = 0; b < blocks; ++b) {
    agg_user[static_cast<std::size_t>(b)] = Mat(num_users, d);
    agg_item[static_cast<std::size_t>(b)] = Mat(num_items, d);
  }

  for (const Triplet& t : batch) {
    const double x = score(cache, t.user, t.pos_item) - score(cache, t.user, t.neg_item);
    const double coeff = -sigmoid(-x);  /* d(-ln sigmoid(x))/dx */
    for (Idx b = 0; b < blocks; ++b) {
      const double* u = cache.user_agg[static_cast<std::size_t>(b)].row(t.user);
      const double* ip = cache.item_agg[static_cast<std::size_t>(b)].row(t.pos_item);
      const double* in = cache.item_agg[static_cast<std::size_t>(b)].row(t.neg_item);
      double* gu = agg_user[static_cast<std::size_t>(b)].row(t.user);
      double* gp = agg_item[static_cast<std::size_t>(b)].row(t.pos_item);
      double* gn = agg_item[static_cast<std::size_t>(b)].row(t.neg_item);
      for (Idx k = 0; k < d; ++k) {
        gu[k] += coeff * (ip[k] - in[k]);
        gp[k] += coeff * u[k];
        gn[k] -= coeff * u[k];
      }
    }
  }

  /* aggregate = sum over layers of P^k layer0, and P is self-adjoint, so
     grad_layer0 = sum_{k=0..K} P^k grad_aggregate */
  EmbeddingTable grad;
  for (Idx b = 0; b < blocks; ++b) {
    Mat total_user = agg_user[static_cast<std::size_t>(b)];
    Mat total_item = agg_item[static_cast<std::size_t>(b)];
    if (b < cache.num_semantic_aspects) {
      Mat cur_user = agg_user[static_cast<std::size_t>(b)];
      Mat cur_item = agg_item[static_cast<std::size_t>(b)];
      for (Idx k = 1; k <= cache.num_layers; ++k) {
        auto [nu, ni] = propagate_transpose(graph, b, cur_user, cur_item);
        cur_user = std::move(nu);
        cur_item = std::move(ni);
        for (std::size_t n = 0; n < total_user.data.size(); ++n) total_user.data[n] += cur_user.data[n];
        for (std::size_t n = 0; n < total_item.data.size(); ++n) total_item.data[n] += cur_item.data[n];
      }
    }
    grad.user_blocks.push_back(std::move(total_user));
    grad.item_blocks.push_back(std::move(total_item));
  }

  if (lambda != 0.0) {
    for (const Triplet& t : batch) {
      for (Idx b = 0; b < blocks; ++b) {
        const Mat& u0 = cache.user_layers[static_cast<std::size_t>(b)][0];
        const Mat& i0 = cache.item_layers[static_cast<std::size_t>(b)][0];
        double* gu = grad.user_blocks[static_cast<std::size_t>(b)].row(t.user);
        double* gp = grad.item_blocks[static_cast<std::size_t>(b)].row(t.pos_item);
        double* gn = grad.item_blocks[static_cast<std::size_t>(b)].row(t.neg_item);
        const double* u = u0.row(t.user);
        const double* ip = i0.row(t.pos_item);
        const double* in = i0.row(t.neg_item);
        for (Idx k = 0; k < d; ++k) {
          gu[k] += 2.0 * lambda * u[k];
          gp[k] += 2.0 * lambda * ip[k];
          gn[k] += 2.0 * lambda * in[k];
        }
      }
    }
  }
  return grad;
}

void adam_step(EmbeddingTable& table, const EmbeddingTable& grad, AdamState& state,
               const TrainConfig& config) {
  if (grad.num_blocks() != table.num_blocks())
    throw std::invalid_argument("adam_step: gradient shape mismatch");
  if (state.step == 0) {
    for (const auto& b : table.user_blocks) {
      state.m_user.emplace_back(b.rows, b.cols);
      state.v_user.emplace_back(b.rows, b.cols);
    }
    for (const auto& b : table.item_blocks) {
      state.m_item.emplace_back(b.rows, b.cols);
      state.v_item.emplace_back(b.rows, b.cols);
    }
  }
  ++state.step;
  const double b1 = config.adam_beta1;
  const double b2 = config.adam_beta2;
  const double bias1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double bias2 = 1.0 - std::pow(b2, static_cast<double>(state.step));

  auto update = [&](Mat& param, const Mat& g, Mat& m, Mat& v) {
    for (std::size_t n = 0; n < param.data.size(); ++n) {
      m.data[n] = b1 * m.data[n] + (1.0 - b1) * g.data[n];
      v.data[n] = b2 * v.data[n] + (1.0 - b2) * g.data[n] * g.data[n];
      const double mhat = m.data[n] / bias1;
      const double vhat = v.data[n] / bias2;
      param.data[n] -= config.learning_rate * mhat / (std::sqrt(vhat) + config.adam_eps);
    }
  };
  for (std::size_t b = 0; b < table.user_blocks.size(); ++b)
    update(table.user_blocks[b], grad.user_blocks[b], state.m_user[b], state.v_user[b]);
  for (std::size_t b = 0; b < table.item_blocks.size(); ++b)
    update(table.item_blocks[b], grad.item_blocks[b], state.m_item[b], state.v_item[b]);
}

EpochStats train_epoch(EmbeddingTable& table, AdamState& adam,
                       const NormalizedAspectGraph& graph, const ModelConfig& model_config,
                       const TrainConfig& train_config, std::span<const Triplet> triplets) {
  EpochStats stats;
  double loss_total = 0.0;
  for (std::size_t begin = 0; begin < triplets.size();
       begin += static_cast<std::size_t>(train_config.batch_size)) {
    const std::size_t end =
        std::min(triplets.size(), begin + static_cast<std::size_t>(train_config.batch_size));
    const std::span<const Triplet> batch = triplets.subspan(begin, end - begin);

    const ForwardCache cache = forward(table, graph, model_config);
    std::vector<double> pos(batch.size()), neg(batch.size());
    for (std::size_t t = 0; t < batch.size(); ++t) {
      pos[t] = score(cache, batch[t].user, batch[t].pos_item);
      neg[t] = score(cache, batch[t].user, batch[t].neg_item);
    }
    loss_total += bpr_loss(pos, neg, train_config.weight_decay, batch_param_sq_norm(cache, batch));
    const EmbeddingTable grad = backward(cache, graph, batch, train_config.weight_decay);
    adam_step(table, grad, adam, train_config);
    stats.num_triplets += static_cast<Idx>(batch.size());
  }
  stats.mean_loss = stats.num_triplets > 0 ? loss_total / static_cast<double>(stats.num_triplets) : 0.0;
  if (!std::isfinite(stats.mean_loss)) throw TrainDivergence("train_epoch: non-finite mean loss");
  return stats;
}

EarlyStopper::EarlyStopper(Idx patience)
    : patience_(patience), best_(-std::numeric_limits<double>::infinity()) {
  if (patience < 1) throw std::invalid_argument("early stopping patience must be >= 1");
}

bool EarlyStopper::observe(double metric) {
  const Idx index = observed_++;
  if (metric > best_) {
    best_ = metric;
    best_index_ = index;
    since_improvement_ = 0;
    return true;
  }
  ++since_improvement_;
  return false;
}

TrainResult train(const SplitSpec& split, const NormalizedAspectGraph& graph,
                  const ModelConfig& model_config, const TrainConfig& train_config) {
  if (train_config.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (train_config.weight_decay < 0.0) throw std::invalid_argument("train: weight_decay must be >= 0");
  if (train_config.max_epochs < 1) throw std::invalid_argument("train: max_epochs must be >= 1");
  if (split.train.empty()) throw std::invalid_argument("train: empty training split");

  const Idx num_users = graph.num_users;
  const Idx num_items = graph.num_items;
  EmbeddingTable table = init_embeddings(model_config, num_users, num_items);
  AdamState adam;

  const UserItemLists train_by_user = group_by_user(split.train, num_users);
  const UserItemLists val_by_user = group_by_user(split.validation, num_users);
  const bool has_validation = val_by_user.total() > 0;

  TrainResult result;
  EarlyStopper stopper(train_config.patience);
  const std::vector<int> ks{train_config.eval_k};

  for (Idx epoch = 1; epoch <= train_config.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto triplets = sample_triplets(split.train, train_by_user, num_items,
                                          mix_seed(train_config.seed, static_cast<std::uint64_t>(epoch)));
    const EpochStats stats = train_epoch(table, adam, graph, model_config, train_config, triplets);

    EpochLog entry;
    entry.epoch = epoch;
    entry.mean_loss = stats.mean_loss;
    if (has_validation) {
      const ForwardCache cache = forward(table, graph, model_config);
      const MetricReport report = evaluate(cache, train_by_user, val_by_user, ks);
      entry.val_recall = report.recall.at(train_config.eval_k);
      entry.val_ndcg = report.ndcg.at(train_config.eval_k);
    }
    entry.elapsed_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back(entry);
    result.epochs_run = epoch;

    if (has_validation) {
      if (stopper.observe(entry.val_recall)) {
        result.best_table = table;
        result.best_epoch = epoch;
        result.best_val_recall = entry.val_recall;
      }
      if (stopper.should_stop()) break;
    }
  }

  if (!has_validation || result.best_epoch < 0) {
    result.best_table = table;
    result.best_epoch = result.epochs_run;
    result.best_val_recall = result.log.empty() ? 0.0 : result.log.back().val_recall;
  }
  return result;
}

}  // namespace sagcn
