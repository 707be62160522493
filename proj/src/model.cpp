#include "sagcn/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace sagcn {

void EmbeddingTable::zero() {
  for (auto& b : user_blocks) b.zero();
  for (auto& b : item_blocks) b.zero();
}

double EmbeddingTable::squared_norm() const {
  double total = 0.0;
  for (const auto& b : user_blocks)
    for (double v : b.data) total += v * v;
  for (const auto& b : item_blocks)
    for (double v : b.data) total += v * v;
  return total;
}

EmbeddingTable init_embeddings(const ModelConfig& config, Idx num_users, Idx num_items) {
  if (config.num_aspects < 1 || config.embed_dim < 1 || config.num_layers < 0 ||
      config.init_scale <= 0.0 || num_users < 1 || num_items < 1)
    throw std::invalid_argument("init_embeddings: invalid config");
  EmbeddingTable table;
  const Idx blocks = config.num_blocks();
  for (Idx b = 0; b < blocks; ++b) {
    Mat user(num_users, config.embed_dim);
    Mat item(num_items, config.embed_dim);
    Rng user_rng(mix_seed(config.seed, static_cast<std::uint64_t>(2 * b)));
    Rng item_rng(mix_seed(config.seed, static_cast<std::uint64_t>(2 * b + 1)));
    for (auto& v : user.data) v = user_rng.normal() * config.init_scale;
    for (auto& v : item.data) v = item_rng.normal() * config.init_scale;
    table.user_blocks.push_back(std::move(user));
    table.item_blocks.push_back(std::move(item));
  }
  return table;
}

ForwardCache forward(const EmbeddingTable& table, const NormalizedAspectGraph& graph,
                     const ModelConfig& config) {
  if (table.num_blocks() != config.num_blocks())
    throw std::invalid_argument("forward: table block count does not match config");
  if (graph.num_aspects() != config.num_aspects)
    throw std::invalid_argument("forward: graph aspect count does not match config");
  if (table.num_users() != graph.num_users || table.num_items() != graph.num_items)
    throw std::invalid_argument("forward: table and graph disagree on N or M");

  ForwardCache cache;
  cache.num_semantic_aspects = config.num_aspects;
  cache.num_layers = config.num_layers;

  for (Idx b = 0; b < table.num_blocks(); ++b) {
    std::vector<Mat> user_layers{table.user_blocks[static_cast<std::size_t>(b)]};
    std::vector<Mat> item_layers{table.item_blocks[static_cast<std::size_t>(b)]};
    if (b < config.num_aspects) {
      for (Idx k = 0; k < config.num_layers; ++k) {
        auto [nu, ni] = propagate(graph, b, user_layers.back(), item_layers.back());
        user_layers.push_back(std::move(nu));
        item_layers.push_back(std::move(ni));
      }
    }
    Mat user_sum = user_layers[0];
    Mat item_sum = item_layers[0];
    for (std::size_t k = 1; k < user_layers.size(); ++k) {
      for (std::size_t n = 0; n < user_sum.data.size(); ++n) user_sum.data[n] += user_layers[k].data[n];
      for (std::size_t n = 0; n < item_sum.data.size(); ++n) item_sum.data[n] += item_layers[k].data[n];
    }
    cache.user_layers.push_back(std::move(user_layers));
    cache.item_layers.push_back(std::move(item_layers));
    cache.user_agg.push_back(std::move(user_sum));
    cache.item_agg.push_back(std::move(item_sum));
  }
  return cache;
}

namespace {

void check_user(const ForwardCache& cache, Idx user) {
  if (user < 0 || user >= cache.num_users()) throw std::out_of_range("user index out of range");
}
void check_item(const ForwardCache& cache, Idx item) {
  if (item < 0 || item >= cache.num_items()) throw std::out_of_range("item index out of range");
}

/* Blocks ordered for concatenation: identity block (if any) first, then the
   semantic aspects in vocabulary order. */
std::vector<Idx> concat_order(const ForwardCache& cache) {
  std::vector<Idx> order;
  if (cache.num_blocks() > cache.num_semantic_aspects) order.push_back(cache.num_semantic_aspects);
  for (Idx a = 0; a < cache.num_semantic_aspects; ++a) order.push_back(a);
  return order;
}

}  // namespace

std::vector<double> final_representation(const ForwardCache& cache, Entity entity, Idx index) {
  if (entity == Entity::User)
    check_user(cache, index);
  else
    check_item(cache, index);
  const auto& blocks = entity == Entity::User ? cache.user_agg : cache.item_agg;
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(cache.num_blocks() * cache.dim()));
  for (Idx b : concat_order(cache)) {
    const double* row = blocks[static_cast<std::size_t>(b)].row(index);
    out.insert(out.end(), row, row + cache.dim());
  }
  return out;
}

std::vector<double> score_by_aspect(const ForwardCache& cache, Idx user, Idx item) {
  check_user(cache, user);
  check_item(cache, item);
  const Idx d = cache.dim();
  std::vector<double> parts(static_cast<std::size_t>(cache.num_blocks()), 0.0);
  for (Idx b = 0; b < cache.num_blocks(); ++b) {
    const double* ur = cache.user_agg[static_cast<std::size_t>(b)].row(user);
    const double* ir = cache.item_agg[static_cast<std::size_t>(b)].row(item);
    double dot = 0.0;
    for (Idx k = 0; k < d; ++k) dot += ur[k] * ir[k];
    parts[static_cast<std::size_t>(b)] = dot;
  }
  return parts;
}

double score(const ForwardCache& cache, Idx user, Idx item) {
  double total = 0.0;
  for (double part : score_by_aspect(cache, user, item)) total += part;
  return total;
}

double score_masked(const ForwardCache& cache, Idx user, Idx item,
                    const std::vector<bool>& block_mask) {
  if (static_cast<Idx>(block_mask.size()) != cache.num_blocks())
    throw std::invalid_argument("score_masked: mask size mismatch");
  const auto parts = score_by_aspect(cache, user, item);
  double total = 0.0;
  for (std::size_t b = 0; b < parts.size(); ++b) {
    if (block_mask[b]) total += parts[b];
  }
  return total;
}

Mat aspect_independence(const ForwardCache& cache, Entity entity, Idx index) {
  if (entity == Entity::User)
    check_user(cache, index);
  else
    check_item(cache, index);
  const auto& blocks = entity == Entity::User ? cache.user_agg : cache.item_agg;
  const Idx a_count = cache.num_semantic_aspects;
  const Idx d = cache.dim();
  Mat sim(a_count, a_count);
  std::vector<double> norms(static_cast<std::size_t>(a_count), 0.0);
  for (Idx a = 0; a < a_count; ++a) {
    const double* row = blocks[static_cast<std::size_t>(a)].row(index);
    double sq = 0.0;
    for (Idx k = 0; k < d; ++k) sq += row[k] * row[k];
    norms[static_cast<std::size_t>(a)] = std::sqrt(sq);
  }
  for (Idx a = 0; a < a_count; ++a) {
    for (Idx b = 0; b < a_count; ++b) {
      const double na = norms[static_cast<std::size_t>(a)];
      const double nb = norms[static_cast<std::size_t>(b)];
      if (na == 0.0 || nb == 0.0) {
        sim.at(a, b) = std::nan("");
        continue;
      }
      const double* ra = blocks[static_cast<std::size_t>(a)].row(index);
      const double* rb = blocks[static_cast<std::size_t>(b)].row(index);
      double dot = 0.0;
      for (Idx k = 0; k < d; ++k) dot += ra[k] * rb[k];
      sim.at(a, b) = dot / (na * nb);
    }
  }
  return sim;
}

/* ------------------------------------------------------------------ */
/* Checkpoint                                                          */

namespace {

constexpr char kMagic[4] = {'S', 'A', 'G', 'M'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_i64(std::ostream& out, std::int64_t v) {
  const std::uint64_t u = static_cast<std::uint64_t>(v);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::int64_t get_i64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return static_cast<std::int64_t>(u);
}

void put_f32_block(std::ostream& out, const Mat& m) {
  for (double v : m.data) {
    const float f = static_cast<float>(v);
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    put_u32(out, u);
  }
}

void get_f32_block(std::istream& in, Mat& m) {
  for (double& v : m.data) {
    const std::uint32_t u = get_u32(in);
    float f;
    std::memcpy(&f, &u, 4);
    v = static_cast<double>(f);
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const EmbeddingTable& table,
                     const ModelConfig& config) {
  if (table.num_blocks() != config.num_blocks())
    throw std::invalid_argument("checkpoint: table does not match config");
  std::ostringstream out(std::ios::binary);
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  put_i64(out, table.num_users());
  put_i64(out, table.num_items());
  put_i64(out, config.num_aspects);
  put_i64(out, config.embed_dim);
  put_i64(out, config.num_layers);
  put_u32(out, config.include_initial_block ? 1 : 0);
  put_i64(out, static_cast<std::int64_t>(config.seed));
  const double scale = config.init_scale;
  std::uint64_t scale_bits;
  std::memcpy(&scale_bits, &scale, 8);
  put_i64(out, static_cast<std::int64_t>(scale_bits));
  for (const auto& b : table.user_blocks) put_f32_block(out, b);
  for (const auto& b : table.item_blocks) put_f32_block(out, b);
  write_file_atomic(path, out.str());
}

std::pair<EmbeddingTable, ModelConfig> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path.string());
  if (get_u32(in) != kVersion) throw std::runtime_error("checkpoint: unsupported version");
  const Idx num_users = get_i64(in);
  const Idx num_items = get_i64(in);
  ModelConfig config;
  config.num_aspects = get_i64(in);
  config.embed_dim = get_i64(in);
  config.num_layers = get_i64(in);
  config.include_initial_block = get_u32(in) != 0;
  config.seed = static_cast<std::uint64_t>(get_i64(in));
  const std::uint64_t scale_bits = static_cast<std::uint64_t>(get_i64(in));
  std::memcpy(&config.init_scale, &scale_bits, 8);

  EmbeddingTable table;
  for (Idx b = 0; b < config.num_blocks(); ++b) {
    Mat m(num_users, config.embed_dim);
    get_f32_block(in, m);
    table.user_blocks.push_back(std::move(m));
  }
  for (Idx b = 0; b < config.num_blocks(); ++b) {
    Mat m(num_items, config.embed_dim);
    get_f32_block(in, m);
    table.item_blocks.push_back(std::move(m));
  }
  return {std::move(table), config};
}

}  // namespace sagcn
