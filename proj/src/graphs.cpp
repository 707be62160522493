#include "sagcn/graphs.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <unordered_set>

namespace sagcn {

using nlohmann::json;

void CsrMatrix::multiply(const Mat& in, Mat& out) const {
  if (in.rows != cols) throw std::invalid_argument("csr multiply: input row count mismatch");
  if (out.rows != rows || out.cols != in.cols) throw std::invalid_argument("csr multiply: output shape mismatch");
  const Idx d = in.cols;
  for (Idx r = 0; r < rows; ++r) {
    double* dst = out.row(r);
    std::fill(dst, dst + d, 0.0);
    for (Idx p = indptr[static_cast<std::size_t>(r)]; p < indptr[static_cast<std::size_t>(r) + 1]; ++p) {
      const double w = val[static_cast<std::size_t>(p)];
      const double* src = in.row(col[static_cast<std::size_t>(p)]);
      for (Idx k = 0; k < d; ++k) dst[k] += w * src[k];
    }
  }
}

namespace {

CsrMatrix build_csr(Idx rows, Idx cols, const std::vector<Edge>& edges, bool user_major,
                    const std::vector<Idx>& user_degree, const std::vector<Idx>& item_degree) {
  CsrMatrix m;
  m.rows = rows;
  m.cols = cols;
  m.indptr.assign(static_cast<std::size_t>(rows) + 1, 0);
  for (const Edge& e : edges) {
    const Idx r = user_major ? e.user : e.item;
    ++m.indptr[static_cast<std::size_t>(r) + 1];
  }
  for (std::size_t r = 1; r < m.indptr.size(); ++r) m.indptr[r] += m.indptr[r - 1];
  m.col.resize(edges.size());
  m.val.resize(edges.size());
  std::vector<Idx> cursor(m.indptr.begin(), m.indptr.end() - 1);
  for (const Edge& e : edges) {
    const Idx r = user_major ? e.user : e.item;
    const Idx c = user_major ? e.item : e.user;
    const Idx slot = cursor[static_cast<std::size_t>(r)]++;
    m.col[static_cast<std::size_t>(slot)] = c;
    m.val[static_cast<std::size_t>(slot)] =
        1.0 / (std::sqrt(static_cast<double>(user_degree[static_cast<std::size_t>(e.user)])) *
               std::sqrt(static_cast<double>(item_degree[static_cast<std::size_t>(e.item)])));
  }
  /* edges arrive sorted by (user, item); the item-major pass needs its
     columns re-sorted per row */
  if (!user_major) {
    for (Idx r = 0; r < rows; ++r) {
      const Idx begin = m.indptr[static_cast<std::size_t>(r)];
      const Idx end = m.indptr[static_cast<std::size_t>(r) + 1];
      std::vector<std::pair<Idx, double>> row;
      row.reserve(static_cast<std::size_t>(end - begin));
      for (Idx p = begin; p < end; ++p)
        row.emplace_back(m.col[static_cast<std::size_t>(p)], m.val[static_cast<std::size_t>(p)]);
      std::sort(row.begin(), row.end());
      for (Idx p = begin; p < end; ++p) {
        m.col[static_cast<std::size_t>(p)] = row[static_cast<std::size_t>(p - begin)].first;
        m.val[static_cast<std::size_t>(p)] = row[static_cast<std::size_t>(p - begin)].second;
      }
    }
  }
  return m;
}

}  // namespace

NormalizedAspectGraph build_graphs(const AspectInteractionStore& store,
                                   std::span<const Edge> train_edges) {
  store.validate();
  NormalizedAspectGraph graph;
  graph.num_users = store.num_users;
  graph.num_items = store.num_items;

  std::unordered_set<std::uint64_t> train_set;
  train_set.reserve(train_edges.size() * 2);
  for (const Edge& e : train_edges) {
    train_set.insert(static_cast<std::uint64_t>(e.user) * static_cast<std::uint64_t>(store.num_items) +
                     static_cast<std::uint64_t>(e.item));
  }

  for (Idx a = 0; a < store.num_aspects(); ++a) {
    AspectGraph g;
    g.name = store.aspect_names[static_cast<std::size_t>(a)];
    std::vector<Edge> kept;
    for (const Edge& e : store.aspect_edges[static_cast<std::size_t>(a)]) {
      const std::uint64_t key = static_cast<std::uint64_t>(e.user) * static_cast<std::uint64_t>(store.num_items) +
                                static_cast<std::uint64_t>(e.item);
      if (train_set.count(key)) kept.push_back(e);
    }
    g.num_edges = static_cast<Idx>(kept.size());
    if (g.num_edges == 0) {
      std::fprintf(stderr, "warning: aspect '%s' has no training edges\n", g.name.c_str());
    }
    g.user_degree.assign(static_cast<std::size_t>(store.num_users), 0);
    g.item_degree.assign(static_cast<std::size_t>(store.num_items), 0);
    for (const Edge& e : kept) {
      ++g.user_degree[static_cast<std::size_t>(e.user)];
      ++g.item_degree[static_cast<std::size_t>(e.item)];
    }
    g.user_from_item = build_csr(store.num_users, store.num_items, kept, true, g.user_degree, g.item_degree);
    g.item_from_user = build_csr(store.num_items, store.num_users, kept, false, g.user_degree, g.item_degree);
    graph.aspects.push_back(std::move(g));
  }
  return graph;
}

std::pair<Mat, Mat> propagate(const NormalizedAspectGraph& graph, Idx aspect,
                              const Mat& user_block, const Mat& item_block) {
  if (aspect < 0 || aspect >= graph.num_aspects())
    throw std::invalid_argument("propagate: aspect index out of range");
  if (user_block.rows != graph.num_users || item_block.rows != graph.num_items ||
      user_block.cols != item_block.cols)
    throw std::invalid_argument("propagate: block shape mismatch");
  const AspectGraph& g = graph.aspects[static_cast<std::size_t>(aspect)];
  Mat next_user(graph.num_users, user_block.cols);
  Mat next_item(graph.num_items, item_block.cols);
  g.user_from_item.multiply(item_block, next_user);
  g.item_from_user.multiply(user_block, next_item);
  return {std::move(next_user), std::move(next_item)};
}

std::pair<Mat, Mat> propagate_transpose(const NormalizedAspectGraph& graph, Idx aspect,
                                        const Mat& user_block, const Mat& item_block) {
  return propagate(graph, aspect, user_block, item_block);
}

/* ------------------------------------------------------------------ */
/* Serialization: little-endian, magic "SAGR", version 1.              */

namespace {

constexpr char kMagic[4] = {'S', 'A', 'G', 'R'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_i64(std::ostream& out, std::int64_t v) {
  const std::uint64_t u = static_cast<std::uint64_t>(v);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& out, double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, 8);
  put_i64(out, static_cast<std::int64_t>(u));
}

void put_string(std::ostream& out, const std::string& s) {
  put_i64(out, static_cast<std::int64_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw std::runtime_error("graphs: truncated file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::int64_t get_i64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw std::runtime_error("graphs: truncated file");
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return static_cast<std::int64_t>(u);
}

double get_f64(std::istream& in) {
  const std::uint64_t u = static_cast<std::uint64_t>(get_i64(in));
  double v;
  std::memcpy(&v, &u, 8);
  return v;
}

std::string get_string(std::istream& in) {
  const std::int64_t n = get_i64(in);
  if (n < 0 || n > (1 << 20)) throw std::runtime_error("graphs: bad string length");
  std::string s(static_cast<std::size_t>(n), '\0');
  in.read(s.data(), n);
  if (!in) throw std::runtime_error("graphs: truncated file");
  return s;
}

void put_csr(std::ostream& out, const CsrMatrix& m) {
  put_i64(out, m.rows);
  put_i64(out, m.cols);
  put_i64(out, static_cast<std::int64_t>(m.col.size()));
  for (Idx v : m.indptr) put_i64(out, v);
  for (Idx v : m.col) put_i64(out, v);
  for (double v : m.val) put_f64(out, v);
}

CsrMatrix get_csr(std::istream& in) {
  CsrMatrix m;
  m.rows = get_i64(in);
  m.cols = get_i64(in);
  const std::int64_t nnz = get_i64(in);
  if (m.rows < 0 || m.cols < 0 || nnz < 0) throw std::runtime_error("graphs: bad csr header");
  m.indptr.resize(static_cast<std::size_t>(m.rows) + 1);
  for (auto& v : m.indptr) v = get_i64(in);
  m.col.resize(static_cast<std::size_t>(nnz));
  for (auto& v : m.col) v = get_i64(in);
  m.val.resize(static_cast<std::size_t>(nnz));
  for (auto& v : m.val) v = get_f64(in);
  return m;
}

}  // namespace

void save_graphs(const std::filesystem::path& path, const NormalizedAspectGraph& graph) {
  std::ostringstream out(std::ios::binary);
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  put_i64(out, graph.num_users);
  put_i64(out, graph.num_items);
  put_i64(out, graph.num_aspects());
  for (const auto& g : graph.aspects) {
    put_string(out, g.name);
    put_i64(out, g.num_edges);
    for (Idx v : g.user_degree) put_i64(out, v);
    for (Idx v : g.item_degree) put_i64(out, v);
    put_csr(out, g.user_from_item);
    put_csr(out, g.item_from_user);
  }
  write_file_atomic(path, out.str());
}

NormalizedAspectGraph load_graphs(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open graphs: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("graphs: bad magic in " + path.string());
  const std::uint32_t version = get_u32(in);
  if (version != kVersion)
    throw std::runtime_error("graphs: unsupported version " + std::to_string(version));
  NormalizedAspectGraph graph;
  graph.num_users = get_i64(in);
  graph.num_items = get_i64(in);
  const Idx aspects = get_i64(in);
  for (Idx a = 0; a < aspects; ++a) {
    AspectGraph g;
    g.name = get_string(in);
    g.num_edges = get_i64(in);
    g.user_degree.resize(static_cast<std::size_t>(graph.num_users));
    for (auto& v : g.user_degree) v = get_i64(in);
    g.item_degree.resize(static_cast<std::size_t>(graph.num_items));
    for (auto& v : g.item_degree) v = get_i64(in);
    g.user_from_item = get_csr(in);
    g.item_from_user = get_csr(in);
    graph.aspects.push_back(std::move(g));
  }
  return graph;
}

void write_graph_summary(const std::filesystem::path& path, const NormalizedAspectGraph& graph) {
  json j;
  j["num_users"] = graph.num_users;
  j["num_items"] = graph.num_items;
  j["aspects"] = json::array();
  for (const auto& g : graph.aspects) {
    auto histogram = [](const std::vector<Idx>& degrees) {
      std::map<std::string, Idx> h;
      for (Idx d : degrees) ++h[std::to_string(d)];
      return h;
    };
    j["aspects"].push_back({{"name", g.name},
                            {"num_edges", g.num_edges},
                            {"user_degree_histogram", histogram(g.user_degree)},
                            {"item_degree_histogram", histogram(g.item_degree)}});
  }
  write_file_atomic(path, j.dump(2) + "\n");
}

}  // namespace sagcn
