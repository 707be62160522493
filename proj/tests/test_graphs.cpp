#include <doctest.h>
#include <json.hpp>

#include <cmath>
#include <set>

#include "sagcn/graphs.hpp"
#include "test_helpers.hpp"

using namespace sagcn;

namespace {

/* Random store with one aspect over n x m, leaving some nodes isolated. */
AspectInteractionStore random_store(Rng& rng, Idx n, Idx m) {
  std::set<Edge> edges;
  const Idx target = 1 + static_cast<Idx>(rng.below(static_cast<std::uint64_t>(n * m / 2 + 1)));
  for (Idx t = 0; t < target; ++t) {
    /* confine edges to a sub-rectangle so the remaining rows/cols stay isolated */
    const Idx u = static_cast<Idx>(rng.below(static_cast<std::uint64_t>(std::max<Idx>(1, n - 2))));
    const Idx i = static_cast<Idx>(rng.below(static_cast<std::uint64_t>(std::max<Idx>(1, m - 2))));
    edges.insert({u, i});
  }
  AspectInteractionStore store;
  store.num_users = n;
  store.num_items = m;
  store.base_edges.assign(edges.begin(), edges.end());
  store.aspect_names = {"only"};
  store.aspect_edges = {store.base_edges};
  return store;
}

Mat random_mat(Rng& rng, Idx r, Idx c) {
  Mat m(r, c);
  for (double& x : m.data) x = rng.normal();
  return m;
}

/* Dense oracle: U' = Du^{-1/2} R Di^{-1/2} I,  I' = (same)^T U. */
std::pair<Mat, Mat> dense_propagate(const AspectInteractionStore& store, const Mat& users,
                                    const Mat& items) {
  const Idx n = store.num_users, m = store.num_items, d = users.cols;
  std::vector<double> du(static_cast<std::size_t>(n), 0.0), di(static_cast<std::size_t>(m), 0.0);
  for (const Edge& e : store.aspect_edges[0]) {
    du[static_cast<std::size_t>(e.user)] += 1.0;
    di[static_cast<std::size_t>(e.item)] += 1.0;
  }
  Mat norm(n, m);
  for (const Edge& e : store.aspect_edges[0])
    norm.at(e.user, e.item) = 1.0 / (std::sqrt(du[static_cast<std::size_t>(e.user)]) *
                                     std::sqrt(di[static_cast<std::size_t>(e.item)]));
  Mat u_out(n, d), i_out(m, d);
  for (Idx u = 0; u < n; ++u)
    for (Idx i = 0; i < m; ++i) {
      const double c = norm.at(u, i);
      if (c == 0.0) continue;
      for (Idx j = 0; j < d; ++j) {
        u_out.at(u, j) += c * items.at(i, j);
        i_out.at(i, j) += c * users.at(u, j);
      }
    }
  return {u_out, i_out};
}

double max_abs_diff(const Mat& a, const Mat& b) {
  REQUIRE(a.same_shape(b));
  double worst = 0.0;
  for (std::size_t n = 0; n < a.data.size(); ++n)
    worst = std::max(worst, std::abs(a.data[n] - b.data[n]));
  return worst;
}

}  // namespace

TEST_CASE("sparse propagation matches the dense normalized oracle") {
  Rng rng(123);
  for (int trial = 0; trial < 50; ++trial) {
    const Idx n = 3 + static_cast<Idx>(rng.below(12));
    const Idx m = 3 + static_cast<Idx>(rng.below(12));
    const auto store = random_store(rng, n, m);
    const auto graph = build_graphs(store, store.base_edges);
    const Mat users = random_mat(rng, n, 4), items = random_mat(rng, m, 4);

    const auto [su, si] = propagate(graph, 0, users, items);
    const auto [du, di] = dense_propagate(store, users, items);
    CHECK(max_abs_diff(su, du) < 1e-12);
    CHECK(max_abs_diff(si, di) < 1e-12);
  }
}

TEST_CASE("normalization coefficient is one over root degree product") {
  /* user 0 has degree 2; items 0,1 have degree 1 */
  AspectInteractionStore store;
  store.num_users = 1;
  store.num_items = 2;
  store.base_edges = {{0, 0}, {0, 1}};
  store.aspect_names = {"a"};
  store.aspect_edges = {store.base_edges};
  const auto graph = build_graphs(store, store.base_edges);

  Mat users(1, 1), items(2, 1);
  users.at(0, 0) = 1.0;
  items.at(0, 0) = 1.0;
  items.at(1, 0) = 3.0;
  const auto [u_next, i_next] = propagate(graph, 0, users, items);
  const double c = 1.0 / std::sqrt(2.0);
  CHECK(u_next.at(0, 0) == doctest::Approx(c * 1.0 + c * 3.0).epsilon(1e-15));
  CHECK(i_next.at(0, 0) == doctest::Approx(c).epsilon(1e-15));
  CHECK(i_next.at(1, 0) == doctest::Approx(c).epsilon(1e-15));
}

TEST_CASE("isolated nodes receive and send nothing") {
  AspectInteractionStore store;
  store.num_users = 3;
  store.num_items = 3;
  store.base_edges = {{0, 0}};
  store.aspect_names = {"a"};
  store.aspect_edges = {store.base_edges};
  const auto graph = build_graphs(store, store.base_edges);

  Rng rng(4);
  const Mat users = random_mat(rng, 3, 2), items = random_mat(rng, 3, 2);
  const auto [u_next, i_next] = propagate(graph, 0, users, items);
  for (Idx j = 0; j < 2; ++j) {
    CHECK(u_next.at(1, j) == 0.0);
    CHECK(u_next.at(2, j) == 0.0);
    CHECK(i_next.at(1, j) == 0.0);
    CHECK(i_next.at(2, j) == 0.0);
  }
}

TEST_CASE("propagation is linear") {
  Rng rng(77);
  const auto store = random_store(rng, 8, 9);
  const auto graph = build_graphs(store, store.base_edges);
  const Mat xu = random_mat(rng, 8, 3), xi = random_mat(rng, 9, 3);
  const Mat yu = random_mat(rng, 8, 3), yi = random_mat(rng, 9, 3);

  Mat zu(8, 3), zi(9, 3);
  for (std::size_t n = 0; n < zu.data.size(); ++n) zu.data[n] = 2.0 * xu.data[n] - 0.5 * yu.data[n];
  for (std::size_t n = 0; n < zi.data.size(); ++n) zi.data[n] = 2.0 * xi.data[n] - 0.5 * yi.data[n];

  const auto [pu_x, pi_x] = propagate(graph, 0, xu, xi);
  const auto [pu_y, pi_y] = propagate(graph, 0, yu, yi);
  const auto [pu_z, pi_z] = propagate(graph, 0, zu, zi);
  for (std::size_t n = 0; n < pu_z.data.size(); ++n)
    CHECK(pu_z.data[n] == doctest::Approx(2.0 * pu_x.data[n] - 0.5 * pu_y.data[n]).epsilon(1e-12));
  for (std::size_t n = 0; n < pi_z.data.size(); ++n)
    CHECK(pi_z.data[n] == doctest::Approx(2.0 * pi_x.data[n] - 0.5 * pi_y.data[n]).epsilon(1e-12));
}

TEST_CASE("the propagation operator is self-adjoint") {
  Rng rng(55);
  const auto store = random_store(rng, 7, 6);
  const auto graph = build_graphs(store, store.base_edges);
  const Mat xu = random_mat(rng, 7, 2), xi = random_mat(rng, 6, 2);
  const Mat yu = random_mat(rng, 7, 2), yi = random_mat(rng, 6, 2);

  const auto [px_u, px_i] = propagate(graph, 0, xu, xi);
  const auto [py_u, py_i] = propagate_transpose(graph, 0, yu, yi);

  /* <y, Px> over the stacked space equals <P^T y, x> */
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t n = 0; n < px_u.data.size(); ++n) lhs += yu.data[n] * px_u.data[n];
  for (std::size_t n = 0; n < px_i.data.size(); ++n) lhs += yi.data[n] * px_i.data[n];
  for (std::size_t n = 0; n < py_u.data.size(); ++n) rhs += py_u.data[n] * xu.data[n];
  for (std::size_t n = 0; n < py_i.data.size(); ++n) rhs += py_i.data[n] * xi.data[n];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("build_graphs keeps only training edges and recomputes degrees") {
  AspectInteractionStore store;
  store.num_users = 2;
  store.num_items = 2;
  store.base_edges = {{0, 0}, {0, 1}, {1, 1}};
  store.aspect_names = {"a"};
  store.aspect_edges = {store.base_edges};

  const std::vector<Edge> train{{0, 0}, {1, 1}};
  const auto graph = build_graphs(store, train);
  CHECK(graph.aspects[0].num_edges == 2);
  CHECK(graph.aspects[0].user_degree == std::vector<Idx>{1, 1});
  CHECK(graph.aspects[0].item_degree == std::vector<Idx>{1, 1});
}

TEST_CASE("an aspect with no training edges is allowed") {
  AspectInteractionStore store;
  store.num_users = 2;
  store.num_items = 2;
  store.base_edges = {{0, 0}};
  store.aspect_names = {"a", "empty"};
  store.aspect_edges = {{{0, 0}}, {}};
  const auto graph = build_graphs(store, store.base_edges);
  CHECK(graph.aspects[1].num_edges == 0);

  Mat users(2, 1), items(2, 1);
  users.at(0, 0) = 1.0;
  const auto [u_next, i_next] = propagate(graph, 1, users, items);
  CHECK(u_next.at(0, 0) == 0.0);
  CHECK(i_next.at(0, 0) == 0.0);
}

TEST_CASE("graphs serialize byte-exactly") {
  testutil::TempDir tmp("graphio");
  Rng rng(31);
  AspectInteractionStore store = random_store(rng, 9, 8);
  store.aspect_names = {"quality"};
  /* add a second aspect with a strict subset of edges */
  std::vector<Edge> subset;
  for (std::size_t k = 0; k < store.base_edges.size(); k += 2) subset.push_back(store.base_edges[k]);
  store.aspect_names.push_back("price");
  store.aspect_edges.push_back(subset);

  const auto graph = build_graphs(store, store.base_edges);
  save_graphs(tmp.path / "g.bin", graph);
  const auto back = load_graphs(tmp.path / "g.bin");

  CHECK(back.num_users == graph.num_users);
  CHECK(back.num_items == graph.num_items);
  REQUIRE(back.num_aspects() == graph.num_aspects());
  for (Idx a = 0; a < graph.num_aspects(); ++a) {
    CHECK(back.aspects[a].name == graph.aspects[a].name);
    CHECK(back.aspects[a].num_edges == graph.aspects[a].num_edges);
    CHECK(back.aspects[a].user_degree == graph.aspects[a].user_degree);
    CHECK(back.aspects[a].user_from_item.indptr == graph.aspects[a].user_from_item.indptr);
    CHECK(back.aspects[a].user_from_item.col == graph.aspects[a].user_from_item.col);
    CHECK(back.aspects[a].user_from_item.val == graph.aspects[a].user_from_item.val);  /* bitwise */
    CHECK(back.aspects[a].item_from_user.val == graph.aspects[a].item_from_user.val);
  }

  /* identical content writes identical bytes */
  save_graphs(tmp.path / "g2.bin", back);
  CHECK(read_file(tmp.path / "g.bin") == read_file(tmp.path / "g2.bin"));
}

TEST_CASE("truncated graph files are rejected") {
  testutil::TempDir tmp("graphtrunc");
  Rng rng(13);
  const auto store = random_store(rng, 5, 5);
  const auto graph = build_graphs(store, store.base_edges);
  save_graphs(tmp.path / "g.bin", graph);
  const std::string bytes = read_file(tmp.path / "g.bin");
  write_file_atomic(tmp.path / "g.bin", bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS(static_cast<void>(load_graphs(tmp.path / "g.bin")));
}

TEST_CASE("graph summary is valid json with per-aspect counts") {
  testutil::TempDir tmp("gsum");
  Rng rng(17);
  const auto store = random_store(rng, 6, 6);
  const auto graph = build_graphs(store, store.base_edges);
  write_graph_summary(tmp.path / "s.json", graph);
  const auto j = nlohmann::json::parse(read_file(tmp.path / "s.json"));
  CHECK(j.at("num_users").get<Idx>() == 6);
  CHECK(j.at("aspects").size() == 1);
  CHECK(j["aspects"][0].at("num_edges").get<Idx>() == graph.aspects[0].num_edges);
}

TEST_CASE("csr multiply validates shapes") {
  CsrMatrix csr;
  csr.rows = 2;
  csr.cols = 3;
  csr.indptr = {0, 0, 0};
  Mat in(2, 4), out(2, 4);  /* wrong inner dimension */
  CHECK_THROWS_AS(csr.multiply(in, out), std::invalid_argument);
}
