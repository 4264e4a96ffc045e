#include <doctest.h>

#include <algorithm>
#include <set>

#include "dsim/graph.hpp"
#include "dsim/oracles.hpp"
#include "dsim/rng.hpp"
#include "oracle_ref.hpp"

using namespace dsim;

namespace {

Graph gen(GeneratorKind kind, std::uint64_t n, std::uint64_t seed = 1) {
  GenParams p;
  p.kind = kind;
  p.n = n;
  return generate(p, seed);
}

}  // namespace

TEST_CASE("diameter trivials and disconnected case") {
  CHECK(oracle_diameter(gen(GeneratorKind::path, 4)) == 3);
  CHECK(oracle_diameter(gen(GeneratorKind::star, 6)) == 2);

  std::vector<NodeId> nodes{1, 2, 3, 4};
  Edge e1, e2;
  e1.id = EdgeId(1, 2);
  e2.id = EdgeId(3, 4);
  e2.weight = 2;
  Graph disc = Graph::from_edges(nodes, {e1, e2});
  CHECK(!oracle_diameter(disc).has_value());
}

TEST_CASE("diameter agrees with Floyd-Warshall on random instances") {
  Rng rng(100, 0);
  GenParams p;
  p.kind = GeneratorKind::gnp;
  p.n = 12;
  p.p = 0.3;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Graph g = generate(p, seed);
    CHECK(oracle_diameter(g) == ref::fw_diameter(g));
  }
}

TEST_CASE("parallel diameter equals serial reference") {
  Rng rng(4, 0);
  for (int t = 0; t < 10; ++t) {
    Graph g = ref::random_connected_graph(rng, 40 + rng.below(40), 0.08);
    CHECK(oracle_diameter(g) == oracle_diameter_serial(g));
  }
}

TEST_CASE("domination number trivials and guard") {
  CHECK(oracle_domination_number(gen(GeneratorKind::star, 6)) == 1);
  CHECK(oracle_domination_number(gen(GeneratorKind::path, 4)) == 2);
  CHECK(oracle_domination_number(gen(GeneratorKind::cycle, 9)) == 3);
  CHECK_THROWS(oracle_domination_number(gen(GeneratorKind::path, 25)));
}

TEST_CASE("diam < 3*gamma on all connected graphs up to 6 nodes") {
  for (unsigned k = 2; k <= 6; ++k) {
    ref::for_each_connected_graph(k, [](const Graph& g) {
      auto diam = oracle_diameter_serial(g);
      REQUIRE(diam.has_value());
      REQUIRE(*diam < 3 * oracle_domination_number(g));
    });
  }
}

TEST_CASE("closed neighborhood meets a shortest path in at most 3 nodes") {
  Rng rng(17, 0);
  for (int t = 0; t < 100; ++t) {
    Graph g = ref::random_connected_graph(rng, 8 + rng.below(13), 0.15);
    std::uint32_t n = static_cast<std::uint32_t>(g.node_count());
    std::uint32_t s = static_cast<std::uint32_t>(rng.below(n));
    std::uint32_t d = static_cast<std::uint32_t>(rng.below(n));
    auto path = shortest_path(g, s, d);
    REQUIRE(!path.empty());
    std::set<std::uint32_t> on_path(path.begin(), path.end());
    for (std::uint32_t v = 0; v < n; ++v) {
      int hits = on_path.count(v) ? 1 : 0;
      for (const Adjacent& a : g.neighbors(v))
        if (on_path.count(g.index_of(a.neighbor))) ++hits;
      CHECK(hits <= 3);
    }
  }
}

TEST_CASE("mst trivials") {
  std::vector<NodeId> nodes{1, 2, 3};
  Edge a, b, c;
  a.id = EdgeId(1, 2);
  a.weight = 1;
  b.id = EdgeId(2, 3);
  b.weight = 2;
  c.id = EdgeId(1, 3);
  c.weight = 3;
  Graph tri = Graph::from_edges(nodes, {a, b, c}, 0, true);
  auto mst = oracle_mst(tri);
  REQUIRE(mst.size() == 2);
  CHECK(mst[0] == EdgeId(1, 2));
  CHECK(mst[1] == EdgeId(2, 3));

  Graph p6 = gen(GeneratorKind::path, 6);
  CHECK(oracle_mst(p6).size() == 5);
}

TEST_CASE("kruskal oracle equals prim reference on 200 random graphs") {
  Rng rng(55, 0);
  for (int t = 0; t < 200; ++t) {
    Graph g = ref::random_connected_graph(rng, 6 + rng.below(30), 0.2);
    CHECK(oracle_mst(g) == ref::prim_mst(g));
  }
}

TEST_CASE("mst rejects duplicate weights in distinct mode") {
  std::vector<NodeId> nodes{1, 2, 3};
  Edge a, b;
  a.id = EdgeId(1, 2);
  a.weight = 7;
  b.id = EdgeId(2, 3);
  b.weight = 7;
  CHECK_THROWS(Graph::from_edges(nodes, {a, b}, 0, true));
  Graph g = Graph::from_edges(nodes, {a, b}, 0, false);
  CHECK(oracle_mst(g).size() == 2);
}

TEST_CASE("mincut trivials") {
  CHECK(oracle_mincut(gen(GeneratorKind::cycle, 8)) == 2);
  CHECK(oracle_mincut(gen(GeneratorKind::complete, 6)) == 5);
}

TEST_CASE("stoer-wagner equals brute force on small random graphs") {
  Rng rng(31, 0);
  for (int t = 0; t < 60; ++t) {
    Graph g = ref::random_connected_graph(rng, 4 + rng.below(8), 0.3);
    CHECK(oracle_mincut(g) == ref::brute_mincut(g));
  }
}

TEST_CASE("bipartite verdicts with odd cycle witness") {
  CHECK(oracle_bipartite(gen(GeneratorKind::cycle, 4)).bipartite);
  auto res = oracle_bipartite(gen(GeneratorKind::cycle, 5));
  CHECK(!res.bipartite);
  CHECK(res.odd_cycle.size() % 2 == 1);

  Rng rng(71, 0);
  for (int t = 0; t < 200; ++t) {
    Graph g = ref::random_connected_graph(rng, 4 + rng.below(16), 0.2);
    auto verdict = oracle_bipartite(g);
    CHECK(verdict.bipartite == ref::double_cover_bipartite(g));
    if (!verdict.bipartite) {
      auto& cyc = verdict.odd_cycle;
      REQUIRE(cyc.size() >= 3);
      CHECK(cyc.size() % 2 == 1);
      for (std::size_t i = 0; i < cyc.size(); ++i) {
        NodeId u = g.id_of(cyc[i]), v = g.id_of(cyc[(i + 1) % cyc.size()]);
        CHECK(g.find_edge(u, v) >= 0);
      }
    }
  }
}

TEST_CASE("component labels for subgraphs") {
  Graph g = gen(GeneratorKind::cycle, 6);
  std::vector<char> none(g.edge_count(), 0);
  auto labels = component_labels_subgraph(g, none);
  std::set<std::uint32_t> distinct(labels.begin(), labels.end());
  CHECK(distinct.size() == 6);
  CHECK(component_count(g) == 1);
}
