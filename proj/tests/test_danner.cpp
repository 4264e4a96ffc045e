#include <doctest.h>

#include <cmath>
#include <numeric>

#include "dsim/danner.hpp"
#include "dsim/oracles.hpp"
#include "oracle_ref.hpp"

using namespace dsim;

namespace {

Graph gnp(std::uint64_t n, double p, std::uint64_t seed) {
  GenParams gp;
  gp.kind = GeneratorKind::gnp;
  gp.n = n;
  gp.p = p;
  return generate(gp, seed);
}

// Eight hubs forming a clique, each with its own low-id leaf cloud. Step 2
// wires hubs to their leaves only, so hat-H starts as eight components inside
// one hat-G component.
Graph hub_gadget() {
  std::vector<NodeId> nodes;
  std::vector<Edge> edges;
  const std::uint64_t hubs = 8, leaves_per = 30;
  const NodeId hub_base = hubs * leaves_per;  // leaves take 1..240, hubs 241..248
  Weight w = 1;
  for (std::uint64_t h = 0; h < hubs; ++h) {
    NodeId hub = hub_base + h + 1;
    for (std::uint64_t l = 0; l < leaves_per; ++l) {
      Edge e;
      e.id = EdgeId(hub, h * leaves_per + l + 1);
      e.weight = w++;
      edges.push_back(e);
    }
    for (std::uint64_t h2 = h + 1; h2 < hubs; ++h2) {
      Edge e;
      e.id = EdgeId(hub, hub_base + h2 + 1);
      e.weight = w++;
      edges.push_back(e);
    }
  }
  for (NodeId v = 1; v <= hub_base + hubs; ++v) nodes.push_back(v);
  return Graph::from_edges(std::move(nodes), std::move(edges), 0, true);
}

}  // namespace

TEST_CASE("delta = 1 gives H = G with no communication") {
  Graph g = gnp(40, 0.15, 2);
  DannerParams params;
  params.delta = 1.0;
  auto res = build_danner(g, params, 7);
  CHECK(res.edges_in_h == g.edge_count());
  for (char f : res.h_edges) CHECK(f);
  CHECK(res.metrics.rounds == 1);
  CHECK(res.metrics.messages == 0);
  CHECK(res.connected);
  CHECK(res.realized_diameter == res.diameter_g);
}

TEST_CASE("star: every delta yields H = G") {
  GenParams gp;
  gp.kind = GeneratorKind::star;
  gp.n = 10;
  Graph g = generate(gp, 1);
  for (double delta : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    DannerParams params;
    params.delta = delta;
    auto res = build_danner(g, params, 5);
    CHECK(res.edges_in_h == g.edge_count());
    CHECK(res.connected);
  }
}

TEST_CASE("low-degree nodes contribute all incident edges after step 2") {
  Graph g = gnp(48, 0.12, 9);
  DannerParams params;
  params.delta = 0.5;
  auto res = build_danner(g, params, 3);
  double threshold = std::pow(48.0, 0.5);
  const auto& h0 = res.h_by_iteration[0];
  for (std::uint32_t i = 0; i < g.node_count(); ++i) {
    if (static_cast<double>(g.degree(i)) + 1e-9 >= threshold) continue;
    for (const Adjacent& a : g.neighbors(i)) CHECK(h0[a.edge_index]);
  }
}

TEST_CASE("random graphs: spanning, connected, bounded size across deltas") {
  for (double delta : {0.0, 0.25, 0.5, 0.75}) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      Graph g = gnp(64, 0.15, seed);
      DannerParams params;
      params.delta = delta;
      auto res = build_danner(g, params, seed * 31);
      REQUIRE(!res.timed_out);
      CHECK(res.connected);
      double n = 64, lg = 6;
      double cap = 4.0 * std::min<double>(g.edge_count(), std::pow(n, 1.0 + delta)) * lg;
      CHECK(static_cast<double>(res.edges_in_h) <= cap);
      REQUIRE(res.realized_diameter.has_value());
      double extra = static_cast<double>(*res.realized_diameter) -
                     static_cast<double>(*res.diameter_g);
      CHECK(extra <= 8.0 * std::pow(n, 1.0 - delta) * lg * lg);
    }
  }
}

TEST_CASE("same seed reproduces the construction bit for bit") {
  Graph g = gnp(48, 0.12, 4);
  DannerParams params;
  params.delta = 0.5;
  auto a = build_danner(g, params, 42);
  auto b = build_danner(g, params, 42);
  CHECK(a.h_edges == b.h_edges);
  CHECK(metrics_to_json(a.metrics) == metrics_to_json(b.metrics));
  auto c = build_danner(g, params, 43);
  bool same = a.h_edges == c.h_edges && a.metrics.messages == c.metrics.messages;
  CHECK(!same);
}

TEST_CASE("hub gadget: hat-H components halve from eight to one") {
  Graph g = hub_gadget();
  DannerParams params;
  params.delta = 0.5;
  auto res = build_danner(g, params, 11);
  REQUIRE(!res.component_count_trace.empty());
  CHECK(res.component_count_trace.front() >= 8);
  CHECK(res.component_count_trace.back() == 1);
  CHECK(component_trace_check(g, res));
  CHECK(res.connected);
}

TEST_CASE("all-low graph: trace check passes vacuously") {
  GenParams gp;
  gp.kind = GeneratorKind::cycle;
  gp.n = 32;
  Graph g = generate(gp, 1);
  DannerParams params;
  params.delta = 0.75;  // threshold 13.5, all degrees are 2
  auto res = build_danner(g, params, 3);
  CHECK(res.connected);
  CHECK(res.edges_in_h == g.edge_count());  // every low node adds everything
  CHECK(component_trace_check(g, res));
}

TEST_CASE("domination audit on random runs") {
  int pass = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Graph g = gnp(64, 0.2, seed);
    DannerParams params;
    params.delta = 0.5;
    auto res = build_danner(g, params, seed);
    pass += domination_audit(g, res);
  }
  CHECK(pass >= 4);
}

TEST_CASE("round count equals the padded schedule") {
  Graph g = gnp(48, 0.15, 8);
  DannerParams params;
  params.delta = 0.5;
  auto res = build_danner(g, params, 2);
  std::uint64_t expected = 3 + params.loop_iterations(48) * params.round_budget(48);
  CHECK(res.metrics.rounds <= expected);
  CHECK(res.metrics.rounds + 1 >= expected);
}

TEST_CASE("summary json carries the contract fields") {
  Graph g = gnp(32, 0.2, 3);
  DannerParams params;
  params.delta = 0.5;
  auto res = build_danner(g, params, 1);
  auto j = danner_summary(g, params, res);
  for (const char* key : {"n", "m", "D", "delta", "edges_H", "diam_H", "rounds", "messages"})
    CHECK(j.contains(key));
}
