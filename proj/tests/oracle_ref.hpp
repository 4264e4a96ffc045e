#pragma once

// Reference implementations used as independent ground truth in tests. They
// deliberately use different algorithms than the library oracles they check.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <set>
#include <vector>

#include "dsim/graph.hpp"
#include "dsim/rng.hpp"

namespace ref {

// All-pairs shortest paths by Floyd–Warshall.
inline std::optional<std::uint64_t> fw_diameter(const dsim::Graph& g) {
  std::size_t n = g.node_count();
  constexpr std::uint64_t inf = std::numeric_limits<std::uint64_t>::max() / 4;
  std::vector<std::vector<std::uint64_t>> d(n, std::vector<std::uint64_t>(n, inf));
  for (std::size_t i = 0; i < n; ++i) d[i][i] = 0;
  for (const dsim::Edge& e : g.edges()) {
    std::size_t a = g.index_of(e.id.lo), b = g.index_of(e.id.hi);
    d[a][b] = d[b][a] = 1;
  }
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        d[i][j] = std::min(d[i][j], d[i][k] + d[k][j]);
  std::uint64_t best = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (d[i][j] >= inf) return std::nullopt;
      best = std::max(best, d[i][j]);
    }
  return best;
}

// Prim's algorithm, lazy variant.
inline std::vector<dsim::EdgeId> prim_mst(const dsim::Graph& g) {
  std::size_t n = g.node_count();
  std::vector<char> in_tree(n, 0);
  std::vector<dsim::EdgeId> result;
  in_tree[0] = 1;
  for (std::size_t step = 0; step + 1 < n; ++step) {
    dsim::Weight best_w = std::numeric_limits<dsim::Weight>::max();
    dsim::EdgeId best_e;
    std::uint32_t best_v = 0;
    bool found = false;
    for (std::uint32_t u = 0; u < n; ++u) {
      if (!in_tree[u]) continue;
      for (const dsim::Adjacent& a : g.neighbors(u)) {
        std::uint32_t v = g.index_of(a.neighbor);
        const dsim::Edge& e = g.edge(a.edge_index);
        if (!in_tree[v] && (e.weight < best_w || (e.weight == best_w && e.id < best_e))) {
          best_w = e.weight;
          best_e = e.id;
          best_v = v;
          found = true;
        }
      }
    }
    if (!found) throw std::runtime_error("prim: disconnected");
    in_tree[best_v] = 1;
    result.push_back(best_e);
  }
  std::sort(result.begin(), result.end());
  return result;
}

// Minimum cut by enumerating all proper 2-partitions; n <= 20 advisable.
inline std::uint64_t brute_mincut(const dsim::Graph& g) {
  std::size_t n = g.node_count();
  std::uint64_t best = ~std::uint64_t{0};
  for (std::uint32_t mask = 1; mask + 1 < (1u << n); mask += 2) {
    // node 0 always on side 0 (odd masks complementary-deduplicated)
    std::uint64_t cut = 0;
    for (const dsim::Edge& e : g.edges()) {
      bool a = mask >> g.index_of(e.id.lo) & 1, b = mask >> g.index_of(e.id.hi) & 1;
      if (a != b) cut += e.multiplicity;
    }
    best = std::min(best, cut);
  }
  return best;
}

// A graph is bipartite iff its bipartite double cover has exactly twice as
// many connected components.
inline bool double_cover_bipartite(const dsim::Graph& g) {
  std::size_t n = g.node_count();
  std::vector<std::uint32_t> parent(2 * n);
  std::iota(parent.begin(), parent.end(), 0u);
  auto find = [&](std::uint32_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  auto unite = [&](std::uint32_t a, std::uint32_t b) { parent[find(a)] = find(b); };
  std::vector<std::uint32_t> base(n);
  std::iota(base.begin(), base.end(), 0u);
  auto findb = [&](std::uint32_t x) {
    while (base[x] != x) x = base[x] = base[base[x]];
    return x;
  };
  for (const dsim::Edge& e : g.edges()) {
    std::uint32_t a = g.index_of(e.id.lo), b = g.index_of(e.id.hi);
    unite(a, static_cast<std::uint32_t>(n + b));
    unite(b, static_cast<std::uint32_t>(n + a));
    base[findb(a)] = findb(b);
  }
  std::set<std::uint32_t> cover, single;
  for (std::uint32_t i = 0; i < 2 * n; ++i) cover.insert(find(i));
  for (std::uint32_t i = 0; i < n; ++i) single.insert(findb(i));
  return cover.size() == 2 * single.size();
}

// Uniform random connected graph: a random spanning tree plus extra edges.
inline dsim::Graph random_connected_graph(dsim::Rng& rng, std::uint64_t n, double extra_p,
                                          bool distinct_weights = true) {
  std::vector<std::pair<std::uint64_t, std::uint64_t>> pairs;
  std::vector<std::uint64_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  rng.shuffle(order);
  for (std::uint64_t i = 1; i < n; ++i)
    pairs.emplace_back(order[i], order[rng.below(i)]);
  for (std::uint64_t i = 0; i < n; ++i)
    for (std::uint64_t j = i + 1; j < n; ++j)
      if (rng.bernoulli(extra_p)) pairs.emplace_back(i, j);
  std::set<std::pair<std::uint64_t, std::uint64_t>> dedup;
  for (auto [a, b] : pairs) dedup.insert({std::min(a, b) + 1, std::max(a, b) + 1});
  std::vector<dsim::Edge> edges;
  std::vector<dsim::Weight> ws(dedup.size());
  std::iota(ws.begin(), ws.end(), dsim::Weight{1});
  rng.shuffle(ws);
  std::size_t i = 0;
  for (auto [a, b] : dedup) {
    dsim::Edge e;
    e.id = dsim::EdgeId(a, b);
    e.weight = distinct_weights ? ws[i++] : 1 + rng.below(8);
    edges.push_back(e);
  }
  std::vector<dsim::NodeId> nodes(n);
  std::iota(nodes.begin(), nodes.end(), dsim::NodeId{1});
  return dsim::Graph::from_edges(std::move(nodes), std::move(edges), 0, distinct_weights);
}

// Calls f(graph) for every connected labeled graph on k nodes.
template <class F>
void for_each_connected_graph(unsigned k, F f) {
  unsigned pairs = k * (k - 1) / 2;
  std::vector<std::pair<unsigned, unsigned>> slots;
  for (unsigned i = 0; i < k; ++i)
    for (unsigned j = i + 1; j < k; ++j) slots.emplace_back(i, j);
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << pairs); ++mask) {
    // quick connectivity check on the bitmask before building a Graph
    std::vector<std::uint32_t> reach{0};
    std::uint32_t seen = 1;
    for (std::size_t s = 0; s < reach.size(); ++s)
      for (unsigned b = 0; b < pairs; ++b) {
        if (!(mask >> b & 1)) continue;
        auto [i, j] = slots[b];
        unsigned u = reach[s], v = 0;
        if (i == u)
          v = j;
        else if (j == u)
          v = i;
        else
          continue;
        if (!(seen >> v & 1)) {
          seen |= 1u << v;
          reach.push_back(v);
        }
      }
    if (seen != (1u << k) - 1) continue;
    std::vector<dsim::Edge> edges;
    dsim::Weight w = 1;
    for (unsigned b = 0; b < pairs; ++b)
      if (mask >> b & 1) {
        dsim::Edge e;
        e.id = dsim::EdgeId(slots[b].first + 1, slots[b].second + 1);
        e.weight = w++;
        edges.push_back(e);
      }
    std::vector<dsim::NodeId> nodes(k);
    std::iota(nodes.begin(), nodes.end(), dsim::NodeId{1});
    f(dsim::Graph::from_edges(std::move(nodes), std::move(edges), 0, true));
  }
}

}  // namespace ref
