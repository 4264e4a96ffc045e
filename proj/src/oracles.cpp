#include "dsim/oracles.hpp"

#include <algorithm>
#include <numeric>
#include <queue>
#include <stdexcept>

namespace dsim {

std::vector<std::uint32_t> bfs_distances(const Graph& g, std::uint32_t src) {
  std::vector<std::uint32_t> dist(g.node_count(), kUnreachable);
  std::vector<std::uint32_t> frontier{src}, next;
  dist[src] = 0;
  std::uint32_t d = 0;
  while (!frontier.empty()) {
    ++d;
    next.clear();
    for (std::uint32_t u : frontier)
      for (const Adjacent& a : g.neighbors(u)) {
        std::uint32_t v = g.index_of(a.neighbor);
        if (dist[v] == kUnreachable) {
          dist[v] = d;
          next.push_back(v);
        }
      }
    frontier.swap(next);
  }
  return dist;
}

std::vector<std::uint32_t> shortest_path(const Graph& g, std::uint32_t src, std::uint32_t dst) {
  std::vector<std::uint32_t> parent(g.node_count(), kUnreachable);
  std::vector<std::uint32_t> frontier{src}, next;
  parent[src] = src;
  while (!frontier.empty() && parent[dst] == kUnreachable) {
    next.clear();
    for (std::uint32_t u : frontier)
      for (const Adjacent& a : g.neighbors(u)) {
        std::uint32_t v = g.index_of(a.neighbor);
        if (parent[v] == kUnreachable) {
          parent[v] = u;
          next.push_back(v);
        }
      }
    frontier.swap(next);
  }
  if (parent[dst] == kUnreachable) return {};
  std::vector<std::uint32_t> path{dst};
  while (path.back() != src) path.push_back(parent[path.back()]);
  std::reverse(path.begin(), path.end());
  return path;
}

namespace {

std::optional<std::uint64_t> diameter_impl(const Graph& g, bool parallel) {
  if (g.node_count() == 0) return std::nullopt;
  std::int64_t n = static_cast<std::int64_t>(g.node_count());
  std::uint64_t best = 0;
  bool disconnected = false;
#pragma omp parallel for schedule(dynamic, 4) reduction(max : best) \
    reduction(|| : disconnected) if (parallel)
  for (std::int64_t s = 0; s < n; ++s) {
    auto dist = bfs_distances(g, static_cast<std::uint32_t>(s));
    for (std::uint32_t d : dist) {
      if (d == kUnreachable)
        disconnected = true;
      else
        best = std::max<std::uint64_t>(best, d);
    }
  }
  if (disconnected) return std::nullopt;
  return best;
}

}  // namespace

std::optional<std::uint64_t> oracle_diameter(const Graph& g) { return diameter_impl(g, true); }
std::optional<std::uint64_t> oracle_diameter_serial(const Graph& g) { return diameter_impl(g, false); }

std::uint64_t oracle_domination_number(const Graph& g) {
  std::size_t n = g.node_count();
  if (n == 0 || n > 24) throw std::invalid_argument("domination oracle limited to 1 <= n <= 24");
  std::vector<std::uint32_t> closed(n, 0);
  for (std::uint32_t u = 0; u < n; ++u) {
    closed[u] = 1u << u;
    for (const Adjacent& a : g.neighbors(u)) closed[u] |= 1u << g.index_of(a.neighbor);
  }
  std::uint32_t full = (n == 32) ? 0xffffffffu : ((1u << n) - 1);
  for (std::uint64_t k = 1; k <= n; ++k) {
    // Gosper's hack enumerates all k-subsets in increasing mask order.
    std::uint32_t mask = (1u << k) - 1;
    while (mask < (1u << n)) {
      std::uint32_t covered = 0;
      for (std::uint32_t rest = mask; rest;) {
        std::uint32_t u = std::countr_zero(rest);
        covered |= closed[u];
        rest &= rest - 1;
      }
      if (covered == full) return k;
      std::uint32_t c = mask & -mask, r = mask + c;
      mask = r | (((mask ^ r) >> 2) / c);
    }
  }
  return n;
}

namespace {

struct Dsu {
  std::vector<std::uint32_t> parent;
  explicit Dsu(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0u); }
  std::uint32_t find(std::uint32_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  bool unite(std::uint32_t a, std::uint32_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent[b] = a;
    return true;
  }
};

}  // namespace

std::vector<EdgeId> oracle_mst(const Graph& g) {
  if (g.distinct_weights()) {
    std::vector<Weight> ws;
    for (const Edge& e : g.edges()) ws.push_back(e.weight);
    std::sort(ws.begin(), ws.end());
    if (std::adjacent_find(ws.begin(), ws.end()) != ws.end())
      throw std::invalid_argument("duplicate weights in distinct mode");
  }
  std::vector<std::uint32_t> order(g.edge_count());
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&g](std::uint32_t a, std::uint32_t b) {
    const Edge &ea = g.edge(a), &eb = g.edge(b);
    if (ea.weight != eb.weight) return ea.weight < eb.weight;
    return ea.id < eb.id;  // deterministic tie-break for non-distinct inputs
  });
  Dsu dsu(g.node_count());
  std::vector<EdgeId> mst;
  for (std::uint32_t ei : order) {
    const Edge& e = g.edge(ei);
    if (dsu.unite(g.index_of(e.id.lo), g.index_of(e.id.hi))) mst.push_back(e.id);
  }
  if (mst.size() + 1 != g.node_count()) throw std::invalid_argument("mst oracle: graph disconnected");
  std::sort(mst.begin(), mst.end());
  return mst;
}

std::uint64_t oracle_mincut(const Graph& g) {
  std::size_t n = g.node_count();
  if (n < 2 || n > 256) throw std::invalid_argument("mincut oracle limited to 2 <= n <= 256");
  // Stoer–Wagner with capacities = edge multiplicities.
  std::vector<std::vector<std::uint64_t>> w(n, std::vector<std::uint64_t>(n, 0));
  for (const Edge& e : g.edges()) {
    std::uint32_t a = g.index_of(e.id.lo), b = g.index_of(e.id.hi);
    w[a][b] += e.multiplicity;
    w[b][a] += e.multiplicity;
  }
  std::vector<std::uint32_t> active(n);
  std::iota(active.begin(), active.end(), 0u);
  std::uint64_t best = ~std::uint64_t{0};
  while (active.size() > 1) {
    std::vector<std::uint64_t> weight(active.size(), 0);
    std::vector<char> added(active.size(), 0);
    std::size_t prev = 0, last = 0;
    for (std::size_t step = 0; step < active.size(); ++step) {
      std::size_t pick = static_cast<std::size_t>(-1);
      for (std::size_t i = 0; i < active.size(); ++i)
        if (!added[i] && (pick == static_cast<std::size_t>(-1) || weight[i] > weight[pick])) pick = i;
      added[pick] = 1;
      prev = last;
      last = pick;
      for (std::size_t i = 0; i < active.size(); ++i)
        if (!added[i]) weight[i] += w[active[last]][active[i]];
    }
    best = std::min(best, weight[last]);
    // merge last into prev
    std::uint32_t a = active[prev], b = active[last];
    for (std::size_t i = 0; i < active.size(); ++i) {
      std::uint32_t v = active[i];
      if (v == a || v == b) continue;
      w[a][v] += w[b][v];
      w[v][a] = w[a][v];
    }
    active.erase(active.begin() + static_cast<std::ptrdiff_t>(last));
  }
  return best;
}

BipartiteResult oracle_bipartite(const Graph& g) {
  BipartiteResult res;
  res.bipartite = true;
  std::size_t n = g.node_count();
  std::vector<std::int8_t> color(n, -1);
  std::vector<std::uint32_t> parent(n, kUnreachable);
  for (std::uint32_t start = 0; start < n && res.bipartite; ++start) {
    if (color[start] != -1) continue;
    color[start] = 0;
    parent[start] = start;
    std::queue<std::uint32_t> q;
    q.push(start);
    while (!q.empty() && res.bipartite) {
      std::uint32_t u = q.front();
      q.pop();
      for (const Adjacent& a : g.neighbors(u)) {
        std::uint32_t v = g.index_of(a.neighbor);
        if (color[v] == -1) {
          color[v] = static_cast<std::int8_t>(1 - color[u]);
          parent[v] = u;
          q.push(v);
        } else if (color[v] == color[u]) {
          // walk both endpoints up to their common ancestor: odd closed walk
          res.bipartite = false;
          std::vector<std::uint32_t> pu{u}, pv{v};
          while (pu.back() != parent[pu.back()]) pu.push_back(parent[pu.back()]);
          while (pv.back() != parent[pv.back()]) pv.push_back(parent[pv.back()]);
          while (pu.size() >= 2 && pv.size() >= 2 && pu[pu.size() - 2] == pv[pv.size() - 2]) {
            pu.pop_back();
            pv.pop_back();
          }
          res.odd_cycle.assign(pu.begin(), pu.end());
          for (auto it = std::next(pv.rbegin()); it != pv.rend(); ++it) res.odd_cycle.push_back(*it);
          break;
        }
      }
    }
  }
  return res;
}

std::vector<std::uint32_t> component_labels(const Graph& g) {
  return component_labels_subgraph(g, std::vector<char>(g.edge_count(), 1));
}

std::vector<std::uint32_t> component_labels_subgraph(const Graph& g,
                                                     const std::vector<char>& edge_in) {
  std::size_t n = g.node_count();
  std::vector<std::uint32_t> label(n, kUnreachable);
  for (std::uint32_t start = 0; start < n; ++start) {
    if (label[start] != kUnreachable) continue;
    label[start] = start;
    std::vector<std::uint32_t> stack{start};
    while (!stack.empty()) {
      std::uint32_t u = stack.back();
      stack.pop_back();
      for (const Adjacent& a : g.neighbors(u)) {
        if (!edge_in[a.edge_index]) continue;
        std::uint32_t v = g.index_of(a.neighbor);
        if (label[v] == kUnreachable) {
          label[v] = start;
          stack.push_back(v);
        }
      }
    }
  }
  return label;
}

std::uint32_t component_count(const Graph& g) {
  auto labels = component_labels(g);
  std::uint32_t count = 0;
  for (std::uint32_t i = 0; i < labels.size(); ++i)
    if (labels[i] == i) ++count;
  return count;
}

std::optional<std::uint64_t> subgraph_diameter(const Graph& g, const std::vector<char>& edge_in) {
  std::int64_t n = static_cast<std::int64_t>(g.node_count());
  if (n == 0) return std::nullopt;
  std::uint64_t best = 0;
  bool disconnected = false;
#pragma omp parallel for schedule(dynamic, 4) reduction(max : best) reduction(|| : disconnected)
  for (std::int64_t s = 0; s < n; ++s) {
    std::vector<std::uint32_t> dist(n, kUnreachable);
    std::vector<std::uint32_t> frontier{static_cast<std::uint32_t>(s)}, next;
    dist[s] = 0;
    std::uint32_t d = 0;
    while (!frontier.empty()) {
      ++d;
      next.clear();
      for (std::uint32_t u : frontier)
        for (const Adjacent& a : g.neighbors(u)) {
          if (!edge_in[a.edge_index]) continue;
          std::uint32_t v = g.index_of(a.neighbor);
          if (dist[v] == kUnreachable) {
            dist[v] = d;
            next.push_back(v);
          }
        }
      frontier.swap(next);
    }
    for (std::uint32_t x : dist) {
      if (x == kUnreachable)
        disconnected = true;
      else
        best = std::max<std::uint64_t>(best, x);
    }
  }
  if (disconnected) return std::nullopt;
  return best;
}

}  // namespace dsim
