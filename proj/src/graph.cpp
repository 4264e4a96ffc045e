#include "dsim/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "dsim/rng.hpp"

namespace dsim {

namespace {

std::uint64_t cube_capped(std::uint64_t n) {
  // id universe {1, ..., n^3}, capped so two encoded ids fit in 64 bits
  std::uint64_t c = n;
  if (n > 0 && c <= (std::uint64_t{1} << 31) / n) c *= n;
  if (n > 0 && c <= (std::uint64_t{1} << 31) / n) c *= n;
  return std::max<std::uint64_t>(c, 1);
}

}  // namespace

Graph Graph::from_edges(std::vector<NodeId> nodes, std::vector<Edge> edges,
                        std::uint64_t id_space, bool distinct_weights) {
  Graph g;
  std::sort(nodes.begin(), nodes.end());
  if (std::adjacent_find(nodes.begin(), nodes.end()) != nodes.end())
    throw std::invalid_argument("duplicate node id");
  if (!nodes.empty() && nodes.front() == 0) throw std::invalid_argument("node id 0 is reserved");

  std::uint64_t max_id = nodes.empty() ? 0 : nodes.back();
  if (id_space == 0) id_space = std::max(cube_capped(nodes.size()), max_id);
  if (max_id > id_space) throw std::invalid_argument("node id exceeds id space");
  g.id_space_ = id_space;
  g.id_bits_ = std::bit_width(id_space);
  if (2u * g.id_bits_ > 64) throw std::invalid_argument("id space too large for edge encoding");

  std::sort(edges.begin(), edges.end(),
            [](const Edge& a, const Edge& b) { return a.id < b.id; });
  for (const Edge& e : edges) {
    if (e.id.lo >= e.id.hi) throw std::invalid_argument("self loop or non-canonical edge");
    if (e.multiplicity == 0) throw std::invalid_argument("zero multiplicity");
    if (e.weight == 0) throw std::invalid_argument("zero weight");
    if (!std::binary_search(nodes.begin(), nodes.end(), e.id.lo) ||
        !std::binary_search(nodes.begin(), nodes.end(), e.id.hi))
      throw std::invalid_argument("edge endpoint not a node");
  }
  for (std::size_t i = 1; i < edges.size(); ++i)
    if (edges[i].id == edges[i - 1].id) throw std::invalid_argument("duplicate edge; use multiplicity");

  if (distinct_weights) {
    std::set<Weight> seen;
    for (const Edge& e : edges) {
      if (e.multiplicity != 1) throw std::invalid_argument("multigraph in distinct-weights mode");
      if (!seen.insert(e.weight).second) throw std::invalid_argument("duplicate weight in distinct mode");
    }
  }

  g.nodes_ = std::move(nodes);
  g.edges_ = std::move(edges);
  g.distinct_weights_ = distinct_weights;
  for (const Edge& e : g.edges_) {
    g.total_multiplicity_ += e.multiplicity;
    g.max_weight_ = std::max(g.max_weight_, e.weight);
  }

  // CSR adjacency, neighbors sorted by id
  std::vector<std::uint32_t> deg(g.nodes_.size(), 0);
  for (const Edge& e : g.edges_) {
    ++deg[g.index_of(e.id.lo)];
    ++deg[g.index_of(e.id.hi)];
  }
  g.adj_offsets_.assign(g.nodes_.size() + 1, 0);
  for (std::size_t i = 0; i < g.nodes_.size(); ++i) g.adj_offsets_[i + 1] = g.adj_offsets_[i] + deg[i];
  g.adj_.resize(g.adj_offsets_.back());
  std::vector<std::uint32_t> fill(g.adj_offsets_.begin(), g.adj_offsets_.end() - 1);
  for (std::uint32_t ei = 0; ei < g.edges_.size(); ++ei) {
    const Edge& e = g.edges_[ei];
    std::uint32_t li = g.index_of(e.id.lo), hi = g.index_of(e.id.hi);
    g.adj_[fill[li]++] = {e.id.hi, ei};
    g.adj_[fill[hi]++] = {e.id.lo, ei};
  }
  for (std::size_t i = 0; i < g.nodes_.size(); ++i)
    std::sort(g.adj_.begin() + g.adj_offsets_[i], g.adj_.begin() + g.adj_offsets_[i + 1],
              [](const Adjacent& a, const Adjacent& b) { return a.neighbor < b.neighbor; });
  return g;
}

std::uint32_t Graph::index_of(NodeId id) const {
  auto it = std::lower_bound(nodes_.begin(), nodes_.end(), id);
  if (it == nodes_.end() || *it != id) throw std::out_of_range("unknown node id");
  return static_cast<std::uint32_t>(it - nodes_.begin());
}

bool Graph::has_node(NodeId id) const {
  return std::binary_search(nodes_.begin(), nodes_.end(), id);
}

std::span<const Adjacent> Graph::neighbors(std::uint32_t node_index) const {
  return {adj_.data() + adj_offsets_[node_index],
          adj_.data() + adj_offsets_[node_index + 1]};
}

std::int64_t Graph::find_edge(NodeId u, NodeId v) const {
  EdgeId id(u, v);
  auto it = std::lower_bound(edges_.begin(), edges_.end(), id,
                             [](const Edge& e, const EdgeId& x) { return e.id < x; });
  if (it == edges_.end() || !(it->id == id)) return -1;
  return it - edges_.begin();
}

namespace {

bool connected(std::uint64_t n, const std::vector<std::pair<std::uint64_t, std::uint64_t>>& edges) {
  if (n == 0) return false;
  std::vector<std::vector<std::uint64_t>> adj(n);
  for (auto [u, v] : edges) {
    adj[u].push_back(v);
    adj[v].push_back(u);
  }
  std::vector<char> seen(n, 0);
  std::vector<std::uint64_t> stack{0};
  seen[0] = 1;
  std::uint64_t count = 1;
  while (!stack.empty()) {
    std::uint64_t u = stack.back();
    stack.pop_back();
    for (std::uint64_t v : adj[u])
      if (!seen[v]) {
        seen[v] = 1;
        ++count;
        stack.push_back(v);
      }
  }
  return count == n;
}

Graph assemble(std::uint64_t n, std::vector<std::pair<std::uint64_t, std::uint64_t>> raw,
               const GenParams& params, Rng& rng) {
  std::sort(raw.begin(), raw.end(), [](auto a, auto b) {
    auto ca = std::minmax(a.first, a.second), cb = std::minmax(b.first, b.second);
    return ca < cb;
  });
  raw.erase(std::unique(raw.begin(), raw.end(),
                        [](auto a, auto b) {
                          return std::minmax(a.first, a.second) == std::minmax(b.first, b.second);
                        }),
            raw.end());

  std::vector<NodeId> nodes(n);
  std::iota(nodes.begin(), nodes.end(), NodeId{1});

  std::vector<Weight> weights(raw.size(), 1);
  bool distinct = params.distinct_weights && params.multiplicity == 1;
  if (distinct) {
    std::iota(weights.begin(), weights.end(), Weight{1});
    rng.shuffle(weights);
  }
  std::vector<Edge> edges(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    edges[i].id = EdgeId(raw[i].first + 1, raw[i].second + 1);
    edges[i].weight = weights[i];
    edges[i].multiplicity = params.multiplicity;
  }
  return Graph::from_edges(std::move(nodes), std::move(edges), 0, distinct);
}

}  // namespace

GeneratorKind generator_kind_from_name(const std::string& name) {
  if (name == "path") return GeneratorKind::path;
  if (name == "cycle") return GeneratorKind::cycle;
  if (name == "star") return GeneratorKind::star;
  if (name == "complete") return GeneratorKind::complete;
  if (name == "gnp") return GeneratorKind::gnp;
  if (name == "barbell") return GeneratorKind::barbell;
  if (name == "geometric") return GeneratorKind::geometric;
  if (name == "torus") return GeneratorKind::torus;
  throw std::invalid_argument("unknown generator kind: " + name);
}

std::string generator_kind_name(GeneratorKind kind) {
  switch (kind) {
    case GeneratorKind::path: return "path";
    case GeneratorKind::cycle: return "cycle";
    case GeneratorKind::star: return "star";
    case GeneratorKind::complete: return "complete";
    case GeneratorKind::gnp: return "gnp";
    case GeneratorKind::barbell: return "barbell";
    case GeneratorKind::geometric: return "geometric";
    case GeneratorKind::torus: return "torus";
  }
  throw std::invalid_argument("bad generator kind");
}

Graph generate(const GenParams& params, std::uint64_t seed) {
  Rng rng(seed, 0x67656eULL);
  using EdgeList = std::vector<std::pair<std::uint64_t, std::uint64_t>>;

  switch (params.kind) {
    case GeneratorKind::path: {
      if (params.n < 2) throw std::invalid_argument("path needs n >= 2");
      EdgeList e;
      for (std::uint64_t i = 0; i + 1 < params.n; ++i) e.emplace_back(i, i + 1);
      return assemble(params.n, std::move(e), params, rng);
    }
    case GeneratorKind::cycle: {
      if (params.n < 3) throw std::invalid_argument("cycle needs n >= 3");
      EdgeList e;
      for (std::uint64_t i = 0; i < params.n; ++i) e.emplace_back(i, (i + 1) % params.n);
      return assemble(params.n, std::move(e), params, rng);
    }
    case GeneratorKind::star: {
      if (params.n < 2) throw std::invalid_argument("star needs n >= 2");
      EdgeList e;
      for (std::uint64_t i = 1; i < params.n; ++i) e.emplace_back(0, i);
      return assemble(params.n, std::move(e), params, rng);
    }
    case GeneratorKind::complete: {
      if (params.n < 2) throw std::invalid_argument("complete needs n >= 2");
      EdgeList e;
      for (std::uint64_t i = 0; i < params.n; ++i)
        for (std::uint64_t j = i + 1; j < params.n; ++j) e.emplace_back(i, j);
      return assemble(params.n, std::move(e), params, rng);
    }
    case GeneratorKind::gnp: {
      if (params.n < 2 || params.p <= 0.0 || params.p > 1.0)
        throw std::invalid_argument("gnp needs n >= 2 and p in (0, 1]");
      for (int attempt = 0; attempt < 200; ++attempt) {
        EdgeList e;
        for (std::uint64_t i = 0; i < params.n; ++i)
          for (std::uint64_t j = i + 1; j < params.n; ++j)
            if (rng.bernoulli(params.p)) e.emplace_back(i, j);
        if (connected(params.n, e)) return assemble(params.n, std::move(e), params, rng);
      }
      throw std::runtime_error("gnp: no connected sample after bounded retries");
    }
    case GeneratorKind::barbell: {
      if (params.k < 2 || params.b < 1 || params.b > params.k)
        throw std::invalid_argument("barbell needs 2 <= k and 1 <= b <= k");
      std::uint64_t k = params.k;
      EdgeList e;
      for (std::uint64_t i = 0; i < k; ++i)
        for (std::uint64_t j = i + 1; j < k; ++j) {
          e.emplace_back(i, j);
          e.emplace_back(k + i, k + j);
        }
      for (std::uint64_t i = 0; i < params.b; ++i) e.emplace_back(i, k + i);
      return assemble(2 * k, std::move(e), params, rng);
    }
    case GeneratorKind::geometric: {
      if (params.n < 2 || params.radius <= 0.0)
        throw std::invalid_argument("geometric needs n >= 2 and radius > 0");
      for (int attempt = 0; attempt < 200; ++attempt) {
        std::vector<std::pair<double, double>> pts(params.n);
        for (auto& p : pts) p = {rng.unit(), rng.unit()};
        EdgeList e;
        double r2 = params.radius * params.radius;
        for (std::uint64_t i = 0; i < params.n; ++i)
          for (std::uint64_t j = i + 1; j < params.n; ++j) {
            double dx = pts[i].first - pts[j].first, dy = pts[i].second - pts[j].second;
            if (dx * dx + dy * dy <= r2) e.emplace_back(i, j);
          }
        if (connected(params.n, e)) return assemble(params.n, std::move(e), params, rng);
      }
      throw std::runtime_error("geometric: no connected sample after bounded retries");
    }
    case GeneratorKind::torus: {
      std::uint64_t r = params.rows, c = params.cols;
      if (r < 3 || c < 3) throw std::invalid_argument("torus needs rows, cols >= 3");
      EdgeList e;
      auto at = [c](std::uint64_t i, std::uint64_t j) { return i * c + j; };
      for (std::uint64_t i = 0; i < r; ++i)
        for (std::uint64_t j = 0; j < c; ++j) {
          e.emplace_back(at(i, j), at(i, (j + 1) % c));
          e.emplace_back(at(i, j), at((i + 1) % r, j));
        }
      return assemble(r * c, std::move(e), params, rng);
    }
  }
  throw std::invalid_argument("bad generator kind");
}

Graph relabel(const Graph& g, std::uint64_t seed) {
  Rng rng(seed, 0x72656cULL);
  std::uint64_t n = g.node_count();
  std::uint64_t space = cube_capped(n);
  std::unordered_set<NodeId> used;
  std::vector<NodeId> fresh;
  while (fresh.size() < n) {
    NodeId id = rng.below(space) + 1;
    if (used.insert(id).second) fresh.push_back(id);
  }
  std::vector<NodeId> nodes = fresh;
  std::vector<Edge> edges = g.edges();
  for (Edge& e : edges)
    e.id = EdgeId(fresh[g.index_of(e.id.lo)], fresh[g.index_of(e.id.hi)]);
  return Graph::from_edges(std::move(nodes), std::move(edges), space, g.distinct_weights());
}

Graph read_graph(std::istream& in) {
  std::string line;
  std::uint64_t n = 0, m = 0;
  bool header = false;
  std::vector<Edge> edges;
  while (std::getline(in, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    if (!header) {
      if (ls >> n >> m) header = true;
      continue;
    }
    NodeId u, v;
    Weight w;
    if (!(ls >> u >> v >> w)) continue;
    std::uint64_t mult = 1;
    ls >> mult;
    Edge e;
    e.id = EdgeId(u, v);
    e.weight = w;
    e.multiplicity = static_cast<std::uint32_t>(mult);
    edges.push_back(e);
  }
  if (!header) throw std::runtime_error("graph file: missing header");
  if (edges.size() != m) throw std::runtime_error("graph file: edge count mismatch");
  std::set<NodeId> node_set;
  for (const Edge& e : edges) {
    node_set.insert(e.id.lo);
    node_set.insert(e.id.hi);
  }
  if (node_set.size() != n) throw std::runtime_error("graph file: node count mismatch");
  std::vector<NodeId> nodes(node_set.begin(), node_set.end());
  std::set<Weight> weights;
  bool distinct = true;
  for (const Edge& e : edges)
    if (e.multiplicity != 1 || !weights.insert(e.weight).second) distinct = false;
  return Graph::from_edges(std::move(nodes), std::move(edges), 0, distinct);
}

void write_graph(const Graph& g, std::ostream& out) {
  out << g.node_count() << ' ' << g.edge_count() << '\n';
  for (const Edge& e : g.edges()) {
    out << e.id.lo << ' ' << e.id.hi << ' ' << e.weight;
    if (e.multiplicity != 1) out << ' ' << e.multiplicity;
    out << '\n';
  }
}

Graph read_graph_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_graph(in);
}

void write_graph_file(const Graph& g, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  write_graph(g, out);
}

}  // namespace dsim
