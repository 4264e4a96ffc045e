#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "dsim/graph.hpp"

namespace dsim {

inline constexpr std::uint32_t kUnreachable = 0xffffffffu;

// Hop distances from src to every node (kUnreachable where disconnected).
std::vector<std::uint32_t> bfs_distances(const Graph& g, std::uint32_t src);

// A concrete shortest path src -> dst as node indices, empty if unreachable.
std::vector<std::uint32_t> shortest_path(const Graph& g, std::uint32_t src, std::uint32_t dst);

// Exact hop diameter via all-pairs BFS; nullopt when disconnected.
// oracle_diameter runs sources in parallel, the serial variant is the
// reference used by tests and the benchmark.
std::optional<std::uint64_t> oracle_diameter(const Graph& g);
std::optional<std::uint64_t> oracle_diameter_serial(const Graph& g);

// Exact domination number by subset enumeration ordered by size; n <= 24.
std::uint64_t oracle_domination_number(const Graph& g);

// The unique MST under distinct weights, via Kruskal. Throws if the graph is
// disconnected or weights collide in distinct mode.
std::vector<EdgeId> oracle_mst(const Graph& g);

// Exact edge connectivity of the multigraph via Stoer–Wagner; n <= 256.
std::uint64_t oracle_mincut(const Graph& g);

struct BipartiteResult {
  bool bipartite = false;
  std::vector<std::uint32_t> odd_cycle;  // node indices, closed walk, present iff not bipartite
};
BipartiteResult oracle_bipartite(const Graph& g);

// Connected-component labels; label of a node is the smallest node index in
// its component. The subgraph variant keeps only edges with edge_in[e] != 0.
std::vector<std::uint32_t> component_labels(const Graph& g);
std::vector<std::uint32_t> component_labels_subgraph(const Graph& g,
                                                     const std::vector<char>& edge_in);
std::uint32_t component_count(const Graph& g);

// Hop diameter of the spanning subgraph keeping edges with edge_in[e] != 0.
std::optional<std::uint64_t> subgraph_diameter(const Graph& g, const std::vector<char>& edge_in);

}  // namespace dsim
