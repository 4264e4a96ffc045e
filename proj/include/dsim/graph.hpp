#pragma once

#include <bit>
#include <compare>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace dsim {

using NodeId = std::uint64_t;
using Weight = std::uint64_t;

// Canonical undirected edge identifier: endpoints ordered lo < hi. The wire
// encoding is lo followed by hi, each in id_bits bits, so the numeric order of
// encodings equals lexicographic order on (lo, hi).
struct EdgeId {
  NodeId lo = 0;
  NodeId hi = 0;

  EdgeId() = default;
  EdgeId(NodeId a, NodeId b) : lo(a < b ? a : b), hi(a < b ? b : a) {}

  friend bool operator==(const EdgeId&, const EdgeId&) = default;
  friend auto operator<=>(const EdgeId& a, const EdgeId& b) {
    if (auto c = a.lo <=> b.lo; c != 0) return c;
    return a.hi <=> b.hi;
  }

  std::uint64_t encode(unsigned id_bits) const { return (lo << id_bits) | hi; }
  static EdgeId decode(std::uint64_t code, unsigned id_bits) {
    EdgeId e;
    e.hi = code & ((std::uint64_t{1} << id_bits) - 1);
    e.lo = code >> id_bits;
    return e;
  }

  bool incident(NodeId v) const { return v == lo || v == hi; }
  NodeId other(NodeId v) const { return v == lo ? hi : lo; }
};

struct Edge {
  EdgeId id;
  Weight weight = 1;
  std::uint32_t multiplicity = 1;
};

struct Adjacent {
  NodeId neighbor = 0;
  std::uint32_t edge_index = 0;
};

struct GraphStats {
  std::uint64_t n = 0;
  std::uint64_t m = 0;  // with multiplicity
  std::uint64_t diameter = 0;
};

// Immutable weighted undirected multigraph. Node identifiers are arbitrary
// distinct values from {1, ..., id_space}; parallel edges are stored once with
// a multiplicity count.
class Graph {
 public:
  Graph() = default;
  static Graph from_edges(std::vector<NodeId> nodes, std::vector<Edge> edges,
                          std::uint64_t id_space = 0, bool distinct_weights = false);

  std::size_t node_count() const { return nodes_.size(); }
  std::size_t edge_count() const { return edges_.size(); }
  std::uint64_t edge_count_with_multiplicity() const { return total_multiplicity_; }

  const std::vector<NodeId>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const Edge& edge(std::uint32_t index) const { return edges_[index]; }

  NodeId id_of(std::uint32_t index) const { return nodes_[index]; }
  std::uint32_t index_of(NodeId id) const;  // throws on unknown id
  bool has_node(NodeId id) const;

  std::span<const Adjacent> neighbors(std::uint32_t node_index) const;
  std::size_t degree(std::uint32_t node_index) const { return neighbors(node_index).size(); }

  // Index into edges() for {u, v}, or -1 if absent.
  std::int64_t find_edge(NodeId u, NodeId v) const;

  std::uint64_t id_space() const { return id_space_; }
  unsigned id_bits() const { return id_bits_; }
  bool distinct_weights() const { return distinct_weights_; }
  Weight max_weight() const { return max_weight_; }

 private:
  std::vector<NodeId> nodes_;          // sorted
  std::vector<Edge> edges_;            // sorted by EdgeId
  std::vector<std::uint32_t> adj_offsets_;
  std::vector<Adjacent> adj_;          // per node, sorted by neighbor id
  std::uint64_t id_space_ = 0;
  unsigned id_bits_ = 0;
  std::uint64_t total_multiplicity_ = 0;
  Weight max_weight_ = 0;
  bool distinct_weights_ = false;
};

enum class GeneratorKind { path, cycle, star, complete, gnp, barbell, geometric, torus };

struct GenParams {
  GeneratorKind kind = GeneratorKind::path;
  std::uint64_t n = 0;       // path, cycle, star, complete, gnp, geometric
  double p = 0.0;            // gnp edge probability
  std::uint64_t k = 0;       // barbell clique size
  std::uint64_t b = 0;       // barbell bridge count
  std::uint64_t rows = 0;    // torus
  std::uint64_t cols = 0;    // torus
  double radius = 0.0;       // geometric connection radius
  bool distinct_weights = true;
  std::uint32_t multiplicity = 1;  // > 1 switches to multigraph mode (weight 1)
};

GeneratorKind generator_kind_from_name(const std::string& name);
std::string generator_kind_name(GeneratorKind kind);

// Deterministic per seed. Generated graphs are connected; Erdős–Rényi and
// geometric instances are resampled a bounded number of times to get there.
Graph generate(const GenParams& params, std::uint64_t seed);

// Reassigns node identifiers to a random injection into {1, ..., n^3}.
Graph relabel(const Graph& g, std::uint64_t seed);

// Text format: "n m" header, then one "u v w [mult]" line per edge (1-based
// ids). '#' starts a comment. The writer emits edges in canonical order so
// write(read(write(g))) == write(g) byte for byte.
Graph read_graph(std::istream& in);
void write_graph(const Graph& g, std::ostream& out);
Graph read_graph_file(const std::string& path);
void write_graph_file(const Graph& g, const std::string& path);

}  // namespace dsim
