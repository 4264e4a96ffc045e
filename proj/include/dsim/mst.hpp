#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dsim/congest.hpp"
#include "dsim/danner.hpp"
#include "dsim/graph.hpp"
#include "dsim/sketch.hpp"

namespace dsim {

struct MstParams {
  double delta = 0.5;  // [0, 0.5]
  DannerParams danner;
  SketchParams sketch;

  std::uint64_t ghs_iterations(std::uint64_t n) const;  // ceil((1 - delta) log2 n)
};

// Per-node fragment assignment before a merge wave, plus the edges that wave
// adopted; the cut-property audit replays these against the graph.
struct FragmentSnapshot {
  std::vector<NodeId> fragment_of;
  std::vector<std::pair<EdgeId, NodeId>> adopted;  // (edge, adopting fragment)
};

struct MstResult {
  std::vector<char> mst_edges;  // per edge index
  Metrics metrics;
  bool timed_out = false;
  bool flagged = false;  // the distributed edge-count verification failed
  std::string branch;    // "dense" or "sparse"
  std::uint64_t weight_total = 0;
  std::uint64_t ghs_fragment_count = 0;  // fragments left after step 2
  std::vector<FragmentSnapshot> history;
  std::vector<char> ghs_tree_edges;  // fragment forest after step 2
};

MstResult mst(const Graph& g, const MstParams& params, std::uint64_t seed,
              const RunConfig& cfg = RunConfig{});

// Controlled merging only (step 2), from singleton fragments: at most
// max_iters halving phases with capped fragment diameters, MWOE per fragment
// found by the hash search along the fragment tree.
struct GhsResult {
  std::vector<NodeId> fragment_of;
  std::vector<char> tree_edges;  // per edge index
  std::uint64_t fragment_count = 0;
  Metrics metrics;
  std::vector<FragmentSnapshot> history;
};
GhsResult controlled_ghs(const Graph& g, std::uint64_t max_iters, const MstParams& params,
                         std::uint64_t seed, const RunConfig& cfg = RunConfig{});

// Component labels of the marked subgraph via the global merge pipeline with
// 0/1 effective weights (marked edges weigh 0; fragments stop merging once
// their lightest leaving edge weighs 1).
struct ComponentsResult {
  std::vector<NodeId> labels;  // per node index
  Metrics metrics;
  bool timed_out = false;
  std::string branch;
};
ComponentsResult connected_components(const Graph& g, const std::vector<char>& subgraph_edges,
                                      const MstParams& params, std::uint64_t seed,
                                      const RunConfig& cfg = RunConfig{});

// Same pipeline on the bipartite double cover of the marked subgraph; every
// real node hosts both of its layer copies, messages carry a layer bit.
struct DoubleCoverResult {
  std::vector<NodeId> labels0;  // per node: component of the layer-0 copy
  std::vector<NodeId> labels1;
  Metrics metrics;
  bool timed_out = false;
};
DoubleCoverResult double_cover_components(const Graph& g, const std::vector<char>& subgraph_edges,
                                          const MstParams& params, std::uint64_t seed,
                                          const RunConfig& cfg = RunConfig{});

// Every adopted edge must be the minimum-weight edge leaving its fragment at
// adoption time (recomputed centrally from the snapshots).
bool cut_property_audit(const Graph& g, const std::vector<FragmentSnapshot>& history);

nlohmann::json mst_summary(const Graph& g, const MstParams& params, const MstResult& result,
                           bool oracle_match);

}  // namespace dsim
