#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <utility>
#include <vector>

#include "dsim/congest.hpp"
#include "dsim/graph.hpp"

namespace dsim {

// Message kinds are registry-wide so that cross-component traffic (probes,
// late echoes) can always be classified, whatever stage a node is in.
enum MsgKind : std::uint16_t {
  kElect = 1,
  kWave,
  kEchoHeight,
  kBfsDone,
  kPayloadDown,
  kPipeData,
  kPipeDone,
  kPipeItem,
  kHEdgeAnnounce,
  kLowAnnounce,
  kSketchSeed,
  kSketchDescend,
  kSketchParity,
  kProbe,
  kProbeReply,
  kConfirmReport,
  kAdopt,
  kGhsProposal,
  kGhsAccept,
  kGhsNewId,
  kGhsJoinNotice,
  kFragExchange,
  kSpecBcast,
  kVerdict,
};

// Stage subroutines read their own kinds from the inbox and hand everything
// else to `stray`, so composites can answer probes at any time.
struct ProtoEnv {
  Ctx& ctx;
  std::function<void(const Message&)> stray;

  explicit ProtoEnv(Ctx& c) : ctx(c), stray([](const Message&) {}) {}
  ProtoEnv(Ctx& c, std::function<void(const Message&)> s) : ctx(c), stray(std::move(s)) {}

  void route(const Message& m, std::uint16_t mine, const std::function<void(const Message&)>& fn) {
    if (m.payload.kind == mine)
      fn(m);
    else
      stray(m);
  }
};

struct ElectOutcome {
  NodeId leader = 0;
  bool is_leader = false;
};

// Rank-flood with suppression along the flagged incident edges, running until
// `deadline` (callers budget 2 * diameter bound + slack). Ranks are
// 2*ceil(log2 n) private random bits, ties broken toward the smaller id.
Sub<ElectOutcome> elect_leader_stage(ProtoEnv& env, const std::vector<char>& edge_in,
                                     std::uint64_t deadline);

struct TreeInfo {
  bool in_tree = false;
  bool is_root = false;
  NodeId parent = 0;
  std::uint32_t depth = 0;
  std::uint32_t height = 0;  // tree height, known to every member in synced mode
  std::vector<NodeId> children;
};

// Synchronous BFS wave from the root over flagged edges. In synced mode the
// wave is followed by silence-based children detection, a height echo, and a
// root announcement carrying a common return round, so every member leaves
// the stage on the same round with a full TreeInfo. In plain mode nodes
// return as soon as their wave is sent (parent and depth only).
Sub<TreeInfo> bfs_tree_stage(ProtoEnv& env, const std::vector<char>& edge_in, bool is_root,
                             std::uint64_t start, bool synced, std::uint64_t hard_deadline);

// Root payload distribution down a known tree; one message per tree edge.
Sub<Payload> tree_broadcast_stage(ProtoEnv& env, const TreeInfo& tree, Payload root_payload,
                                  std::uint64_t start, std::uint64_t hard_deadline);

using PipeValue = std::pair<std::uint64_t, std::uint64_t>;

enum class Comb { xor_bits, min_pair, sum_pair };

inline PipeValue combine(Comb c, PipeValue a, PipeValue b) {
  switch (c) {
    case Comb::xor_bits: return {a.first ^ b.first, a.second ^ b.second};
    case Comb::min_pair: return a <= b ? a : b;
    case Comb::sum_pair: return {a.first + b.first, a.second + b.second};
  }
  return a;
}

struct PipeItem {
  std::uint64_t tag = 0;
  PipeValue value{0, 0};
};

struct ConvergeOut {
  std::map<std::uint64_t, PipeValue> combined;  // meaningful at the root
  std::uint64_t root_done_round = 0;            // root only: when all children finished
  std::uint64_t up_data_messages = 0;           // this node's data emissions
};

// Pipelined convergecast: each round a node sends its smallest safely
// combined pending tag to its parent; increasing per-child streams plus done
// flags make each (node, tag) emission happen exactly once. The root returns
// the per-tag combination over all members; everyone returns at
// start + height + max_tags + 4.
Sub<ConvergeOut> pipelined_convergecast_stage(ProtoEnv& env, const TreeInfo& tree,
                                              std::vector<PipeItem> items, Comb comb,
                                              std::uint64_t start, std::uint64_t item_bits,
                                              std::uint64_t max_tags,
                                              std::uint64_t hard_deadline);

// Pipelined broadcast of the root's items (ascending tag order, one per
// round); every member returns the full list at start + height + max_items + 4.
Sub<std::vector<PipeItem>> pipelined_broadcast_stage(ProtoEnv& env, const TreeInfo& tree,
                                                     std::vector<PipeItem> items_at_root,
                                                     std::uint64_t start, std::uint64_t item_bits,
                                                     std::uint64_t max_items,
                                                     std::uint64_t hard_deadline);

// ---- standalone drivers (one engine run per operation) ----

struct RunConfig {
  std::uint64_t seed = 0;
  std::uint32_t kappa = 4;
  EngineMode mode = EngineMode::event_serial;
  std::uint64_t round_limit = 1u << 22;
};

struct LeaderRun {
  NodeId leader = 0;
  std::vector<NodeId> leader_seen;  // per node
  std::vector<char> is_leader;     // per node
  Metrics metrics;
};
// diam_bound is the caller-supplied upper bound used for the round budget.
LeaderRun run_elect_leader(const Graph& g, std::uint64_t diam_bound, const RunConfig& cfg);

struct BfsRun {
  NodeId root = 0;
  std::vector<NodeId> parent;       // parent[i] == id of parent, == self for root
  std::vector<std::uint32_t> depth;
  Metrics metrics;
};
BfsRun run_build_bfs_tree(const Graph& g, NodeId root, const RunConfig& cfg);

// Broadcast payload_bits from the root of a previously built tree.
struct BroadcastRun {
  std::vector<char> got_payload;
  Metrics metrics;
};
BroadcastRun run_broadcast(const Graph& g, const BfsRun& tree, std::uint64_t payload_bits,
                           const RunConfig& cfg);

struct ConvergecastRun {
  std::map<std::uint64_t, PipeValue> combined;  // at root
  std::uint64_t root_done_round = 0;
  std::uint64_t max_up_messages = 0;  // per-node data messages up
  Metrics metrics;
};
ConvergecastRun run_pipelined_convergecast(const Graph& g, const BfsRun& tree,
                                           const std::vector<std::vector<PipeItem>>& per_node_items,
                                           Comb comb, std::uint64_t max_tags, const RunConfig& cfg);

struct BroadcastItemsRun {
  std::vector<std::vector<PipeItem>> received;  // per node
  Metrics metrics;
};
BroadcastItemsRun run_pipelined_broadcast(const Graph& g, const BfsRun& tree,
                                          const std::vector<PipeItem>& items,
                                          std::uint64_t max_items, const RunConfig& cfg);

}  // namespace dsim
