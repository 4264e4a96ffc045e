#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "dsim/congest.hpp"
#include "dsim/graph.hpp"
#include "dsim/hash.hpp"
#include "dsim/primitives.hpp"

namespace dsim {

// An edge participates in a parity test iff it satisfies every present
// predicate. Fragment scope is implicit: each member evaluates its own
// incident edges, and internal edges cancel in the XOR.
struct Restriction {
  std::optional<std::pair<std::uint64_t, std::uint64_t>> id_range;  // [lo, hi) over encodings
  std::optional<Weight> max_weight;

  bool admits(EdgeId e, Weight w, unsigned id_bits) const {
    if (id_range) {
      std::uint64_t code = e.encode(id_bits);
      if (code < id_range->first || code >= id_range->second) return false;
    }
    if (max_weight && w > *max_weight) return false;
    return true;
  }
};

struct SketchParams {
  unsigned a = 3;            // amplification: r = ceil(a * log2 n) repetitions per level
  unsigned branch_bits = 4;  // split each interval 2^branch_bits ways per level

  unsigned reps(std::uint64_t n) const {
    unsigned r = a * ceil_log2(n);
    return std::min(r, 63u);
  }
};

// Local contribution of one node: XOR of h(edge) over its incident ambient
// edges admitted by the restriction.
bool local_parity(const ParityHash& h, const Kt1Knowledge& kt, const std::vector<char>& ambient,
                  const Restriction& r);

// Centralized reference for the cancellation identity: XOR over the leaving
// edges only (exactly one endpoint inside).
bool leaving_parity_reference(const Graph& g, const std::vector<char>& member_nodes,
                              const HashSpec& spec, const Restriction& r);

struct FindOutcome {
  bool found = false;
  EdgeId edge{};
  Weight weight = 0;
  NodeId peer_identity = 0;  // component identity reported by the outside endpoint
  bool inside_endpoint = false;  // true at the member incident to the found edge
};

// Single broadcast-and-echo parity probe: the root serializes `spec` down the
// component tree, members fold their local parities up, the root returns the
// component parity (false elsewhere).
Sub<bool> test_out_stage(ProtoEnv& env, const TreeInfo& tree, const std::vector<char>& ambient,
                         const Restriction& r, const HashSpec& spec, std::uint64_t start,
                         std::uint64_t hard_deadline);

// Multiway binary search over edge identifiers (find_any) or first over
// weights and then identifiers (find_min), with r seed-derived hash
// repetitions per interval, candidate confirmation over the single discovered
// edge, and a verdict broadcast. Every member returns the same FindOutcome at
// a common round. `self_identity` is this component's identity for the
// leaving check (probes are answered by the composite's stray handler).
Sub<FindOutcome> find_edge_stage(ProtoEnv& env, const TreeInfo& tree,
                                 const std::vector<char>& ambient, const Restriction& base,
                                 const SketchParams& params, bool minimize_weight,
                                 NodeId self_identity, std::uint64_t start,
                                 std::uint64_t hard_deadline);

// Worst-case stage spans for budget checks.
std::uint64_t test_out_span(std::uint32_t height);
std::uint64_t find_any_span(std::uint64_t n, unsigned id_bits, std::uint32_t height,
                            const SketchParams& params);
std::uint64_t find_min_span(std::uint64_t n, unsigned id_bits, std::uint32_t height,
                            const SketchParams& params);

// Answer a confirmation probe with this node's component identity.
void answer_probe(Ctx& ctx, const Message& m, NodeId identity);

// ---- standalone drivers (the component tree is fixture-injected) ----

struct TestOutRun {
  bool parity = false;
  Metrics metrics;
};
TestOutRun run_test_out(const Graph& g, const std::vector<char>& member_nodes,
                        const HashSpec& spec, const Restriction& r, const RunConfig& cfg);

struct FindRun {
  bool found = false;
  EdgeId edge{};
  Weight weight = 0;
  Metrics metrics;
};
FindRun run_find_any(const Graph& g, const std::vector<char>& member_nodes,
                     const Restriction& r, const SketchParams& params, const RunConfig& cfg);
FindRun run_find_min(const Graph& g, const std::vector<char>& member_nodes,
                     const Restriction& r, const SketchParams& params, const RunConfig& cfg);

}  // namespace dsim
