#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <json.hpp>

#include "dsim/congest.hpp"
#include "dsim/graph.hpp"
#include "dsim/sketch.hpp"

namespace dsim {

// delta trades rounds for messages; the rest are the construction constants.
// T is a pure function of public parameters so all components can pad to the
// same per-iteration budget without communication.
struct DannerParams {
  double delta = 0.5;
  double c = 2.0;    // center sampling: p = min(c ln n / n^delta, 1)
  double c_T = 8.0;  // iteration budget T = c_T * n^(1-delta) * log2(n)^2
  SketchParams sketch;

  double center_probability(std::uint64_t n) const;
  std::uint64_t high_degree_threshold(std::uint64_t n) const;  // ceil(n^delta)
  std::uint64_t round_budget(std::uint64_t n) const;           // T
  std::uint64_t diameter_cap(std::uint64_t n) const;  // min(3 ceil(2c n^(1-d) ln n), n-1)
  std::uint64_t loop_iterations(std::uint64_t n) const;        // ceil(log2 n)
};

struct DannerResult {
  std::vector<char> h_edges;  // per edge index
  Metrics metrics;
  bool timed_out = false;
  bool connected = false;  // H spanning and connected (oracle-checked)
  std::uint64_t edges_in_h = 0;
  std::optional<std::uint64_t> realized_diameter;  // diam(H), post hoc
  std::optional<std::uint64_t> diameter_g;

  // recorded state for the audits
  std::vector<char> is_center;  // per node (private coins, harvested)
  std::vector<char> is_high;    // per node
  std::vector<std::vector<char>> h_by_iteration;  // [0..iters][edge]: H at loop boundaries
  std::vector<std::uint64_t> component_count_trace;  // components of hat-H per boundary
};

DannerResult build_danner(const Graph& g, const DannerParams& params, std::uint64_t seed,
                          const RunConfig& cfg = RunConfig{});

struct DannerAdoption {
  std::uint32_t iteration;
  EdgeId edge;
};

// Per-node view after the construction; every node leaves the stage at the
// same round (the end of the padded loop schedule).
struct DannerLocal {
  std::vector<char> h_edge;  // per neighbor slot
  bool center = false;
  bool high = false;
  std::vector<DannerAdoption> adopted;
};

// In-program stage for composition into larger pipelines.
Sub<DannerLocal> danner_stage(ProtoEnv& env, const DannerParams& params);

// The common exit round of the stage (also the rounds metric of a bare run).
std::uint64_t danner_schedule_end(const DannerParams& params, std::uint64_t n);

// Lemma audits on the recorded traces (centralized post-processing).
// component_trace_check: within every component of hat-G, the number of hat-H
// components at least halves per iteration until it reaches one.
bool component_trace_check(const Graph& g, const DannerResult& result);
// domination_audit: at every loop boundary, the centers inside each hat-H
// component dominate that component.
bool domination_audit(const Graph& g, const DannerResult& result);

nlohmann::json danner_summary(const Graph& g, const DannerParams& params,
                              const DannerResult& result);

}  // namespace dsim
