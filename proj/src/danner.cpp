#include "dsim/danner.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "dsim/oracles.hpp"
#include "dsim/primitives.hpp"

namespace dsim {

double DannerParams::center_probability(std::uint64_t n) const {
  return std::min(1.0, c * std::log(static_cast<double>(n)) / std::pow(static_cast<double>(n), delta));
}

std::uint64_t DannerParams::high_degree_threshold(std::uint64_t n) const {
  return static_cast<std::uint64_t>(std::ceil(std::pow(static_cast<double>(n), delta) - 1e-9));
}

std::uint64_t DannerParams::round_budget(std::uint64_t n) const {
  double lg = ceil_log2(n);
  return static_cast<std::uint64_t>(
      std::ceil(c_T * std::pow(static_cast<double>(n), 1.0 - delta) * lg * lg));
}

std::uint64_t DannerParams::diameter_cap(std::uint64_t n) const {
  double raw = 3.0 * std::ceil(2.0 * c * std::pow(static_cast<double>(n), 1.0 - delta) *
                               std::log(static_cast<double>(n)));
  return std::min<std::uint64_t>(static_cast<std::uint64_t>(raw), n > 0 ? n - 1 : 0);
}

std::uint64_t DannerParams::loop_iterations(std::uint64_t n) const { return ceil_log2(n); }

namespace {
constexpr std::uint64_t kSetupRounds = 3;  // announce, low-degree broadcast, bookkeeping
}  // namespace

std::uint64_t danner_schedule_end(const DannerParams& params, std::uint64_t n) {
  if (params.delta >= 1.0) return 1;
  return kSetupRounds + params.loop_iterations(n) * params.round_budget(n);
}

Sub<DannerLocal> danner_stage(ProtoEnv& env, const DannerParams& params) {
  Ctx& ctx = env.ctx;
  DannerLocal local;
  {
    const Kt1Knowledge& kt = ctx.kt();
    const std::size_t deg = kt.neighbor_ids.size();
    const std::uint64_t n = ctx.n();
    auto& h_edge = local.h_edge;
    auto& center = local.center;
    auto& high = local.high;
    auto& adopted = local.adopted;
    h_edge.assign(deg, 0);

    if (params.delta >= 1.0) {
      // the special case: every node adds all its incident edges, H = G
      for (std::size_t s = 0; s < deg; ++s) h_edge[s] = 1;
      co_return local;
    }

    ctx.set_phase("setup");
    double threshold = std::pow(static_cast<double>(n), params.delta);
    high = static_cast<double>(deg) + 1e-9 >= threshold;
    center = ctx.rng().bernoulli(params.center_probability(n));

    // step 2: edges to the min(deg, n^delta) lowest-id neighbors; ids are
    // sorted, so that is a prefix of the neighbor list
    std::size_t keep = std::min<std::size_t>(deg, params.high_degree_threshold(n));
    for (std::size_t s = 0; s < keep; ++s) {
      h_edge[s] = 1;
      Payload p(kHEdgeAnnounce);
      p.bits = 1;
      ctx.send(kt.neighbor_ids[s], p);
    }

    co_await ctx.step();  // round 2: peers' announcements arrive
    for (const Message& m : ctx.inbox())
      if (m.payload.kind == kHEdgeAnnounce) h_edge[kt.neighbor_slot(m.src)] = 1;
    if (!high) {
      for (NodeId nbr : kt.neighbor_ids) {
        Payload p(kLowAnnounce);
        p.push(center ? 1 : 0);
        p.bits = 2;
        ctx.send(nbr, p);
      }
    }

    co_await ctx.step();  // round 3: low-degree announcements arrive
    std::vector<char> nbr_hat(deg, 1);  // silence means high degree
    for (const Message& m : ctx.inbox())
      if (m.payload.kind == kLowAnnounce)
        nbr_hat[kt.neighbor_slot(m.src)] = m.payload.field(0) ? 1 : 0;
    bool hat = high || center;
    std::uint64_t stage_end = kSetupRounds + params.loop_iterations(n) * params.round_budget(n);
    if (!hat) {
      while (ctx.round() < stage_end) {
        co_await ctx.until(stage_end);
        for (const Message& m : ctx.inbox()) env.stray(m);
      }
      co_return local;  // no further role in the loop
    }

    std::vector<char> ambient = nbr_hat;  // incident hat-G edges

    NodeId identity = 0;
    auto outer_stray = env.stray;
    ProtoEnv loop_env(ctx, [&](const Message& m) {
      if (m.payload.kind == kProbe) {
        answer_probe(ctx, m, identity);
      } else if (m.payload.kind == kAdopt) {
        h_edge[kt.neighbor_slot(m.src)] = 1;
      } else {
        outer_stray(m);
      }
    });

    ctx.set_phase("merge-loop");
    const std::uint64_t T = params.round_budget(n);
    const std::uint64_t cap = params.diameter_cap(n);
    const std::uint64_t iters = params.loop_iterations(n);
    const std::uint64_t base = kSetupRounds + 1;

    for (std::uint64_t it = 0; it < iters; ++it) {
      std::uint64_t iter_start = base + it * T;
      std::uint64_t iter_end = base + (it + 1) * T;
      while (ctx.round() < iter_start) {
        co_await ctx.until(iter_start);
        for (const Message& m : ctx.inbox()) loop_env.stray(m);
      }

      std::vector<char> member(deg, 0);  // incident hat-H edges
      for (std::size_t s = 0; s < deg; ++s) member[s] = h_edge[s] && nbr_hat[s];

      std::uint64_t elect_deadline = iter_start + 2 * cap + 3;
      ElectOutcome elect = co_await elect_leader_stage(loop_env, member, elect_deadline);
      identity = elect.leader;

      TreeInfo tree = co_await bfs_tree_stage(loop_env, member, elect.is_leader, elect_deadline,
                                              true, iter_end - 1);
      if (tree.in_tree) {
        std::uint64_t find_start = ctx.round();
        std::uint64_t span = find_any_span(n, ctx.id_bits(), tree.height, params.sketch);
        if (find_start + span + 4 < iter_end) {
          FindOutcome found =
              co_await find_edge_stage(loop_env, tree, ambient, Restriction{}, params.sketch,
                                       false, identity, find_start, iter_end - 1);
          if (found.found && found.inside_endpoint) {
            std::size_t slot = kt.neighbor_slot(found.edge.other(kt.self));
            if (!h_edge[slot]) {
              h_edge[slot] = 1;
              adopted.push_back({static_cast<std::uint32_t>(it), found.edge});
              Payload p(kAdopt);
              p.push(found.edge.encode(ctx.id_bits()));
              p.bits = 2 * ctx.id_bits();
              ctx.send(found.edge.other(kt.self), p);
            }
          }
        }
      }
      while (ctx.round() < iter_end - 1) {
        co_await ctx.until(iter_end - 1);
        for (const Message& m : ctx.inbox()) loop_env.stray(m);
      }
    }
  }
  co_return local;
}

namespace {

struct DannerProc : Proc {
  DannerParams params;
  DannerLocal local;
  explicit DannerProc(const DannerParams& p) : params(p) {}
  ProcTask run(Ctx& ctx) override {
    ProtoEnv env(ctx);
    local = co_await danner_stage(env, params);
    co_return;
  }
};

// Step-2 selection is deterministic, so the loop-boundary snapshots of H can
// be reconstructed centrally from the adoption records.
std::vector<char> step2_edges(const Graph& g, const DannerParams& params) {
  std::vector<char> in(g.edge_count(), 0);
  if (params.delta >= 1.0) {
    std::fill(in.begin(), in.end(), 1);
    return in;
  }
  std::uint64_t keep_cap = params.high_degree_threshold(g.node_count());
  for (std::uint32_t i = 0; i < g.node_count(); ++i) {
    auto nbrs = g.neighbors(i);
    std::size_t keep = std::min<std::size_t>(nbrs.size(), keep_cap);
    for (std::size_t s = 0; s < keep; ++s) in[nbrs[s].edge_index] = 1;
  }
  return in;
}

std::vector<char> hat_nodes(const DannerResult& r) {
  std::vector<char> hat(r.is_center.size(), 0);
  for (std::size_t i = 0; i < hat.size(); ++i) hat[i] = r.is_center[i] || r.is_high[i];
  return hat;
}

// components of H[hat] as labels; non-hat nodes get kUnreachable
std::vector<std::uint32_t> hat_component_labels(const Graph& g, const std::vector<char>& h_edges,
                                                const std::vector<char>& hat) {
  std::vector<char> induced(g.edge_count(), 0);
  for (std::uint32_t e = 0; e < g.edge_count(); ++e)
    induced[e] = h_edges[e] && hat[g.index_of(g.edge(e).id.lo)] && hat[g.index_of(g.edge(e).id.hi)];
  auto labels = component_labels_subgraph(g, induced);
  for (std::uint32_t i = 0; i < g.node_count(); ++i)
    if (!hat[i]) labels[i] = kUnreachable;
  return labels;
}

}  // namespace

DannerResult build_danner(const Graph& g, const DannerParams& params, std::uint64_t seed,
                          const RunConfig& cfg) {
  DannerResult result;
  std::uint64_t n = g.node_count();
  std::uint64_t iters = params.delta >= 1.0 ? 0 : params.loop_iterations(n);

  EngineOptions opts;
  opts.kappa = cfg.kappa;
  opts.mode = cfg.mode;
  opts.shared_seed = seed;
  opts.round_limit = kSetupRounds + 1 + iters * params.round_budget(n) + 64;
  Engine eng(g, opts);
  auto run = eng.run([&](const Kt1Knowledge&) { return std::make_unique<DannerProc>(params); });

  result.metrics = run.metrics;
  result.timed_out = run.timed_out;
  result.is_center.resize(n);
  result.is_high.resize(n);
  result.h_edges.assign(g.edge_count(), 0);

  std::vector<std::vector<DannerAdoption>> adoptions(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    auto* p = dynamic_cast<DannerProc*>(run.procs[i].get());
    result.is_center[i] = p->local.center;
    result.is_high[i] = p->local.high;
    adoptions[i] = p->local.adopted;
    auto nbrs = g.neighbors(i);
    for (std::size_t s = 0; s < nbrs.size(); ++s)
      if (p->local.h_edge[s]) result.h_edges[nbrs[s].edge_index] = 1;
  }

  // loop-boundary snapshots
  result.h_by_iteration.assign(iters + 1, {});
  result.h_by_iteration[0] = step2_edges(g, params);
  for (std::uint64_t it = 0; it < iters; ++it) {
    result.h_by_iteration[it + 1] = result.h_by_iteration[it];
    for (std::uint32_t i = 0; i < n; ++i)
      for (const DannerAdoption& rec : adoptions[i])
        if (rec.iteration == it) {
          std::int64_t e = g.find_edge(rec.edge.lo, rec.edge.hi);
          if (e >= 0) result.h_by_iteration[it + 1][static_cast<std::uint32_t>(e)] = 1;
        }
  }

  auto hat = hat_nodes(result);
  result.component_count_trace.clear();
  for (auto& snapshot : result.h_by_iteration) {
    auto labels = hat_component_labels(g, snapshot, hat);
    std::set<std::uint32_t> distinct;
    for (std::uint32_t i = 0; i < n; ++i)
      if (labels[i] != kUnreachable) distinct.insert(labels[i]);
    result.component_count_trace.push_back(distinct.size());
  }

  result.edges_in_h = 0;
  for (char f : result.h_edges) result.edges_in_h += f;
  auto labels = component_labels_subgraph(g, result.h_edges);
  bool one = true;
  for (std::uint32_t i = 0; i < n; ++i)
    if (labels[i] != labels[0]) one = false;
  result.connected = one;
  if (one) result.realized_diameter = subgraph_diameter(g, result.h_edges);
  result.diameter_g = oracle_diameter(g);
  return result;
}

bool component_trace_check(const Graph& g, const DannerResult& result) {
  auto hat = hat_nodes(result);
  std::vector<char> ghat_edges(g.edge_count(), 0);
  for (std::uint32_t e = 0; e < g.edge_count(); ++e)
    ghat_edges[e] = hat[g.index_of(g.edge(e).id.lo)] && hat[g.index_of(g.edge(e).id.hi)];
  auto ghat_labels = component_labels_subgraph(g, ghat_edges);

  std::set<std::uint32_t> ghat_components;
  for (std::uint32_t i = 0; i < g.node_count(); ++i)
    if (hat[i]) ghat_components.insert(ghat_labels[i]);

  for (std::uint32_t comp : ghat_components) {
    std::uint64_t prev = 0;
    for (std::size_t it = 0; it < result.h_by_iteration.size(); ++it) {
      auto labels = hat_component_labels(g, result.h_by_iteration[it], hat);
      std::set<std::uint32_t> inside;
      for (std::uint32_t i = 0; i < g.node_count(); ++i)
        if (hat[i] && ghat_labels[i] == comp && labels[i] != kUnreachable) inside.insert(labels[i]);
      std::uint64_t count = inside.size();
      if (it > 0 && count > std::max<std::uint64_t>(1, prev / 2)) return false;
      prev = count;
    }
  }
  return true;
}

bool domination_audit(const Graph& g, const DannerResult& result) {
  auto hat = hat_nodes(result);
  for (const auto& snapshot : result.h_by_iteration) {
    auto labels = hat_component_labels(g, snapshot, hat);
    for (std::uint32_t i = 0; i < g.node_count(); ++i) {
      if (!hat[i] || result.is_center[i]) continue;
      if (labels[i] == kUnreachable) continue;
      bool dominated = false;
      for (const Adjacent& a : g.neighbors(i)) {
        std::uint32_t v = g.index_of(a.neighbor);
        if (snapshot[a.edge_index] && hat[v] && labels[v] == labels[i] && result.is_center[v]) {
          dominated = true;
          break;
        }
      }
      if (!dominated) return false;
    }
  }
  return true;
}

nlohmann::json danner_summary(const Graph& g, const DannerParams& params,
                              const DannerResult& result) {
  nlohmann::json j;
  j["n"] = g.node_count();
  j["m"] = g.edge_count_with_multiplicity();
  j["D"] = result.diameter_g ? nlohmann::json(*result.diameter_g) : nlohmann::json(nullptr);
  j["delta"] = params.delta;
  j["edges_H"] = result.edges_in_h;
  j["diam_H"] =
      result.realized_diameter ? nlohmann::json(*result.realized_diameter) : nlohmann::json(nullptr);
  j["rounds"] = result.metrics.rounds;
  j["messages"] = result.metrics.messages;
  return j;
}

}  // namespace dsim
