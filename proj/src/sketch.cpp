#include "dsim/sketch.hpp"

#include <algorithm>

#include "dsim/oracles.hpp"

namespace dsim {

bool local_parity(const ParityHash& h, const Kt1Knowledge& kt, const std::vector<char>& ambient,
                  const Restriction& r) {
  bool parity = false;
  for (std::size_t s = 0; s < kt.neighbor_ids.size(); ++s) {
    if (!ambient[s]) continue;
    EdgeId e(kt.self, kt.neighbor_ids[s]);
    if (!r.admits(e, kt.neighbor_weights[s], kt.id_bits)) continue;
    parity ^= h.bit(e.encode(kt.id_bits));
  }
  return parity;
}

bool leaving_parity_reference(const Graph& g, const std::vector<char>& member_nodes,
                              const HashSpec& spec, const Restriction& r) {
  bool parity = false;
  for (const Edge& e : g.edges()) {
    bool a = member_nodes[g.index_of(e.id.lo)], b = member_nodes[g.index_of(e.id.hi)];
    if (a == b) continue;
    if (!r.admits(e.id, e.weight, g.id_bits())) continue;
    parity ^= spec.bit(e.id.encode(g.id_bits()));
  }
  return parity;
}

void answer_probe(Ctx& ctx, const Message& m, NodeId identity) {
  if (m.payload.kind != kProbe) return;
  Payload p(kProbeReply);
  p.push(m.payload.field(0));
  p.push(identity);
  p.bits = 3 * ctx.id_bits() + 1;
  ctx.send(m.src, p);
}

std::uint64_t test_out_span(std::uint32_t height) { return 2ull * height + 4; }

Sub<bool> test_out_stage(ProtoEnv& env, const TreeInfo& tree, const std::vector<char>& ambient,
                         const Restriction& r, const HashSpec& spec, std::uint64_t start,
                         std::uint64_t hard_deadline) {
  Ctx& ctx = env.ctx;
  std::uint32_t h = tree.height, d = tree.depth;

  co_await ctx.until(start);
  HashSpec my_spec = spec;
  std::uint64_t got_round = 0;
  if (tree.is_root) {
    got_round = ctx.round();
    Payload p(kSpecBcast);
    for (std::uint64_t c : my_spec.coeffs) p.push(c);
    p.bits = static_cast<std::uint32_t>(my_spec.serialized_bits());
    for (NodeId c : tree.children) ctx.send(c, p);
  } else {
    bool got = false;
    while (!got) {
      if (ctx.round() >= hard_deadline) co_return false;
      co_await ctx.until(hard_deadline);
      for (const Message& m : ctx.inbox()) {
        if (m.payload.kind == kSpecBcast && !got) {
          got = true;
          got_round = ctx.round();
          my_spec.coeffs.clear();
          for (unsigned i = 0; i < m.payload.count; ++i)
            my_spec.coeffs.push_back(m.payload.field(i));
          for (NodeId c : tree.children) {
            Payload p = m.payload;
            ctx.send(c, p);
          }
        } else {
          env.stray(m);
        }
      }
    }
  }

  bool parity = false;
  for (std::size_t s = 0; s < ctx.kt().neighbor_ids.size(); ++s) {
    if (!ambient[s]) continue;
    EdgeId e(ctx.self(), ctx.kt().neighbor_ids[s]);
    if (!r.admits(e, ctx.kt().neighbor_weights[s], ctx.id_bits())) continue;
    parity ^= my_spec.bit(e.encode(ctx.id_bits()));
  }

  // timed echo: the node at depth d folds its children's parities and sends
  // at origin + 2h - d, where origin is the root's broadcast round.
  std::uint64_t up_round = (got_round - d) + 2 * h - d;
  while (ctx.round() < std::min(up_round, hard_deadline)) {
    co_await ctx.until(std::min(up_round, hard_deadline));
    for (const Message& m : ctx.inbox()) {
      if (m.payload.kind == kSketchParity)
        parity ^= m.payload.field(0) & 1;
      else
        env.stray(m);
    }
  }
  if (!tree.is_root) {
    Payload p(kSketchParity);
    p.push(parity ? 1 : 0);
    p.bits = 1;
    ctx.send(tree.parent, p);
    co_return false;
  }
  co_return parity;
}

namespace {

unsigned total_levels(unsigned key_bits, unsigned branch_bits) {
  return (key_bits + branch_bits - 1) / branch_bits;
}

constexpr std::uint64_t kDescAbort = 31;

}  // namespace

std::uint64_t find_any_span(std::uint64_t n, unsigned id_bits, std::uint32_t height,
                            const SketchParams& params) {
  (void)n;
  std::uint64_t levels = total_levels(2 * id_bits, params.branch_bits);
  return (height + 2) + levels * (2ull * height + 2) + (2ull * height + 8);
}

std::uint64_t find_min_span(std::uint64_t n, unsigned id_bits, std::uint32_t height,
                            const SketchParams& params) {
  std::uint64_t levels = total_levels(id_bits, params.branch_bits);
  return find_any_span(n, id_bits, height, params) + levels * (2ull * height + 2);
}

Sub<FindOutcome> find_edge_stage(ProtoEnv& env, const TreeInfo& tree,
                                 const std::vector<char>& ambient, const Restriction& base,
                                 const SketchParams& params, bool minimize_weight,
                                 NodeId self_identity, std::uint64_t start,
                                 std::uint64_t hard_deadline) {
  Ctx& ctx = env.ctx;
  const Kt1Knowledge& kt = ctx.kt();
  const std::uint32_t h = tree.height, d = tree.depth;
  const unsigned B = ctx.id_bits();
  const unsigned r = params.reps(ctx.n());
  FindOutcome out;

  auto relay_down = [&](const Message& m) {
    for (NodeId c : tree.children) {
      Payload p = m.payload;
      ctx.send(c, p);
    }
  };

  // seed wave
  co_await ctx.until(start);
  std::uint64_t seed = 0;
  std::uint64_t seed_round = 0;
  if (tree.is_root) {
    seed = ctx.rng().next();
    seed_round = ctx.round();
    Payload p(kSketchSeed);
    p.push(seed);
    p.bits = 64;
    for (NodeId c : tree.children) ctx.send(c, p);
  } else {
    bool got = false;
    while (!got) {
      if (ctx.round() >= hard_deadline) co_return out;
      co_await ctx.until(hard_deadline);
      for (const Message& m : ctx.inbox()) {
        if (m.payload.kind == kSketchSeed && !got) {
          got = true;
          seed = m.payload.field(0);
          seed_round = ctx.round();
          relay_down(m);
        } else {
          env.stray(m);
        }
      }
    }
  }

  // multiway interval search: phase 0 over weights, phase 1 over encodings
  unsigned phase = minimize_weight ? 0 : 1;
  unsigned rem = phase == 0 ? B : 2 * B;
  std::uint64_t prefix = 0;
  unsigned level = 0;
  Weight wstar = 0;
  bool have_wstar = false;
  bool aborted = false;
  std::uint64_t level_start = seed_round + (h - d) + 2;

  while (!aborted) {
    if (rem == 0) {
      if (phase == 0) {
        wstar = prefix;
        have_wstar = true;
        phase = 1;
        rem = 2 * B;
        prefix = 0;
        continue;
      }
      break;  // edge encoding resolved
    }
    unsigned step = std::min(params.branch_bits, rem);
    unsigned subs = 1u << step;

    std::vector<std::uint64_t> vec(subs, 0);  // r-bit parity word per sub-interval
    {
      std::vector<ParityHash> hashes;
      hashes.reserve(r);
      for (unsigned j = 0; j < r; ++j) {
        Rng spec_rng(seed, (static_cast<std::uint64_t>(phase) << 40) |
                               (static_cast<std::uint64_t>(level) << 8) | j);
        hashes.emplace_back(HashSpec::random(spec_rng, 2));
      }
      for (std::size_t s = 0; s < kt.neighbor_ids.size(); ++s) {
        if (!ambient[s]) continue;
        EdgeId e(kt.self, kt.neighbor_ids[s]);
        Weight w = kt.neighbor_weights[s];
        if (!base.admits(e, w, B)) continue;
        if (phase == 1 && have_wstar && w > wstar) continue;
        std::uint64_t code = e.encode(B);
        std::uint64_t key = phase == 0 ? w : code;
        if ((key >> rem) != prefix) continue;
        unsigned sub = static_cast<unsigned>((key >> (rem - step)) & (subs - 1));
        for (unsigned j = 0; j < r; ++j)
          if (hashes[j].bit(code)) vec[sub] ^= std::uint64_t{1} << j;
      }
    }

    // timed convergecast of the vectors, root decides, descend broadcast
    std::uint64_t up_round = level_start + (h - d);
    while (ctx.round() < std::min(up_round, hard_deadline)) {
      co_await ctx.until(std::min(up_round, hard_deadline));
      for (const Message& m : ctx.inbox()) {
        if (m.payload.kind == kSketchParity && m.payload.field(0) == level) {
          for (unsigned i = 0; i < subs && 1 + i < m.payload.count; ++i)
            vec[i] ^= m.payload.field(1 + i);
        } else {
          env.stray(m);
        }
      }
    }
    if (ctx.round() >= hard_deadline) co_return out;

    std::uint64_t desc_code = kDescAbort;
    std::uint64_t desc_round = 0;
    if (tree.is_root) {
      for (unsigned i = 0; i < subs; ++i)
        if (vec[i]) {
          desc_code = i;
          break;
        }
      desc_round = ctx.round();
      Payload p(kSketchDescend);
      p.push(level);
      p.push(desc_code);
      p.bits = 13;
      for (NodeId c : tree.children) ctx.send(c, p);
    } else {
      Payload p(kSketchParity);
      p.push(level);
      for (unsigned i = 0; i < subs; ++i) p.push(vec[i]);
      p.bits = static_cast<std::uint32_t>(subs * r + 8);
      ctx.send(tree.parent, p);
      bool got = false;
      while (!got) {
        if (ctx.round() >= hard_deadline) co_return out;
        co_await ctx.until(hard_deadline);
        for (const Message& m : ctx.inbox()) {
          if (m.payload.kind == kSketchDescend && m.payload.field(0) == level && !got) {
            got = true;
            desc_code = m.payload.field(1);
            desc_round = ctx.round();
            relay_down(m);
          } else {
            env.stray(m);
          }
        }
      }
    }

    level_start = desc_round + (h - d) + 2;
    if (desc_code == kDescAbort) {
      aborted = true;
      break;
    }
    prefix = (prefix << step) | desc_code;
    rem -= step;
    ++level;
  }

  if (aborted) {
    // level_start doubles as the common exit round after an abort
    if (ctx.round() < level_start) co_await ctx.until(std::min(level_start, hard_deadline));
    co_return out;
  }

  // candidate confirmation across the single discovered edge
  EdgeId candidate = EdgeId::decode(prefix, B);
  std::uint64_t confirm_start = level_start;
  bool i_probe = false;
  Weight cand_weight = 0;
  if (candidate.incident(kt.self) && kt.knows_neighbor(candidate.other(kt.self))) {
    std::size_t slot = kt.neighbor_slot(candidate.other(kt.self));
    if (ambient[slot] && base.admits(candidate, kt.neighbor_weights[slot], B) &&
        (!have_wstar || kt.neighbor_weights[slot] <= wstar)) {
      i_probe = true;
      cand_weight = kt.neighbor_weights[slot];
    }
  }
  if (ctx.round() < confirm_start) co_await ctx.until(std::min(confirm_start, hard_deadline));
  if (ctx.round() >= hard_deadline) co_return out;
  if (i_probe) {
    Payload p(kProbe);
    p.push(candidate.encode(B));
    p.bits = 2 * B;
    ctx.send(candidate.other(kt.self), p);
  }

  bool confirmed = false;
  NodeId peer_identity = 0;
  Weight found_weight = 0;
  std::uint64_t root_decide = confirm_start + h + 3;
  while (ctx.round() < std::min(root_decide, hard_deadline)) {
    co_await ctx.until(std::min(root_decide, hard_deadline));
    for (const Message& m : ctx.inbox()) {
      if (m.payload.kind == kProbeReply && i_probe && m.payload.field(0) == candidate.encode(B)) {
        NodeId ident = m.payload.field(1);
        if (ident != self_identity) {
          out.inside_endpoint = true;
          if (tree.is_root) {
            confirmed = true;
            peer_identity = ident;
            found_weight = cand_weight;
          } else {
            Payload p(kConfirmReport);
            p.push(candidate.encode(B));
            p.push(ident);
            p.push(cand_weight);
            p.bits = 4 * B + 2;
            ctx.send(tree.parent, p);
          }
        }
      } else if (m.payload.kind == kConfirmReport) {
        if (tree.is_root) {
          confirmed = true;
          peer_identity = m.payload.field(1);
          found_weight = m.payload.field(2);
        } else {
          Payload p = m.payload;
          ctx.send(tree.parent, p);
        }
      } else {
        env.stray(m);
      }
    }
  }
  if (ctx.round() >= hard_deadline) co_return out;

  // verdict broadcast and common exit
  std::uint64_t verdict_round = 0;
  if (tree.is_root) {
    verdict_round = ctx.round();
    Payload p(kVerdict);
    p.push(confirmed ? 1 : 0);
    p.push(candidate.encode(B));
    p.push(peer_identity);
    p.push(found_weight);
    p.bits = 4 * B + 1;
    for (NodeId c : tree.children) ctx.send(c, p);
    out.found = confirmed;
    out.edge = candidate;
    out.weight = found_weight;
    out.peer_identity = peer_identity;
  } else {
    bool got = false;
    while (!got) {
      if (ctx.round() >= hard_deadline) co_return out;
      co_await ctx.until(hard_deadline);
      for (const Message& m : ctx.inbox()) {
        if (m.payload.kind == kVerdict && !got) {
          got = true;
          verdict_round = ctx.round();
          out.found = m.payload.field(0) != 0;
          out.edge = EdgeId::decode(m.payload.field(1), B);
          out.peer_identity = m.payload.field(2);
          out.weight = m.payload.field(3);
          relay_down(m);
        } else {
          env.stray(m);
        }
      }
    }
    if (!out.found) out.inside_endpoint = false;
  }
  std::uint64_t exit_round = verdict_round + (h - d) + 1;
  if (ctx.round() < exit_round) co_await ctx.until(std::min(exit_round, hard_deadline));
  co_return out;
}

// ---- standalone drivers ----

namespace {

struct ComponentFixture {
  std::vector<char> member;    // per node index
  std::vector<TreeInfo> tree;  // per node index, valid where member
  NodeId root = 0;
};

ComponentFixture build_fixture(const Graph& g, const std::vector<char>& member_nodes) {
  ComponentFixture fx;
  fx.member = member_nodes;
  std::size_t n = g.node_count();
  fx.tree.resize(n);

  std::uint32_t root_idx = kUnreachable;
  for (std::uint32_t i = 0; i < n; ++i)
    if (member_nodes[i]) {
      root_idx = i;
      break;
    }
  if (root_idx == kUnreachable) throw std::invalid_argument("empty component");
  fx.root = g.id_of(root_idx);

  std::vector<std::uint32_t> dist(n, kUnreachable), parent(n, kUnreachable);
  std::vector<std::uint32_t> frontier{root_idx}, next;
  dist[root_idx] = 0;
  parent[root_idx] = root_idx;
  std::uint32_t height = 0;
  while (!frontier.empty()) {
    next.clear();
    for (std::uint32_t u : frontier)
      for (const Adjacent& a : g.neighbors(u)) {
        std::uint32_t v = g.index_of(a.neighbor);
        if (!member_nodes[v] || dist[v] != kUnreachable) continue;
        dist[v] = dist[u] + 1;
        parent[v] = u;
        height = std::max(height, dist[v]);
        next.push_back(v);
      }
    frontier.swap(next);
  }
  for (std::uint32_t i = 0; i < n; ++i) {
    if (!member_nodes[i]) continue;
    if (dist[i] == kUnreachable) throw std::invalid_argument("component not connected");
    TreeInfo& t = fx.tree[i];
    t.in_tree = true;
    t.is_root = i == root_idx;
    t.parent = t.is_root ? g.id_of(i) : g.id_of(parent[i]);
    t.depth = dist[i];
    t.height = height;
  }
  for (std::uint32_t i = 0; i < n; ++i)
    if (member_nodes[i] && i != root_idx) fx.tree[parent[i]].children.push_back(g.id_of(i));
  for (std::uint32_t i = 0; i < n; ++i)
    std::sort(fx.tree[i].children.begin(), fx.tree[i].children.end());
  return fx;
}

// Outside nodes only answer probes until the fixture deadline.
struct ResponderProc : Proc {
  std::uint64_t deadline;
  explicit ResponderProc(std::uint64_t dl) : deadline(dl) {}
  ProcTask run(Ctx& ctx) override {
    while (ctx.round() < deadline) {
      co_await ctx.until(deadline);
      for (const Message& m : ctx.inbox()) answer_probe(ctx, m, 0);
    }
    co_return;
  }
};

struct TestOutProc : Proc {
  const ComponentFixture* fx;
  const HashSpec* spec;
  const Restriction* restr;
  std::uint64_t deadline;
  std::uint32_t self_index = 0;
  bool parity = false;
  ProcTask run(Ctx& ctx) override {
    ProtoEnv env(ctx);
    std::vector<char> ambient(ctx.kt().neighbor_ids.size(), 1);
    parity = co_await test_out_stage(env, fx->tree[self_index], ambient, *restr, *spec, 1, deadline);
    co_return;
  }
};

struct FindProc : Proc {
  const ComponentFixture* fx;
  Restriction restr;
  SketchParams params;
  bool minimize;
  std::uint64_t deadline;
  std::uint32_t self_index = 0;
  FindOutcome out;
  ProcTask run(Ctx& ctx) override {
    NodeId identity = fx->root;
    ProtoEnv env(ctx, [&ctx, identity](const Message& m) { answer_probe(ctx, m, identity); });
    std::vector<char> ambient(ctx.kt().neighbor_ids.size(), 1);
    out = co_await find_edge_stage(env, fx->tree[self_index], ambient, restr, params, minimize,
                                   identity, 1, deadline);
    co_return;
  }
};

EngineOptions to_opts(const RunConfig& cfg) {
  EngineOptions o;
  o.kappa = cfg.kappa;
  o.mode = cfg.mode;
  o.round_limit = cfg.round_limit;
  o.shared_seed = cfg.seed;
  return o;
}

}  // namespace

TestOutRun run_test_out(const Graph& g, const std::vector<char>& member_nodes,
                        const HashSpec& spec, const Restriction& r, const RunConfig& cfg) {
  auto fx = std::make_shared<ComponentFixture>(build_fixture(g, member_nodes));
  std::uint32_t height = fx->tree[g.index_of(fx->root)].height;
  std::uint64_t deadline = 1 + test_out_span(height) + 2;
  Engine eng(g, to_opts(cfg));
  auto res = eng.run([&, fx](const Kt1Knowledge& kt) -> ProcPtr {
    std::uint32_t i = g.index_of(kt.self);
    if (!fx->member[i]) return std::make_unique<ResponderProc>(deadline);
    auto p = std::make_unique<TestOutProc>();
    p->fx = fx.get();
    p->spec = &spec;
    p->restr = &r;
    p->deadline = deadline;
    p->self_index = i;
    return p;
  });
  TestOutRun out;
  out.metrics = res.metrics;
  std::uint32_t root_idx = g.index_of(fx->root);
  out.parity = dynamic_cast<TestOutProc*>(res.procs[root_idx].get())->parity;
  return out;
}

namespace {

FindRun run_find(const Graph& g, const std::vector<char>& member_nodes, const Restriction& r,
                 const SketchParams& params, bool minimize, const RunConfig& cfg) {
  auto fx = std::make_shared<ComponentFixture>(build_fixture(g, member_nodes));
  std::uint32_t height = fx->tree[g.index_of(fx->root)].height;
  std::uint64_t span = minimize ? find_min_span(g.node_count(), g.id_bits(), height, params)
                                : find_any_span(g.node_count(), g.id_bits(), height, params);
  std::uint64_t deadline = 1 + span + 4;
  Engine eng(g, to_opts(cfg));
  auto res = eng.run([&, fx](const Kt1Knowledge& kt) -> ProcPtr {
    std::uint32_t i = g.index_of(kt.self);
    if (!fx->member[i]) return std::make_unique<ResponderProc>(deadline);
    auto p = std::make_unique<FindProc>();
    p->fx = fx.get();
    p->restr = r;
    p->params = params;
    p->minimize = minimize;
    p->deadline = deadline;
    p->self_index = i;
    return p;
  });
  FindRun out;
  out.metrics = res.metrics;
  auto& fo = dynamic_cast<FindProc*>(res.procs[g.index_of(fx->root)].get())->out;
  out.found = fo.found;
  out.edge = fo.edge;
  out.weight = fo.weight;
  return out;
}

}  // namespace

FindRun run_find_any(const Graph& g, const std::vector<char>& member_nodes, const Restriction& r,
                     const SketchParams& params, const RunConfig& cfg) {
  return run_find(g, member_nodes, r, params, false, cfg);
}

FindRun run_find_min(const Graph& g, const std::vector<char>& member_nodes, const Restriction& r,
                     const SketchParams& params, const RunConfig& cfg) {
  return run_find(g, member_nodes, r, params, true, cfg);
}

}  // namespace dsim
