#include "dsim/primitives.hpp"

#include <algorithm>
#include <set>

namespace dsim {

namespace {

std::uint64_t rank_mask(unsigned bits) {
  return bits >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << bits) - 1;
}

}  // namespace

Sub<ElectOutcome> elect_leader_stage(ProtoEnv& env, const std::vector<char>& edge_in,
                                     std::uint64_t deadline) {
  Ctx& ctx = env.ctx;
  unsigned rank_bits = 2 * ceil_log2(ctx.n());
  std::uint32_t msg_bits = rank_bits + ctx.id_bits();
  std::uint64_t best_rank = ctx.rng().next() & rank_mask(rank_bits);
  NodeId best_id = ctx.self();

  auto better = [](std::uint64_t r1, NodeId i1, std::uint64_t r2, NodeId i2) {
    return r1 > r2 || (r1 == r2 && i1 < i2);
  };
  auto send_best = [&] {
    for (std::size_t s = 0; s < ctx.kt().neighbor_ids.size(); ++s) {
      if (!edge_in[s]) continue;
      Payload p(kElect);
      p.push(best_rank);
      p.push(best_id);
      p.bits = msg_bits;
      ctx.send(ctx.kt().neighbor_ids[s], p);
    }
  };

  send_best();
  while (ctx.round() < deadline) {
    co_await ctx.until(deadline);
    bool improved = false;
    for (const Message& m : ctx.inbox()) {
      if (m.payload.kind != kElect) {
        env.stray(m);
        continue;
      }
      std::uint64_t r = m.payload.field(0);
      NodeId id = m.payload.field(1);
      if (better(r, id, best_rank, best_id)) {
        best_rank = r;
        best_id = id;
        improved = true;
      }
    }
    if (improved && ctx.round() < deadline) send_best();
  }
  co_return ElectOutcome{best_id, best_id == ctx.self()};
}

Sub<TreeInfo> bfs_tree_stage(ProtoEnv& env, const std::vector<char>& edge_in, bool is_root,
                             std::uint64_t start, bool synced, std::uint64_t hard_deadline) {
  Ctx& ctx = env.ctx;
  const auto& nbrs = ctx.kt().neighbor_ids;
  unsigned len_bits = ceil_log2(ctx.n()) + 2;
  TreeInfo info;

  auto send_wave = [&](NodeId except) {
    for (std::size_t s = 0; s < nbrs.size(); ++s) {
      if (!edge_in[s] || nbrs[s] == except) continue;
      Payload p(kWave);
      p.bits = 1;
      ctx.send(nbrs[s], p);
    }
  };

  std::set<NodeId> waved;  // member neighbors seen sending a wave
  std::uint64_t adopted_round = 0;

  co_await ctx.until(start);
  if (is_root) {
    info.in_tree = true;
    info.is_root = true;
    info.parent = ctx.self();
    info.depth = 0;
    adopted_round = ctx.round();
    send_wave(0);
  } else {
    while (!info.in_tree && ctx.round() < hard_deadline) {
      co_await ctx.until(hard_deadline);
      for (const Message& m : ctx.inbox()) {
        if (m.payload.kind != kWave) {
          env.stray(m);
          continue;
        }
        waved.insert(m.src);
        if (!info.in_tree || m.src < info.parent) {
          info.in_tree = true;
          info.parent = m.src;
        }
      }
      if (info.in_tree) {
        info.depth = static_cast<std::uint32_t>(ctx.round() - start);
        adopted_round = ctx.round();
        send_wave(info.parent);
      }
    }
    if (!info.in_tree || !synced) co_return info;
  }
  if (!synced) co_return info;

  // Silence-based children detection: any member neighbor that has not sent a
  // wave by adopted_round + 2 adopted this node as its parent.
  while (ctx.round() < adopted_round + 2 && ctx.round() < hard_deadline) {
    co_await ctx.until(std::min(adopted_round + 2, hard_deadline));
    for (const Message& m : ctx.inbox()) {
      if (m.payload.kind == kWave)
        waved.insert(m.src);
      else
        env.stray(m);
    }
  }
  for (std::size_t s = 0; s < nbrs.size(); ++s) {
    if (!edge_in[s] || nbrs[s] == info.parent) continue;
    if (!waved.count(nbrs[s])) info.children.push_back(nbrs[s]);
  }

  // Height echo up, then the root announces the common stage-exit round.
  std::size_t echoes = 0;
  std::uint32_t max_child_height = 0;
  bool echoed = false;
  if (info.children.empty() && !info.is_root) {
    Payload p(kEchoHeight);
    p.push(0);
    p.bits = len_bits;
    ctx.send(info.parent, p);
    echoed = true;
  }
  std::uint64_t next_start = 0;
  bool done_seen = false;
  if (info.is_root && info.children.empty()) {
    info.height = 0;
    next_start = ctx.round() + 2;
    done_seen = true;
  }

  while (!done_seen && ctx.round() < hard_deadline) {
    co_await ctx.until(hard_deadline);
    for (const Message& m : ctx.inbox()) {
      if (m.payload.kind == kEchoHeight) {
        ++echoes;
        max_child_height =
            std::max(max_child_height, static_cast<std::uint32_t>(m.payload.field(0)) + 1);
        if (echoes == info.children.size()) {
          if (info.is_root) {
            info.height = max_child_height;
            next_start = ctx.round() + info.height + 2;
            done_seen = true;
            for (NodeId c : info.children) {
              Payload p(kBfsDone);
              p.push(info.height);
              p.push(next_start - ctx.round() - 1);
              p.bits = 2 * len_bits;
              ctx.send(c, p);
            }
          } else if (!echoed) {
            Payload p(kEchoHeight);
            p.push(max_child_height);
            p.bits = len_bits;
            ctx.send(info.parent, p);
            echoed = true;
          }
        }
      } else if (m.payload.kind == kBfsDone) {
        info.height = static_cast<std::uint32_t>(m.payload.field(0));
        std::uint64_t delta = m.payload.field(1);
        next_start = ctx.round() + delta;
        done_seen = true;
        for (NodeId c : info.children) {
          Payload p(kBfsDone);
          p.push(info.height);
          p.push(delta - 1);
          p.bits = 2 * len_bits;
          ctx.send(c, p);
        }
      } else {
        env.stray(m);
      }
    }
  }
  if (next_start > 0 && ctx.round() < next_start) co_await ctx.until(std::min(next_start, hard_deadline));
  co_return info;
}

Sub<Payload> tree_broadcast_stage(ProtoEnv& env, const TreeInfo& tree, Payload root_payload,
                                  std::uint64_t start, std::uint64_t hard_deadline) {
  Ctx& ctx = env.ctx;
  co_await ctx.until(start);
  if (tree.is_root) {
    for (NodeId c : tree.children) ctx.send(c, root_payload);
    co_return root_payload;
  }
  while (ctx.round() < hard_deadline) {
    co_await ctx.until(hard_deadline);
    for (const Message& m : ctx.inbox()) {
      if (m.payload.kind == root_payload.kind) {
        Payload got = m.payload;
        for (NodeId c : tree.children) ctx.send(c, got);
        co_return got;
      }
      env.stray(m);
    }
  }
  co_return Payload{};
}

Sub<ConvergeOut> pipelined_convergecast_stage(ProtoEnv& env, const TreeInfo& tree,
                                              std::vector<PipeItem> items, Comb comb,
                                              std::uint64_t start, std::uint64_t item_bits,
                                              std::uint64_t max_tags,
                                              std::uint64_t hard_deadline) {
  Ctx& ctx = env.ctx;
  ConvergeOut out;
  std::map<std::uint64_t, PipeValue> pending;
  for (const PipeItem& it : items) {
    auto [pos, fresh] = pending.emplace(it.tag, it.value);
    if (!fresh) pos->second = combine(comb, pos->second, it.value);
  }
  std::map<NodeId, std::uint64_t> child_last;  // highest data tag seen per child
  std::set<NodeId> child_done;
  std::map<NodeId, char> child_started;
  bool have_emitted = false;
  std::uint64_t last_emitted = 0;
  bool done_sent = false;
  std::uint64_t deadline = std::min(start + tree.height + max_tags + 4, hard_deadline);

  co_await ctx.until(start);
  for (;;) {
    for (const Message& m : ctx.inbox()) {
      if (m.payload.kind == kPipeData) {
        std::uint64_t tag = m.payload.field(0);
        PipeValue v{m.payload.field(1), m.payload.field(2)};
        bool last = m.payload.field(3) != 0;
        auto [pos, fresh] = pending.emplace(tag, v);
        if (!fresh) pos->second = combine(comb, pos->second, v);
        child_last[m.src] = tag;
        child_started[m.src] = 1;
        if (last) child_done.insert(m.src);
      } else if (m.payload.kind == kPipeDone) {
        child_done.insert(m.src);
      } else {
        env.stray(m);
      }
    }
    bool children_done = child_done.size() == tree.children.size();
    if (!tree.is_root && tree.in_tree && ctx.round() < deadline) {
      if (!pending.empty()) {
        auto it = pending.begin();
        std::uint64_t t = it->first;
        if (!have_emitted || t > last_emitted) {
          bool covered = true;
          for (NodeId c : tree.children) {
            if (child_done.count(c)) continue;
            if (!child_started.count(c) || child_last[c] < t) {
              covered = false;
              break;
            }
          }
          if (covered) {
            bool is_last = pending.size() == 1 && children_done;
            Payload p(kPipeData);
            p.push(t);
            p.push(it->second.first);
            p.push(it->second.second);
            p.push(is_last ? 1 : 0);
            p.bits = static_cast<std::uint32_t>(item_bits);
            ctx.send(tree.parent, p);
            ++out.up_data_messages;
            if (out.up_data_messages > max_tags)
              throw SimFault("convergecast tag count exceeds declared bound", ctx.self());
            have_emitted = true;
            last_emitted = t;
            pending.erase(it);
            if (is_last) done_sent = true;
          }
        }
      } else if (children_done && !done_sent) {
        Payload p(kPipeDone);
        p.bits = 1;
        ctx.send(tree.parent, p);
        done_sent = true;
      }
    }
    if (tree.is_root && children_done && out.root_done_round == 0) out.root_done_round = ctx.round();
    if (ctx.round() >= deadline) break;
    bool want_every_round = !tree.is_root && (!pending.empty() || (children_done && !done_sent));
    if (want_every_round)
      co_await ctx.step();
    else
      co_await ctx.until(deadline);
  }
  if (tree.is_root) out.combined = std::move(pending);
  co_return out;
}

Sub<std::vector<PipeItem>> pipelined_broadcast_stage(ProtoEnv& env, const TreeInfo& tree,
                                                     std::vector<PipeItem> items_at_root,
                                                     std::uint64_t start, std::uint64_t item_bits,
                                                     std::uint64_t max_items,
                                                     std::uint64_t hard_deadline) {
  Ctx& ctx = env.ctx;
  std::uint64_t deadline = std::min(start + tree.height + max_items + 4, hard_deadline);
  std::vector<PipeItem> got;

  co_await ctx.until(start);
  if (tree.is_root) {
    std::sort(items_at_root.begin(), items_at_root.end(),
              [](const PipeItem& a, const PipeItem& b) { return a.tag < b.tag; });
    for (std::size_t i = 0; i < items_at_root.size(); ++i) {
      for (NodeId c : tree.children) {
        Payload p(kPipeItem);
        p.push(items_at_root[i].tag);
        p.push(items_at_root[i].value.first);
        p.push(items_at_root[i].value.second);
        p.push(i + 1 == items_at_root.size() ? 1 : 0);
        p.bits = static_cast<std::uint32_t>(item_bits);
        ctx.send(c, p);
      }
      if (i + 1 < items_at_root.size()) co_await ctx.step();
    }
    got = std::move(items_at_root);
    if (ctx.round() < deadline) co_await ctx.until(deadline);
    co_return got;
  }

  while (ctx.round() < deadline) {
    co_await ctx.until(deadline);
    for (const Message& m : ctx.inbox()) {
      if (m.payload.kind != kPipeItem) {
        env.stray(m);
        continue;
      }
      PipeItem it;
      it.tag = m.payload.field(0);
      it.value = {m.payload.field(1), m.payload.field(2)};
      got.push_back(it);
      for (NodeId c : tree.children) {
        Payload p = m.payload;
        ctx.send(c, p);
      }
    }
  }
  co_return got;
}

// ---- standalone drivers ----

namespace {

std::vector<char> all_edges(const Kt1Knowledge& kt) {
  return std::vector<char>(kt.neighbor_ids.size(), 1);
}

struct ElectProc : Proc {
  std::uint64_t deadline;
  ElectOutcome out;
  explicit ElectProc(std::uint64_t d) : deadline(d) {}
  ProcTask run(Ctx& ctx) override {
    ProtoEnv env(ctx);
    auto edges = all_edges(ctx.kt());
    out = co_await elect_leader_stage(env, edges, deadline);
    co_return;
  }
};

struct BfsProc : Proc {
  NodeId root;
  std::uint64_t hard;
  TreeInfo out;
  BfsProc(NodeId r, std::uint64_t h) : root(r), hard(h) {}
  ProcTask run(Ctx& ctx) override {
    ProtoEnv env(ctx);
    auto edges = all_edges(ctx.kt());
    out = co_await bfs_tree_stage(env, edges, ctx.self() == root, 1, false, hard);
    co_return;
  }
};

struct TreeView {
  std::vector<TreeInfo> info;  // per node index
};

TreeView tree_from_run(const Graph& g, const BfsRun& run) {
  TreeView view;
  std::size_t n = g.node_count();
  view.info.resize(n);
  std::uint32_t height = 0;
  for (std::size_t i = 0; i < n; ++i) height = std::max(height, run.depth[i]);
  for (std::uint32_t i = 0; i < n; ++i) {
    TreeInfo& t = view.info[i];
    t.in_tree = true;
    t.parent = run.parent[i];
    t.is_root = run.parent[i] == g.id_of(i);
    t.depth = run.depth[i];
    t.height = height;
  }
  for (std::uint32_t i = 0; i < n; ++i)
    if (!view.info[i].is_root)
      view.info[g.index_of(run.parent[i])].children.push_back(g.id_of(i));
  for (auto& t : view.info) std::sort(t.children.begin(), t.children.end());
  return view;
}

struct BroadcastProc : Proc {
  const TreeInfo* tree;
  std::uint64_t bits;
  std::uint64_t hard;
  bool got = false;
  BroadcastProc(const TreeInfo* t, std::uint64_t b, std::uint64_t h) : tree(t), bits(b), hard(h) {}
  ProcTask run(Ctx& ctx) override {
    ProtoEnv env(ctx);
    Payload p(kPayloadDown);
    p.bits = static_cast<std::uint32_t>(bits);
    Payload res = co_await tree_broadcast_stage(env, *tree, p, 1, hard);
    got = res.kind == kPayloadDown;
    co_return;
  }
};

struct ConvergeProc : Proc {
  const TreeInfo* tree;
  std::vector<PipeItem> items;
  Comb comb;
  std::uint64_t max_tags, item_bits, hard;
  ConvergeOut out;
  ProcTask run(Ctx& ctx) override {
    ProtoEnv env(ctx);
    out = co_await pipelined_convergecast_stage(env, *tree, std::move(items), comb, 1, item_bits,
                                                max_tags, hard);
    co_return;
  }
};

struct PipeBcastProc : Proc {
  const TreeInfo* tree;
  std::vector<PipeItem> items;  // root only
  std::uint64_t max_items, item_bits, hard;
  std::vector<PipeItem> out;
  ProcTask run(Ctx& ctx) override {
    ProtoEnv env(ctx);
    out = co_await pipelined_broadcast_stage(env, *tree, std::move(items), 1, item_bits, max_items,
                                             hard);
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

LeaderRun run_elect_leader(const Graph& g, std::uint64_t diam_bound, const RunConfig& cfg) {
  Engine eng(g, to_opts(cfg));
  std::uint64_t deadline = 2 * diam_bound + 3;
  auto res = eng.run([&](const Kt1Knowledge&) { return std::make_unique<ElectProc>(deadline); });
  LeaderRun out;
  out.metrics = res.metrics;
  for (auto& p : res.procs) {
    auto* ep = dynamic_cast<ElectProc*>(p.get());
    out.leader_seen.push_back(ep->out.leader);
    out.is_leader.push_back(ep->out.is_leader);
    if (ep->out.is_leader) out.leader = ep->out.leader;
  }
  return out;
}

BfsRun run_build_bfs_tree(const Graph& g, NodeId root, const RunConfig& cfg) {
  Engine eng(g, to_opts(cfg));
  auto res = eng.run([&](const Kt1Knowledge&) {
    return std::make_unique<BfsProc>(root, cfg.round_limit - 1);
  });
  BfsRun out;
  out.root = root;
  out.metrics = res.metrics;
  for (auto& p : res.procs) {
    auto* bp = dynamic_cast<BfsProc*>(p.get());
    out.parent.push_back(bp->out.is_root ? root : bp->out.parent);
    out.depth.push_back(bp->out.depth);
  }
  return out;
}

BroadcastRun run_broadcast(const Graph& g, const BfsRun& tree, std::uint64_t payload_bits,
                           const RunConfig& cfg) {
  auto view = std::make_shared<TreeView>(tree_from_run(g, tree));
  Engine eng(g, to_opts(cfg));
  auto res = eng.run([&, view](const Kt1Knowledge& kt) {
    return std::make_unique<BroadcastProc>(&view->info[g.index_of(kt.self)], payload_bits,
                                           cfg.round_limit - 1);
  });
  BroadcastRun out;
  out.metrics = res.metrics;
  for (auto& p : res.procs) out.got_payload.push_back(dynamic_cast<BroadcastProc*>(p.get())->got);
  return out;
}

ConvergecastRun run_pipelined_convergecast(const Graph& g, const BfsRun& tree,
                                           const std::vector<std::vector<PipeItem>>& per_node_items,
                                           Comb comb, std::uint64_t max_tags, const RunConfig& cfg) {
  auto view = std::make_shared<TreeView>(tree_from_run(g, tree));
  std::uint64_t item_bits = 2 * ceil_log2(g.id_space()) + 2 * 64 + 1;
  Engine eng(g, to_opts(cfg));
  auto res = eng.run([&, view](const Kt1Knowledge& kt) {
    auto p = std::make_unique<ConvergeProc>();
    std::uint32_t i = g.index_of(kt.self);
    p->tree = &view->info[i];
    p->items = per_node_items[i];
    p->comb = comb;
    p->max_tags = max_tags;
    p->item_bits = item_bits;
    p->hard = cfg.round_limit - 1;
    return p;
  });
  ConvergecastRun out;
  out.metrics = res.metrics;
  for (auto& p : res.procs) {
    auto* cp = dynamic_cast<ConvergeProc*>(p.get());
    out.max_up_messages = std::max(out.max_up_messages, cp->out.up_data_messages);
    if (cp->tree->is_root) {
      out.combined = cp->out.combined;
      out.root_done_round = cp->out.root_done_round;
    }
  }
  return out;
}

BroadcastItemsRun run_pipelined_broadcast(const Graph& g, const BfsRun& tree,
                                          const std::vector<PipeItem>& items,
                                          std::uint64_t max_items, const RunConfig& cfg) {
  auto view = std::make_shared<TreeView>(tree_from_run(g, tree));
  std::uint64_t item_bits = 2 * ceil_log2(g.id_space()) + 2 * 64 + 1;
  Engine eng(g, to_opts(cfg));
  auto res = eng.run([&, view](const Kt1Knowledge& kt) {
    auto p = std::make_unique<PipeBcastProc>();
    std::uint32_t i = g.index_of(kt.self);
    p->tree = &view->info[i];
    if (p->tree->is_root) p->items = items;
    p->max_items = max_items;
    p->item_bits = item_bits;
    p->hard = cfg.round_limit - 1;
    return p;
  });
  BroadcastItemsRun out;
  out.metrics = res.metrics;
  for (auto& p : res.procs) out.received.push_back(dynamic_cast<PipeBcastProc*>(p.get())->out);
  return out;
}

}  // namespace dsim
