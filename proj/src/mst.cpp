#include "dsim/mst.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "dsim/oracles.hpp"
#include "dsim/primitives.hpp"

#include <cstdio>
#include <cstdlib>

namespace {
inline bool trace_on() {
  static bool on = std::getenv("DSIM_TRACE") != nullptr;
  return on;
}
}  // namespace

namespace dsim {

std::uint64_t MstParams::ghs_iterations(std::uint64_t n) const {
  return static_cast<std::uint64_t>(std::ceil((1.0 - delta) * std::log2(static_cast<double>(n))));
}

namespace {

enum class Goal { mst, components, cover };

constexpr std::uint64_t kSeedTag = ~std::uint64_t{0};

enum PassOp : std::uint64_t {
  opWeightLevel = 1,
  opIdLevel,
  opConfirm,
  opMerge,
  opExchange,
  opVerify,
  opExit,
};

inline std::uint64_t op_word(PassOp op, std::uint64_t aux) {
  return (static_cast<std::uint64_t>(op) << 32) | aux;
}

// ---- virtual incident edges: one identity per layer copy ----

struct VirtEdge {
  std::size_t slot;         // neighbor slot
  std::uint64_t code;       // virtual edge encoding
  Weight weight;            // effective weight
  std::uint8_t peer_layer;  // layer of the peer copy
};

struct LocalCopy {
  std::uint64_t vid;
  NodeId fragment;
  std::vector<VirtEdge> edges;
};

struct VirtView {
  Goal goal = Goal::mst;
  unsigned vbits = 0;  // virtual id bits
  unsigned wbits = 0;  // weight key bits
  std::vector<LocalCopy> copies;
};

std::uint64_t cover_vid(NodeId real, unsigned layer) { return 2 * real - 1 + layer; }

VirtView build_view(Ctx& ctx, Goal goal, const std::vector<char>& marked) {
  const Kt1Knowledge& kt = ctx.kt();
  VirtView v;
  v.goal = goal;
  if (goal == Goal::cover) {
    v.vbits = ctx.id_bits() + 1;
    v.wbits = 1;
    for (unsigned layer = 0; layer < 2; ++layer) {
      LocalCopy c;
      c.vid = cover_vid(kt.self, layer);
      c.fragment = c.vid;
      for (std::size_t s = 0; s < kt.neighbor_ids.size(); ++s) {
        if (!marked[s]) continue;  // the cover is built over the marked subgraph
        VirtEdge e;
        e.slot = s;
        e.code = EdgeId(c.vid, cover_vid(kt.neighbor_ids[s], 1 - layer)).encode(v.vbits);
        e.weight = 0;
        e.peer_layer = static_cast<std::uint8_t>(1 - layer);
        c.edges.push_back(e);
      }
      v.copies.push_back(std::move(c));
    }
  } else {
    v.vbits = ctx.id_bits();
    v.wbits = goal == Goal::mst ? ctx.id_bits() : 1;
    LocalCopy c;
    c.vid = kt.self;
    c.fragment = kt.self;
    for (std::size_t s = 0; s < kt.neighbor_ids.size(); ++s) {
      VirtEdge e;
      e.slot = s;
      e.code = EdgeId(kt.self, kt.neighbor_ids[s]).encode(v.vbits);
      e.weight = goal == Goal::mst ? kt.neighbor_weights[s] : (marked[s] ? 0 : 1);
      e.peer_layer = 0;
      c.edges.push_back(e);
    }
    v.copies.push_back(std::move(c));
  }
  return v;
}

// ---- the root-paced pass machinery over the global tree ----

struct DownPass {
  PassOp op = opExit;
  std::uint64_t aux = 0;
  std::uint64_t arg = 0;  // seed / common round / flag, from the op item
  std::vector<PipeItem> items;
};

std::uint32_t pass_item_bits(unsigned vbits) { return 8 + vbits + 128 + 1; }

void send_pass_item(Ctx& ctx, NodeId dst, std::uint64_t pass, const PipeItem& it, bool last,
                    unsigned vbits) {
  Payload p(kPipeItem);
  p.push(pass);
  p.push(it.tag);
  p.push(it.value.first);
  p.push(it.value.second);
  p.push(last ? 1 : 0);
  p.bits = pass_item_bits(vbits);
  ctx.send(dst, p);
}

// Root: broadcast per-fragment items (ascending) then the op item, last-flagged.
Sub<Unit> root_send_pass(ProtoEnv& env, const TreeInfo& tree, std::uint64_t pass, PassOp op,
                         std::uint64_t aux, std::uint64_t arg, std::vector<PipeItem> items,
                         unsigned vbits) {
  Ctx& ctx = env.ctx;
  std::sort(items.begin(), items.end(),
            [](const PipeItem& a, const PipeItem& b) { return a.tag < b.tag; });
  items.push_back({kSeedTag, {op_word(op, aux), arg}});
  for (std::size_t i = 0; i < items.size(); ++i) {
    for (NodeId c : tree.children)
      send_pass_item(ctx, c, pass, items[i], i + 1 == items.size(), vbits);
    co_await ctx.step();
    for (const Message& m : ctx.inbox()) env.stray(m);
  }
  co_return Unit{};
}

// Member: receive one pass (relaying down), return op + items.
Sub<DownPass> member_recv_pass(ProtoEnv& env, const TreeInfo& tree, std::uint64_t pass,
                               unsigned vbits, std::uint64_t hard) {
  Ctx& ctx = env.ctx;
  DownPass out;
  if (trace_on())
    std::fprintf(stderr, "[r%llu] node %llu recv_pass %llu begin\n",
                 (unsigned long long)ctx.round(), (unsigned long long)ctx.self(),
                 (unsigned long long)pass);
  bool done = false;
  while (!done && ctx.round() < hard) {
    co_await ctx.until(hard);
    for (const Message& m : ctx.inbox()) {
      if (m.payload.kind == kPipeItem && m.payload.field(0) == pass) {
        PipeItem it;
        it.tag = m.payload.field(1);
        it.value = {m.payload.field(2), m.payload.field(3)};
        bool last = m.payload.field(4) != 0;
        for (NodeId c : tree.children) send_pass_item(ctx, c, pass, it, last, vbits);
        if (it.tag == kSeedTag) {
          out.op = static_cast<PassOp>(it.value.first >> 32);
          out.aux = it.value.first & 0xffffffffu;
          out.arg = it.value.second;
        } else {
          out.items.push_back(it);
        }
        if (last) done = true;
      } else {
        env.stray(m);
      }
    }
  }
  if (trace_on())
    std::fprintf(stderr, "[r%llu] node %llu recv_pass %llu op=%d items=%zu\n",
                 (unsigned long long)ctx.round(), (unsigned long long)ctx.self(),
                 (unsigned long long)pass, (int)out.op, out.items.size());
  co_return out;
}

// Member: coverage-pipelined convergecast of this pass's items. Emits first
// (the entry round's inbox belongs to the previous stage), then steps.
Sub<Unit> member_send_up(ProtoEnv& env, const TreeInfo& tree, std::uint64_t pass,
                         std::vector<PipeItem> items, Comb comb, unsigned vbits,
                         std::uint64_t hard, const std::vector<Message>* prelude = nullptr) {
  Ctx& ctx = env.ctx;
  std::map<std::uint64_t, PipeValue> pending;
  for (const PipeItem& it : items) {
    auto [pos, fresh] = pending.emplace(it.tag, it.value);
    if (!fresh) pos->second = combine(comb, pos->second, it.value);
  }
  std::map<NodeId, std::uint64_t> child_last;
  std::set<NodeId> child_done, child_started;
  if (prelude)
    for (const Message& m : *prelude) {
      if (m.payload.kind == kPipeData) {
        std::uint64_t tag = m.payload.field(1);
        PipeValue v{m.payload.field(2), m.payload.field(3)};
        auto [pos, fresh] = pending.emplace(tag, v);
        if (!fresh) pos->second = combine(comb, pos->second, v);
        child_last[m.src] = tag;
        child_started.insert(m.src);
        if (m.payload.field(4)) child_done.insert(m.src);
      } else if (m.payload.kind == kPipeDone) {
        child_done.insert(m.src);
      }
    }
  bool emitted = false;
  std::uint64_t last_tag = 0;
  bool done_sent = false;

  while (!done_sent && ctx.round() < hard) {
    bool children_done = child_done.size() == tree.children.size();
    if (!pending.empty()) {
      auto it = pending.begin();
      std::uint64_t t = it->first;
      if (!emitted || t > last_tag) {
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
          p.push(pass);
          p.push(t);
          p.push(it->second.first);
          p.push(it->second.second);
          p.push(is_last ? 1 : 0);
          p.bits = pass_item_bits(vbits);
          ctx.send(tree.parent, p);
          emitted = true;
          last_tag = t;
          pending.erase(it);
          if (is_last) {
            done_sent = true;
            break;
          }
        }
      }
    } else if (children_done) {
      Payload p(kPipeDone);
      p.push(pass);
      p.bits = 9;
      ctx.send(tree.parent, p);
      done_sent = true;
      break;
    }
    co_await ctx.step();
    for (const Message& m : ctx.inbox()) {
      if (m.payload.kind == kPipeData && m.payload.field(0) == pass) {
        std::uint64_t tag = m.payload.field(1);
        PipeValue v{m.payload.field(2), m.payload.field(3)};
        auto [pos, fresh] = pending.emplace(tag, v);
        if (!fresh) pos->second = combine(comb, pos->second, v);
        child_last[m.src] = tag;
        child_started.insert(m.src);
        if (m.payload.field(4)) child_done.insert(m.src);
      } else if (m.payload.kind == kPipeDone && m.payload.field(0) == pass) {
        child_done.insert(m.src);
      } else {
        env.stray(m);
      }
    }
  }
  co_return Unit{};
}

// Root: fold its own items with everything converging from the tree.
Sub<std::map<std::uint64_t, PipeValue>> root_collect_up(ProtoEnv& env, const TreeInfo& tree,
                                                        std::uint64_t pass,
                                                        std::vector<PipeItem> own, Comb comb,
                                                        std::uint64_t hard,
                                                        const std::vector<Message>* prelude = nullptr) {
  Ctx& ctx = env.ctx;
  std::map<std::uint64_t, PipeValue> collected;
  for (const PipeItem& it : own) {
    auto [pos, fresh] = collected.emplace(it.tag, it.value);
    if (!fresh) pos->second = combine(comb, pos->second, it.value);
  }
  std::set<NodeId> child_done;
  if (prelude)
    for (const Message& m : *prelude) {
      if (m.payload.kind == kPipeData) {
        std::uint64_t tag = m.payload.field(1);
        PipeValue v{m.payload.field(2), m.payload.field(3)};
        auto [pos, fresh] = collected.emplace(tag, v);
        if (!fresh) pos->second = combine(comb, pos->second, v);
        if (m.payload.field(4)) child_done.insert(m.src);
      } else if (m.payload.kind == kPipeDone) {
        child_done.insert(m.src);
      }
    }
  if (trace_on())
    std::fprintf(stderr, "[r%llu] root collect pass %llu (children=%zu)\n",
                 (unsigned long long)ctx.round(), (unsigned long long)pass,
                 tree.children.size());
  while (child_done.size() < tree.children.size() && ctx.round() < hard) {
    co_await ctx.until(hard);
    for (const Message& m : ctx.inbox()) {
      if (m.payload.kind == kPipeData && m.payload.field(0) == pass) {
        std::uint64_t tag = m.payload.field(1);
        PipeValue v{m.payload.field(2), m.payload.field(3)};
        auto [pos, fresh] = collected.emplace(tag, v);
        if (!fresh) pos->second = combine(comb, pos->second, v);
        if (m.payload.field(4)) child_done.insert(m.src);
      } else if (m.payload.kind == kPipeDone && m.payload.field(0) == pass) {
        child_done.insert(m.src);
      } else {
        env.stray(m);
      }
    }
  }
  if (trace_on())
    std::fprintf(stderr, "[r%llu] root collect pass %llu done tags=%zu\n",
                 (unsigned long long)ctx.round(), (unsigned long long)pass, collected.size());
  co_return collected;
}

// ---- per-copy search state mirrored from the down passes ----

struct CopySearch {
  bool active = false;
  unsigned phase = 0;  // 0 weight, 1 id
  unsigned rem = 0;
  std::uint64_t prefix = 0;
  Weight wstar = 0;
};

std::vector<std::uint64_t> level_parities(const LocalCopy& copy, const CopySearch& st,
                                          std::uint64_t seed, unsigned level, unsigned step,
                                          unsigned reps) {
  unsigned subs = 1u << step;
  std::vector<std::uint64_t> vec(subs, 0);
  std::vector<ParityHash> hashes;
  hashes.reserve(reps);
  for (unsigned j = 0; j < reps; ++j) {
    Rng spec_rng(seed, (static_cast<std::uint64_t>(st.phase) << 40) |
                           (static_cast<std::uint64_t>(level) << 8) | j);
    hashes.emplace_back(HashSpec::random(spec_rng, 2));
  }
  for (const VirtEdge& e : copy.edges) {
    if (st.phase == 1 && e.weight > st.wstar) continue;
    std::uint64_t key = st.phase == 0 ? e.weight : e.code;
    if (st.rem < 64 && (key >> st.rem) != st.prefix) continue;
    unsigned sub = static_cast<unsigned>((key >> (st.rem - step)) & (subs - 1));
    for (unsigned j = 0; j < reps; ++j)
      if (hashes[j].bit(e.code)) vec[sub] ^= std::uint64_t{1} << j;
  }
  return vec;
}

PipeValue pack_parities(const std::vector<std::uint64_t>& vec) {
  PipeValue v{0, 0};
  if (vec.size() > 0) v.first |= vec[0] & 0xffffffffu;
  if (vec.size() > 1) v.first |= (vec[1] & 0xffffffffu) << 32;
  if (vec.size() > 2) v.second |= vec[2] & 0xffffffffu;
  if (vec.size() > 3) v.second |= (vec[3] & 0xffffffffu) << 32;
  return v;
}

std::vector<std::uint64_t> unpack_parities(PipeValue v, unsigned subs) {
  std::vector<std::uint64_t> vec(subs, 0);
  if (subs > 0) vec[0] = v.first & 0xffffffffu;
  if (subs > 1) vec[1] = (v.first >> 32) & 0xffffffffu;
  if (subs > 2) vec[2] = v.second & 0xffffffffu;
  if (subs > 3) vec[3] = (v.second >> 32) & 0xffffffffu;
  return vec;
}

constexpr unsigned kStep3Branch = 2;  // 4-way split so r parities pack into a PipeValue

// ---- the full pipeline proc (mst / components / double cover) ----

struct PipelineProc : Proc {
  MstParams params;
  Goal goal;
  std::vector<char> marked_slots;  // per neighbor slot

  // harvested outputs
  std::vector<char> mst_slot;
  std::vector<char> ghs_tree_slot;
  std::vector<NodeId> labels;  // final fragment per copy
  std::string branch;
  bool flagged = false;
  std::vector<std::vector<NodeId>> frag_log;  // per wave: fragment per copy
  std::vector<FragmentSnapshot> root_adoptions;
  std::vector<std::vector<std::pair<EdgeId, NodeId>>> step2_adopt;

  PipelineProc(const MstParams& p, Goal g, std::vector<char> marks)
      : params(p), goal(g), marked_slots(std::move(marks)) {}

  VirtView view;
  std::vector<std::pair<NodeId, NodeId>> exchange_cache;  // per slot: peer copy fragments
  // step-2 state
  NodeId frag2 = 0;
  std::uint64_t diam_bound = 0;
  bool participates = false;
  bool root_status = true;
  bool merged_this_phase = false;
  bool notice_seen = false;
  std::uint64_t phase_cap = 1;

  ProcTask run(Ctx& ctx) override;
  Sub<Unit> step2_phase(ProtoEnv& env, std::uint64_t phase_idx, std::uint64_t start,
                        std::uint64_t budget, bool dense);
  Sub<Unit> step3_root(ProtoEnv& env, const TreeInfo& gt, std::uint64_t hard);
  Sub<Unit> step3_member(ProtoEnv& env, const TreeInfo& gt, std::uint64_t hard);
  void handle_stray(Ctx& ctx, const Message& m);
  void log_fragments() {
    frag_log.push_back({});
    for (const LocalCopy& c : view.copies) frag_log.back().push_back(c.fragment);
  }
  std::vector<PipeItem> exchange_candidates() const {
    std::vector<PipeItem> mine;
    for (const LocalCopy& c : view.copies) {
      Weight best_w = ~Weight{0};
      std::uint64_t best_code = 0;
      for (const VirtEdge& e : c.edges) {
        NodeId pf = e.peer_layer ? exchange_cache[e.slot].second : exchange_cache[e.slot].first;
        if (pf == c.fragment) continue;
        if (goal != Goal::mst && e.weight != 0) continue;
        if (e.weight < best_w || (e.weight == best_w && e.code < best_code)) {
          best_w = e.weight;
          best_code = e.code;
        }
      }
      if (best_code) mine.push_back({c.fragment, {best_w, best_code}});
    }
    return mine;
  }
  void send_exchange(Ctx& ctx) {
    Payload p(kFragExchange);
    p.push(view.copies[0].fragment);
    if (view.copies.size() > 1) p.push(view.copies[1].fragment);
    p.bits = static_cast<std::uint32_t>(view.copies.size() * view.vbits);
    for (NodeId nbr : ctx.kt().neighbor_ids) ctx.send(nbr, p);
  }
};

void PipelineProc::handle_stray(Ctx& ctx, const Message& m) {
  const Kt1Knowledge& kt = ctx.kt();
  switch (m.payload.kind) {
    case kProbe: {
      std::uint64_t code = m.payload.field(0);
      EdgeId ve = EdgeId::decode(code, view.vbits);
      NodeId reply_frag = 0;
      for (const LocalCopy& c : view.copies)
        if (ve.incident(c.vid)) reply_frag = c.fragment;
      Payload p(kProbeReply);
      p.push(code);
      p.push(reply_frag);
      p.bits = 3 * view.vbits + 1;
      ctx.send(m.src, p);
      break;
    }
    case kFragExchange: {
      std::size_t slot = kt.neighbor_slot(m.src);
      exchange_cache[slot] = {m.payload.field(0),
                              m.payload.count > 1 ? m.payload.field(1) : m.payload.field(0)};
      break;
    }
    case kGhsProposal: {
      bool accept = participates && root_status && m.payload.field(1) > frag2;
      Payload p(kGhsAccept);
      p.push(accept ? 1 : 0);
      p.push(frag2);
      p.bits = view.vbits + 2;
      ctx.send(m.src, p);
      if (accept) {
        std::size_t slot = kt.neighbor_slot(m.src);
        ghs_tree_slot[slot] = 1;
        if (goal == Goal::mst) mst_slot[slot] = 1;
        merged_this_phase = true;
        for (std::size_t s = 0; s < ghs_tree_slot.size(); ++s)
          if (ghs_tree_slot[s] && s != slot) {
            Payload q(kGhsJoinNotice);
            q.push(frag2);
            q.bits = view.vbits;
            ctx.send(kt.neighbor_ids[s], q);
          }
      }
      break;
    }
    case kGhsJoinNotice: {
      if (m.payload.field(0) == frag2 && !notice_seen) {
        notice_seen = true;
        merged_this_phase = true;
        for (std::size_t s = 0; s < ghs_tree_slot.size(); ++s)
          if (ghs_tree_slot[s] && kt.neighbor_ids[s] != m.src) {
            Payload q(kGhsJoinNotice);
            q.push(frag2);
            q.bits = view.vbits;
            ctx.send(kt.neighbor_ids[s], q);
          }
      }
      break;
    }
    case kGhsNewId: {
      NodeId old_id = m.payload.field(0), new_id = m.payload.field(1);
      if (frag2 == old_id) {
        frag2 = new_id;
        view.copies[0].fragment = new_id;
        merged_this_phase = true;
        for (std::size_t s = 0; s < ghs_tree_slot.size(); ++s)
          if (ghs_tree_slot[s] && kt.neighbor_ids[s] != m.src) {
            Payload q(kGhsNewId);
            q.push(old_id);
            q.push(new_id);
            q.bits = 2 * view.vbits;
            ctx.send(kt.neighbor_ids[s], q);
          }
      }
      break;
    }
    default:
      break;
  }
}

// One controlled merging phase: participants rebuild their fragment tree,
// find the minimum leaving edge, and non-root fragments hook onto accepting
// root fragments with smaller ids (depth-one stars cap diameter growth).
Sub<Unit> PipelineProc::step2_phase(ProtoEnv& env, std::uint64_t phase_idx, std::uint64_t start,
                                    std::uint64_t budget, bool dense) {
  Ctx& ctx = env.ctx;
  const Kt1Knowledge& kt = ctx.kt();
  std::uint64_t cap = std::uint64_t{1} << phase_idx;
  phase_cap = cap;
  std::uint64_t phase_end = start + budget;
  merged_this_phase = false;
  notice_seen = false;
  participates = diam_bound <= cap;
  root_status = true;

  while (ctx.round() < start) {
    co_await ctx.until(start);
    for (const Message& m : ctx.inbox()) env.stray(m);
  }

  // exchange window: sparse MWOE needs the peer fragment ids
  std::uint64_t after_exchange = start + 3;
  if (!dense) send_exchange(ctx);
  while (ctx.round() < after_exchange) {
    co_await ctx.until(after_exchange);
    for (const Message& m : ctx.inbox()) env.stray(m);
  }

  std::uint64_t bfs_span = 3 * cap + 12;
  std::uint64_t mwoe_span =
      dense ? find_min_span(ctx.n(), ctx.id_bits(), static_cast<std::uint32_t>(cap), params.sketch) + 4
            : 6 * (cap + 10);
  std::uint64_t probe_round = after_exchange + bfs_span + mwoe_span;

  bool propose = false;
  EdgeId chosen;
  NodeId target = 0;

  if (participates) {
    TreeInfo tree = co_await bfs_tree_stage(env, ghs_tree_slot, kt.self == frag2, after_exchange,
                                            true, after_exchange + bfs_span);
    if (tree.in_tree) {
      if (dense) {
        std::vector<char> ambient(kt.neighbor_ids.size(), 1);
        FindOutcome out = co_await find_edge_stage(env, tree, ambient, Restriction{},
                                                   params.sketch, true, frag2, ctx.round(),
                                                   after_exchange + bfs_span + mwoe_span);
        if (out.found) {
          chosen = out.edge;
          target = out.peer_identity;
          root_status = target > frag2;
          propose = out.inside_endpoint && !root_status;
        }
      } else {
        // exact MWOE by aggregating locally known leaving edges, then two more
        // sweeps so every member learns the chosen edge and its target
        std::vector<PipeItem> mine;
        {
          Weight best_w = ~Weight{0};
          std::uint64_t best_code = 0;
          for (const VirtEdge& e : view.copies[0].edges) {
            NodeId pf = exchange_cache[e.slot].first;
            if (pf == frag2 || pf == 0) continue;
            if (e.weight < best_w || (e.weight == best_w && e.code < best_code)) {
              best_w = e.weight;
              best_code = e.code;
            }
          }
          if (best_code) mine.push_back({1, {best_w, best_code}});
        }
        std::uint64_t up_start = ctx.round();
        ConvergeOut conv = co_await pipelined_convergecast_stage(
            env, tree, mine, Comb::min_pair, up_start, 2 * view.vbits + 64, 1,
            up_start + tree.height + 8);
        std::vector<PipeItem> chosen_items;
        if (tree.is_root && conv.combined.count(1)) chosen_items.push_back({1, conv.combined[1]});
        auto bc1 = co_await pipelined_broadcast_stage(env, tree, chosen_items, ctx.round(),
                                                      2 * view.vbits + 64, 1,
                                                      ctx.round() + tree.height + 8);
        std::vector<PipeItem> tgt;
        std::uint64_t code = 0;
        if (!bc1.empty()) {
          code = bc1[0].value.second;
          chosen = EdgeId::decode(code, view.vbits);
          for (const VirtEdge& e : view.copies[0].edges)
            if (e.code == code && exchange_cache[e.slot].first != frag2)
              tgt.push_back({1, {exchange_cache[e.slot].first, code}});
        }
        ConvergeOut conv2 = co_await pipelined_convergecast_stage(
            env, tree, tgt, Comb::min_pair, ctx.round(), 2 * view.vbits + 64, 1,
            ctx.round() + tree.height + 8);
        std::vector<PipeItem> tgt_items;
        if (tree.is_root && conv2.combined.count(1)) tgt_items.push_back({1, conv2.combined[1]});
        auto bc2 = co_await pipelined_broadcast_stage(env, tree, tgt_items, ctx.round(),
                                                      2 * view.vbits + 64, 1,
                                                      ctx.round() + tree.height + 8);
        if (code && !bc2.empty()) {
          target = bc2[0].value.first;
          root_status = target > frag2;
          for (const VirtEdge& e : view.copies[0].edges)
            if (e.code == code && exchange_cache[e.slot].first != frag2) propose = !root_status;
        }
      }
    }
  }

  while (ctx.round() < probe_round) {
    co_await ctx.until(probe_round);
    for (const Message& m : ctx.inbox()) env.stray(m);
  }

  if (trace_on())
    std::fprintf(stderr, "[r%llu] node %llu step2 phase: part=%d frag=%llu propose=%d chosen=%llu-%llu target=%llu root=%d\n",
                 (unsigned long long)ctx.round(), (unsigned long long)kt.self, (int)participates,
                 (unsigned long long)frag2, (int)propose, (unsigned long long)chosen.lo,
                 (unsigned long long)chosen.hi, (unsigned long long)target, (int)root_status);
  if (propose && chosen.incident(kt.self)) {
    Payload p(kGhsProposal);
    p.push(chosen.encode(view.vbits));
    p.push(frag2);
    p.bits = 3 * view.vbits;
    ctx.send(chosen.other(kt.self), p);
  }
  std::uint64_t accept_round = probe_round + 3;
  bool joined = false;
  NodeId new_id = frag2;
  while (ctx.round() < accept_round) {
    co_await ctx.until(accept_round);
    for (const Message& m : ctx.inbox()) {
      if (m.payload.kind == kGhsAccept && propose) {
        if (m.payload.field(0)) {
          joined = true;
          new_id = m.payload.field(1);
        }
      } else {
        env.stray(m);
      }
    }
  }
  if (joined) {
    std::size_t slot = kt.neighbor_slot(chosen.other(kt.self));
    ghs_tree_slot[slot] = 1;
    if (goal == Goal::mst) mst_slot[slot] = 1;
    step2_adopt.back().push_back({chosen, frag2});
    NodeId old_id = frag2;
    frag2 = new_id;
    view.copies[0].fragment = new_id;
    merged_this_phase = true;
    for (std::size_t s = 0; s < ghs_tree_slot.size(); ++s)
      if (ghs_tree_slot[s] && s != slot) {
        Payload q(kGhsNewId);
        q.push(old_id);
        q.push(new_id);
        q.bits = 2 * view.vbits;
        ctx.send(kt.neighbor_ids[s], q);
      }
  }

  // the join floods settle well before the phase ends; merged fragments adopt
  // the worst-case star bound for the next participation decision
  while (ctx.round() < phase_end - 1) {
    co_await ctx.until(phase_end - 1);
    for (const Message& m : ctx.inbox()) env.stray(m);
  }
  if (merged_this_phase) diam_bound = 3 * cap + 2;
  co_return Unit{};
}

// ---- step 3: Boruvka over the global tree, root-paced passes ----

struct RootFrag {
  bool inactive = false;  // components: lightest leaving edge is unmarked
  bool searching = false;
  CopySearch st;
  std::uint64_t chosen_code = 0;
  Weight chosen_w = 0;
  NodeId target = 0;
  bool confirmed = false;
};

Sub<Unit> PipelineProc::step3_root(ProtoEnv& env, const TreeInfo& gt, std::uint64_t hard) {
  Ctx& ctx = env.ctx;
  const bool dense = branch == "dense";
  const unsigned reps = std::min(params.sketch.reps(ctx.n()), 32u);
  const unsigned wbits = view.wbits;
  const unsigned vbits = view.vbits;
  const unsigned Lw = (wbits + kStep3Branch - 1) / kStep3Branch;
  const unsigned Lid = (2 * vbits + kStep3Branch - 1) / kStep3Branch;
  std::map<std::uint64_t, RootFrag> frags;
  std::uint64_t pass = 0;
  std::uint64_t iters = ceil_log2(ctx.n()) + (goal == Goal::cover ? 1 : 0);

  for (std::uint64_t it = 0; it < iters; ++it) {
    log_fragments();
    std::uint64_t seed = ctx.rng().next();
    std::map<std::uint64_t, PipeValue> up;

    if (dense) {
      for (unsigned lvl = 0; lvl < Lw; ++lvl) {
        std::vector<PipeItem> down;
        if (lvl > 0)
          for (auto& [tag, f] : frags)
            if (f.searching && f.st.phase == 0)
              down.push_back({tag, {f.st.prefix & ((1u << kStep3Branch) - 1), 0}});
        co_await root_send_pass(env, gt, pass, opWeightLevel, lvl, seed, down, vbits);
        std::vector<PipeItem> mine;
        for (const LocalCopy& c : view.copies) {
          CopySearch st;
          if (lvl == 0) {
            auto f = frags.find(c.fragment);
            if (f != frags.end() && f->second.inactive) continue;
            st.active = true;
            st.phase = 0;
            st.rem = wbits;
          } else {
            auto f = frags.find(c.fragment);
            if (f == frags.end() || !f->second.searching || f->second.st.phase != 0) continue;
            st = f->second.st;
          }
          unsigned step = std::min(kStep3Branch, st.rem);
          mine.push_back({c.fragment, pack_parities(level_parities(c, st, seed, lvl, step, reps))});
        }
        up = co_await root_collect_up(env, gt, pass, mine, Comb::xor_bits, hard);
        ++pass;
        if (lvl == 0) {
          for (auto& [tag, v] : up) {
            RootFrag& f = frags[tag];
            if (f.inactive) continue;
            f.searching = true;
            f.st = CopySearch{};
            f.st.active = true;
            f.st.rem = wbits;
          }
        }
        for (auto& [tag, f] : frags) {
          if (!f.searching || f.st.phase != 0) continue;
          unsigned step = std::min(kStep3Branch, f.st.rem);
          auto vec = unpack_parities(up.count(tag) ? up[tag] : PipeValue{0, 0}, 1u << step);
          std::int64_t choice = -1;
          for (unsigned i = 0; i < vec.size(); ++i)
            if (vec[i]) {
              choice = static_cast<std::int64_t>(i);
              break;
            }
          if (choice < 0) {
            f.searching = false;  // nothing detected leaving this fragment
            if (goal != Goal::mst) f.inactive = true;
          } else {
            f.st.prefix = (f.st.prefix << step) | static_cast<std::uint64_t>(choice);
            f.st.rem -= step;
          }
        }
      }
      for (auto& [tag, f] : frags) {
        if (!f.searching || f.st.phase != 0 || f.st.rem != 0) continue;
        f.st.wstar = f.st.prefix;
        if (goal != Goal::mst && f.st.wstar != 0) {
          f.searching = false;  // lightest leaving edge is unmarked: stop participating
          f.inactive = true;
          continue;
        }
        f.st.phase = 1;
        f.st.rem = 2 * vbits;
        f.st.prefix = 0;
      }
      for (unsigned lvl = 0; lvl < Lid; ++lvl) {
        std::vector<PipeItem> down;
        for (auto& [tag, f] : frags) {
          if (!f.searching || f.st.phase != 1) continue;
          if (lvl == 0)
            down.push_back({tag, {f.st.wstar, 1}});
          else
            down.push_back({tag, {f.st.prefix & ((1u << kStep3Branch) - 1), 0}});
        }
        co_await root_send_pass(env, gt, pass, opIdLevel, lvl, seed, down, vbits);
        std::vector<PipeItem> mine;
        for (const LocalCopy& c : view.copies) {
          auto f = frags.find(c.fragment);
          if (f == frags.end() || !f->second.searching || f->second.st.phase != 1) continue;
          unsigned step = std::min(kStep3Branch, f->second.st.rem);
          mine.push_back(
              {c.fragment, pack_parities(level_parities(c, f->second.st, seed, lvl, step, reps))});
        }
        up = co_await root_collect_up(env, gt, pass, mine, Comb::xor_bits, hard);
        ++pass;
        for (auto& [tag, f] : frags) {
          if (!f.searching || f.st.phase != 1) continue;
          unsigned step = std::min(kStep3Branch, f.st.rem);
          auto vec = unpack_parities(up.count(tag) ? up[tag] : PipeValue{0, 0}, 1u << step);
          std::int64_t choice = -1;
          for (unsigned i = 0; i < vec.size(); ++i)
            if (vec[i]) {
              choice = static_cast<std::int64_t>(i);
              break;
            }
          if (choice < 0) {
            f.searching = false;  // missed; retried next iteration
          } else {
            f.st.prefix = (f.st.prefix << step) | static_cast<std::uint64_t>(choice);
            f.st.rem -= step;
          }
        }
      }
      for (auto& [tag, f] : frags)
        if (f.searching && f.st.phase == 1 && f.st.rem == 0) {
          f.chosen_code = f.st.prefix;
          f.chosen_w = f.st.wstar;
        }
      if (trace_on())
        for (auto& [tag, f] : frags)
          std::fprintf(stderr, "[r%llu] it=%llu frag %llu: searching=%d wstar=%llu code=%llu\n",
                       (unsigned long long)ctx.round(), (unsigned long long)it,
                       (unsigned long long)tag, (int)f.searching,
                       (unsigned long long)f.st.wstar, (unsigned long long)f.chosen_code);
    } else {
      // sparse: one synchronized exchange resolves the exact MWOE per fragment
      std::uint64_t xround = ctx.round() + gt.height + 2;
      co_await root_send_pass(env, gt, pass, opExchange, 0, xround, {}, vbits);
      while (ctx.round() < xround) {
        co_await ctx.until(xround);
        for (const Message& m : ctx.inbox()) env.stray(m);
      }
      send_exchange(ctx);
      for (int k = 0; k < 2; ++k) {
        co_await ctx.step();
        for (const Message& m : ctx.inbox()) env.stray(m);
      }
      up = co_await root_collect_up(env, gt, pass, exchange_candidates(), Comb::min_pair, hard);
      ++pass;
      for (auto& [tag, v] : up) {
        RootFrag& f = frags[tag];
        if (f.inactive) continue;
        f.searching = true;
        f.chosen_w = v.first;
        f.chosen_code = v.second;
        if (goal != Goal::mst && f.chosen_w != 0) {
          f.searching = false;
          f.inactive = true;
          f.chosen_code = 0;
        }
      }
    }

    // confirmation across every candidate edge
    {
      std::vector<PipeItem> down;
      for (auto& [tag, f] : frags) {
        f.confirmed = false;
        if (f.searching && f.chosen_code) down.push_back({tag, {f.chosen_code, 0}});
      }
      co_await root_send_pass(env, gt, pass, opConfirm, 0, 0, down, vbits);
      std::vector<std::pair<std::uint64_t, std::uint64_t>> my_probes;  // (frag, code)
      for (const LocalCopy& c : view.copies) {
        auto f = frags.find(c.fragment);
        if (f == frags.end() || !f->second.searching || !f->second.chosen_code) continue;
        EdgeId ve = EdgeId::decode(f->second.chosen_code, vbits);
        if (!ve.incident(c.vid)) continue;
        for (const VirtEdge& e : c.edges)
          if (e.code == f->second.chosen_code) {
            Payload p(kProbe);
            p.push(e.code);
            p.bits = 2 * vbits;
            ctx.send(ctx.kt().neighbor_ids[e.slot], p);
            my_probes.push_back({c.fragment, e.code});
          }
      }
      std::vector<PipeItem> mine;
      std::vector<Message> prelude;
      auto stash = [&](const Message& m) {
        if ((m.payload.kind == kPipeData || m.payload.kind == kPipeDone) &&
            m.payload.field(0) == pass)
          prelude.push_back(m);
        else
          env.stray(m);
      };
      if (!my_probes.empty()) {
        co_await ctx.step();
        for (const Message& m : ctx.inbox()) stash(m);
        co_await ctx.step();
        for (const Message& m : ctx.inbox()) {
          if (m.payload.kind == kProbeReply) {
            for (auto& [frag, code] : my_probes)
              if (m.payload.field(0) == code && m.payload.field(1) != frag)
                mine.push_back({frag, {m.payload.field(1), code}});
          } else {
            stash(m);
          }
        }
      }
      up = co_await root_collect_up(env, gt, pass, mine, Comb::min_pair, hard, &prelude);
      ++pass;
      for (auto& [tag, v] : up) {
        auto f = frags.find(tag);
        if (f == frags.end()) continue;
        f->second.confirmed = true;
        f->second.target = v.first;
      }
      if (trace_on())
        for (auto& [tag, f] : frags)
          if (f.searching)
            std::fprintf(stderr, "[r%llu] it=%llu frag %llu: confirmed=%d target=%llu\n",
                         (unsigned long long)ctx.round(), (unsigned long long)it,
                         (unsigned long long)tag, (int)f.confirmed,
                         (unsigned long long)f.target);
    }

    // central merge bookkeeping, then the dictionary broadcast
    {
      std::map<std::uint64_t, std::uint64_t> parent;
      auto find_root = [&](std::uint64_t x) {
        while (parent.count(x) && parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
      };
      auto ensure = [&](std::uint64_t x) {
        if (!parent.count(x)) parent[x] = x;
      };
      FragmentSnapshot snap;
      for (auto& [tag, f] : frags)
        if (f.confirmed) {
          ensure(tag);
          ensure(f.target);
          std::uint64_t a = find_root(tag), b = find_root(f.target);
          if (a != b) parent[std::max(a, b)] = std::min(a, b);
          snap.adopted.push_back({EdgeId::decode(f.chosen_code, vbits), tag});
        }
      std::vector<PipeItem> dict;
      for (auto& [tag, f] : frags) {
        std::uint64_t nid = parent.count(tag) ? find_root(tag) : tag;
        if (nid != tag || f.confirmed)
          dict.push_back({tag, {nid, f.confirmed ? f.chosen_code : 0}});
      }
      root_adoptions.push_back(std::move(snap));
      co_await root_send_pass(env, gt, pass, opMerge, 0, 0, dict, vbits);
      ++pass;
      for (const PipeItem& d : dict) {
        for (LocalCopy& c : view.copies)
          if (c.fragment == d.tag) c.fragment = d.value.first;
        if (d.value.second && goal == Goal::mst) {
          EdgeId ve = EdgeId::decode(d.value.second, vbits);
          for (const LocalCopy& c : view.copies)
            if (ve.incident(c.vid))
              for (const VirtEdge& e : c.edges)
                if (e.code == d.value.second) mst_slot[e.slot] = 1;
        }
      }
      std::map<std::uint64_t, RootFrag> next;
      for (auto& [tag, f] : frags) {
        std::uint64_t nid = parent.count(tag) ? find_root(tag) : tag;
        RootFrag& nf = next[nid];
        nf.inactive = nf.inactive || f.inactive;
      }
      frags = std::move(next);
      for (auto& [tag, f] : frags) {
        f.searching = false;
        f.st = CopySearch{};
        f.chosen_code = 0;
        f.confirmed = false;
      }
    }
  }

  if (goal == Goal::mst) {
    co_await root_send_pass(env, gt, pass, opVerify, 0, 0, {}, vbits);
    std::uint64_t count = 0;
    for (std::size_t s = 0; s < mst_slot.size(); ++s)
      if (mst_slot[s] && ctx.self() < ctx.kt().neighbor_ids[s]) ++count;
    std::vector<PipeItem> mine{{1, {count, 0}}};
    auto up2 = co_await root_collect_up(env, gt, pass, mine, Comb::sum_pair, hard);
    ++pass;
    flagged = !(up2.count(1) && up2[1].first == ctx.n() - 1);
  }
  co_await root_send_pass(env, gt, pass, opExit, 0, 0, {}, vbits);
  labels.clear();
  for (const LocalCopy& c : view.copies) labels.push_back(c.fragment);
  co_return Unit{};
}

namespace {
void stash_or_stray(ProtoEnv& env, const Message& m, std::uint64_t pass,
                    std::vector<Message>& prelude) {
  if ((m.payload.kind == kPipeData || m.payload.kind == kPipeDone) && m.payload.field(0) == pass)
    prelude.push_back(m);
  else
    env.stray(m);
}
}  // namespace

Sub<Unit> PipelineProc::step3_member(ProtoEnv& env, const TreeInfo& gt, std::uint64_t hard) {
  Ctx& ctx = env.ctx;
  const unsigned reps = std::min(params.sketch.reps(ctx.n()), 32u);
  const unsigned vbits = view.vbits;
  const unsigned wbits = view.wbits;
  std::uint64_t pass = 0;
  std::map<std::uint64_t, CopySearch> search;  // keyed by fragment tag

  for (;;) {
    DownPass d = co_await member_recv_pass(env, gt, pass, vbits, hard);
    if (ctx.round() >= hard) co_return Unit{};
    std::vector<PipeItem> mine;
    std::vector<Message> prelude;
    Comb comb = Comb::xor_bits;
    bool has_up = true;

    switch (d.op) {
      case opWeightLevel: {
        if (d.aux == 0) {
          log_fragments();
          search.clear();
          for (const LocalCopy& c : view.copies) {
            CopySearch st;
            st.active = true;
            st.phase = 0;
            st.rem = wbits;
            search[c.fragment] = st;
          }
        } else {
          std::set<std::uint64_t> mentioned;
          for (const PipeItem& it : d.items) {
            mentioned.insert(it.tag);
            auto s = search.find(it.tag);
            if (s == search.end() || s->second.phase != 0) continue;
            unsigned step = std::min(kStep3Branch, s->second.rem);
            s->second.prefix = (s->second.prefix << step) | (it.value.first & ((1u << step) - 1));
            s->second.rem -= step;
          }
          for (auto& [tag, st] : search)
            if (st.phase == 0 && !mentioned.count(tag)) st.active = false;
        }
        for (const LocalCopy& c : view.copies) {
          auto s = search.find(c.fragment);
          if (s == search.end() || !s->second.active || s->second.phase != 0) continue;
          unsigned step = std::min(kStep3Branch, s->second.rem);
          mine.push_back({c.fragment, pack_parities(level_parities(
                                          c, s->second, d.arg, static_cast<unsigned>(d.aux), step,
                                          reps))});
        }
        break;
      }
      case opIdLevel: {
        std::set<std::uint64_t> mentioned;
        for (const PipeItem& it : d.items) {
          mentioned.insert(it.tag);
          auto s = search.find(it.tag);
          if (s == search.end()) continue;
          if (d.aux == 0 && it.value.second == 1) {
            s->second.wstar = it.value.first;
            s->second.phase = 1;
            s->second.rem = 2 * vbits;
            s->second.prefix = 0;
            s->second.active = true;
          } else if (s->second.phase == 1) {
            unsigned step = std::min(kStep3Branch, s->second.rem);
            s->second.prefix = (s->second.prefix << step) | (it.value.first & ((1u << step) - 1));
            s->second.rem -= step;
          }
        }
        for (auto& [tag, st] : search)
          if (st.phase == 1 && !mentioned.count(tag)) st.active = false;
        for (const LocalCopy& c : view.copies) {
          auto s = search.find(c.fragment);
          if (s == search.end() || !s->second.active || s->second.phase != 1) continue;
          unsigned step = std::min(kStep3Branch, s->second.rem);
          mine.push_back({c.fragment, pack_parities(level_parities(
                                          c, s->second, d.arg, static_cast<unsigned>(d.aux), step,
                                          reps))});
        }
        break;
      }
      case opExchange: {
        log_fragments();
        std::uint64_t xround = d.arg;
        while (ctx.round() < xround) {
          co_await ctx.until(xround);
          for (const Message& m : ctx.inbox()) env.stray(m);
        }
        send_exchange(ctx);
        for (int k = 0; k < 2; ++k) {
          co_await ctx.step();
          for (const Message& m : ctx.inbox()) env.stray(m);
        }
        mine = exchange_candidates();
        comb = Comb::min_pair;
        break;
      }
      case opConfirm: {
        comb = Comb::min_pair;
        std::vector<std::pair<std::uint64_t, std::uint64_t>> my_probes;
        for (const PipeItem& it : d.items) {
          for (const LocalCopy& c : view.copies) {
            if (c.fragment != it.tag) continue;
            std::uint64_t code = it.value.first;
            EdgeId ve = EdgeId::decode(code, vbits);
            if (!ve.incident(c.vid)) continue;
            for (const VirtEdge& e : c.edges)
              if (e.code == code) {
                Payload p(kProbe);
                p.push(code);
                p.bits = 2 * vbits;
                ctx.send(ctx.kt().neighbor_ids[e.slot], p);
                my_probes.push_back({c.fragment, code});
              }
          }
        }
        if (!my_probes.empty()) {
          co_await ctx.step();
          for (const Message& m : ctx.inbox()) stash_or_stray(env, m, pass, prelude);
          co_await ctx.step();
          for (const Message& m : ctx.inbox()) {
            if (m.payload.kind == kProbeReply) {
              for (auto& [frag, code] : my_probes)
                if (m.payload.field(0) == code && m.payload.field(1) != frag)
                  mine.push_back({frag, {m.payload.field(1), code}});
            } else {
              stash_or_stray(env, m, pass, prelude);
            }
          }
        }
        break;
      }
      case opMerge: {
        has_up = false;
        for (const PipeItem& it : d.items) {
          for (LocalCopy& c : view.copies)
            if (c.fragment == it.tag) c.fragment = it.value.first;
          if (it.value.second && goal == Goal::mst) {
            EdgeId ve = EdgeId::decode(it.value.second, vbits);
            for (const LocalCopy& c : view.copies)
              if (ve.incident(c.vid))
                for (const VirtEdge& e : c.edges)
                  if (e.code == it.value.second) mst_slot[e.slot] = 1;
          }
        }
        break;
      }
      case opVerify: {
        comb = Comb::sum_pair;
        std::uint64_t count = 0;
        for (std::size_t s = 0; s < mst_slot.size(); ++s)
          if (mst_slot[s] && ctx.self() < ctx.kt().neighbor_ids[s]) ++count;
        mine.push_back({1, {count, 0}});
        break;
      }
      case opExit: {
        labels.clear();
        for (const LocalCopy& c : view.copies) labels.push_back(c.fragment);
        co_return Unit{};
      }
    }

    if (has_up)
      co_await member_send_up(env, gt, pass, std::move(mine), comb, vbits, hard, &prelude);
    ++pass;
  }
}

ProcTask PipelineProc::run(Ctx& ctx) {
  const Kt1Knowledge& kt = ctx.kt();
  const std::uint64_t n = ctx.n();
  const std::size_t deg = kt.neighbor_ids.size();
  mst_slot.assign(deg, 0);
  ghs_tree_slot.assign(deg, 0);
  exchange_cache.assign(deg, {0, 0});
  view = build_view(ctx, goal, marked_slots);
  frag2 = kt.self;

  ProtoEnv env(ctx, [this, &ctx](const Message& m) { handle_stray(ctx, m); });

  // ---- step 1: danner backbone, leader, global BFS tree, edge count ----
  DannerParams dp = params.danner;
  dp.delta = params.delta;
  dp.sketch = params.sketch;
  DannerLocal danner = co_await danner_stage(env, dp);
  std::uint64_t after_danner = danner_schedule_end(dp, n) + 1;
  while (ctx.round() < after_danner) {
    co_await ctx.until(after_danner);
    for (const Message& m : ctx.inbox()) env.stray(m);
  }

  ctx.set_phase("backbone");
  std::uint64_t elect_deadline = after_danner + 2 * n + 3;
  ElectOutcome leader = co_await elect_leader_stage(env, danner.h_edge, elect_deadline);
  TreeInfo gt = co_await bfs_tree_stage(env, danner.h_edge, leader.is_leader, elect_deadline,
                                        true, elect_deadline + 4 * n + 16);

  std::uint64_t sum_start = ctx.round();
  std::uint64_t mult_deg = 0;
  for (std::uint32_t mult : kt.neighbor_multiplicities) mult_deg += mult;
  std::vector<PipeItem> deg_item{{1, {mult_deg, 0}}};
  ConvergeOut sum = co_await pipelined_convergecast_stage(env, gt, deg_item, Comb::sum_pair,
                                                          sum_start, 2 * 64, 1,
                                                          sum_start + gt.height + 8);
  std::vector<PipeItem> decision;
  if (gt.is_root) {
    std::uint64_t m_total = sum.combined.count(1) ? sum.combined[1].first / 2 : 0;
    bool dense =
        static_cast<double>(m_total) > std::pow(static_cast<double>(n), 1.0 + params.delta);
    decision.push_back({1, {m_total, dense ? 1u : 0u}});
  }
  auto got = co_await pipelined_broadcast_stage(env, gt, decision, ctx.round(), 2 * 64 + 2, 1,
                                                ctx.round() + gt.height + 8);
  bool dense = !got.empty() && got[0].value.second == 1;
  branch = dense ? "dense" : "sparse";

  // ---- step 2: controlled merging (real MST only) ----
  if (goal == Goal::mst) {
    ctx.set_phase("controlled-ghs");
    std::uint64_t max_iters = params.ghs_iterations(n);
    if (!dense)
      max_iters =
          static_cast<std::uint64_t>(std::ceil(0.5 * std::log2(static_cast<double>(n))));
    std::uint64_t phase_start = ctx.round() + 2;
    for (std::uint64_t i = 1; i <= max_iters; ++i) {
      log_fragments();
      step2_adopt.push_back({});
      std::uint64_t cap = std::uint64_t{1} << i;
      std::uint64_t budget =
          3 + (3 * cap + 12) +
          (dense
               ? find_min_span(n, ctx.id_bits(), static_cast<std::uint32_t>(cap), params.sketch) + 4
               : 6 * (cap + 10)) +
          3 + 2 * cap + 20;
      co_await step2_phase(env, i, phase_start, budget, dense);
      phase_start += budget;
    }
    view.copies[0].fragment = frag2;
    while (ctx.round() < phase_start) {
      co_await ctx.until(phase_start);
      for (const Message& m : ctx.inbox()) env.stray(m);
    }
  }

  // ---- step 3: global Boruvka over the tree ----
  ctx.set_phase("global-merge");
  std::uint64_t hard = ctx.round() + 400 * (n + 64) * (ceil_log2(n) + 2);
  if (gt.is_root)
    co_await step3_root(env, gt, hard);
  else
    co_await step3_member(env, gt, hard);
  co_return;
}

// ---- drivers ----

EngineOptions pipeline_opts(const RunConfig& cfg, const Graph& g, const MstParams& params) {
  EngineOptions o;
  o.kappa = cfg.kappa;
  o.mode = cfg.mode;
  o.shared_seed = cfg.seed;
  std::uint64_t n = g.node_count();
  DannerParams dp = params.danner;
  dp.delta = params.delta;
  o.round_limit = danner_schedule_end(dp, n) + 500 * (n + 64) * (ceil_log2(n) + 2);
  return o;
}

MstResult mst_run(const Graph& g, const MstParams& params, std::uint64_t seed,
                  const RunConfig& cfg) {
  RunConfig c = cfg;
  c.seed = seed;
  Engine eng(g, pipeline_opts(c, g, params));
  auto run = eng.run([&](const Kt1Knowledge& kt) {
    std::vector<char> marks(g.neighbors(g.index_of(kt.self)).size(), 1);
    return std::make_unique<PipelineProc>(params, Goal::mst, marks);
  });

  MstResult out;
  out.metrics = run.metrics;
  out.timed_out = run.timed_out;
  out.mst_edges.assign(g.edge_count(), 0);
  out.ghs_tree_edges.assign(g.edge_count(), 0);
  std::size_t n = g.node_count();
  std::vector<PipelineProc*> procs(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    procs[i] = dynamic_cast<PipelineProc*>(run.procs[i].get());
    auto nbrs = g.neighbors(i);
    for (std::size_t s = 0; s < nbrs.size(); ++s) {
      if (procs[i]->mst_slot[s]) out.mst_edges[nbrs[s].edge_index] = 1;
      if (procs[i]->ghs_tree_slot[s]) out.ghs_tree_edges[nbrs[s].edge_index] = 1;
    }
    if (!procs[i]->branch.empty()) out.branch = procs[i]->branch;
    out.flagged = out.flagged || procs[i]->flagged;
  }
  for (std::uint32_t e = 0; e < g.edge_count(); ++e)
    if (out.mst_edges[e]) out.weight_total += g.edge(e).weight;

  // assemble merge-wave snapshots: step-2 phases then step-3 iterations
  std::size_t waves = procs[0]->frag_log.size();
  for (std::size_t w = 0; w < waves; ++w) {
    FragmentSnapshot snap;
    snap.fragment_of.resize(n);
    bool complete = true;
    for (std::uint32_t i = 0; i < n; ++i) {
      if (w >= procs[i]->frag_log.size() || procs[i]->frag_log[w].empty()) {
        complete = false;
        break;
      }
      snap.fragment_of[i] = procs[i]->frag_log[w][0];
    }
    if (!complete) break;
    for (std::uint32_t i = 0; i < n; ++i)
      if (w < procs[i]->step2_adopt.size())
        for (auto& a : procs[i]->step2_adopt[w]) snap.adopted.push_back(a);
    out.history.push_back(std::move(snap));
  }
  std::uint64_t ghs_waves = 0;
  for (std::uint32_t i = 0; i < n; ++i)
    ghs_waves = std::max<std::uint64_t>(ghs_waves, procs[i]->step2_adopt.size());
  for (std::uint32_t i = 0; i < n; ++i) {
    if (procs[i]->root_adoptions.empty()) continue;
    for (std::size_t j = 0; j < procs[i]->root_adoptions.size(); ++j) {
      std::size_t w = ghs_waves + j;
      if (w < out.history.size())
        for (auto& a : procs[i]->root_adoptions[j].adopted) out.history[w].adopted.push_back(a);
    }
  }
  if (ghs_waves < out.history.size()) {
    std::set<NodeId> frags(out.history[ghs_waves].fragment_of.begin(),
                           out.history[ghs_waves].fragment_of.end());
    out.ghs_fragment_count = frags.size();
  }
  return out;
}

}  // namespace

MstResult mst(const Graph& g, const MstParams& params, std::uint64_t seed, const RunConfig& cfg) {
  if (params.delta < 0.0 || params.delta > 0.5)
    throw std::invalid_argument("mst requires delta in [0, 0.5]");
  return mst_run(g, params, seed, cfg);
}

GhsResult controlled_ghs(const Graph& g, std::uint64_t max_iters, const MstParams& params,
                         std::uint64_t seed, const RunConfig& cfg) {
  GhsResult out;
  std::uint64_t n = g.node_count();
  if (max_iters == 0) {
    out.fragment_of.resize(n);
    for (std::uint32_t i = 0; i < n; ++i) out.fragment_of[i] = g.id_of(i);
    out.tree_edges.assign(g.edge_count(), 0);
    out.fragment_count = n;
    return out;
  }
  MstParams p = params;
  double lg = std::log2(static_cast<double>(n));
  p.delta = std::max(0.0, 1.0 - static_cast<double>(max_iters) / lg);
  MstResult full = mst_run(g, p, seed, cfg);
  out.metrics = full.metrics;
  out.tree_edges = full.ghs_tree_edges;
  out.history = full.history;
  std::uint64_t ghs_waves = p.ghs_iterations(n);
  if (ghs_waves < full.history.size())
    out.fragment_of = full.history[ghs_waves].fragment_of;
  else if (!full.history.empty())
    out.fragment_of = full.history.back().fragment_of;
  std::set<NodeId> frags(out.fragment_of.begin(), out.fragment_of.end());
  out.fragment_count = frags.size();
  return out;
}

namespace {

template <class Result>
Result run_components_like(const Graph& g, const std::vector<char>& subgraph_edges,
                           const MstParams& params, std::uint64_t seed, const RunConfig& cfg,
                           Goal goal) {
  RunConfig c = cfg;
  c.seed = seed;
  Engine eng(g, pipeline_opts(c, g, params));
  auto run = eng.run([&](const Kt1Knowledge& kt) {
    std::uint32_t i = g.index_of(kt.self);
    auto nbrs = g.neighbors(i);
    std::vector<char> marks(nbrs.size(), 0);
    for (std::size_t s = 0; s < nbrs.size(); ++s) marks[s] = subgraph_edges[nbrs[s].edge_index];
    return std::make_unique<PipelineProc>(params, goal, marks);
  });
  Result out;
  out.metrics = run.metrics;
  out.timed_out = run.timed_out;
  std::size_t n = g.node_count();
  if constexpr (std::is_same_v<Result, ComponentsResult>) {
    out.labels.resize(n);
    for (std::uint32_t i = 0; i < n; ++i) {
      auto* p = dynamic_cast<PipelineProc*>(run.procs[i].get());
      out.labels[i] = p->labels.empty() ? 0 : p->labels[0];
      if (!p->branch.empty()) out.branch = p->branch;
    }
  } else {
    out.labels0.resize(n);
    out.labels1.resize(n);
    for (std::uint32_t i = 0; i < n; ++i) {
      auto* p = dynamic_cast<PipelineProc*>(run.procs[i].get());
      out.labels0[i] = p->labels.size() > 0 ? p->labels[0] : 0;
      out.labels1[i] = p->labels.size() > 1 ? p->labels[1] : 0;
    }
  }
  return out;
}

}  // namespace

ComponentsResult connected_components(const Graph& g, const std::vector<char>& subgraph_edges,
                                      const MstParams& params, std::uint64_t seed,
                                      const RunConfig& cfg) {
  return run_components_like<ComponentsResult>(g, subgraph_edges, params, seed, cfg,
                                               Goal::components);
}

DoubleCoverResult double_cover_components(const Graph& g, const std::vector<char>& subgraph_edges,
                                          const MstParams& params, std::uint64_t seed,
                                          const RunConfig& cfg) {
  return run_components_like<DoubleCoverResult>(g, subgraph_edges, params, seed, cfg, Goal::cover);
}

bool cut_property_audit(const Graph& g, const std::vector<FragmentSnapshot>& history) {
  for (const FragmentSnapshot& snap : history) {
    if (snap.fragment_of.empty()) continue;
    for (auto& [edge, frag] : snap.adopted) {
      Weight best = ~Weight{0};
      EdgeId best_edge;
      for (const Edge& e : g.edges()) {
        bool a = snap.fragment_of[g.index_of(e.id.lo)] == frag;
        bool b = snap.fragment_of[g.index_of(e.id.hi)] == frag;
        if (a == b) continue;
        if (e.weight < best) {
          best = e.weight;
          best_edge = e.id;
        }
      }
      if (!(best_edge == edge)) return false;
    }
  }
  return true;
}

nlohmann::json mst_summary(const Graph& g, const MstParams& params, const MstResult& result,
                           bool oracle_match) {
  nlohmann::json j;
  j["n"] = g.node_count();
  j["m"] = g.edge_count_with_multiplicity();
  auto d = oracle_diameter(g);
  j["D"] = d ? nlohmann::json(*d) : nlohmann::json(nullptr);
  j["delta"] = params.delta;
  j["branch"] = result.branch;
  j["weight_total"] = result.weight_total;
  j["rounds"] = result.metrics.rounds;
  j["messages"] = result.metrics.messages;
  j["oracle_match"] = oracle_match;
  return j;
}

}  // namespace dsim
