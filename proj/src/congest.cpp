#include "dsim/congest.hpp"

#include <algorithm>
#include <omp.h>

namespace dsim {

bool Kt1Knowledge::knows_neighbor(NodeId id) const {
  return std::binary_search(neighbor_ids.begin(), neighbor_ids.end(), id);
}

std::size_t Kt1Knowledge::neighbor_slot(NodeId id) const {
  auto it = std::lower_bound(neighbor_ids.begin(), neighbor_ids.end(), id);
  if (it == neighbor_ids.end() || *it != id) throw std::out_of_range("not a neighbor");
  return static_cast<std::size_t>(it - neighbor_ids.begin());
}

nlohmann::json metrics_to_json(const Metrics& m) {
  nlohmann::json phases = nlohmann::json::object();
  for (const auto& [label, pm] : m.per_phase)
    phases[label] = {{"rounds", pm.rounds}, {"messages", pm.messages}};
  return {{"rounds", m.rounds}, {"messages", m.messages}, {"phases", phases}};
}

std::uint32_t Ctx::block_bits() const {
  return dsim::block_bits(node_->kt.n, engine_->opts_.kappa);
}

std::uint64_t Ctx::round() const { return engine_->round_; }

void Ctx::send(NodeId dst, Payload p) {
  if (!node_->kt.knows_neighbor(dst))
    throw SimFault("node " + std::to_string(node_->kt.self) + " sent to non-neighbor " +
                       std::to_string(dst),
                   node_->kt.self);
  node_->outbox.push_back(Message{node_->kt.self, dst, std::move(p)});
}

void Ctx::set_phase(std::string_view label) {
  node_->phase_requested = true;
  node_->phase_request.assign(label);
}

bool Ctx::RoundAwait::await_ready() const noexcept { return ctx->engine_->round_ >= target; }

void Ctx::RoundAwait::await_suspend(std::coroutine_handle<> h) noexcept {
  ctx->node_->active = h;
  ctx->node_->wake_at = target;
}

Ctx::RoundAwait Ctx::step() { return RoundAwait{this, engine_->round_ + 1}; }

Engine::Engine(const Graph& g, EngineOptions opts) : graph_(g), opts_(opts) {
  if (opts_.round_limit == 0) throw std::invalid_argument("round_limit must be positive");
}

namespace {

void step_node(detail::NodeRt& rt) {
  rt.active.resume();
  if (rt.task.handle.done()) {
    rt.done = true;
    rt.fault = rt.task.handle.promise().exception;
  }
}

}  // namespace

void Engine::deliver_round() {
  for (auto& rt : nodes_) {
    rt.inbox.clear();
    auto& pend = pending_[rt.index];
    if (!pend.empty()) {
      in_flight_ -= pend.size();
      result_->raw_delivered += pend.size();
      rt.inbox.swap(pend);
    }
  }
}

void Engine::merge_outboxes() {
  std::uint64_t n = graph_.node_count();
  for (std::uint64_t i = 0; i < n; ++i) {
    auto& out = nodes_[i].outbox;
    for (Message& msg : out) {
      std::uint64_t blocks = meter_payload(msg.payload.bits, n, opts_.kappa);
      metrics_.messages += blocks;
      metrics_.per_phase[phase_].messages += blocks;
      ++result_->raw_sent;
      ++in_flight_;
      pending_[graph_.index_of(msg.dst)].push_back(std::move(msg));
    }
    out.clear();
  }
}

void Engine::apply_phase_requests() {
  bool any = false;
  for (auto& rt : nodes_) {
    if (!rt.phase_requested) continue;
    if (any && rt.phase_request != phase_)
      throw SimFault("conflicting phase labels in one round: " + phase_ + " vs " + rt.phase_request,
                     rt.kt.self);
    phase_ = rt.phase_request;
    any = true;
    rt.phase_requested = false;
  }
}

void Engine::account_rounds(std::uint64_t upto) {
  if (upto <= accounted_round_) return;
  metrics_.per_phase[phase_].rounds += upto - accounted_round_;
  accounted_round_ = upto;
}

RunResult Engine::run(const ProgramFactory& factory) {
  std::size_t n = graph_.node_count();
  RunResult result;
  result_ = &result;

  nodes_.clear();
  nodes_.resize(n);  // no resizing past this point; coroutines hold NodeRt pointers
  pending_.assign(n, {});
  round_ = 0;
  accounted_round_ = 0;
  in_flight_ = 0;
  metrics_ = {};
  phase_ = "main";

  for (std::uint32_t i = 0; i < n; ++i) {
    detail::NodeRt& rt = nodes_[i];
    rt.index = i;
    rt.kt.self = graph_.id_of(i);
    for (const Adjacent& a : graph_.neighbors(i)) {
      const Edge& e = graph_.edge(a.edge_index);
      rt.kt.neighbor_ids.push_back(a.neighbor);
      rt.kt.neighbor_weights.push_back(e.weight);
      rt.kt.neighbor_multiplicities.push_back(e.multiplicity);
    }
    rt.kt.n = n;
    rt.kt.id_space = graph_.id_space();
    rt.kt.id_bits = graph_.id_bits();
    rt.rng = Rng(opts_.shared_seed, rt.kt.self);
    rt.ctx = std::make_unique<Ctx>(this, &rt);
  }
  result.procs.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    result.procs[i] = factory(nodes_[i].kt);
    nodes_[i].task = result.procs[i]->run(*nodes_[i].ctx);
    nodes_[i].active = nodes_[i].task.handle;
    nodes_[i].wake_at = 1;
  }

  std::vector<std::uint32_t> ready;
  try {
    run_loop(ready, result);
  } catch (...) {
    for (auto& rt : nodes_) {
      rt.task = ProcTask{};
      rt.ctx.reset();
    }
    nodes_.clear();
    pending_.clear();
    result_ = nullptr;
    throw;
  }

  result.raw_residual = in_flight_;
  result.metrics = metrics_;

  // Tear down coroutine frames before handing the procs back.
  for (auto& rt : nodes_) {
    rt.task = ProcTask{};
    rt.ctx.reset();
  }
  nodes_.clear();
  pending_.clear();
  result_ = nullptr;
  return result;
}

void Engine::run_loop(std::vector<std::uint32_t>& ready, RunResult& result) {
  for (;;) {
    std::uint64_t next = round_ + 1;
    if (opts_.mode != EngineMode::naive_serial && in_flight_ == 0) {
      std::uint64_t min_wake = ~std::uint64_t{0};
      for (const auto& rt : nodes_)
        if (!rt.done) min_wake = std::min(min_wake, rt.wake_at);
      if (min_wake == ~std::uint64_t{0})
        throw SimFault("deadlock: every program is waiting and no message is in flight", 0);
      next = std::max(next, min_wake);
    }
    if (next > opts_.round_limit) {
      account_rounds(opts_.round_limit);
      metrics_.rounds = opts_.round_limit;
      result.timed_out = true;
      break;
    }
    round_ = next;
    deliver_round();

    ready.clear();
    for (const auto& rt : nodes_)
      if (!rt.done && (rt.wake_at <= round_ || !rt.inbox.empty())) ready.push_back(rt.index);

    if (opts_.mode == EngineMode::event_parallel && ready.size() > 1) {
      std::int64_t rn = static_cast<std::int64_t>(ready.size());
#pragma omp parallel for schedule(dynamic, 16)
      for (std::int64_t k = 0; k < rn; ++k) step_node(nodes_[ready[k]]);
    } else {
      for (std::uint32_t i : ready) step_node(nodes_[i]);
    }
    for (std::uint32_t i : ready)
      if (nodes_[i].fault) std::rethrow_exception(nodes_[i].fault);

    account_rounds(round_ - 1);  // idle span before this round keeps the old phase
    apply_phase_requests();
    account_rounds(round_);
    merge_outboxes();

    bool all_done = true;
    for (const auto& rt : nodes_)
      if (!rt.done) {
        all_done = false;
        break;
      }
    if (all_done) {
      metrics_.rounds = round_;
      break;
    }
  }
}

}  // namespace dsim
