#pragma once

#include <array>
#include <bit>
#include <coroutine>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dsim/graph.hpp"
#include "dsim/rng.hpp"

namespace dsim {

inline unsigned ceil_log2(std::uint64_t n) {
  return n <= 2 ? 1u : static_cast<unsigned>(std::bit_width(n - 1));
}

// One CONGEST message carries B = kappa * ceil(log2 n) bits; a payload of
// `bits` bits meters as ceil(bits / B) messages.
inline std::uint32_t block_bits(std::uint64_t n, std::uint32_t kappa = 4) {
  return kappa * ceil_log2(n);
}
inline std::uint64_t meter_payload(std::uint64_t bits, std::uint64_t n, std::uint32_t kappa = 4) {
  std::uint32_t b = block_bits(n, kappa);
  return (bits + b - 1) / b;
}

// Exactly the KT1 inputs: own id, neighbor ids, incident weights (and
// multiplicities in multigraph mode), plus the public model parameters n and
// the identifier universe. Constructing it costs no metered messages.
struct Kt1Knowledge {
  NodeId self = 0;
  std::vector<NodeId> neighbor_ids;  // sorted
  std::vector<Weight> neighbor_weights;
  std::vector<std::uint32_t> neighbor_multiplicities;
  std::uint64_t n = 0;
  std::uint64_t id_space = 0;
  unsigned id_bits = 0;

  bool knows_neighbor(NodeId id) const;
  std::size_t neighbor_slot(NodeId id) const;  // throws if not a neighbor
};

// Typed payload: a kind tag plus up to a few 64-bit fields; `bits` is the
// exact metered size, set by the sender from its protocol's field widths.
struct Payload {
  static constexpr unsigned kInline = 5;

  std::uint16_t kind = 0;
  std::uint16_t count = 0;
  std::uint32_t bits = 0;
  std::array<std::uint64_t, kInline> f{};
  std::shared_ptr<std::vector<std::uint64_t>> spill;

  Payload() = default;
  explicit Payload(std::uint16_t k) : kind(k) {}

  void push(std::uint64_t v) {
    if (count < kInline) {
      f[count] = v;
    } else {
      if (!spill) spill = std::make_shared<std::vector<std::uint64_t>>();
      spill->push_back(v);
    }
    ++count;
  }
  std::uint64_t field(unsigned i) const {
    return i < kInline ? f[i] : (*spill)[i - kInline];
  }
};

struct Message {
  NodeId src = 0;
  NodeId dst = 0;
  Payload payload;
};

struct PhaseMetrics {
  std::uint64_t rounds = 0;
  std::uint64_t messages = 0;
};

struct Metrics {
  std::uint64_t rounds = 0;
  std::uint64_t messages = 0;
  std::map<std::string, PhaseMetrics> per_phase;
};

nlohmann::json metrics_to_json(const Metrics& m);

class SimFault : public std::runtime_error {
 public:
  SimFault(std::string what, NodeId node) : std::runtime_error(std::move(what)), node_(node) {}
  NodeId node() const { return node_; }

 private:
  NodeId node_;
};

class Engine;
class Ctx;

// Root coroutine of a node program. The engine drives it one resume per
// active round; returning from the coroutine signals local termination.
struct ProcTask {
  struct promise_type {
    std::exception_ptr exception;
    ProcTask get_return_object() {
      return ProcTask{std::coroutine_handle<promise_type>::from_promise(*this)};
    }
    std::suspend_always initial_suspend() noexcept { return {}; }
    std::suspend_always final_suspend() noexcept { return {}; }
    void return_void() {}
    void unhandled_exception() { exception = std::current_exception(); }
  };

  std::coroutine_handle<promise_type> handle;

  ProcTask() = default;
  explicit ProcTask(std::coroutine_handle<promise_type> h) : handle(h) {}
  ProcTask(ProcTask&& o) noexcept : handle(o.handle) { o.handle = {}; }
  ProcTask& operator=(ProcTask&& o) noexcept {
    if (this != &o) {
      if (handle) handle.destroy();
      handle = o.handle;
      o.handle = {};
    }
    return *this;
  }
  ProcTask(const ProcTask&) = delete;
  ProcTask& operator=(const ProcTask&) = delete;
  ~ProcTask() {
    if (handle) handle.destroy();
  }
};

namespace detail {
struct NodeRt;
}

// Awaitable subtask sharing the parent's Ctx. The child runs immediately on
// await; when it suspends on a round awaiter the engine resumes it directly,
// and on completion control transfers back to the parent.
template <class T>
class Sub {
 public:
  struct promise_type {
    T value{};
    std::exception_ptr exception;
    std::coroutine_handle<> continuation;

    struct Fin {
      bool await_ready() const noexcept { return false; }
      std::coroutine_handle<> await_suspend(std::coroutine_handle<promise_type> h) const noexcept {
        auto cont = h.promise().continuation;
        return cont ? cont : std::noop_coroutine();
      }
      void await_resume() const noexcept {}
    };

    Sub get_return_object() {
      return Sub{std::coroutine_handle<promise_type>::from_promise(*this)};
    }
    std::suspend_always initial_suspend() noexcept { return {}; }
    Fin final_suspend() noexcept { return {}; }
    void return_value(T v) { value = std::move(v); }
    void unhandled_exception() { exception = std::current_exception(); }
  };

  explicit Sub(std::coroutine_handle<promise_type> h) : handle_(h) {}
  Sub(Sub&& o) noexcept : handle_(o.handle_) { o.handle_ = {}; }
  Sub(const Sub&) = delete;
  ~Sub() {
    if (handle_) handle_.destroy();
  }

  bool await_ready() const noexcept { return false; }
  std::coroutine_handle<> await_suspend(std::coroutine_handle<> parent) noexcept {
    handle_.promise().continuation = parent;
    return handle_;
  }
  T await_resume() {
    if (handle_.promise().exception) std::rethrow_exception(handle_.promise().exception);
    return std::move(handle_.promise().value);
  }

 private:
  std::coroutine_handle<promise_type> handle_;
};

struct Unit {};
using SubVoid = Sub<Unit>;

namespace detail {

struct NodeRt {
  std::uint32_t index = 0;
  Kt1Knowledge kt;
  Rng rng;
  std::vector<Message> inbox;
  std::vector<Message> outbox;
  ProcTask task;                   // root coroutine
  std::unique_ptr<Ctx> ctx;
  std::coroutine_handle<> active;  // handle to resume next
  std::exception_ptr fault;
  std::uint64_t wake_at = 0;  // resume when round >= wake_at or inbox nonempty
  bool done = false;
  bool phase_requested = false;
  std::string phase_request;
};

}  // namespace detail

class Ctx {
 public:
  Ctx(Engine* e, detail::NodeRt* n) : engine_(e), node_(n) {}

  const Kt1Knowledge& kt() const { return node_->kt; }
  NodeId self() const { return node_->kt.self; }
  std::uint64_t n() const { return node_->kt.n; }
  unsigned id_bits() const { return node_->kt.id_bits; }
  std::uint32_t block_bits() const;
  std::uint64_t round() const;
  Rng& rng() { return node_->rng; }
  std::span<const Message> inbox() const { return node_->inbox; }

  // Sending to a non-neighbor is a hard fault attributed to this node.
  void send(NodeId dst, Payload p);

  // Attributes this round (and onward, until the next change) to `label`.
  void set_phase(std::string_view label);

  struct RoundAwait {
    Ctx* ctx;
    std::uint64_t target;
    bool await_ready() const noexcept;
    void await_suspend(std::coroutine_handle<> h) noexcept;
    void await_resume() const noexcept {}
  };

  // Wake at round `r`, or earlier on any incoming message. Ready immediately
  // when `r` is not in the future.
  RoundAwait until(std::uint64_t r) { return RoundAwait{this, r}; }
  RoundAwait step();  // until(round() + 1)

 private:
  friend class Engine;
  Engine* engine_;
  detail::NodeRt* node_;
};

class Proc {
 public:
  virtual ~Proc() = default;
  virtual ProcTask run(Ctx& ctx) = 0;
};

using ProcPtr = std::unique_ptr<Proc>;
using ProgramFactory = std::function<ProcPtr(const Kt1Knowledge&)>;

enum class EngineMode { naive_serial, event_serial, event_parallel };

struct EngineOptions {
  std::uint32_t kappa = 4;
  std::uint64_t round_limit = 1u << 24;
  EngineMode mode = EngineMode::event_serial;
  std::uint64_t shared_seed = 0;
};

struct RunResult {
  Metrics metrics;
  bool timed_out = false;
  std::uint64_t raw_sent = 0;       // Message count, unmetered
  std::uint64_t raw_delivered = 0;  // delivered into inboxes
  std::uint64_t raw_residual = 0;   // in flight when the run ended
  std::vector<ProcPtr> procs;       // per-node final state, node-index order
};

// Synchronous rounds: messages sent during round r are delivered at the start
// of round r+1. The run ends after the first round at whose end every program
// has returned. Fully deterministic given (graph, factory, options), in every
// engine mode.
class Engine {
 public:
  Engine(const Graph& g, EngineOptions opts);
  RunResult run(const ProgramFactory& factory);

 private:
  friend class Ctx;
  friend struct Ctx::RoundAwait;
  template <class T>
  friend class Sub;

  void run_loop(std::vector<std::uint32_t>& ready, RunResult& result);
  void deliver_round();
  void merge_outboxes();
  void apply_phase_requests();
  void account_rounds(std::uint64_t upto);

  const Graph& graph_;
  EngineOptions opts_;
  std::uint64_t round_ = 0;
  std::uint64_t accounted_round_ = 0;
  std::vector<detail::NodeRt> nodes_;
  std::vector<std::vector<Message>> pending_;  // per dst, for next round
  std::uint64_t in_flight_ = 0;
  Metrics metrics_;
  std::string phase_ = "main";
  std::uint64_t round_messages_ = 0;  // metered blocks sent this round
  RunResult* result_ = nullptr;
};

}  // namespace dsim
