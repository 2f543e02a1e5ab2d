#pragma once

#include <cstdint>
#include <functional>
#include <queue>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

#include "edgesim/trace.hpp"
#include "edgesim/time.hpp"

namespace edgesim {

enum class EventKind : std::uint8_t {
  kPacketArrival,
  kTimerExpiry,
  kScriptedAction,
};

using EventHandle = std::uint64_t;

struct Event {
  SimTime fire_time = 0;
  NodeId target = kNoNode;
  EventKind kind = EventKind::kTimerExpiry;
  std::function<void()> action;
};

// Single-threaded discrete-event loop. Events with equal fire time are
// processed in insertion order.
class Engine {
 public:
  explicit Engine(std::uint64_t seed = 0) : rng_(seed), seed_(seed) {}

  SimTime now() const { return now_; }
  std::uint64_t seed() const { return seed_; }
  std::mt19937_64& rng() { return rng_; }

  EventHandle schedule(Event ev) {
    if (ev.fire_time < now_) {
      throw std::invalid_argument("event scheduled in the past");
    }
    EventHandle h = next_seqno_++;
    queue_.push(Scheduled{ev.fire_time, h, ev.target, ev.kind, std::move(ev.action)});
    return h;
  }

  EventHandle schedule_at(SimTime t, EventKind kind, NodeId target,
                          std::function<void()> action) {
    return schedule(Event{t, target, kind, std::move(action)});
  }

  EventHandle schedule_in(SimTime delay, EventKind kind, NodeId target,
                          std::function<void()> action) {
    return schedule_at(now_ + delay, kind, target, std::move(action));
  }

  // Processes all events with fire_time <= t_end, in (time, insertion) order.
  // Returns the accumulated trace.
  const std::vector<TraceRecord>& run_until(SimTime t_end) {
    while (!queue_.empty() && queue_.top().t <= t_end) {
      Scheduled ev = std::move(const_cast<Scheduled&>(queue_.top()));
      queue_.pop();
      now_ = ev.t;
      ev.action();
    }
    if (t_end > now_) now_ = t_end;
    return trace_;
  }

  bool idle() const { return queue_.empty(); }

  void set_trace_filter(TraceFilter f) { filter_ = f; }
  const TraceFilter& trace_filter() const { return filter_; }

  void trace(TraceRecord rec) {
    if (filter_.wants(rec.kind)) {
      rec.time = now_;
      trace_.push_back(std::move(rec));
    }
  }

  const std::vector<TraceRecord>& trace_records() const { return trace_; }

 private:
  struct Scheduled {
    SimTime t;
    EventHandle seqno;
    NodeId target;
    EventKind kind;
    std::function<void()> action;
  };
  struct Later {
    bool operator()(const Scheduled& a, const Scheduled& b) const {
      return a.t != b.t ? a.t > b.t : a.seqno > b.seqno;
    }
  };

  SimTime now_ = 0;
  EventHandle next_seqno_ = 0;
  std::priority_queue<Scheduled, std::vector<Scheduled>, Later> queue_;
  std::vector<TraceRecord> trace_;
  TraceFilter filter_ = TraceFilter::full();
  std::mt19937_64 rng_;
  std::uint64_t seed_;
};

}  // namespace edgesim
