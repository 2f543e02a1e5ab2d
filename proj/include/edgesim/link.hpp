#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>

#include "edgesim/engine.hpp"
#include "edgesim/packet.hpp"
#include "edgesim/time.hpp"

namespace edgesim {

// Point-to-point link with per-direction FIFO drop-tail queues, a fixed
// one-way propagation delay and a serialization rate. Queue occupancy counts
// the packet currently being serialized.
class Link {
 public:
  using DeliverFn = std::function<void(NodeId to, Packet pkt)>;

  Link(Engine& eng, NodeId a, std::string a_name, NodeId b, std::string b_name,
       SimTime one_way_delay, std::uint64_t capacity_bps, std::size_t queue_limit,
       DeliverFn deliver)
      : eng_(eng),
        a_(a),
        b_(b),
        a_name_(std::move(a_name)),
        b_name_(std::move(b_name)),
        delay_(one_way_delay),
        capacity_bps_(capacity_bps),
        queue_limit_(queue_limit),
        deliver_(std::move(deliver)) {
    if (delay_ <= 0 || capacity_bps_ == 0) {
      throw std::invalid_argument("link delay and capacity must be positive");
    }
  }

  NodeId endpoint_a() const { return a_; }
  NodeId endpoint_b() const { return b_; }
  bool up() const { return up_; }
  SimTime one_way_delay() const { return delay_; }
  std::uint64_t capacity_bps() const { return capacity_bps_; }
  std::size_t queue_limit() const { return queue_limit_; }

  NodeId other(NodeId n) const { return n == a_ ? b_ : a_; }
  bool attaches(NodeId n) const { return n == a_ || n == b_; }

  SimTime serialization_time(std::uint32_t wire_bytes) const {
    const std::uint64_t bits = std::uint64_t{wire_bytes} * 8;
    return static_cast<SimTime>((bits * 1'000'000 + capacity_bps_ - 1) / capacity_bps_);
  }

  std::size_t queue_occupancy(NodeId from) const { return dir(from).queue.size(); }

  // Drops the n-th packet (1-based, counted from simulation start) entering
  // the link from `from`. Used for scripted loss scenarios.
  void schedule_drop(NodeId from, std::uint64_t ordinal) {
    dir(from).scripted_drops.insert(ordinal);
  }

  std::uint64_t transmit_count(NodeId from) const { return dir(from).transmits; }

  // Queues the packet at the `from` ingress. Drops (queue full or link down)
  // are traced, never reported to the sender.
  void transmit(Packet pkt, NodeId from) {
    Dir& d = dir(from);
    ++d.transmits;
    if (auto it = d.scripted_drops.find(d.transmits); it != d.scripted_drops.end()) {
      d.scripted_drops.erase(it);
      drop(pkt, from, "scripted_loss");
      return;
    }
    if (!up_) {
      drop(pkt, from, "link_down");
      return;
    }
    if (d.queue.size() >= queue_limit_) {
      drop(pkt, from, "queue_full");
      return;
    }
    d.queue.push_back(std::move(pkt));
    if (d.queue.size() == 1) start_serialization(from);
  }

  void set_state(bool up) {
    if (up == up_) return;
    up_ = up;
    eng_.trace(TraceRecord{0, a_name_, up ? TraceKind::kLinkUp : TraceKind::kLinkDown,
                           0, 0, 0, 0, 0, a_name_ + "-" + b_name_});
    if (!up_) {
      // Queued (and in-serialization) packets are discarded; packets already
      // propagating will still arrive.
      flush(a_);
      flush(b_);
    }
  }

 private:
  struct Dir {
    std::deque<Packet> queue;
    std::uint64_t generation = 0;  // invalidates pending serialization events
    std::uint64_t transmits = 0;
    std::set<std::uint64_t> scripted_drops;
  };

  Dir& dir(NodeId from) { return from == a_ ? ab_ : ba_; }
  const Dir& dir(NodeId from) const { return from == a_ ? ab_ : ba_; }
  const std::string& name_of(NodeId n) const { return n == a_ ? a_name_ : b_name_; }

  void drop(const Packet& pkt, NodeId from, const char* why) {
    eng_.trace(TraceRecord{0, name_of(from), TraceKind::kDrop, pkt.flow_id, pkt.seq,
                           pkt.ack, pkt.flags, pkt.payload_len(), why});
  }

  void flush(NodeId from) {
    Dir& d = dir(from);
    for (const Packet& p : d.queue) drop(p, from, "flushed");
    d.queue.clear();
    ++d.generation;
  }

  void start_serialization(NodeId from) {
    Dir& d = dir(from);
    const std::uint64_t gen = d.generation;
    const SimTime done = eng_.now() + serialization_time(d.queue.front().wire_size());
    eng_.schedule_at(done, EventKind::kPacketArrival, other(from), [this, from, gen] {
      Dir& d = dir(from);
      if (d.generation != gen || d.queue.empty()) return;  // stale
      Packet pkt = std::move(d.queue.front());
      d.queue.pop_front();
      const NodeId to = other(from);
      eng_.schedule_in(delay_, EventKind::kPacketArrival, to,
                       [this, to, pkt = std::move(pkt)]() mutable {
                         eng_.trace(TraceRecord{0, name_of(to), TraceKind::kArrival,
                                                pkt.flow_id, pkt.seq, pkt.ack, pkt.flags,
                                                pkt.payload_len(), {}});
                         deliver_(to, std::move(pkt));
                       });
      if (!d.queue.empty()) start_serialization(from);
    });
  }

  Engine& eng_;
  NodeId a_, b_;
  std::string a_name_, b_name_;
  SimTime delay_;
  std::uint64_t capacity_bps_;
  std::size_t queue_limit_;
  bool up_ = true;
  Dir ab_, ba_;
  DeliverFn deliver_;
};

}  // namespace edgesim
