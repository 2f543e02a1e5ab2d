#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

#include "edgesim/network.hpp"
#include "edgesim/seqnum.hpp"

namespace edgesim {

struct TransportConfig {
  SimTime rto_initial = sec(1);
  SimTime rto_cap = sec(8);
  std::uint64_t window = 1'250'000;  // bytes in flight
  std::uint32_t mss = 1460;          // max segment payload
  int handshake_retries = 6;         // n-th handshake timeout reports failure

  void validate() const {
    if (rto_initial <= 0 || rto_cap <= 0 || window == 0 || mss == 0)
      throw std::invalid_argument("transport config fields must be positive");
    if (window < mss) throw std::invalid_argument("window must be >= mss");
  }
};

enum class ConnState : std::uint8_t {
  kClosed,
  kSynSent,
  kSynReceived,
  kEstablished,
  kFinWait,   // our FIN sent, peer FIN not yet received
  kClosing,   // peer FIN received, our side closing
  kReset,
};

struct ConnStats {
  std::uint64_t bytes_sent = 0;
  std::uint64_t bytes_delivered = 0;  // contiguous bytes handed to the app
  std::uint64_t duplicate_acks = 0;
  std::uint64_t retransmissions = 0;
  SimTime srtt = 0;
  bool srtt_valid = false;
};

struct AppHandlers {
  std::function<void()> on_established;
  std::function<void(std::string_view)> on_data;
  std::function<void()> on_peer_fin;
  std::function<void()> on_closed;
  std::function<void()> on_reset;
  std::function<void()> on_connect_failed;
};

class TcpHost;

class TcpConnection {
 public:
  enum class Role : std::uint8_t { kInitiator, kResponder };

  FlowId flow_id() const { return flow_id_; }
  ConnState state() const { return state_; }
  Role role() const { return role_; }
  const ConnStats& stats() const { return stats_; }
  Endpoint local() const { return local_; }
  Endpoint remote() const { return remote_; }
  std::uint32_t isn_local() const { return isn_local_; }
  std::uint64_t bytes_in_flight() const { return std::uint32_t(snd_nxt_ - snd_una_); }
  std::uint64_t send_backlog() const { return pending_.size() - pending_off_; }
  int backoff_count() const { return backoff_count_; }
  SimTime current_rto() const {
    SimTime rto = rto_initial_ << std::min(backoff_count_, 30);
    return std::min(rto, rto_cap_);
  }

 private:
  friend class TcpHost;

  struct Segment {
    std::uint32_t seq;
    std::uint32_t len;  // sequence units consumed (payload bytes, or 1 for SYN/FIN)
    std::uint8_t flags;
    std::shared_ptr<const std::string> payload;
    SimTime first_tx = 0;
    bool retransmitted = false;
  };

  FlowId flow_id_ = 0;
  Role role_ = Role::kInitiator;
  ConnState state_ = ConnState::kClosed;
  Endpoint local_, remote_;
  std::uint32_t isn_local_ = 0, isn_remote_ = 0;
  std::uint32_t snd_una_ = 0, snd_nxt_ = 0, rcv_nxt_ = 0;
  SimTime rto_initial_ = sec(1), rto_cap_ = sec(8);
  int backoff_count_ = 0;
  bool in_recovery_ = false;     // an RTO fired; recover_ marks snd_nxt then
  std::uint32_t recover_ = 0;
  std::uint64_t timer_gen_ = 0;
  bool timer_armed_ = false;
  std::deque<Segment> rtx_;
  std::string pending_;       // app bytes not yet segmented
  std::size_t pending_off_ = 0;  // consumed prefix of pending_
  std::map<std::uint32_t, std::shared_ptr<const std::string>,
           bool (*)(std::uint32_t, std::uint32_t)>
      ooo_{&seq_lt};
  bool fin_pending_ = false;
  bool fin_sent_ = false;
  bool fin_acked_ = false;
  bool peer_fin_seen_ = false;     // FIN consumed at rcv_nxt
  std::uint32_t peer_fin_seq_ = 0;
  bool peer_fin_staged_ = false;   // FIN seen but gap before it
  ConnStats stats_;
  AppHandlers app_;
};

// A node with a simplified reliable transport: three-way handshake,
// cumulative acks, fixed window, RTO with exponential backoff, FIN close and
// RST abort. No congestion control, no SACK, no delayed acks.
class TcpHost : public Node {
 public:
  using AcceptFn = std::function<AppHandlers(FlowId, Endpoint peer)>;
  using RttSampleFn = std::function<void(const TcpConnection&, SimTime sample)>;

  explicit TcpHost(TransportConfig cfg = {}) : cfg_(cfg) { cfg_.validate(); }

  const TransportConfig& config() const { return cfg_; }
  void set_rtt_sample_hook(RttSampleFn fn) { rtt_hook_ = std::move(fn); }

  void listen(std::uint16_t port, AcceptFn accept) { listeners_[port] = std::move(accept); }

  FlowId connect(Endpoint remote, AppHandlers app, std::uint16_t local_port = 0) {
    Engine& eng = net_->engine();
    FlowId fid = net_->alloc_flow_id();
    auto [it, inserted] = conns_.try_emplace(fid);
    TcpConnection& c = it->second;
    c.flow_id_ = fid;
    c.role_ = TcpConnection::Role::kInitiator;
    c.local_ = {id(), local_port ? local_port : next_port_++};
    c.remote_ = remote;
    c.rto_initial_ = cfg_.rto_initial;
    c.rto_cap_ = cfg_.rto_cap;
    c.isn_local_ = make_isn(fid, 0);
    c.snd_una_ = c.isn_local_;
    c.snd_nxt_ = c.isn_local_ + 1;
    c.app_ = std::move(app);
    c.state_ = ConnState::kSynSent;
    c.rtx_.push_back({c.isn_local_, 1, kSyn, nullptr, eng.now(), false});
    emit(c, c.isn_local_, 0, kSyn, nullptr);
    arm_timer(c);
    return fid;
  }

  TcpConnection* conn(FlowId fid) {
    auto it = conns_.find(fid);
    return it == conns_.end() ? nullptr : &it->second;
  }

  const std::map<FlowId, TcpConnection>& connections() const { return conns_; }

  // Queues application bytes; returns false when the connection cannot send.
  bool send(FlowId fid, std::string data) {
    TcpConnection* c = conn(fid);
    if (!c || (c->state_ != ConnState::kEstablished && c->state_ != ConnState::kClosing) ||
        c->fin_pending_ || c->fin_sent_) {
      return false;
    }
    c->pending_ += data;
    c->stats_.bytes_sent += data.size();
    pump(*c);
    return true;
  }

  void close(FlowId fid) {
    TcpConnection* c = conn(fid);
    if (!c || c->fin_pending_ || c->fin_sent_) return;  // no-op on closed/closing
    if (c->state_ != ConnState::kEstablished && c->state_ != ConnState::kClosing) return;
    c->fin_pending_ = true;
    if (c->state_ == ConnState::kEstablished) c->state_ = ConnState::kFinWait;
    pump(*c);
  }

  void abort(FlowId fid) {
    TcpConnection* c = conn(fid);
    if (!c) return;
    emit(*c, c->snd_nxt_, c->rcv_nxt_, kRst, nullptr);
    enter_reset(*c, /*notify=*/false);
  }

  void on_packet(Packet pkt) override {
    auto it = conns_.find(pkt.flow_id);
    if (it != conns_.end()) {
      handle(it->second, pkt);
      return;
    }
    if (pkt.has(kSyn) && !pkt.has(kAck)) {
      auto lit = listeners_.find(pkt.dst.port);
      if (lit != listeners_.end()) {
        accept(pkt, lit->second);
        return;
      }
    }
    // Segments for unknown flows (stale RSTs, late FINs) are ignored.
  }

 protected:
  Engine& eng() { return net_->engine(); }

 private:
  std::uint32_t make_isn(FlowId fid, int role_bit) const {
    // splitmix64; deterministic in (seed, node, flow, role), order independent
    std::uint64_t x = net_->engine().seed() ^ (std::uint64_t(id()) << 32) ^
                      (fid * 0x9e3779b97f4a7c15ull) ^ (std::uint64_t(role_bit) << 1);
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return static_cast<std::uint32_t>(x ^ (x >> 31));
  }

  void accept(const Packet& syn, const AcceptFn& acceptor) {
    TcpConnection& c = conns_[syn.flow_id];
    c.flow_id_ = syn.flow_id;
    c.role_ = TcpConnection::Role::kResponder;
    c.local_ = syn.dst;
    c.local_.node = id();  // dst may be a rewritten virtual address
    c.remote_ = syn.src;
    c.rto_initial_ = cfg_.rto_initial;
    c.rto_cap_ = cfg_.rto_cap;
    c.isn_local_ = make_isn(syn.flow_id, 1);
    c.snd_una_ = c.isn_local_;
    c.snd_nxt_ = c.isn_local_ + 1;
    c.isn_remote_ = syn.seq;
    c.rcv_nxt_ = syn.seq + 1;
    c.app_ = acceptor(syn.flow_id, syn.src);
    c.state_ = ConnState::kSynReceived;
    c.rtx_.push_back({c.isn_local_, 1, std::uint8_t(kSyn | kAck), nullptr, eng().now(), false});
    emit(c, c.isn_local_, c.rcv_nxt_, kSyn | kAck, nullptr);
    arm_timer(c);
  }

  void emit(TcpConnection& c, std::uint32_t seq, std::uint32_t ack, std::uint8_t flags,
            std::shared_ptr<const std::string> payload) {
    Packet p;
    p.src = c.local_;
    p.dst = c.remote_;
    p.flow_id = c.flow_id_;
    p.seq = seq;
    p.ack = ack;
    p.flags = flags;
    p.payload = std::move(payload);
    net_->send_from(id(), std::move(p));
  }

  void send_ack(TcpConnection& c) { emit(c, c.snd_nxt_, c.rcv_nxt_, kAck, nullptr); }

  void handle(TcpConnection& c, const Packet& pkt) {
    if (pkt.has(kRst)) {
      if (c.state_ != ConnState::kClosed) enter_reset(c, /*notify=*/true);
      return;
    }
    switch (c.state_) {
      case ConnState::kSynSent:
        if (pkt.has(kSyn) && pkt.has(kAck) && pkt.ack == c.isn_local_ + 1) {
          c.isn_remote_ = pkt.seq;
          c.rcv_nxt_ = pkt.seq + 1;
          c.snd_una_ = pkt.ack;
          if (!c.rtx_.empty() && !c.rtx_.front().retransmitted) {
            rtt_sample(c, eng().now() - c.rtx_.front().first_tx);
          }
          c.rtx_.clear();
          c.backoff_count_ = 0;
          cancel_timer(c);
          c.state_ = ConnState::kEstablished;
          send_ack(c);
          if (c.app_.on_established) c.app_.on_established();
          pump(c);
        }
        return;
      case ConnState::kSynReceived:
        if (pkt.has(kSyn) && !pkt.has(kAck)) {
          // duplicate SYN: re-announce
          emit(c, c.isn_local_, c.rcv_nxt_, kSyn | kAck, nullptr);
          return;
        }
        if (pkt.has(kAck) && seq_ge(pkt.ack, c.isn_local_ + 1)) {
          c.state_ = ConnState::kEstablished;
          process_ack(c, pkt.ack);
          if (c.app_.on_established) c.app_.on_established();
          if (pkt.payload_len() > 0 || pkt.has(kFin)) process_segment(c, pkt);
        }
        return;
      case ConnState::kClosed:
        return;
      default:
        break;
    }
    if (pkt.has(kAck)) process_ack(c, pkt.ack);
    if (conns_.find(pkt.flow_id) == conns_.end()) return;  // retired by ack
    if (pkt.payload_len() > 0 || pkt.has(kFin)) process_segment(c, pkt);
  }

  void process_ack(TcpConnection& c, std::uint32_t ack) {
    if (seq_gt(ack, c.snd_nxt_)) return;  // beyond what we sent: ignore
    if (ack == c.snd_una_) {
      ++c.stats_.duplicate_acks;
      return;
    }
    if (seq_lt(ack, c.snd_una_)) {
      ++c.stats_.duplicate_acks;
      return;
    }
    // ack advances
    bool sampled = false;
    while (!c.rtx_.empty() && seq_le(c.rtx_.front().seq + c.rtx_.front().len, ack)) {
      const auto& seg = c.rtx_.front();
      if (!seg.retransmitted && !sampled) {
        rtt_sample(c, eng().now() - seg.first_tx);
        sampled = true;
      }
      if ((seg.flags & kFin) != 0) c.fin_acked_ = true;
      c.rtx_.pop_front();
    }
    c.snd_una_ = ack;
    c.backoff_count_ = 0;
    if (c.in_recovery_) {
      if (seq_lt(ack, c.recover_)) {
        // Partial ack after a timeout: the peer never saw the rest of the
        // pre-timeout window (go-back-n), so retransmit it in one burst.
        for (auto& seg : c.rtx_) {
          if (!seq_lt(seg.seq, c.recover_)) break;
          seg.retransmitted = true;
          ++c.stats_.retransmissions;
          emit(c, seg.seq, c.rcv_nxt_, seg.flags, seg.payload);
        }
      } else {
        c.in_recovery_ = false;
      }
    }
    if (c.rtx_.empty()) {
      cancel_timer(c);
    } else {
      arm_timer(c);  // restart from the new ack
    }
    pump(c);
    maybe_finish_close(c);
  }

  void process_segment(TcpConnection& c, const Packet& pkt) {
    std::uint32_t seq = pkt.seq;
    if (pkt.payload_len() > 0) {
      if (seq_lt(seq, c.rcv_nxt_) &&
          seq_le(seq + pkt.payload_len(), c.rcv_nxt_)) {
        send_ack(c);  // stale duplicate
      } else {
        c.ooo_.emplace(seq, pkt.payload);
        drain_in_order(c);
        send_ack(c);
      }
    }
    if (pkt.has(kFin)) {
      std::uint32_t fin_seq = seq + pkt.payload_len();
      c.peer_fin_seq_ = fin_seq;
      c.peer_fin_staged_ = true;
      drain_in_order(c);
      if (!pkt.payload || pkt.payload_len() == 0) send_ack(c);
    }
    maybe_finish_close(c);
  }

  void drain_in_order(TcpConnection& c) {
    bool progressed = true;
    while (progressed) {
      progressed = false;
      while (!c.ooo_.empty()) {
        auto it = c.ooo_.begin();
        std::uint32_t seq = it->first;
        const auto& payload = it->second;
        std::uint32_t len = static_cast<std::uint32_t>(payload->size());
        if (seq_gt(seq, c.rcv_nxt_)) break;  // gap
        std::uint32_t skip = c.rcv_nxt_ - seq;
        if (skip >= len) {
          c.ooo_.erase(it);
          continue;
        }
        std::string_view fresh(payload->data() + skip, len - skip);
        c.rcv_nxt_ += static_cast<std::uint32_t>(fresh.size());
        c.stats_.bytes_delivered += fresh.size();
        auto keep = payload;  // callback may mutate the map
        c.ooo_.erase(it);
        if (c.app_.on_data) c.app_.on_data(fresh);
        progressed = true;
      }
      if (c.peer_fin_staged_ && !c.peer_fin_seen_ && c.peer_fin_seq_ == c.rcv_nxt_) {
        c.peer_fin_seen_ = true;
        c.rcv_nxt_ = c.peer_fin_seq_ + 1;
        if (c.state_ == ConnState::kEstablished) c.state_ = ConnState::kClosing;
        send_ack(c);
        if (c.app_.on_peer_fin) c.app_.on_peer_fin();
        progressed = true;
      }
    }
  }

  // Emits queued data while the window allows; appends the FIN last.
  void pump(TcpConnection& c) {
    if (c.state_ != ConnState::kEstablished && c.state_ != ConnState::kFinWait &&
        c.state_ != ConnState::kClosing) {
      return;
    }
    bool sent = false;
    while (c.pending_off_ < c.pending_.size()) {
      std::uint32_t take = static_cast<std::uint32_t>(
          std::min<std::uint64_t>(cfg_.mss, c.pending_.size() - c.pending_off_));
      if (bytes_in_flight_of(c) + take > cfg_.window) break;
      auto payload = make_payload(c.pending_.substr(c.pending_off_, take));
      c.pending_off_ += take;
      if (c.pending_off_ == c.pending_.size() || c.pending_off_ >= (1u << 20)) {
        c.pending_.erase(0, c.pending_off_);
        c.pending_off_ = 0;
      }
      TcpConnection::Segment seg{c.snd_nxt_, take, kAck, payload, eng().now(), false};
      c.rtx_.push_back(seg);
      emit(c, seg.seq, c.rcv_nxt_, kAck, payload);
      c.snd_nxt_ += take;
      sent = true;
    }
    if (c.fin_pending_ && c.pending_off_ == c.pending_.size() && !c.fin_sent_ &&
        bytes_in_flight_of(c) + 1 <= cfg_.window) {
      TcpConnection::Segment seg{c.snd_nxt_, 1, std::uint8_t(kAck | kFin), nullptr,
                                 eng().now(), false};
      c.rtx_.push_back(seg);
      emit(c, seg.seq, c.rcv_nxt_, kAck | kFin, nullptr);
      c.snd_nxt_ += 1;
      c.fin_sent_ = true;
      sent = true;
    }
    if (sent && !c.timer_armed_) arm_timer(c);
  }

  std::uint64_t bytes_in_flight_of(const TcpConnection& c) const {
    return std::uint32_t(c.snd_nxt_ - c.snd_una_);
  }

  void maybe_finish_close(TcpConnection& c) {
    if (c.fin_sent_ && c.fin_acked_ && c.peer_fin_seen_) {
      FlowId fid = c.flow_id_;
      cancel_timer(c);
      c.state_ = ConnState::kClosed;
      if (c.app_.on_closed) c.app_.on_closed();
      conns_.erase(fid);
    }
  }

  void enter_reset(TcpConnection& c, bool notify) {
    FlowId fid = c.flow_id_;
    cancel_timer(c);
    c.rtx_.clear();
    c.pending_.clear();
    c.pending_off_ = 0;
    c.ooo_.clear();
    c.state_ = ConnState::kReset;
    auto on_reset = c.app_.on_reset;
    conns_.erase(fid);
    if (notify && on_reset) on_reset();
  }

  void arm_timer(TcpConnection& c) {
    const std::uint64_t gen = ++c.timer_gen_;
    c.timer_armed_ = true;
    const FlowId fid = c.flow_id_;
    eng().schedule_in(c.current_rto(), EventKind::kTimerExpiry, id(),
                      [this, fid, gen] { on_timeout(fid, gen); });
  }

  void cancel_timer(TcpConnection& c) {
    ++c.timer_gen_;
    c.timer_armed_ = false;
  }

  void on_timeout(FlowId fid, std::uint64_t gen) {
    TcpConnection* c = conn(fid);
    if (!c || c->timer_gen_ != gen || c->rtx_.empty()) return;
    ++c->backoff_count_;
    if ((c->state_ == ConnState::kSynSent || c->state_ == ConnState::kSynReceived) &&
        c->backoff_count_ >= cfg_.handshake_retries) {
      auto on_failed = c->app_.on_connect_failed;
      cancel_timer(*c);
      conns_.erase(fid);
      if (on_failed) on_failed();
      return;
    }
    TcpConnection::Segment& seg = c->rtx_.front();
    seg.retransmitted = true;
    ++c->stats_.retransmissions;
    std::uint32_t ack = c->rcv_nxt_;
    std::uint8_t flags = seg.flags;
    if (c->state_ == ConnState::kSynSent) {
      flags = kSyn;  // no ack to piggyback yet
    } else {
      // Timeout recovery: a later partial ack below this point means the
      // peer is missing everything we sent after the lost segment too.
      c->in_recovery_ = true;
      c->recover_ = c->snd_nxt_;
    }
    emit(*c, seg.seq, ack, flags, seg.payload);
    arm_timer(*c);
  }

  void rtt_sample(TcpConnection& c, SimTime sample) {
    if (sample < 0) return;
    if (!c.stats_.srtt_valid) {
      c.stats_.srtt = sample;  // first sample initializes
      c.stats_.srtt_valid = true;
    } else {
      c.stats_.srtt = (7 * c.stats_.srtt + sample) / 8;
    }
    if (rtt_hook_) rtt_hook_(c, sample);
  }

  TransportConfig cfg_;
  std::map<FlowId, TcpConnection> conns_;
  std::map<std::uint16_t, AcceptFn> listeners_;
  std::uint16_t next_port_ = 40000;
  RttSampleFn rtt_hook_;
};

}  // namespace edgesim
