#pragma once

#include <algorithm>
#include <deque>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "edgesim/network.hpp"
#include "edgesim/seqnum.hpp"
#include "edgesim/sde/detector.hpp"

namespace edgesim::sde {

enum class FlowMode : std::uint8_t { kPlain, kDuplicated, kRedirected, kPromoted };

// Edge switch with its (co-located) controller. Clients address a virtual
// service endpoint; the switch rewrites toward the chosen datacenter and
// rewrites returns back, so the client-visible remote address never changes.
// Critical flows are duplicated inline to both datacenters at SYN time; the
// first datacenter to answer becomes the master, the other leg is driven by
// the switch itself (forged acks, translated sequence numbers) and kept byte
// identical as a hot standby.
class EdgeSwitch : public Node {
 public:
  struct Service {
    Endpoint address;    // virtual endpoint the clients target
    Endpoint primary;    // primary datacenter front switch
    Endpoint secondary;  // secondary datacenter front switch
    DcId primary_dc = 0;
    DcId secondary_dc = 1;
    bool critical = false;
  };

  struct BufSeg {
    std::uint32_t seq = 0;
    std::uint8_t flags = 0;
    std::shared_ptr<const std::string> payload;
    std::uint32_t orig_ack = 0;
    bool has_ack = false;
  };

  struct FlowEntry {
    FlowId flow_id = 0;
    Endpoint client;
    const Service* svc = nullptr;
    FlowMode mode = FlowMode::kPlain;

    // Plain/redirected flows: the single datacenter leg.
    Endpoint target;
    DcId target_dc = kNoDc;

    // Duplicated flows.
    bool master_known = false;
    bool slave_known = false;
    Endpoint master, slave;
    DcId master_dc = kNoDc, slave_dc = kNoDc;
    std::uint32_t client_isn = 0;
    std::uint32_t master_isn = 0, slave_isn = 0;
    SeqOffset offset;  // slave_isn - master_isn, valid once both are known
    std::uint32_t slave_acked = 0;       // slave's cumulative ack (client seq space)
    std::uint32_t last_client_seq = 0;   // highest client seq observed
    std::deque<BufSeg> unacked;          // client segments not yet acked by the slave
    SimTime syn_time = 0;
    SimTime slave_srtt = 0;
    std::uint64_t timer_gen = 0;
    bool timer_armed = false;

    // Retransmission detection: seqs of SYN/payload segments already seen.
    std::set<std::uint32_t> seen_seqs;

    // Replica response comparison (reassembled per leg, matched prefix
    // discarded as it is compared).
    struct LegStream {
      bool started = false;
      std::uint32_t rcv_nxt = 0;
      std::map<std::uint32_t, std::shared_ptr<const std::string>,
               bool (*)(std::uint32_t, std::uint32_t)>
          ooo{&seq_lt};
      std::string q;
    };
    LegStream master_stream, slave_stream;
    std::uint64_t compared_bytes = 0;
    bool diverged = false;

    bool client_fin = false, master_fin = false, slave_fin = false;
    std::uint32_t slave_fin_seq = 0;
    bool retire_timer_armed = false;
  };

  explicit EdgeSwitch(int threshold = 5, bool duplication = true)
      : detector_(threshold), duplication_(duplication) {}

  void add_service(Service svc) { services_.push_back(std::move(svc)); }
  void add_client(NodeId n) { clients_.insert(n); }

  DisasterDetector& detector() { return detector_; }
  bool disaster_mode(DcId dc) const { return detector_.disaster_mode(dc); }
  bool duplication_enabled() const { return duplication_; }

  std::size_t flow_count() const { return flows_.size(); }
  const FlowEntry* flow(FlowId fid) const {
    auto it = flows_.find(fid);
    return it == flows_.end() ? nullptr : &it->second;
  }

  void on_packet(Packet pkt) override {
    if (clients_.count(pkt.src.node)) {
      handle_client_packet(std::move(pkt));
      return;
    }
    if (const Service* svc = service_by_dc_endpoint(pkt.src)) {
      handle_dc_packet(std::move(pkt), *svc);
      return;
    }
    forward(std::move(pkt));  // transparent switch default
  }

 private:
  // --- classification helpers -------------------------------------------

  const Service* service_by_address(Endpoint ep) const {
    for (const auto& s : services_) {
      if (s.address == ep) return &s;
    }
    return nullptr;
  }

  const Service* service_by_dc_endpoint(Endpoint ep) const {
    for (const auto& s : services_) {
      if (s.primary == ep || s.secondary == ep) return &s;
    }
    return nullptr;
  }

  static DcId dc_of(const Service& svc, Endpoint ep) {
    return ep == svc.primary ? svc.primary_dc : svc.secondary_dc;
  }

  DcId current_target_dc(const FlowEntry& fe) const {
    switch (fe.mode) {
      case FlowMode::kPlain:
      case FlowMode::kRedirected:
        return fe.target_dc;
      case FlowMode::kDuplicated:
        return fe.master_known ? fe.master_dc : fe.svc->primary_dc;
      case FlowMode::kPromoted:
        return fe.slave_dc;
    }
    return kNoDc;
  }

  void forward(Packet pkt) { net_->send_from(id(), std::move(pkt)); }

  // --- client side --------------------------------------------------------

  void handle_client_packet(Packet pkt) {
    auto it = flows_.find(pkt.flow_id);
    FlowEntry* fe = it == flows_.end() ? nullptr : &it->second;

    // Alg. 1 first: every client packet feeds the detector. Detection can
    // reset-and-retire this very flow; the packet is then dropped (the RST
    // is already on its way to the client).
    const bool existed = fe != nullptr;
    detect_disaster(pkt, fe);
    it = flows_.find(pkt.flow_id);
    fe = it == flows_.end() ? nullptr : &it->second;
    if (existed && fe == nullptr) return;
    if (fe == nullptr) {
      const Service* svc = service_by_address(pkt.dst);
      if (svc == nullptr) {
        forward(std::move(pkt));
        return;
      }
      if (!pkt.has(kSyn)) {
        // Straggler for a retired flow: stateless forward to the primary.
        pkt.dst = svc->primary;
        forward(std::move(pkt));
        return;
      }
      fe = &create_flow(pkt, *svc);
    }

    if (pkt.has(kSyn) || pkt.payload_len() > 0) fe->seen_seqs.insert(pkt.seq);
    if (seq_gt(pkt.seq, fe->last_client_seq)) fe->last_client_seq = pkt.seq;
    if (pkt.has(kFin)) {
      fe->client_fin = true;
      arm_close_grace(*fe);
    }

    switch (fe->mode) {
      case FlowMode::kPlain:
      case FlowMode::kRedirected:
        pkt.dst = fe->target;
        forward(std::move(pkt));
        break;
      case FlowMode::kDuplicated:
        client_packet_duplicated(*fe, std::move(pkt));
        break;
      case FlowMode::kPromoted: {
        Packet copy = pkt;
        copy.dst = fe->slave;
        if (copy.has(kAck)) copy.ack = fe->offset.client_to_slave(copy.ack);
        if (copy.payload_len() > 0 || copy.has(kFin)) {
          buffer_segment(*fe, pkt);
          arm_slave_timer(*fe);
        }
        forward(std::move(copy));
        break;
      }
    }
  }

  FlowEntry& create_flow(const Packet& syn, const Service& svc) {
    FlowEntry fe;
    fe.flow_id = syn.flow_id;
    fe.client = syn.src;
    fe.svc = &svc;
    fe.client_isn = syn.seq;
    fe.syn_time = net_->engine().now();
    if (svc.critical && duplication_) {
      fe.mode = FlowMode::kDuplicated;
    } else if (detector_.disaster_mode(svc.primary_dc)) {
      fe.mode = FlowMode::kRedirected;  // redirect rule active for this service
      fe.target = svc.secondary;
      fe.target_dc = svc.secondary_dc;
    } else {
      fe.mode = FlowMode::kPlain;
      fe.target = svc.primary;
      fe.target_dc = svc.primary_dc;
    }
    return flows_.emplace(syn.flow_id, std::move(fe)).first->second;
  }

  void client_packet_duplicated(FlowEntry& fe, Packet pkt) {
    if (pkt.has(kSyn)) {
      // Duplicated verbatim to both datacenters; both legs share the
      // client's initial sequence number.
      Packet a = pkt, b = std::move(pkt);
      a.dst = fe.svc->primary;
      b.dst = fe.svc->secondary;
      forward(std::move(a));
      forward(std::move(b));
      return;
    }
    const bool carries = pkt.payload_len() > 0 || pkt.has(kFin);
    if (carries) buffer_segment(fe, pkt);
    Packet to_master = pkt;
    if (fe.master_known) {
      to_master.dst = fe.master;
      forward(std::move(to_master));
    }
    if (fe.slave_known) {
      pkt.dst = fe.slave;
      if (pkt.has(kAck)) pkt.ack = fe.offset.client_to_slave(pkt.ack);
      forward(std::move(pkt));
      if (carries) arm_slave_timer(fe);
    }
  }

  void buffer_segment(FlowEntry& fe, const Packet& pkt) {
    // Client retransmissions are already buffered; keep one copy per seq.
    for (const auto& seg : fe.unacked) {
      if (seg.seq == pkt.seq) return;
    }
    fe.unacked.push_back(
        {pkt.seq, pkt.flags, pkt.payload, pkt.ack, pkt.has(kAck)});
  }

  // --- datacenter side ----------------------------------------------------

  void handle_dc_packet(Packet pkt, const Service& svc) {
    const DcId dc = dc_of(svc, pkt.src);
    detector_.on_dc_packet(dc);

    auto it = flows_.find(pkt.flow_id);
    if (it == flows_.end()) {
      if (pkt.has(kSyn)) {
        trace_pkt(TraceKind::kUnknownFlow, pkt, "dropped");
        return;
      }
      pkt.src = svc.address;  // stateless reverse rewrite for stragglers
      forward(std::move(pkt));
      return;
    }
    FlowEntry& fe = it->second;

    switch (fe.mode) {
      case FlowMode::kPlain:
      case FlowMode::kRedirected:
        dc_packet_plain(fe, std::move(pkt));
        break;
      case FlowMode::kDuplicated:
        dc_packet_duplicated(fe, std::move(pkt), dc);
        break;
      case FlowMode::kPromoted:
        dc_packet_promoted(fe, std::move(pkt), dc);
        break;
    }
  }

  void dc_packet_plain(FlowEntry& fe, Packet pkt) {
    const bool rst = pkt.has(kRst);
    if (pkt.has(kFin)) fe.master_fin = true;
    const bool last_ack = fe.client_fin && fe.master_fin &&
                          pkt.flags == kAck && pkt.payload_len() == 0;
    pkt.src = fe.svc->address;
    forward(std::move(pkt));
    if (rst || last_ack) retire(fe.flow_id, "closed");
  }

  void dc_packet_duplicated(FlowEntry& fe, Packet pkt, DcId dc) {
    if (pkt.has(kSyn) && pkt.has(kAck)) {
      if (!fe.master_known) {
        fe.master_known = true;
        fe.master = pkt.src;
        fe.master_dc = dc;
        fe.master_isn = pkt.seq;
        fe.master_stream.started = true;
        fe.master_stream.rcv_nxt = pkt.seq + 1;
        trace_flow(TraceKind::kElection, fe, "master=dc" + std::to_string(dc));
        pkt.src = fe.svc->address;
        forward(std::move(pkt));
        return;
      }
      if (dc == fe.master_dc) {  // retransmitted master handshake
        pkt.src = fe.svc->address;
        forward(std::move(pkt));
        return;
      }
      if (!fe.slave_known) {
        fe.slave_known = true;
        fe.slave = pkt.src;
        fe.slave_dc = dc;
        fe.slave_isn = pkt.seq;
        fe.offset = SeqOffset::between(fe.slave_isn, fe.master_isn);
        fe.slave_acked = fe.client_isn + 1;
        fe.slave_stream.started = true;
        fe.slave_stream.rcv_nxt = pkt.seq + 1;
        fe.slave_srtt = std::max<SimTime>(net_->engine().now() - fe.syn_time, 1);
        trace_flow(TraceKind::kElection, fe, "slave=dc" + std::to_string(dc));
        trace_flow(TraceKind::kOffset, fe,
                   "delta=" + std::to_string(fe.offset.delta));
      }
      // Consumed either way; complete the slave handshake on the client's
      // behalf, then bring the standby leg up to date.
      send_forged_ack(fe, fe.slave_isn + 1);
      drain_to_slave(fe);
      return;
    }

    if (fe.master_known && dc == fe.master_dc) {
      if (pkt.has(kFin)) fe.master_fin = true;
      const bool rst = pkt.has(kRst);
      ingest_leg(fe, fe.master_stream, pkt);
      compare_streams(fe);
      const bool last_ack = all_closed(fe) && pkt.flags == kAck &&
                            pkt.payload_len() == 0 && fe.unacked.empty();
      pkt.src = fe.svc->address;
      forward(std::move(pkt));
      if (rst || last_ack) retire(fe.flow_id, rst ? "reset" : "closed");
      return;
    }

    // Slave leg: consumed, never reaches the client before promotion.
    slave_packet_common(fe, pkt);
    maybe_retire_after_close(fe);
  }

  void dc_packet_promoted(FlowEntry& fe, Packet pkt, DcId dc) {
    if (dc == fe.master_dc) return;  // stale master packet, single delivery
    const bool rst = pkt.has(kRst);
    slave_ack_update(fe, pkt);
    if (pkt.has(kFin)) {
      fe.slave_fin = true;
      fe.slave_fin_seq = pkt.seq + pkt.payload_len();
    }
    const bool last_ack = fe.client_fin && fe.slave_fin && pkt.flags == kAck &&
                          pkt.payload_len() == 0;
    pkt.src = fe.svc->address;
    pkt.seq = fe.offset.slave_to_client(pkt.seq);
    forward(std::move(pkt));
    if (rst || last_ack) retire(fe.flow_id, rst ? "reset" : "closed");
  }

  void slave_packet_common(FlowEntry& fe, const Packet& pkt) {
    slave_ack_update(fe, pkt);
    ingest_leg(fe, fe.slave_stream, pkt);
    compare_streams(fe);
    if (pkt.has(kFin)) {
      fe.slave_fin = true;
      fe.slave_fin_seq = pkt.seq + pkt.payload_len();
    }
    if (fe.slave_fin) {
      // Ack the slave's close on the client's behalf.
      send_forged_ack(fe, fe.slave_fin_seq + 1);
    }
  }

  void slave_ack_update(FlowEntry& fe, const Packet& pkt) {
    if (!pkt.has(kAck)) return;
    // The client sequence space is shared by both legs, so the slave's ack
    // needs no translation.
    if (seq_gt(pkt.ack, fe.slave_acked)) fe.slave_acked = pkt.ack;
    while (!fe.unacked.empty()) {
      const BufSeg& seg = fe.unacked.front();
      const std::uint32_t len =
          seg.payload ? std::uint32_t(seg.payload->size())
                      : ((seg.flags & kFin) ? 1u : 0u);
      if (!seq_le(seg.seq + len, fe.slave_acked)) break;
      fe.unacked.pop_front();
    }
    if (fe.unacked.empty()) ++fe.timer_gen, fe.timer_armed = false;
  }

  void send_forged_ack(FlowEntry& fe, std::uint32_t ack) {
    Packet p;
    p.src = fe.client;
    p.dst = fe.slave;
    p.flow_id = fe.flow_id;
    p.seq = fe.slave_acked;
    p.ack = ack;
    p.flags = kAck;
    forward(std::move(p));
  }

  void drain_to_slave(FlowEntry& fe) {
    for (const BufSeg& seg : fe.unacked) emit_to_slave(fe, seg);
    if (!fe.unacked.empty()) arm_slave_timer(fe);
  }

  void emit_to_slave(FlowEntry& fe, const BufSeg& seg) {
    Packet p;
    p.src = fe.client;
    p.dst = fe.slave;
    p.flow_id = fe.flow_id;
    p.seq = seg.seq;
    p.flags = seg.flags;
    p.payload = seg.payload;
    if (seg.has_ack) p.ack = fe.offset.client_to_slave(seg.orig_ack);
    forward(std::move(p));
  }

  void arm_slave_timer(FlowEntry& fe) {
    if (fe.timer_armed || !fe.slave_known || fe.unacked.empty()) return;
    fe.timer_armed = true;
    const std::uint64_t gen = ++fe.timer_gen;
    const FlowId fid = fe.flow_id;
    net_->engine().schedule_in(
        2 * fe.slave_srtt, EventKind::kTimerExpiry, id(), [this, fid, gen] {
          auto it = flows_.find(fid);
          if (it == flows_.end() || it->second.timer_gen != gen) return;
          FlowEntry& f = it->second;
          f.timer_armed = false;
          if (f.unacked.empty()) return;
          emit_to_slave(f, f.unacked.front());
          arm_slave_timer(f);
        });
  }

  // --- replica stream comparison -------------------------------------------

  void ingest_leg(FlowEntry& fe, FlowEntry::LegStream& leg, const Packet& pkt) {
    if (fe.diverged || !leg.started || pkt.payload_len() == 0) return;
    if (seq_lt(leg.rcv_nxt, pkt.seq)) {
      leg.ooo.emplace(pkt.seq, pkt.payload);
      return;
    }
    if (seq_lt(pkt.seq + pkt.payload_len(), leg.rcv_nxt + 1)) return;  // dup
    leg.q.append(pkt.payload->substr(leg.rcv_nxt - pkt.seq));
    leg.rcv_nxt = pkt.seq + pkt.payload_len();
    for (auto it = leg.ooo.begin(); it != leg.ooo.end();) {
      if (seq_gt(it->first, leg.rcv_nxt)) break;
      const std::uint32_t len = std::uint32_t(it->second->size());
      if (seq_gt(it->first + len, leg.rcv_nxt)) {
        leg.q.append(it->second->substr(leg.rcv_nxt - it->first));
        leg.rcv_nxt = it->first + len;
      }
      it = leg.ooo.erase(it);
    }
  }

  void compare_streams(FlowEntry& fe) {
    if (fe.diverged || !fe.master_stream.started || !fe.slave_stream.started) return;
    std::string& m = fe.master_stream.q;
    std::string& s = fe.slave_stream.q;
    const std::size_t n = std::min(m.size(), s.size());
    if (n == 0) return;
    if (m.compare(0, n, s, 0, n) != 0) {
      fe.diverged = true;
      std::size_t at = 0;
      while (m[at] == s[at]) ++at;
      trace_flow(TraceKind::kAlarm, fe,
                 "divergence_at=" + std::to_string(fe.compared_bytes + at));
      return;
    }
    fe.compared_bytes += n;
    m.erase(0, n);
    s.erase(0, n);
  }

  // --- detection and disaster handling -------------------------------------

  void detect_disaster(const Packet& pkt, FlowEntry* fe) {
    if (!pkt.has(kSyn) && pkt.payload_len() == 0) return;  // pure acks excluded
    if (fe == nullptr || !fe->seen_seqs.count(pkt.seq)) return;
    const DcId dc = current_target_dc(*fe);
    if (dc == kNoDc || detector_.disaster_mode(dc)) return;
    const bool transition = detector_.on_client_retransmission(dc);
    trace_flow(TraceKind::kDetect, *fe,
               "dc" + std::to_string(dc) +
                   "=" + std::to_string(detector_.counter(dc)));
    if (transition) on_disaster(dc);
  }

  void on_disaster(DcId dc) {
    TraceRecord rec;
    rec.node = name();
    rec.kind = TraceKind::kDisaster;
    rec.detail = "dc" + std::to_string(dc);
    net_->engine().trace(std::move(rec));

    std::vector<FlowId> to_reset;
    std::vector<FlowId> to_promote;
    for (auto& [fid, fe] : flows_) {
      if ((fe.mode == FlowMode::kPlain || fe.mode == FlowMode::kRedirected) &&
          fe.target_dc == dc) {
        to_reset.push_back(fid);
      } else if (fe.mode == FlowMode::kDuplicated && fe.master_known &&
                 fe.master_dc == dc) {
        to_promote.push_back(fid);
      }
    }
    // Plain flows toward the dead datacenter are torn down so the client
    // reconnects and gets redirected; duplicated flows fail over in place.
    for (FlowId fid : to_reset) {
      FlowEntry& fe = flows_.at(fid);
      Packet rst;
      rst.src = fe.svc->address;
      rst.dst = fe.client;
      rst.flow_id = fid;
      rst.flags = kRst;
      trace_flow(TraceKind::kRst, fe, "dc" + std::to_string(dc));
      forward(std::move(rst));
      retire(fid, "rst");
    }
    for (FlowId fid : to_promote) promote_slave(flows_.at(fid));
  }

  void promote_slave(FlowEntry& fe) {
    if (!fe.slave_known) {
      retire(fe.flow_id, "no_slave");  // double disaster, unrecoverable
      return;
    }
    fe.mode = FlowMode::kPromoted;
    trace_flow(TraceKind::kPromotion, fe, "dc" + std::to_string(fe.slave_dc));
    drain_to_slave(fe);  // buffered segments go out before new client data
  }

  // --- housekeeping ---------------------------------------------------------

  bool all_closed(const FlowEntry& fe) const {
    return fe.client_fin && fe.master_fin &&
           (!fe.slave_known || fe.slave_fin);
  }

  void maybe_retire_after_close(FlowEntry& fe) {
    if (all_closed(fe) && fe.unacked.empty() && fe.mode == FlowMode::kDuplicated &&
        fe.master_fin && fe.slave_fin && fe.client_fin) {
      retire(fe.flow_id, "closed");
    }
  }

  // A leg that never completes its close handshake must not leak the entry.
  void arm_close_grace(FlowEntry& fe) {
    if (fe.retire_timer_armed) return;
    fe.retire_timer_armed = true;
    const FlowId fid = fe.flow_id;
    net_->engine().schedule_in(sec(30), EventKind::kTimerExpiry, id(),
                               [this, fid] { retire(fid, "close_timeout"); });
  }

  void retire(FlowId fid, const std::string& why) {
    auto it = flows_.find(fid);
    if (it == flows_.end()) return;
    ++it->second.timer_gen;
    TraceRecord rec;
    rec.node = name();
    rec.kind = TraceKind::kFlowRetired;
    rec.flow_id = fid;
    rec.detail = why;
    net_->engine().trace(std::move(rec));
    flows_.erase(it);
  }

  void trace_flow(TraceKind kind, const FlowEntry& fe, std::string detail) {
    TraceRecord rec;
    rec.node = name();
    rec.kind = kind;
    rec.flow_id = fe.flow_id;
    rec.detail = std::move(detail);
    net_->engine().trace(std::move(rec));
  }

  void trace_pkt(TraceKind kind, const Packet& pkt, std::string detail) {
    TraceRecord rec;
    rec.node = name();
    rec.kind = kind;
    rec.flow_id = pkt.flow_id;
    rec.seq = pkt.seq;
    rec.ack = pkt.ack;
    rec.flags = pkt.flags;
    rec.payload_len = pkt.payload_len();
    rec.detail = std::move(detail);
    net_->engine().trace(std::move(rec));
  }

  DisasterDetector detector_;
  bool duplication_;
  std::vector<Service> services_;
  std::set<NodeId> clients_;
  std::map<FlowId, FlowEntry> flows_;
};

}  // namespace edgesim::sde
