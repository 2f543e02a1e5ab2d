#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "edgesim/network.hpp"

namespace edgesim::kv {

// Datacenter front switch. Connections addressed to its service port are
// pinned to a backend server round-robin at SYN time; all address rewriting
// happens here so clients and servers never learn about each other's side of
// the split. Everything else (notably the intra-datacenter quorum traffic
// between servers) is forwarded unchanged.
class LbSwitch : public Node {
 public:
  LbSwitch(std::uint16_t service_port, std::vector<NodeId> servers)
      : service_port_(service_port), servers_(std::move(servers)) {
    live_.assign(servers_.size(), true);
  }

  Endpoint service_endpoint() const { return {id(), service_port_}; }

  void mark_down(NodeId server) {
    for (std::size_t i = 0; i < servers_.size(); ++i) {
      if (servers_[i] == server) live_[i] = false;
    }
  }

  bool any_alive() const {
    return std::find(live_.begin(), live_.end(), true) != live_.end();
  }

  // Next round-robin assignment, skipping dead servers; kNoNode if none live.
  NodeId pick_server() {
    for (std::size_t tries = 0; tries < servers_.size(); ++tries) {
      const std::size_t i = rr_++ % servers_.size();
      if (live_[i]) return servers_[i];
    }
    return kNoNode;
  }

  NodeId server_for(FlowId fid) const {
    auto it = flows_.find(fid);
    return it == flows_.end() ? kNoNode : it->second.server;
  }

  std::size_t flow_count() const { return flows_.size(); }

  void on_packet(Packet pkt) override {
    if (pkt.flow_id != kControlFlow && pkt.dst == service_endpoint()) {
      handle_inbound(std::move(pkt));
      return;
    }
    if (pkt.flow_id != kControlFlow && pkt.src.port == service_port_ &&
        is_server(pkt.src.node)) {
      handle_outbound(std::move(pkt));
      return;
    }
    net_->send_from(id(), std::move(pkt));
  }

 private:
  struct FlowEntry {
    NodeId server = kNoNode;
    bool fin_client = false;
    bool fin_server = false;
  };

  bool is_server(NodeId n) const {
    return std::find(servers_.begin(), servers_.end(), n) != servers_.end();
  }

  bool is_live(NodeId n) const {
    for (std::size_t i = 0; i < servers_.size(); ++i) {
      if (servers_[i] == n) return live_[i];
    }
    return false;
  }

  void handle_inbound(Packet pkt) {
    auto it = flows_.find(pkt.flow_id);
    if (it == flows_.end() || (pkt.has(TcpFlag::kSyn) && !is_live(it->second.server))) {
      if (!pkt.has(TcpFlag::kSyn)) {
        trace(TraceKind::kUnknownFlow, pkt, "no_assignment");
        return;
      }
      const NodeId server = pick_server();
      if (server == kNoNode) {
        trace(TraceKind::kDrop, pkt, "no_live_server");
        return;
      }
      it = flows_.insert_or_assign(pkt.flow_id, FlowEntry{server}).first;
    }
    FlowEntry& fe = it->second;
    const bool rst = pkt.has(TcpFlag::kRst);
    if (pkt.has(TcpFlag::kFin)) fe.fin_client = true;
    const bool last_ack = fe.fin_client && fe.fin_server && pkt.flags == TcpFlag::kAck &&
                          pkt.payload_len() == 0;
    pkt.dst = {fe.server, service_port_};
    net_->send_from(id(), std::move(pkt));
    if (rst || last_ack) retire(it);
  }

  void handle_outbound(Packet pkt) {
    auto it = flows_.find(pkt.flow_id);
    if (it == flows_.end()) {
      trace(TraceKind::kUnknownFlow, pkt, "no_assignment");
      return;
    }
    FlowEntry& fe = it->second;
    const bool rst = pkt.has(TcpFlag::kRst);
    if (pkt.has(TcpFlag::kFin)) fe.fin_server = true;
    const bool last_ack = fe.fin_client && fe.fin_server && pkt.flags == TcpFlag::kAck &&
                          pkt.payload_len() == 0;
    pkt.src = service_endpoint();
    net_->send_from(id(), std::move(pkt));
    if (rst || last_ack) retire(it);
  }

  void retire(std::map<FlowId, FlowEntry>::iterator it) {
    TraceRecord rec;
    rec.node = name();
    rec.kind = TraceKind::kFlowRetired;
    rec.flow_id = it->first;
    net_->engine().trace(std::move(rec));
    flows_.erase(it);
  }

  void trace(TraceKind kind, const Packet& pkt, std::string detail) {
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

  std::uint16_t service_port_;
  std::vector<NodeId> servers_;
  std::vector<bool> live_;
  std::size_t rr_ = 0;
  std::map<FlowId, FlowEntry> flows_;
};

}  // namespace edgesim::kv
