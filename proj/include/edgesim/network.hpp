#pragma once

#include <cstdint>
#include <deque>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "edgesim/engine.hpp"
#include "edgesim/link.hpp"
#include "edgesim/packet.hpp"

namespace edgesim {

class Network;

class Node {
 public:
  virtual ~Node() = default;
  virtual void on_packet(Packet pkt) = 0;

  NodeId id() const { return id_; }
  const std::string& name() const { return name_; }

 protected:
  Network* net_ = nullptr;

 private:
  friend class Network;
  NodeId id_ = kNoNode;
  std::string name_;
};

// Static topology: nodes, links and shortest-path next-hop routing computed
// once over the initial topology. Link failures at runtime do not reroute.
class Network {
 public:
  explicit Network(Engine& eng) : eng_(eng) {}

  Engine& engine() { return eng_; }

  template <typename T, typename... Args>
  T& add_node(const std::string& name, Args&&... args) {
    auto node = std::make_unique<T>(std::forward<Args>(args)...);
    T& ref = *node;
    node->id_ = static_cast<NodeId>(nodes_.size());
    node->name_ = name;
    node->net_ = this;
    nodes_.push_back(std::move(node));
    routes_stale_ = true;
    return ref;
  }

  // A node id with a name but no behavior and no links; used as a virtual
  // service address.
  NodeId add_virtual_node(const std::string& name);

  Link& add_link(NodeId a, NodeId b, SimTime one_way_delay, std::uint64_t capacity_bps,
                 std::size_t queue_limit) {
    auto link = std::make_unique<Link>(
        eng_, a, node_name(a), b, node_name(b), one_way_delay, capacity_bps,
        queue_limit, [this](NodeId to, Packet pkt) { deliver(to, std::move(pkt)); });
    links_.push_back(std::move(link));
    routes_stale_ = true;
    return *links_.back();
  }

  Link* find_link(NodeId a, NodeId b) {
    for (auto& l : links_) {
      if (l->attaches(a) && l->attaches(b)) return l.get();
    }
    return nullptr;
  }

  Node* node(NodeId id) { return id < nodes_.size() ? nodes_[id].get() : nullptr; }
  std::size_t node_count() const { return nodes_.size(); }
  const std::string& node_name(NodeId id) const {
    static const std::string unknown = "?";
    return id < nodes_.size() && nodes_[id] ? nodes_[id]->name() : unknown;
  }
  NodeId find_node(const std::string& name) const {
    for (NodeId i = 0; i < nodes_.size(); ++i) {
      if (nodes_[i] && nodes_[i]->name() == name) return i;
    }
    return kNoNode;
  }

  FlowId alloc_flow_id() { return next_flow_id_++; }

  // Sends a packet out of `from` toward pkt.dst.node along the static route.
  void send_from(NodeId from, Packet pkt) {
    if (routes_stale_) compute_routes();
    const NodeId dst = pkt.dst.node;
    std::uint32_t li = kNoRoute;
    if (dst < nodes_.size() && next_link_[from].size() > dst) li = next_link_[from][dst];
    if (li == kNoRoute) li = gateway_[from];
    if (li == kNoRoute) {
      eng_.trace(TraceRecord{0, node_name(from), TraceKind::kDrop, pkt.flow_id, pkt.seq,
                             pkt.ack, pkt.flags, pkt.payload_len(), "no_route"});
      return;
    }
    links_[li]->transmit(std::move(pkt), from);
  }

  void deliver(NodeId to, Packet pkt) {
    if (Node* n = node(to)) n->on_packet(std::move(pkt));
  }

 private:
  static constexpr std::uint32_t kNoRoute = std::numeric_limits<std::uint32_t>::max();

  void compute_routes() {
    const std::size_t n = nodes_.size();
    next_link_.assign(n, std::vector<std::uint32_t>(n, kNoRoute));
    gateway_.assign(n, kNoRoute);
    std::vector<std::uint32_t> degree(n, 0);
    std::vector<std::uint32_t> only_link(n, kNoRoute);
    for (std::uint32_t li = 0; li < links_.size(); ++li) {
      for (NodeId e : {links_[li]->endpoint_a(), links_[li]->endpoint_b()}) {
        ++degree[e];
        only_link[e] = li;
      }
    }
    // BFS from every destination; first-found (lowest node id, insertion
    // order) breaks ties deterministically.
    std::vector<std::vector<std::pair<NodeId, std::uint32_t>>> adj(n);
    for (std::uint32_t li = 0; li < links_.size(); ++li) {
      adj[links_[li]->endpoint_a()].push_back({links_[li]->endpoint_b(), li});
      adj[links_[li]->endpoint_b()].push_back({links_[li]->endpoint_a(), li});
    }
    for (NodeId dst = 0; dst < n; ++dst) {
      std::vector<bool> seen(n, false);
      std::deque<NodeId> q{dst};
      seen[dst] = true;
      while (!q.empty()) {
        NodeId cur = q.front();
        q.pop_front();
        for (auto [nb, li] : adj[cur]) {
          if (!seen[nb]) {
            seen[nb] = true;
            next_link_[nb][dst] = li;
            q.push_back(nb);
          }
        }
      }
    }
    // Stub nodes route unknown destinations (virtual service addresses)
    // through their single attachment.
    for (NodeId i = 0; i < n; ++i) {
      if (degree[i] == 1) gateway_[i] = only_link[i];
    }
    routes_stale_ = false;
  }

  Engine& eng_;
  std::vector<std::unique_ptr<Node>> nodes_;
  std::vector<std::unique_ptr<Link>> links_;
  std::vector<std::vector<std::uint32_t>> next_link_;
  std::vector<std::uint32_t> gateway_;
  bool routes_stale_ = true;
  FlowId next_flow_id_ = 1;
};

// Transparent forwarder.
class PlainSwitch : public Node {
 public:
  void on_packet(Packet pkt) override { net_->send_from(id(), std::move(pkt)); }
};

class NullNode : public Node {
 public:
  void on_packet(Packet) override {}
};

inline NodeId Network::add_virtual_node(const std::string& name) {
  return add_node<NullNode>(name).id();
}

}  // namespace edgesim
