#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>

#include "edgesim/kv/types.hpp"
#include "edgesim/kv/wire.hpp"
#include "edgesim/transport.hpp"

namespace edgesim::kv {

constexpr std::uint16_t kQuorumPort = 9900;

enum class MsgType : std::uint8_t {
  kQuery = 0,
  kQueryReply = 1,
  kStore = 2,
  kStoreAck = 3,
};

// Intra-datacenter quorum message, carried as a single datagram packet
// (flow_id = kControlFlow) on the reliable in-datacenter fabric. Losses are
// handled by the coordinator's quorum-retry timeout, not per-message acks.
struct QuorumMsg {
  MsgType type = MsgType::kQuery;
  std::uint64_t op_id = 0;
  std::string key;
  std::string value;
  Tag tag;

  std::string encode() const {
    std::string out;
    put_u8(out, std::uint8_t(type));
    put_u64(out, op_id);
    put_u16(out, std::uint16_t(key.size()));
    out += key;
    put_u32(out, std::uint32_t(value.size()));
    out += value;
    put_u64(out, tag.counter);
    put_u32(out, tag.client_id);
    return out;
  }

  static std::optional<QuorumMsg> decode(std::string_view data) {
    Reader r(data);
    QuorumMsg m;
    m.type = MsgType(r.u8());
    m.op_id = r.u64();
    m.key = r.bytes(r.u16());
    m.value = r.bytes(r.u32());
    m.tag.counter = r.u64();
    m.tag.client_id = r.u32();
    if (!r.ok() || r.remaining() != 0) return std::nullopt;
    return m;
  }
};

// Replica server of the biquorum key-value store. The server receiving a
// client request acts as coordinator: phase 1 reads the highest tag from a
// read-quorum (a grid row), phase 2 propagates the winning pair to a
// write-quorum (a grid column). Both gets and puts run both phases.
class KvServer : public TcpHost {
 public:
  KvServer(TransportConfig cfg, std::string dc)
      : TcpHost(cfg), dc_(std::move(dc)) {}

  const std::string& dc() const { return dc_; }

  // Node ids are only known once every server exists, so the grid arrives
  // after construction.
  void set_grid(std::shared_ptr<const QuorumSystem> grid) { grid_ = std::move(grid); }

  void serve(std::uint16_t port) {
    listen(port, [this](FlowId fid, Endpoint peer) { return accept_client(fid, peer); });
  }

  // Direct store write used to set up the common initial datacenter state.
  void preload(const std::string& key, std::string value, Tag tag) {
    apply_local(key, std::move(value), tag);
  }

  const std::map<std::string, StoredValue>& store() const { return storage_; }

  Tag stored_tag(const std::string& key) const {
    auto it = storage_.find(key);
    return it == storage_.end() ? Tag::zero() : it->second.tag;
  }

  // Crash the server: it stops reacting to any traffic.
  void kill() { alive_ = false; }
  bool alive() const { return alive_; }

  // Reassembled client request stream per connection (test/oracle hook).
  const std::string* rx_stream(FlowId fid) const {
    auto it = conns_.find(fid);
    return it == conns_.end() ? nullptr : &it->second.rx;
  }

  void on_packet(Packet pkt) override {
    if (!alive_) return;
    if (pkt.flow_id == kControlFlow) {
      if (auto msg = QuorumMsg::decode(pkt.payload ? *pkt.payload : std::string())) {
        handle_msg(*msg, pkt.src);
      }
      return;
    }
    TcpHost::on_packet(std::move(pkt));
  }

 private:
  struct ConnCtx {
    RequestDecoder decoder;
    std::deque<Request> queue;
    std::uint32_t client_id = 0;
    bool busy = false;
    bool gone = false;
    std::string rx;
  };

  struct Op {
    std::uint64_t id = 0;
    FlowId conn = 0;
    Request req;
    std::uint32_t client_id = 0;
    int phase = 1;
    int attempt = 0;               // quorum retries used in the current phase
    std::set<NodeId> waiting;
    std::map<NodeId, SimTime> sent_at;
    StoredValue best;              // highest pair seen in phase 1
    Tag commit_tag;                // tag propagated in phase 2
    std::string commit_value;
    std::uint64_t timer_gen = 0;
  };

  AppHandlers accept_client(FlowId fid, Endpoint peer) {
    ConnCtx& ctx = conns_[fid];
    ctx.client_id = peer.node;  // models the client's unique address
    AppHandlers h;
    h.on_data = [this, fid](std::string_view data) {
      auto it = conns_.find(fid);
      if (it == conns_.end()) return;
      it->second.rx.append(data);
      for (auto& req : it->second.decoder.feed(data)) {
        it->second.queue.push_back(std::move(req));
      }
      maybe_start(fid);
    };
    h.on_peer_fin = [this, fid] { close(fid); };
    h.on_reset = [this, fid] { drop_conn(fid); };
    h.on_closed = [this, fid] { drop_conn(fid); };
    return h;
  }

  void drop_conn(FlowId fid) {
    auto it = conns_.find(fid);
    if (it == conns_.end()) return;
    if (it->second.busy) {
      it->second.gone = true;  // keep ctx until the in-flight op finishes
    } else {
      conns_.erase(it);
    }
  }

  void maybe_start(FlowId fid) {
    auto it = conns_.find(fid);
    if (it == conns_.end() || it->second.busy || it->second.queue.empty()) return;
    if (it->second.gone) return;
    it->second.busy = true;
    Op op;
    op.id = next_op_id_++;
    op.conn = fid;
    op.req = std::move(it->second.queue.front());
    it->second.queue.pop_front();
    op.client_id = it->second.client_id;
    auto [iop, ok] = ops_.emplace(op.id, std::move(op));
    start_phase1(iop->second);
  }

  void start_phase1(Op& op) {
    op.phase = 1;
    op.waiting.clear();
    auto [my_row, my_col] = grid_->position(id());
    const int row = (my_row + op.attempt) % grid_->rows();
    for (NodeId member : grid_->read_quorum(row)) {
      if (member == id()) continue;
      op.waiting.insert(member);
      op.sent_at[member] = eng().now();
      send_msg(member, {MsgType::kQuery, op.id, op.req.key, {}, {}});
    }
    // Local reply.
    consider_pair(op, local_value(op.req.key));
    if (op.waiting.empty()) {
      finish_phase1(op);
    } else {
      arm_op_timer(op);
    }
  }

  void finish_phase1(Op& op) {
    if (op.req.kind == RequestKind::kPut) {
      op.commit_tag = Tag{op.best.tag.counter + 1, op.client_id};
      op.commit_value = op.req.value;
    } else {
      op.commit_tag = op.best.tag;
      op.commit_value = op.best.value;
    }
    op.attempt = 0;
    start_phase2(op);
  }

  void start_phase2(Op& op) {
    op.phase = 2;
    op.waiting.clear();
    auto [my_row, my_col] = grid_->position(id());
    const int col = (my_col + op.attempt) % grid_->cols();
    for (NodeId member : grid_->write_quorum(col)) {
      if (member == id()) continue;
      op.waiting.insert(member);
      op.sent_at[member] = eng().now();
      send_msg(member, {MsgType::kStore, op.id, op.req.key, op.commit_value, op.commit_tag});
    }
    apply_local(op.req.key, op.commit_value, op.commit_tag);
    if (op.waiting.empty()) {
      finish_op(op, Status::kOk);
    } else {
      arm_op_timer(op);
    }
  }

  void finish_op(Op& op, Status status) {
    Response resp;
    resp.kind = op.req.kind;
    resp.status = status;
    resp.request_id = op.req.request_id;
    if (status == Status::kOk) {
      resp.tag = op.commit_tag;
      if (op.req.kind == RequestKind::kGet) resp.value = op.best.value;
    }
    const FlowId fid = op.conn;
    const std::uint64_t op_id = op.id;
    send(fid, resp.encode());
    ops_.erase(op_id);
    auto it = conns_.find(fid);
    if (it != conns_.end()) {
      it->second.busy = false;
      if (it->second.gone) {
        conns_.erase(it);
      } else {
        maybe_start(fid);
      }
    }
  }

  void on_op_timeout(std::uint64_t op_id, std::uint64_t gen) {
    auto it = ops_.find(op_id);
    if (it == ops_.end() || it->second.timer_gen != gen || it->second.waiting.empty()) return;
    Op& op = it->second;
    ++op.attempt;
    const int limit = op.phase == 1 ? grid_->rows() : grid_->cols();
    if (op.attempt >= limit) {
      finish_op(op, Status::kUnavailable);
      return;
    }
    if (op.phase == 1) {
      op.best = {};
      start_phase1(op);
    } else {
      start_phase2(op);
    }
  }

  void arm_op_timer(Op& op) {
    const std::uint64_t gen = ++op.timer_gen;
    const std::uint64_t op_id = op.id;
    const SimTime timeout = std::max<SimTime>(4 * quorum_srtt_, us(200));
    eng().schedule_in(timeout, EventKind::kTimerExpiry, id(),
                      [this, op_id, gen] { on_op_timeout(op_id, gen); });
  }

  void handle_msg(const QuorumMsg& msg, Endpoint from) {
    switch (msg.type) {
      case MsgType::kQuery: {
        StoredValue sv = local_value(msg.key);
        send_msg(from.node, {MsgType::kQueryReply, msg.op_id, msg.key, sv.value, sv.tag});
        return;
      }
      case MsgType::kStore: {
        apply_local(msg.key, msg.value, msg.tag);
        send_msg(from.node, {MsgType::kStoreAck, msg.op_id, msg.key, {}, {}});
        return;
      }
      case MsgType::kQueryReply:
      case MsgType::kStoreAck: {
        auto it = ops_.find(msg.op_id);
        if (it == ops_.end()) return;
        Op& op = it->second;
        // Late replies from a timed-out attempt still teach the timeout
        // estimator how slow the quorum actually is.
        if (auto s = op.sent_at.find(from.node); s != op.sent_at.end()) {
          sample_quorum_rtt(eng().now() - s->second);
          op.sent_at.erase(s);
        }
        auto w = op.waiting.find(from.node);
        if (w == op.waiting.end()) return;
        op.waiting.erase(w);
        if (msg.type == MsgType::kQueryReply) {
          consider_pair(op, {msg.value, msg.tag});
        }
        if (op.waiting.empty()) {
          ++op.timer_gen;  // cancel the phase timer
          if (op.phase == 1) {
            finish_phase1(op);
          } else {
            finish_op(op, Status::kOk);
          }
        }
        return;
      }
    }
  }

  void consider_pair(Op& op, StoredValue sv) {
    if (sv.tag > op.best.tag) op.best = std::move(sv);
  }

  StoredValue local_value(const std::string& key) const {
    auto it = storage_.find(key);
    return it == storage_.end() ? StoredValue{} : it->second;
  }

  void apply_local(const std::string& key, std::string value, Tag tag) {
    if (tag == Tag::zero()) return;  // write-back of an absent key
    auto it = storage_.find(key);
    if (it != storage_.end() && !(tag > it->second.tag)) return;  // stale write
    storage_[key] = StoredValue{std::move(value), tag};
    TraceRecord rec;
    rec.node = name();
    rec.kind = TraceKind::kStoreCommit;
    rec.detail = "key=" + key + ";tag=" + std::to_string(tag.counter) + "/" +
                 std::to_string(tag.client_id);
    eng().trace(std::move(rec));
  }

  void send_msg(NodeId to, QuorumMsg msg) {
    Packet p;
    p.src = {id(), kQuorumPort};
    p.dst = {to, kQuorumPort};
    p.flow_id = kControlFlow;
    p.payload = make_payload(msg.encode());
    net_->send_from(id(), std::move(p));
  }

  void sample_quorum_rtt(SimTime sample) {
    if (sample <= 0) return;
    quorum_srtt_ = quorum_srtt_ ? (7 * quorum_srtt_ + sample) / 8 : sample;
  }

  std::string dc_;
  std::shared_ptr<const QuorumSystem> grid_;
  std::map<std::string, StoredValue> storage_;
  std::map<FlowId, ConnCtx> conns_;
  std::map<std::uint64_t, Op> ops_;
  std::uint64_t next_op_id_ = 1;
  SimTime quorum_srtt_ = ms(1);
  bool alive_ = true;
};

}  // namespace edgesim::kv
