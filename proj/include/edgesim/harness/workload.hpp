#pragma once

// Client application drivers. Both workloads keep a bounded number of
// requests outstanding on one connection, reconnect after a reset and
// re-issue whatever was still unanswered. Completions are traced as
// app_response records (plus app_put_acked for critical puts), which is what
// the metrics are computed from.

#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "edgesim/kv/wire.hpp"
#include "edgesim/network.hpp"
#include "edgesim/transport.hpp"

namespace edgesim::harness {

class Workload {
 public:
  virtual ~Workload() = default;
  virtual void start() = 0;
  virtual long long in_flight() const = 0;
  virtual TcpHost& host() = 0;
};

class KvClientWorkload : public Workload {
 public:
  KvClientWorkload(Network& net, TcpHost& host, Endpoint service)
      : net_(net), host_(host), service_(service) {}

  TcpHost& host() override { return host_; }
  long long in_flight() const override { return static_cast<long long>(outstanding_.size()); }
  long long completed() const { return completed_; }
  long long resets() const { return resets_; }

 protected:
  Engine& eng() { return net_.engine(); }

  void connect() {
    AppHandlers h;
    h.on_established = [this] {
      established_ = true;
      on_connected();
    };
    h.on_data = [this](std::string_view d) {
      for (auto& r : decoder_.feed(d)) handle_response(r);
    };
    h.on_reset = [this] { handle_disconnect(); };
    h.on_connect_failed = [this] { handle_disconnect(); };
    decoder_ = kv::ResponseDecoder{};
    fid_ = host_.connect(service_, h);
  }

  void issue(kv::Request req) {
    outstanding_[req.request_id] = req;
    if (established_) host_.send(fid_, req.encode());
  }

  void trace_response(const kv::Response& r) {
    TraceRecord rec;
    rec.node = host_.name();
    rec.kind = TraceKind::kAppResponse;
    rec.flow_id = fid_;
    rec.payload_len = static_cast<std::uint32_t>(r.value.size());
    rec.detail = "request_id=" + std::to_string(r.request_id);
    eng().trace(std::move(rec));
  }

  // Subclass hooks.
  virtual void on_connected() {
    // Push every request that was outstanding when the previous connection
    // died; answered requests are never re-issued.
    for (const auto& [id, req] : outstanding_) host_.send(fid_, req.encode());
  }
  virtual void on_response(const kv::Request& req, const kv::Response& resp) = 0;

 private:
  void handle_response(const kv::Response& r) {
    auto it = outstanding_.find(r.request_id);
    if (it == outstanding_.end()) return;  // duplicate answer after a re-issue
    if (r.status != kv::Status::kOk) {
      // Quorum temporarily unavailable: retry the same request.
      host_.send(fid_, it->second.encode());
      return;
    }
    kv::Request req = std::move(it->second);
    outstanding_.erase(it);
    ++completed_;
    trace_response(r);
    on_response(req, r);
  }

  void handle_disconnect() {
    established_ = false;
    ++resets_;
    eng().schedule_in(ms(100), EventKind::kTimerExpiry, host_.id(), [this] { connect(); });
  }

  Network& net_;
  TcpHost& host_;
  Endpoint service_;
  FlowId fid_ = 0;
  bool established_ = false;
  kv::ResponseDecoder decoder_;
  std::map<std::uint64_t, kv::Request> outstanding_;
  long long completed_ = 0;
  long long resets_ = 0;
};

// Reads preloaded bulk keys as fast as the pipe allows: `depth` pipelined
// gets, each answered with a value_size-byte value; every completion issues
// the next get. Runs until the simulation ends.
class BulkGetWorkload : public KvClientWorkload {
 public:
  BulkGetWorkload(Network& net, TcpHost& host, Endpoint service, SimTime start_at,
                  int depth, int keys)
      : KvClientWorkload(net, host, service), start_at_(start_at), depth_(depth),
        keys_(keys) {}

  static std::string key_name(int i) { return "bulk" + std::to_string(i); }

  void start() override {
    eng().schedule_at(start_at_, EventKind::kTimerExpiry, host().id(),
                      [this] { connect(); });
  }

 protected:
  void on_connected() override {
    KvClientWorkload::on_connected();
    while (in_flight() < depth_) issue_next();
  }
  void on_response(const kv::Request&, const kv::Response&) override { issue_next(); }

 private:
  void issue_next() {
    kv::Request req;
    req.kind = kv::RequestKind::kGet;
    req.key = key_name(static_cast<int>(issued_ % keys_));
    req.request_id = ++last_id_;
    ++issued_;
    issue(std::move(req));
  }

  SimTime start_at_;
  int depth_;
  int keys_;
  long long issued_ = 0;
  std::uint64_t last_id_ = 0;
};

// Issues `count` critical puts, each to its own key, holding at most `depth`
// outstanding. A small random think time decorrelates runs across seeds.
// Every acknowledged put is traced with its key and committed tag.
class PutStreamWorkload : public KvClientWorkload {
 public:
  PutStreamWorkload(Network& net, TcpHost& host, Endpoint service, SimTime start_at,
                    long long count, int depth, std::uint32_t value_size)
      : KvClientWorkload(net, host, service), start_at_(start_at), count_(count),
        depth_(depth), value_size_(value_size) {}

  struct AckedPut {
    std::string key;
    kv::Tag tag;
    SimTime at;
  };
  const std::vector<AckedPut>& acked() const { return acked_; }
  long long issued() const { return issued_; }

  void start() override {
    eng().schedule_at(start_at_, EventKind::kTimerExpiry, host().id(), [this] {
      connect();
      pump();
    });
  }

 protected:
  void on_response(const kv::Request& req, const kv::Response& resp) override {
    acked_.push_back({req.key, resp.tag, eng().now()});
    TraceRecord rec;
    rec.node = host().name();
    rec.kind = TraceKind::kAppPutAcked;
    rec.detail = "key=" + req.key + ";tag=" + std::to_string(resp.tag.counter) + "/" +
                 std::to_string(resp.tag.client_id);
    eng().trace(std::move(rec));
    pump();
  }

 private:
  void pump() {
    if (issue_pending_ || issued_ >= count_ || in_flight() >= depth_) return;
    issue_pending_ = true;
    std::uniform_int_distribution<SimTime> think(0, 200);
    eng().schedule_in(think(eng().rng()), EventKind::kTimerExpiry, host().id(), [this] {
      issue_pending_ = false;
      if (issued_ >= count_ || in_flight() >= depth_) return;
      kv::Request req;
      req.kind = kv::RequestKind::kPut;
      req.critical = true;
      req.request_id = static_cast<std::uint64_t>(++issued_);
      req.key = "p" + std::to_string(req.request_id);
      req.value = std::string(value_size_, 'v');
      issue(std::move(req));
      pump();
    });
  }

  SimTime start_at_;
  long long count_;
  int depth_;
  std::uint32_t value_size_;
  long long issued_ = 0;
  bool issue_pending_ = false;
  std::vector<AckedPut> acked_;
};

}  // namespace edgesim::harness
