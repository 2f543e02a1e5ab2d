#pragma once

#include <charconv>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "edgesim/packet.hpp"
#include "edgesim/time.hpp"

namespace edgesim {

enum class TraceKind : std::uint32_t {
  kArrival = 0,      // packet delivered to a node by a link
  kDrop,             // packet lost (queue full, link down, no route)
  kLinkDown,
  kLinkUp,
  kElection,         // master/slave election on a duplicated flow
  kOffset,           // ack offset computed
  kDetect,           // detector counter increment
  kDisaster,         // disaster mode transition
  kRst,              // RST emitted by the controller
  kPromotion,        // duplicated flow promoted to the slave datacenter
  kAlarm,            // replica response divergence
  kUnknownFlow,      // SYN+ACK (or similar) for an unknown flow dropped
  kFlowRetired,
  kAppResponse,      // application-level response completed at a client
  kAppPutAcked,      // critical put acknowledged to a client
  kStoreCommit,      // a server applied (key, tag) to its local store
  kScripted,         // scripted scenario action
  kCount,
};

inline std::string_view trace_kind_name(TraceKind k) {
  static constexpr std::string_view names[] = {
      "arrival",      "drop",       "link_down",  "link_up",
      "election",     "offset",     "detect",     "disaster",
      "rst",          "promotion",  "alarm",      "unknown_flow",
      "flow_retired", "app_response", "app_put_acked", "store_commit",
      "scripted",
  };
  return names[static_cast<std::uint32_t>(k)];
}

// One record per line, CSV:
// time_us, node, record_kind, flow_id, seq, ack, flags, payload_len, detail
struct TraceRecord {
  SimTime time = 0;
  std::string node;
  TraceKind kind = TraceKind::kArrival;
  FlowId flow_id = 0;
  std::uint32_t seq = 0;
  std::uint32_t ack = 0;
  std::uint8_t flags = 0;
  std::uint32_t payload_len = 0;
  std::string detail;

  void append_csv(std::string& out) const {
    char buf[24];
    auto num = [&](auto v) {
      auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
      out.append(buf, p);
    };
    num(time);
    out += ',';
    out += node;
    out += ',';
    out += trace_kind_name(kind);
    out += ',';
    num(flow_id);
    out += ',';
    num(seq);
    out += ',';
    num(ack);
    out += ',';
    out += Packet::flags_str(flags);
    out += ',';
    num(payload_len);
    out += ',';
    out += detail;
    out += '\n';
  }

  std::string to_csv() const {
    std::string s;
    append_csv(s);
    return s;
  }
};

constexpr std::uint32_t kTraceCsvHeaderFields = 9;
inline constexpr std::string_view kTraceCsvHeader =
    "time_us,node,record_kind,flow_id,seq,ack,flags,payload_len,detail\n";

// Bit mask selecting which record kinds are retained.
struct TraceFilter {
  std::uint32_t mask = ~0u;

  static TraceFilter full() { return TraceFilter{~0u}; }
  // Standard mode drops the per-hop arrival records, which dominate the
  // volume of long runs; everything else (drops included) is kept.
  static TraceFilter standard() {
    return TraceFilter{~(1u << static_cast<std::uint32_t>(TraceKind::kArrival))};
  }

  bool wants(TraceKind k) const {
    return (mask >> static_cast<std::uint32_t>(k)) & 1u;
  }
};

}  // namespace edgesim
