#pragma once

#include <compare>
#include <cstdint>
#include <memory>
#include <string>

namespace edgesim {

using NodeId = std::uint32_t;
using FlowId = std::uint64_t;
using DcId = std::uint32_t;

constexpr NodeId kNoNode = 0xffffffffu;
constexpr DcId kNoDc = 0xffffffffu;

// Reserved flow id for datagram-style control messages (quorum traffic).
constexpr FlowId kControlFlow = 0;

struct Endpoint {
  NodeId node = kNoNode;
  std::uint16_t port = 0;

  friend auto operator<=>(const Endpoint&, const Endpoint&) = default;
};

enum TcpFlag : std::uint8_t {
  kSyn = 0x1,
  kAck = 0x2,
  kFin = 0x4,
  kRst = 0x8,
};

constexpr std::uint32_t kHeaderBytes = 40;

struct Packet {
  Endpoint src;
  Endpoint dst;
  FlowId flow_id = kControlFlow;
  std::uint32_t seq = 0;
  std::uint32_t ack = 0;
  std::uint8_t flags = 0;
  // Shared so that duplication at the edge switch does not copy bulk data.
  std::shared_ptr<const std::string> payload;

  std::uint32_t payload_len() const {
    return payload ? static_cast<std::uint32_t>(payload->size()) : 0;
  }
  std::uint32_t wire_size() const { return payload_len() + kHeaderBytes; }

  bool has(TcpFlag f) const { return (flags & f) != 0; }

  static std::string flags_str(std::uint8_t flags) {
    std::string s;
    if (flags & kSyn) s += 'S';
    if (flags & kAck) s += 'A';
    if (flags & kFin) s += 'F';
    if (flags & kRst) s += 'R';
    if (s.empty()) s = "-";
    return s;
  }
};

inline std::shared_ptr<const std::string> make_payload(std::string data) {
  return std::make_shared<const std::string>(std::move(data));
}

}  // namespace edgesim
