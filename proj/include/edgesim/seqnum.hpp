#pragma once

#include <cstdint>

namespace edgesim {

// Serial-number arithmetic on 32-bit sequence numbers (wraps modulo 2^32).

inline std::int32_t seq_diff(std::uint32_t a, std::uint32_t b) {
  return static_cast<std::int32_t>(a - b);
}

inline bool seq_lt(std::uint32_t a, std::uint32_t b) { return seq_diff(a, b) < 0; }
inline bool seq_le(std::uint32_t a, std::uint32_t b) { return seq_diff(a, b) <= 0; }
inline bool seq_gt(std::uint32_t a, std::uint32_t b) { return seq_diff(a, b) > 0; }
inline bool seq_ge(std::uint32_t a, std::uint32_t b) { return seq_diff(a, b) >= 0; }

// Acknowledgment-offset translation between the master and slave legs of a
// duplicated flow. The offset is slave_isn - master_isn in serial arithmetic;
// client ack fields move into slave sequence space by adding it and slave
// sequence fields move back into client-visible (master) space by
// subtracting it.
struct SeqOffset {
  std::uint32_t delta = 0;

  static SeqOffset between(std::uint32_t slave_isn, std::uint32_t master_isn) {
    return SeqOffset{slave_isn - master_isn};
  }

  std::uint32_t client_to_slave(std::uint32_t v) const { return v + delta; }
  std::uint32_t slave_to_client(std::uint32_t v) const { return v - delta; }
};

}  // namespace edgesim
