#pragma once

// Brute-force linearizability checker for a single register with last-write
// wins semantics. Suitable for short histories (factorial search, pruned by
// real-time order). Used as the independent oracle for the quorum store.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "edgesim/time.hpp"

namespace edgesim::testing {

struct LinOp {
  bool is_put = false;
  std::string key;
  std::string value;  // written value for puts, observed value for gets
  SimTime invoke = 0;
  SimTime respond = 0;
};

namespace detail {

inline bool lin_search(const std::vector<LinOp>& ops, std::vector<bool>& done,
                       std::size_t remaining, const std::string& reg) {
  if (remaining == 0) return true;
  SimTime earliest_response = std::numeric_limits<SimTime>::max();
  for (std::size_t i = 0; i < ops.size(); ++i) {
    if (!done[i]) earliest_response = std::min(earliest_response, ops[i].respond);
  }
  for (std::size_t i = 0; i < ops.size(); ++i) {
    if (done[i] || ops[i].invoke > earliest_response) continue;
    if (!ops[i].is_put && ops[i].value != reg) continue;
    done[i] = true;
    const bool ok = lin_search(ops, done, remaining - 1,
                               ops[i].is_put ? ops[i].value : reg);
    done[i] = false;
    if (ok) return true;
  }
  return false;
}

}  // namespace detail

// All operations must target the same key; the register starts empty.
inline bool linearizable_key(const std::vector<LinOp>& ops) {
  std::vector<bool> done(ops.size(), false);
  return detail::lin_search(ops, done, ops.size(), std::string());
}

// Splits a mixed-key history per key and checks each independently.
inline bool linearizable(const std::vector<LinOp>& history) {
  std::vector<std::string> keys;
  for (const auto& op : history) keys.push_back(op.key);
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  for (const auto& key : keys) {
    std::vector<LinOp> ops;
    for (const auto& op : history) {
      if (op.key == key) ops.push_back(op);
    }
    if (!linearizable_key(ops)) return false;
  }
  return true;
}

}  // namespace edgesim::testing
