#pragma once

#include <map>
#include <set>

#include "edgesim/packet.hpp"

namespace edgesim::sde {

// Centralized disaster detection: one counter per destination datacenter.
// A client retransmission toward a datacenter increments its counter, any
// packet coming back from that datacenter resets it; reaching the threshold
// latches disaster mode for that datacenter (no automatic fail-back).
class DisasterDetector {
 public:
  explicit DisasterDetector(int threshold = 5) : threshold_(threshold) {}

  int threshold() const { return threshold_; }

  // Returns true exactly when this call transitions the datacenter into
  // disaster mode.
  bool on_client_retransmission(DcId dc) {
    if (disaster_.count(dc)) return false;
    if (++counters_[dc] >= threshold_) {
      disaster_.insert(dc);
      return true;
    }
    return false;
  }

  void on_dc_packet(DcId dc) { counters_[dc] = 0; }

  bool disaster_mode(DcId dc) const { return disaster_.count(dc) != 0; }

  int counter(DcId dc) const {
    auto it = counters_.find(dc);
    return it == counters_.end() ? 0 : it->second;
  }

 private:
  int threshold_;
  std::map<DcId, int> counters_;
  std::set<DcId> disaster_;
};

}  // namespace edgesim::sde
