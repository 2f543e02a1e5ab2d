// Acceptance gate: one pass/fail line per criterion, exit code = number of
// failed criteria.

#include <chrono>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "edgesim/harness/experiment.hpp"
#include "edgesim/harness/metrics.hpp"
#include "edgesim/harness/scenario.hpp"
#include "edgesim/sde/detector.hpp"
#include "edgesim/seqnum.hpp"
#include "support/history_gen.hpp"
#include "support/linearizability.hpp"
#include "support/world_fixture.hpp"

using namespace edgesim;
using namespace edgesim::harness;

namespace {

int failures = 0;

void report(int criterion, bool pass, const std::string& msg) {
  std::cout << (pass ? "PASS" : "FAIL") << " criterion " << criterion << ": " << msg
            << "\n";
  if (!pass) ++failures;
}

struct Check {
  bool ok = true;
  std::string detail;
  Check& require(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
    return *this;
  }
};

Scenario load_scenario(const char* rel) {
  std::ifstream f(std::string(EDGESIM_SOURCE_DIR "/") + rel, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  auto res = parse_scenario(ss.str());
  if (!res.ok()) throw std::runtime_error(std::string("invalid scenario ") + rel);
  return res.scenario;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

// --- criteria 1-3, 8: the baseline bulk-read scenario -----------------------

void baseline_criteria() {
  Scenario sc = load_scenario("scenarios/fig3.scn");
  const auto t0 = std::chrono::steady_clock::now();
  Experiment run1(sc);
  run1.run();
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const Metrics m = run1.metrics();

  {  // 1: RTT curve and runtime
    Check c;
    c.require(m.rtt_pre_ms >= 80.0 && m.rtt_pre_ms <= 120.0,
              "pre-disaster RTT " + fmt(m.rtt_pre_ms) + "ms outside 100ms +-20%");
    c.require(m.rtt_post_ms >= 340.0 * 0.95 && m.rtt_post_ms <= 340.0 * 1.05,
              "post-recovery RTT " + fmt(m.rtt_post_ms) + "ms outside 340ms +-5%");
    c.require(wall < 60.0, "400s run took " + fmt(wall) + "s wall-clock");
    report(1, c.ok,
           c.ok ? "RTT " + fmt(m.rtt_pre_ms) + "ms -> " + fmt(m.rtt_post_ms) +
                      "ms, 400s simulated in " + fmt(wall) + "s"
                : c.detail);
  }
  {  // 2: throughput curve
    const double expected_post = double(sc.transport.window) * 8.0 / 0.34 / 1e6;
    Check c;
    c.require(m.throughput_pre_mbps >= 90.0,
              "pre-disaster throughput " + fmt(m.throughput_pre_mbps) + " < 90 Mbit/s");
    c.require(m.throughput_post_mbps >= expected_post * 0.9 &&
                  m.throughput_post_mbps <= expected_post * 1.1,
              "post-disaster throughput " + fmt(m.throughput_post_mbps) +
                  " not within 10% of " + fmt(expected_post));
    c.require(m.throughput_post_mbps < 100.0, "post-disaster throughput at capacity");
    report(2, c.ok,
           c.ok ? "throughput " + fmt(m.throughput_pre_mbps) + " -> " +
                      fmt(m.throughput_post_mbps) + " Mbit/s (expected post " +
                      fmt(expected_post) + ")"
                : c.detail);
  }
  {  // 3: recovery and detection times
    Check c;
    c.require(m.recovered, "run did not recover");
    c.require(m.rto_seconds < 30.0, "rto " + fmt(m.rto_seconds) + "s >= 30s");
    c.require(m.detection_time_seconds >= 15.0 && m.detection_time_seconds <= 25.0,
              "detection wait " + fmt(m.detection_time_seconds) + "s outside [15,25]");
    report(3, c.ok,
           c.ok ? "rto " + fmt(m.rto_seconds) + "s, detection wait " +
                      fmt(m.detection_time_seconds) + "s"
                : c.detail);
  }
  {  // 8: determinism of the artifacts, both shipped scenarios
    Experiment run2(sc);
    run2.run();
    Check c;
    c.require(run1.trace_csv() == run2.trace_csv(), "baseline trace.csv differs");
    c.require(run1.metrics_json() == run2.metrics_json(), "baseline metrics.json differs");
    Scenario crit = load_scenario("scenarios/critical_puts.scn");
    Experiment c1(crit), c2(crit);
    c1.run();
    c2.run();
    c.require(c1.trace_csv() == c2.trace_csv(), "critical trace.csv differs");
    c.require(c1.metrics_json() == c2.metrics_json(), "critical metrics.json differs");
    report(8, c.ok,
           c.ok ? "equal seeds give byte-identical trace.csv and metrics.json"
                : c.detail);
  }
}

// --- criterion 4: nil RPO under duplication, data loss without --------------

void rpo_criterion() {
  Scenario sc = load_scenario("scenarios/critical_puts.scn");
  Check c;
  long long min_in_flight = 1 << 30;
  for (std::uint64_t seed = 1; seed <= 20 && c.ok; ++seed) {
    RunOverrides on;
    on.seed = seed;
    Experiment treat(sc, on);
    treat.run();
    const Metrics mt = treat.metrics();
    min_in_flight = std::min(min_in_flight, mt.puts_in_flight_at_failure);
    c.require(mt.puts_in_flight_at_failure >= 100,
              "seed " + std::to_string(seed) + ": only " +
                  std::to_string(mt.puts_in_flight_at_failure) + " puts in flight");
    c.require(mt.rpo_lost_updates == 0,
              "seed " + std::to_string(seed) + ": rpo " +
                  std::to_string(mt.rpo_lost_updates) + " with duplication");

    RunOverrides off = on;
    off.no_duplication = true;
    Experiment control(sc, off);
    control.run();
    const Metrics mc = control.metrics();
    // Puts acked before the failure were never migrated without duplication.
    long long acked_pre_failure = 0;
    for (const auto& r : control.trace()) {
      if (r.kind == TraceKind::kAppPutAcked && r.time < sc.events[0].at)
        ++acked_pre_failure;
    }
    c.require(acked_pre_failure > 0,
              "seed " + std::to_string(seed) + ": no pre-failure acked puts");
    c.require(mc.rpo_lost_updates > 0,
              "seed " + std::to_string(seed) + ": control rpo 0");
    c.require(mt.rpo_lost_updates <= mc.rpo_lost_updates,
              "seed " + std::to_string(seed) + ": treatment rpo above control");
  }
  report(4, c.ok,
         c.ok ? "20 seeds: rpo 0 with duplication (>=" + std::to_string(min_in_flight) +
                    " puts in flight), rpo > 0 without"
              : c.detail);
}

// --- criterion 5: detector equals the reference counting rule ---------------

void detector_criterion() {
  Check c;
  long long cases = 0;
  for (int threshold : {1, 2, 3, 5}) {
    for (int len = 0; len <= 8; ++len) {
      for (int bits = 0; bits < (1 << len); ++bits) {
        sde::DisasterDetector det(threshold);
        int counter = 0;
        bool mode = false;
        for (int i = 0; i < len; ++i) {
          const bool retx = (bits >> i) & 1;
          if (retx) {
            det.on_client_retransmission(0);
            if (!mode && ++counter >= threshold) mode = true;
          } else {
            det.on_dc_packet(0);
            if (!mode) counter = 0;
          }
          if (det.disaster_mode(0) != mode) {
            c.require(false, "mismatch threshold=" + std::to_string(threshold) +
                                 " len=" + std::to_string(len) +
                                 " bits=" + std::to_string(bits));
          }
        }
        ++cases;
      }
    }
  }
  report(5, c.ok,
         c.ok ? std::to_string(cases) + " event sequences match the counting rule"
              : c.detail);
}

// --- criterion 6: slave request stream is byte-identical under losses -------

void stream_criterion() {
  using namespace edgesim::testing;
  Check c;
  for (std::uint64_t round = 0; round < 50 && c.ok; ++round) {
    WorldParams p;
    p.seed = 3000 + round;
    World w(p);
    TcpHost& host = w.add_client("client");
    Client cl(host, w.service);
    cl.open();
    std::mt19937_64 gen(round);
    // One scripted single loss somewhere on each datacenter leg.
    w.leg1->schedule_drop(w.s2->id(), 3 + gen() % 25);
    w.leg2->schedule_drop(w.s2->id(), 3 + gen() % 25);
    const int puts = 20 + int(gen() % 20);
    for (int i = 0; i < puts; ++i) {
      cl.put("k" + std::to_string(i % 5), "v" + std::to_string(i), true);
    }
    w.eng.run_until(sec(40));

    c.require(int(cl.responses.size()) == puts,
              "round " + std::to_string(round) + ": " +
                  std::to_string(cl.responses.size()) + "/" + std::to_string(puts) +
                  " responses");
    const std::string* master_rx = nullptr;
    const std::string* slave_rx = nullptr;
    for (auto* srv : w.dc1) {
      if (srv->id() == w.lb1->server_for(cl.fid)) master_rx = srv->rx_stream(cl.fid);
    }
    for (auto* srv : w.dc2) {
      if (srv->id() == w.lb2->server_for(cl.fid)) slave_rx = srv->rx_stream(cl.fid);
    }
    c.require(master_rx && slave_rx && !master_rx->empty(),
              "round " + std::to_string(round) + ": missing server stream");
    if (master_rx && slave_rx) {
      c.require(*master_rx == *slave_rx,
                "round " + std::to_string(round) + ": streams differ");
    }
  }
  report(6, c.ok, c.ok ? "50 lossy runs: slave request stream equals master's"
                       : c.detail);
}

// --- criterion 7: quorum intersection and linearizability -------------------

void quorum_criterion() {
  Check c;
  std::vector<NodeId> ids;
  for (NodeId i = 0; i < 9; ++i) ids.push_back(i);
  kv::QuorumSystem grid(ids, 3, 3);
  for (int r = 0; r < 3; ++r) {
    for (int col = 0; col < 3; ++col) {
      int common = 0;
      for (NodeId a : grid.read_quorum(r)) {
        for (NodeId b : grid.write_quorum(col)) {
          if (a == b) ++common;
        }
      }
      c.require(common == 1, "row " + std::to_string(r) + " x col " +
                                 std::to_string(col) + " intersect " +
                                 std::to_string(common));
    }
  }

  int checked = 0;
  for (std::uint64_t seed = 0; seed < 1000 && c.ok; ++seed) {
    auto history = edgesim::testing::generate_history(seed);
    c.require(!history.empty(), "seed " + std::to_string(seed) + ": empty history");
    for (const auto& op : history) {
      c.require(op.respond >= op.invoke,
                "seed " + std::to_string(seed) + ": incomplete op");
    }
    c.require(edgesim::testing::linearizable(history),
              "seed " + std::to_string(seed) + ": history not linearizable");
    ++checked;
  }
  report(7, c.ok,
         c.ok ? "3x3 intersections exact; " + std::to_string(checked) +
                    " histories linearizable"
              : c.detail);
}

// --- criterion 9: sequence offset algebra ------------------------------------

void offset_criterion() {
  Check c;
  std::mt19937_64 gen(99);
  std::uniform_int_distribution<std::uint32_t> any(0, ~0u);
  std::uniform_int_distribution<std::uint32_t> near(0, 1u << 20);
  long long cases = 0;
  for (int i = 0; i < 100'000; ++i) {
    // A third of the samples hug the 2^32 wrap boundary on either side.
    std::uint32_t master = any(gen);
    std::uint32_t slave = any(gen);
    std::uint32_t v = any(gen);
    if (i % 3 == 1) v = ~0u - near(gen);
    if (i % 3 == 2) v = near(gen);
    const SeqOffset off = SeqOffset::between(slave, master);
    if (off.slave_to_client(off.client_to_slave(v)) != v ||
        off.client_to_slave(off.slave_to_client(v)) != v ||
        off.client_to_slave(master) != slave || off.slave_to_client(slave) != master) {
      c.require(false, "round-trip failed at i=" + std::to_string(i));
      break;
    }
    ++cases;
  }
  report(9, c.ok, c.ok ? std::to_string(cases) + " offset round-trips exact" : c.detail);
}

}  // namespace

int main() {
  try {
    baseline_criteria();  // 1, 2, 3, 8
    rpo_criterion();      // 4
    detector_criterion();  // 5
    stream_criterion();   // 6
    quorum_criterion();   // 7
    offset_criterion();   // 9
  } catch (const std::exception& ex) {
    std::cout << "FAIL: unhandled exception: " << ex.what() << "\n";
    return 99;
  }
  std::cout << (failures == 0 ? "ALL CRITERIA PASSED" : "CRITERIA FAILED") << "\n";
  return failures;
}
