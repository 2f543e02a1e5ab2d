#pragma once

// Builds a world from a parsed scenario, runs it, samples per-connection
// stats once per second, and renders the three artifacts: trace.csv,
// conn_stats.csv and metrics.json.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "edgesim/harness/metrics.hpp"
#include "edgesim/harness/scenario.hpp"
#include "edgesim/harness/workload.hpp"
#include "edgesim/kv/load_balancer.hpp"
#include "edgesim/kv/server.hpp"
#include "edgesim/network.hpp"
#include "edgesim/sde/edge.hpp"
#include "edgesim/transport.hpp"

namespace edgesim::harness {

constexpr std::uint16_t kServicePort = 5000;

struct RunOverrides {
  std::optional<std::uint64_t> seed;
  bool no_duplication = false;
  std::optional<int> threshold;
};

class Experiment {
 public:
  struct DcRefs {
    kv::LbSwitch* lb = nullptr;
    std::vector<kv::KvServer*> servers;
    std::shared_ptr<kv::QuorumSystem> grid;
    DcId dc_id = kNoDc;
  };

  Experiment(Scenario scenario, RunOverrides ov = {})
      : sc_(std::move(scenario)),
        seed_(ov.seed.value_or(sc_.seed)),
        threshold_(ov.threshold.value_or(sc_.threshold)),
        duplication_(!ov.no_duplication),
        eng_(seed_),
        net_(eng_) {
    eng_.set_trace_filter(TraceFilter::standard());
    build();
  }

  void run() {
    for (auto& w : workloads_) w->start();
    schedule_sampler();
    schedule_events();
    eng_.run_until(sc_.duration);
    flush_sample();
    metrics_ = compute_metrics(eng_.trace_records(), samples_, metrics_context());
  }

  // --- results ------------------------------------------------------------

  const Metrics& metrics() const { return metrics_; }
  const std::vector<TraceRecord>& trace() const { return eng_.trace_records(); }
  const std::vector<ConnRow>& samples() const { return samples_; }
  bool disaster_scripted() const { return disasters_scripted_ > 0; }
  // bps * window integral of the emitted throughput series, in bytes.
  double integrated_bytes() const { return integrated_bytes_; }

  MetricsContext metrics_context() const {
    MetricsContext ctx;
    ctx.seed = seed_;
    ctx.duration = sc_.duration;
    if (!sc_.services.empty()) {
      const ServiceDecl& svc = sc_.services.front();
      const std::string survivor =
          failed_dc_.empty() || failed_dc_ != svc.primary ? svc.primary : svc.secondary;
      auto it = dcs_.find(survivor);
      if (it != dcs_.end()) {
        for (auto* s : it->second.servers) ctx.surviving_servers.push_back(s->name());
      }
    }
    return ctx;
  }

  std::string trace_csv() const {
    std::string out(kTraceCsvHeader);
    for (const auto& r : eng_.trace_records()) r.append_csv(out);
    return out;
  }
  std::string conn_stats_csv() const { return conn_stats_to_csv(samples_); }
  std::string metrics_json() const { return to_json(metrics_).dump(2) + "\n"; }

  void write(const std::string& out_dir) const {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    auto put = [&](const char* name, const std::string& content) {
      std::ofstream f(fs::path(out_dir) / name, std::ios::binary);
      if (!f) throw std::runtime_error(std::string("cannot write ") + name);
      f << content;
    };
    put("trace.csv", trace_csv());
    put("conn_stats.csv", conn_stats_csv());
    put("metrics.json", metrics_json());
  }

  // --- introspection for tests --------------------------------------------

  Engine& engine() { return eng_; }
  Network& net() { return net_; }
  sde::EdgeSwitch* edge() { return edge_; }
  const std::map<std::string, DcRefs>& dcs() const { return dcs_; }
  const std::vector<std::unique_ptr<Workload>>& workloads() const { return workloads_; }

 private:
  void build() {
    TransportConfig cfg = sc_.transport;
    DcId next_dc = 0;
    for (const auto& n : sc_.nodes) {
      switch (n.kind) {
        case NodeDecl::Kind::kClient:
          clients_[n.name] = &net_.add_node<TcpHost>(n.name, cfg);
          break;
        case NodeDecl::Kind::kEdge:
          edge_ = &net_.add_node<sde::EdgeSwitch>(n.name, threshold_, duplication_);
          break;
        case NodeDecl::Kind::kSwitch:
          net_.add_node<PlainSwitch>(n.name);
          break;
        case NodeDecl::Kind::kDc: {
          DcRefs dc;
          dc.dc_id = next_dc++;
          std::vector<NodeId> ids;
          for (int i = 0; i < n.servers; ++i) {
            auto& s = net_.add_node<kv::KvServer>(
                n.name + "_srv" + std::to_string(i), cfg, n.name);
            dc.servers.push_back(&s);
            ids.push_back(s.id());
          }
          dc.lb = &net_.add_node<kv::LbSwitch>(n.lb, kServicePort, ids);
          dc.grid = std::make_shared<kv::QuorumSystem>(ids, 3, n.servers / 3);
          for (auto* s : dc.servers) {
            s->set_grid(dc.grid);
            s->serve(kServicePort);
            net_.add_link(dc.lb->id(), s->id(), n.link_delay, n.link_capacity,
                          n.link_queue);
          }
          dcs_[n.name] = std::move(dc);
          break;
        }
      }
    }

    for (const auto& l : sc_.links) {
      net_.add_link(require_node(l.a), require_node(l.b), l.delay, l.capacity, l.queue);
    }
    for (auto& [name, host] : clients_) edge_->add_client(host->id());

    for (const auto& s : sc_.services) {
      const NodeId virt = net_.add_virtual_node(s.name);
      const DcRefs& p = dcs_.at(s.primary);
      const DcRefs& sec = dcs_.at(s.secondary);
      service_eps_[s.name] = Endpoint{virt, kServicePort};
      edge_->add_service({Endpoint{virt, kServicePort}, p.lb->service_endpoint(),
                          sec.lb->service_endpoint(), p.dc_id, sec.dc_id, s.critical});
    }

    for (const auto& w : sc_.workloads) {
      TcpHost& host = *clients_.at(w.client);
      const Endpoint svc = service_eps_.at(w.service);
      if (w.kind == WorkloadDecl::Kind::kBulkGet) {
        preload_bulk(w);
        workloads_.push_back(std::make_unique<BulkGetWorkload>(net_, host, svc, w.start,
                                                               w.depth, w.keys));
      } else {
        workloads_.push_back(std::make_unique<PutStreamWorkload>(
            net_, host, svc, w.start, w.count, w.depth, w.value_size));
      }
    }
  }

  void preload_bulk(const WorkloadDecl& w) {
    const ServiceDecl* svc = sc_.service(w.service);
    for (int i = 0; i < w.keys; ++i) {
      const std::string key = BulkGetWorkload::key_name(i);
      const std::string value(w.value_size, char('a' + i % 26));
      for (const auto& dc_name : {svc->primary, svc->secondary}) {
        for (auto* s : dcs_.at(dc_name).servers) s->preload(key, value, kv::Tag{1, 0});
      }
    }
  }

  NodeId require_node(const std::string& name) const {
    NodeId id = net_.find_node(name);
    if (id == kNoNode) throw std::runtime_error("unknown node '" + name + "'");
    return id;
  }

  void schedule_events() {
    SimTime first_down = -1;
    for (const auto& e : sc_.events) {
      const bool down = e.kind == EventDecl::Kind::kLinkDown;
      Link* link = net_.find_link(require_node(e.a), require_node(e.b));
      if (!link) throw std::runtime_error("no link " + e.a + "-" + e.b);
      if (down) {
        ++disasters_scripted_;
        if (first_down < 0) {
          first_down = e.at;
          // The datacenter the cut isolates, if the link touches one.
          for (const auto& [name, dc] : dcs_) {
            if (dc.lb->name() == e.a || dc.lb->name() == e.b) failed_dc_ = name;
          }
        }
      }
      const std::string detail =
          std::string(down ? "link_down " : "link_up ") + e.a + "-" + e.b;
      eng_.schedule_at(e.at, EventKind::kScriptedAction, kNoNode, [this, link, down, detail] {
        eng_.trace(TraceRecord{0, "script", TraceKind::kScripted, 0, 0, 0, 0, 0, detail});
        link->set_state(!down);
      });
    }
    // Snapshot of outstanding critical puts, taken just after the cut fires.
    if (first_down >= 0) {
      eng_.schedule_at(first_down, EventKind::kScriptedAction, kNoNode, [this] {
        long long in_flight = 0;
        for (auto& w : workloads_) in_flight += w->in_flight();
        eng_.trace(TraceRecord{0, "script", TraceKind::kScripted, 0, 0, 0, 0, 0,
                               "puts_in_flight=" + std::to_string(in_flight)});
      });
    }
  }

  void schedule_sampler() {
    for (SimTime t = sec(1); t < sc_.duration; t += sec(1)) {
      eng_.schedule_at(t, EventKind::kTimerExpiry, kNoNode, [this] { sample(); });
    }
  }

  void sample() { take_sample(eng_.now()); }
  void flush_sample() { take_sample(sc_.duration); }

  void take_sample(SimTime now) {
    const SimTime window = now - last_sample_at_;
    if (window <= 0) return;
    for (auto& w : workloads_) {
      for (const auto& [fid, conn] : w->host().connections()) {
        const std::uint64_t bytes = conn.stats().bytes_delivered;
        const std::uint64_t prev = delivered_[fid];
        delivered_[fid] = bytes;
        const double bps = double(bytes - prev) * 8e6 / double(window);
        const auto bps_int = static_cast<std::uint64_t>(bps + 0.5);
        samples_.push_back(ConnRow{now, fid,
                                   conn.stats().srtt_valid ? conn.stats().srtt : 0,
                                   double(bps_int)});
        integrated_bytes_ += double(bps_int) * double(window) / 8e6;
      }
    }
    last_sample_at_ = now;
  }

  Scenario sc_;
  std::uint64_t seed_;
  int threshold_;
  bool duplication_;
  Engine eng_;
  Network net_;
  sde::EdgeSwitch* edge_ = nullptr;
  std::map<std::string, TcpHost*> clients_;
  std::map<std::string, DcRefs> dcs_;
  std::map<std::string, Endpoint> service_eps_;
  std::vector<std::unique_ptr<Workload>> workloads_;
  std::vector<ConnRow> samples_;
  std::map<FlowId, std::uint64_t> delivered_;
  SimTime last_sample_at_ = 0;
  double integrated_bytes_ = 0;
  int disasters_scripted_ = 0;
  std::string failed_dc_;
  Metrics metrics_;
};

}  // namespace edgesim::harness
