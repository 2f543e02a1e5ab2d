#pragma once

// Line-oriented scenario description. Sections in square brackets; '#' starts
// a comment. [general], [transport] and [detector] take "key = value" lines;
// the list sections hold one declaration per line:
//
//   [nodes]      client c1 | edge s1 | switch s2
//                | dc dc1 lb=s3 servers=9 link_delay=0.1ms
//                  link_capacity=1Gbit link_queue=1000
//   [links]      <a> <b> <delay> <capacity> <queue>
//   [services]   service kv primary=dc1 secondary=dc2 critical=false
//   [workloads]  bulk_get client=c1 service=kv start=0s depth=8 keys=8
//                  value_size=262144
//                | put_stream client=c1 service=kv start=0s count=2500
//                  depth=128 value_size=1024
//   [events]     link_down <a> <b> <time> | link_up <a> <b> <time>
//
// Times take a us/ms/s suffix, capacities bit/kbit/Mbit/Gbit. Validation is
// exhaustive: parsing reports every error found, not just the first.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "edgesim/time.hpp"
#include "edgesim/transport.hpp"

namespace edgesim::harness {

struct NodeDecl {
  enum class Kind { kClient, kEdge, kSwitch, kDc };
  Kind kind = Kind::kClient;
  std::string name;
  // Datacenter-only attributes.
  std::string lb;  // name of the front switch
  int servers = 9;
  SimTime link_delay = us(100);
  std::uint64_t link_capacity = 1'000'000'000;
  std::size_t link_queue = 1000;
};

struct LinkDecl {
  std::string a, b;
  SimTime delay = 0;
  std::uint64_t capacity = 0;
  std::size_t queue = 0;
};

struct ServiceDecl {
  std::string name;
  std::string primary, secondary;  // datacenter names
  bool critical = false;
};

struct WorkloadDecl {
  enum class Kind { kBulkGet, kPutStream };
  Kind kind = Kind::kBulkGet;
  std::string client, service;
  SimTime start = 0;
  int depth = 8;
  std::uint32_t value_size = 262'144;
  int keys = 8;           // bulk_get: number of preloaded keys cycled over
  long long count = 1000;  // put_stream: total puts issued
};

struct EventDecl {
  enum class Kind { kLinkDown, kLinkUp };
  Kind kind = Kind::kLinkDown;
  std::string a, b;
  SimTime at = 0;
};

struct Scenario {
  SimTime duration = sec(60);
  std::uint64_t seed = 1;
  TransportConfig transport;
  int threshold = 5;
  std::vector<NodeDecl> nodes;
  std::vector<LinkDecl> links;
  std::vector<ServiceDecl> services;
  std::vector<WorkloadDecl> workloads;
  std::vector<EventDecl> events;

  const NodeDecl* node(const std::string& name) const {
    for (const auto& n : nodes)
      if (n.name == name) return &n;
    return nullptr;
  }
  const ServiceDecl* service(const std::string& name) const {
    for (const auto& s : services)
      if (s.name == name) return &s;
    return nullptr;
  }
};

struct ParseResult {
  Scenario scenario;
  std::vector<std::string> errors;
  bool ok() const { return errors.empty(); }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> tokens(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

inline std::optional<double> parse_number(std::string_view s) {
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
  return v;
}

// "0.1ms" -> 100 us; suffixes us, ms, s.
inline std::optional<SimTime> parse_time(std::string_view s) {
  double scale = 0;
  if (s.ends_with("us")) {
    scale = 1;
    s.remove_suffix(2);
  } else if (s.ends_with("ms")) {
    scale = 1e3;
    s.remove_suffix(2);
  } else if (s.ends_with("s")) {
    scale = 1e6;
    s.remove_suffix(1);
  } else {
    return std::nullopt;
  }
  auto v = parse_number(s);
  if (!v) return std::nullopt;
  return static_cast<SimTime>(*v * scale + 0.5);
}

// "100Mbit" -> 100e6 bits/s; suffixes bit, kbit, Mbit, Gbit.
inline std::optional<std::uint64_t> parse_capacity(std::string_view s) {
  double scale = 0;
  if (s.ends_with("kbit")) {
    scale = 1e3;
    s.remove_suffix(4);
  } else if (s.ends_with("Mbit")) {
    scale = 1e6;
    s.remove_suffix(4);
  } else if (s.ends_with("Gbit")) {
    scale = 1e9;
    s.remove_suffix(4);
  } else if (s.ends_with("bit")) {
    scale = 1;
    s.remove_suffix(3);
  } else {
    return std::nullopt;
  }
  auto v = parse_number(s);
  if (!v) return std::nullopt;
  return static_cast<std::uint64_t>(*v * scale + 0.5);
}

inline std::optional<long long> parse_int(std::string_view s) {
  long long v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::optional<bool> parse_bool(std::string_view s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  return std::nullopt;
}

// Splits "key=value"; returns false if there is no '='.
inline bool split_kv(std::string_view tok, std::string_view& key, std::string_view& val) {
  auto eq = tok.find('=');
  if (eq == std::string_view::npos) return false;
  key = tok.substr(0, eq);
  val = tok.substr(eq + 1);
  return true;
}

}  // namespace detail

inline ParseResult parse_scenario(std::string_view text) {
  using namespace detail;
  ParseResult res;
  Scenario& sc = res.scenario;
  auto err = [&](int line_no, std::string msg) {
    res.errors.push_back("line " + std::to_string(line_no) + ": " + std::move(msg));
  };

  std::string section;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view raw = text.substr(pos, nl == std::string_view::npos ? text.size() - pos
                                                                          : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
    std::string_view line = trim(raw);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') {
        err(line_no, "malformed section header");
        continue;
      }
      section = std::string(line.substr(1, line.size() - 2));
      static const std::set<std::string> known = {"general",  "transport", "detector",
                                                  "nodes",    "links",     "services",
                                                  "workloads", "events"};
      if (!known.count(section)) {
        err(line_no, "unknown section [" + section + "]");
        section.clear();
      }
      continue;
    }
    if (section.empty()) {
      err(line_no, "content before any section");
      continue;
    }

    if (section == "general" || section == "transport" || section == "detector") {
      auto eq = line.find('=');
      if (eq == std::string_view::npos) {
        err(line_no, "expected key = value");
        continue;
      }
      std::string key(trim(line.substr(0, eq)));
      std::string_view val = trim(line.substr(eq + 1));
      auto want_time = [&](SimTime& dst) {
        if (auto t = parse_time(val)) dst = *t;
        else err(line_no, "bad time value '" + std::string(val) + "'");
      };
      auto want_int = [&](auto& dst) {
        if (auto v = parse_int(val)) dst = static_cast<std::decay_t<decltype(dst)>>(*v);
        else err(line_no, "bad integer value '" + std::string(val) + "'");
      };
      if (section == "general") {
        if (key == "duration") want_time(sc.duration);
        else if (key == "seed") want_int(sc.seed);
        else err(line_no, "unknown general key '" + key + "'");
      } else if (section == "transport") {
        if (key == "rto_initial") want_time(sc.transport.rto_initial);
        else if (key == "rto_cap") want_time(sc.transport.rto_cap);
        else if (key == "window") want_int(sc.transport.window);
        else if (key == "mss") want_int(sc.transport.mss);
        else if (key == "handshake_retries") want_int(sc.transport.handshake_retries);
        else err(line_no, "unknown transport key '" + key + "'");
      } else {
        if (key == "threshold") want_int(sc.threshold);
        else err(line_no, "unknown detector key '" + key + "'");
      }
      continue;
    }

    auto toks = tokens(line);
    const std::string head(toks[0]);

    // Applies "key=value" attribute tokens via a per-declaration dispatcher.
    auto apply_attrs = [&](std::size_t first,
                           auto&& set) {  // set(key, val) -> bool handled
      for (std::size_t i = first; i < toks.size(); ++i) {
        std::string_view key, val;
        if (!split_kv(toks[i], key, val)) {
          err(line_no, "expected key=value, got '" + std::string(toks[i]) + "'");
          continue;
        }
        if (!set(key, val)) err(line_no, "unknown attribute '" + std::string(key) + "'");
      }
    };

    if (section == "nodes") {
      NodeDecl n;
      if (head == "client") n.kind = NodeDecl::Kind::kClient;
      else if (head == "edge") n.kind = NodeDecl::Kind::kEdge;
      else if (head == "switch") n.kind = NodeDecl::Kind::kSwitch;
      else if (head == "dc") n.kind = NodeDecl::Kind::kDc;
      else {
        err(line_no, "unknown node kind '" + head + "'");
        continue;
      }
      if (toks.size() < 2) {
        err(line_no, "node declaration needs a name");
        continue;
      }
      n.name = std::string(toks[1]);
      apply_attrs(2, [&](std::string_view key, std::string_view val) {
        if (n.kind != NodeDecl::Kind::kDc) return false;
        if (key == "lb") n.lb = std::string(val);
        else if (key == "servers") {
          if (auto v = parse_int(val)) n.servers = int(*v);
          else err(line_no, "bad servers count");
        } else if (key == "link_delay") {
          if (auto v = parse_time(val)) n.link_delay = *v;
          else err(line_no, "bad link_delay");
        } else if (key == "link_capacity") {
          if (auto v = parse_capacity(val)) n.link_capacity = *v;
          else err(line_no, "bad link_capacity");
        } else if (key == "link_queue") {
          if (auto v = parse_int(val)) n.link_queue = std::size_t(*v);
          else err(line_no, "bad link_queue");
        } else return false;
        return true;
      });
      if (n.kind == NodeDecl::Kind::kDc && n.lb.empty())
        err(line_no, "dc '" + n.name + "' needs lb=<name>");
      sc.nodes.push_back(std::move(n));
    } else if (section == "links") {
      if (toks.size() != 5) {
        err(line_no, "link needs: <a> <b> <delay> <capacity> <queue>");
        continue;
      }
      LinkDecl l;
      l.a = std::string(toks[0]);
      l.b = std::string(toks[1]);
      if (auto v = parse_time(toks[2])) l.delay = *v;
      else err(line_no, "bad link delay '" + std::string(toks[2]) + "'");
      if (auto v = parse_capacity(toks[3])) l.capacity = *v;
      else err(line_no, "bad link capacity '" + std::string(toks[3]) + "'");
      if (auto v = parse_int(toks[4])) l.queue = std::size_t(*v);
      else err(line_no, "bad link queue '" + std::string(toks[4]) + "'");
      sc.links.push_back(std::move(l));
    } else if (section == "services") {
      if (head != "service" || toks.size() < 2) {
        err(line_no, "expected: service <name> primary=<dc> secondary=<dc> [critical=bool]");
        continue;
      }
      ServiceDecl s;
      s.name = std::string(toks[1]);
      apply_attrs(2, [&](std::string_view key, std::string_view val) {
        if (key == "primary") s.primary = std::string(val);
        else if (key == "secondary") s.secondary = std::string(val);
        else if (key == "critical") {
          if (auto v = parse_bool(val)) s.critical = *v;
          else err(line_no, "bad critical flag");
        } else return false;
        return true;
      });
      sc.services.push_back(std::move(s));
    } else if (section == "workloads") {
      WorkloadDecl w;
      if (head == "bulk_get") w.kind = WorkloadDecl::Kind::kBulkGet;
      else if (head == "put_stream") w.kind = WorkloadDecl::Kind::kPutStream;
      else {
        err(line_no, "unknown workload '" + head + "'");
        continue;
      }
      apply_attrs(1, [&](std::string_view key, std::string_view val) {
        if (key == "client") w.client = std::string(val);
        else if (key == "service") w.service = std::string(val);
        else if (key == "start") {
          if (auto v = parse_time(val)) w.start = *v;
          else err(line_no, "bad start time");
        } else if (key == "depth") {
          if (auto v = parse_int(val)) w.depth = int(*v);
          else err(line_no, "bad depth");
        } else if (key == "value_size") {
          if (auto v = parse_int(val)) w.value_size = std::uint32_t(*v);
          else err(line_no, "bad value_size");
        } else if (key == "keys") {
          if (auto v = parse_int(val)) w.keys = int(*v);
          else err(line_no, "bad keys");
        } else if (key == "count") {
          if (auto v = parse_int(val)) w.count = *v;
          else err(line_no, "bad count");
        } else return false;
        return true;
      });
      sc.workloads.push_back(std::move(w));
    } else if (section == "events") {
      EventDecl e;
      if (head == "link_down") e.kind = EventDecl::Kind::kLinkDown;
      else if (head == "link_up") e.kind = EventDecl::Kind::kLinkUp;
      else {
        err(line_no, "unknown event '" + head + "'");
        continue;
      }
      if (toks.size() != 4) {
        err(line_no, "event needs: <kind> <a> <b> <time>");
        continue;
      }
      e.a = std::string(toks[1]);
      e.b = std::string(toks[2]);
      if (auto v = parse_time(toks[3])) e.at = *v;
      else err(line_no, "bad event time '" + std::string(toks[3]) + "'");
      sc.events.push_back(std::move(e));
    }
  }

  // Cross-reference validation. Every problem is reported.
  auto verr = [&](std::string msg) { res.errors.push_back(std::move(msg)); };
  if (sc.duration <= 0) verr("duration must be positive");
  if (sc.threshold <= 0) verr("detector threshold must be positive");

  std::set<std::string> names;
  int edges = 0;
  for (const auto& n : sc.nodes) {
    if (!names.insert(n.name).second) verr("duplicate node name '" + n.name + "'");
    if (n.kind == NodeDecl::Kind::kDc) {
      if (!n.lb.empty() && !names.insert(n.lb).second)
        verr("duplicate node name '" + n.lb + "'");
      if (n.servers <= 0 || n.servers != 9)
        verr("dc '" + n.name + "' must have 9 servers (3x3 grid)");
      if (n.link_delay <= 0) verr("dc '" + n.name + "' link_delay must be positive");
      if (n.link_capacity == 0) verr("dc '" + n.name + "' link_capacity must be positive");
    }
    if (n.kind == NodeDecl::Kind::kEdge) ++edges;
  }
  if (edges != 1) verr("exactly one edge node is required");

  for (const auto& l : sc.links) {
    for (const auto& ep : {l.a, l.b})
      if (!names.count(ep)) verr("link references unknown node '" + ep + "'");
    if (l.delay <= 0) verr("link " + l.a + "-" + l.b + ": delay must be positive");
    if (l.capacity == 0) verr("link " + l.a + "-" + l.b + ": capacity must be positive");
    if (l.queue == 0) verr("link " + l.a + "-" + l.b + ": queue must be positive");
  }

  std::set<std::string> svc_names;
  for (const auto& s : sc.services) {
    if (!svc_names.insert(s.name).second) verr("duplicate service '" + s.name + "'");
    for (const auto& dc : {s.primary, s.secondary}) {
      const NodeDecl* n = sc.node(dc);
      if (!n || n->kind != NodeDecl::Kind::kDc)
        verr("service '" + s.name + "' references unknown datacenter '" + dc + "'");
    }
    if (s.primary == s.secondary)
      verr("service '" + s.name + "' primary and secondary must differ");
  }

  for (const auto& w : sc.workloads) {
    const NodeDecl* c = sc.node(w.client);
    if (!c || c->kind != NodeDecl::Kind::kClient)
      verr("workload references unknown client '" + w.client + "'");
    if (!svc_names.count(w.service))
      verr("workload references unknown service '" + w.service + "'");
    if (w.depth <= 0) verr("workload depth must be positive");
    if (w.value_size == 0) verr("workload value_size must be positive");
    if (w.kind == WorkloadDecl::Kind::kBulkGet && w.keys <= 0)
      verr("bulk_get keys must be positive");
    if (w.kind == WorkloadDecl::Kind::kPutStream && w.count <= 0)
      verr("put_stream count must be positive");
    if (w.start < 0 || w.start > sc.duration)
      verr("workload start time outside run duration");
  }

  for (const auto& e : sc.events) {
    for (const auto& ep : {e.a, e.b})
      if (!names.count(ep)) verr("event references unknown node '" + ep + "'");
    if (e.at < 0 || e.at > sc.duration) verr("event time outside run duration");
  }

  try {
    sc.transport.validate();
  } catch (const std::exception& ex) {
    verr(ex.what());
  }
  return res;
}

}  // namespace edgesim::harness
