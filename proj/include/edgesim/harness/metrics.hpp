#pragma once

// Run metrics, computed purely from the emitted artifacts: the trace records
// (trace.csv) and the per-connection stats samples (conn_stats.csv). The
// same functions run on the in-memory records and on records re-parsed from
// the files, so the two views can be checked for equality.

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "edgesim/kv/types.hpp"
#include "edgesim/trace.hpp"

namespace edgesim::harness {

// One conn_stats.csv row. throughput_bps covers the window ending at `time`.
struct ConnRow {
  SimTime time = 0;
  FlowId flow = 0;
  SimTime srtt_us = 0;
  double throughput_bps = 0;
};

inline constexpr std::string_view kConnStatsCsvHeader =
    "time_us,flow_id,srtt_us,throughput_bps\n";

struct MetricsContext {
  std::uint64_t seed = 0;
  SimTime duration = 0;
  // Surviving datacenter quorum layout: server trace names, row-major.
  std::vector<std::string> surviving_servers;
  int rows = 3, cols = 3;
};

struct Metrics {
  std::uint64_t seed = 0;
  double failure_time_seconds = -1;     // first scripted link_down; -1 if none
  double detection_time_seconds = -1;   // disaster declared - failure
  double rto_seconds = -1;              // first post-failure response - failure
  bool recovered = true;                // false: disaster scripted, no recovery
  long long rpo_lost_updates = -1;      // acked puts missing from the survivor
  long long acked_critical_puts = 0;
  long long puts_in_flight_at_failure = -1;
  long long total_responses = 0;
  double rtt_pre_ms = -1, rtt_post_ms = -1;
  double throughput_pre_mbps = -1, throughput_post_mbps = -1;

  friend bool operator==(const Metrics&, const Metrics&) = default;
};

namespace detail {

inline std::optional<kv::Tag> tag_from_detail(std::string_view detail) {
  // "...;tag=<counter>/<client_id>"
  auto pos = detail.find("tag=");
  if (pos == std::string_view::npos) return std::nullopt;
  auto rest = detail.substr(pos + 4);
  auto slash = rest.find('/');
  if (slash == std::string_view::npos) return std::nullopt;
  kv::Tag t;
  t.counter = std::strtoull(std::string(rest.substr(0, slash)).c_str(), nullptr, 10);
  t.client_id = static_cast<std::uint32_t>(
      std::strtoul(std::string(rest.substr(slash + 1)).c_str(), nullptr, 10));
  return t;
}

inline std::optional<std::string> key_from_detail(std::string_view detail) {
  auto pos = detail.find("key=");
  if (pos == std::string_view::npos) return std::nullopt;
  auto rest = detail.substr(pos + 4);
  auto semi = rest.find(';');
  return std::string(rest.substr(0, semi));
}

inline bool is_scripted_disaster(const TraceRecord& r) {
  return r.kind == TraceKind::kScripted && r.detail.starts_with("link_down");
}

}  // namespace detail

// Fails loudly when asked for a recovery time without exactly one scripted
// disaster: the measurement is undefined in that case.
// Returns {rto_seconds, recovered}; an unrecovered run reports the time from
// failure to the end of the run.
inline std::pair<double, bool> measure_rto(const std::vector<TraceRecord>& trace,
                                           SimTime duration) {
  int disasters = 0;
  SimTime failure = -1;
  for (const auto& r : trace) {
    if (detail::is_scripted_disaster(r)) {
      if (++disasters == 1) failure = r.time;
    }
  }
  if (disasters != 1) {
    throw std::logic_error(
        "recovery time requires exactly one scripted disaster, found " +
        std::to_string(disasters));
  }
  // Recovery means a response served after the failure was recognized;
  // responses already in flight when the link died do not count.
  SimTime declared = -1;
  for (const auto& r : trace) {
    if (r.kind == TraceKind::kDisaster && r.time >= failure) {
      declared = r.time;
      break;
    }
  }
  if (declared >= 0) {
    for (const auto& r : trace) {
      if (r.kind == TraceKind::kAppResponse && r.time > declared) {
        return {double(r.time - failure) / 1e6, true};
      }
    }
  }
  return {double(duration - failure) / 1e6, false};
}

// Acknowledged critical puts whose tag is not readable from the surviving
// datacenter's quorum system: the updates a client was told were durable but
// that the disaster destroyed.
inline long long measure_rpo(const std::vector<TraceRecord>& trace,
                             const MetricsContext& ctx) {
  std::map<std::string, int> server_index;
  for (std::size_t i = 0; i < ctx.surviving_servers.size(); ++i)
    server_index[ctx.surviving_servers[i]] = static_cast<int>(i);

  // Commits are tag-monotone per key, so the max committed tag is the stored one.
  std::map<std::string, std::map<int, kv::Tag>> committed;  // key -> grid idx -> tag
  std::vector<std::pair<std::string, kv::Tag>> acked;
  for (const auto& r : trace) {
    if (r.kind == TraceKind::kStoreCommit) {
      auto it = server_index.find(r.node);
      if (it == server_index.end()) continue;
      auto key = detail::key_from_detail(r.detail);
      auto tag = detail::tag_from_detail(r.detail);
      if (!key || !tag) continue;
      auto& slot = committed[*key][it->second];
      if (*tag > slot) slot = *tag;
    } else if (r.kind == TraceKind::kAppPutAcked) {
      auto key = detail::key_from_detail(r.detail);
      auto tag = detail::tag_from_detail(r.detail);
      if (key && tag) acked.push_back({*key, *tag});
    }
  }

  auto readable = [&](const std::string& key) {
    kv::Tag best = kv::Tag::zero();
    bool first = true;
    auto it = committed.find(key);
    for (int row = 0; row < ctx.rows; ++row) {
      kv::Tag row_max = kv::Tag::zero();
      for (int col = 0; col < ctx.cols; ++col) {
        const int idx = row * ctx.cols + col;
        if (it != committed.end()) {
          auto st = it->second.find(idx);
          if (st != it->second.end() && st->second > row_max) row_max = st->second;
        }
      }
      if (first || row_max < best) best = row_max;
      first = false;
    }
    return best;
  };

  long long lost = 0;
  for (const auto& [key, tag] : acked) {
    if (tag > readable(key)) ++lost;
  }
  return lost;
}

inline Metrics compute_metrics(const std::vector<TraceRecord>& trace,
                               const std::vector<ConnRow>& samples,
                               const MetricsContext& ctx) {
  Metrics m;
  m.seed = ctx.seed;

  int disasters = 0;
  SimTime failure = -1;
  SimTime detected = -1;
  for (const auto& r : trace) {
    if (detail::is_scripted_disaster(r) && ++disasters == 1) failure = r.time;
    if (r.kind == TraceKind::kDisaster && detected < 0) detected = r.time;
    if (r.kind == TraceKind::kAppResponse) ++m.total_responses;
    if (r.kind == TraceKind::kAppPutAcked) ++m.acked_critical_puts;
    if (r.kind == TraceKind::kScripted && r.detail.starts_with("puts_in_flight=")) {
      m.puts_in_flight_at_failure =
          std::strtoll(r.detail.c_str() + 15, nullptr, 10);
    }
  }

  if (disasters >= 1) {
    m.failure_time_seconds = double(failure) / 1e6;
    if (detected >= failure) m.detection_time_seconds = double(detected - failure) / 1e6;
  }
  if (disasters == 1) {
    auto [rto, recovered] = measure_rto(trace, ctx.duration);
    m.rto_seconds = rto;
    m.recovered = recovered;
    if (!ctx.surviving_servers.empty()) m.rpo_lost_updates = measure_rpo(trace, ctx);
  }

  // Window means: steady state before the failure and after recovery
  // settles. Without a failure the back half of the run is used.
  const SimTime pivot = disasters >= 1 ? failure : ctx.duration / 2;
  const SimTime pre_lo = pivot / 4;
  const SimTime post_lo = pivot + (ctx.duration - pivot) / 2;
  auto window_means = [&](SimTime lo, SimTime hi, double& rtt_ms, double& mbps) {
    double rtt_sum = 0, bps_sum = 0;
    long long rtt_n = 0, bps_n = 0;
    for (const auto& s : samples) {
      if (s.time < lo || s.time >= hi) continue;
      if (s.srtt_us > 0) {
        rtt_sum += double(s.srtt_us);
        ++rtt_n;
      }
      bps_sum += s.throughput_bps;
      ++bps_n;
    }
    if (rtt_n) rtt_ms = rtt_sum / double(rtt_n) / 1e3;
    if (bps_n) mbps = bps_sum / double(bps_n) / 1e6;
  };
  window_means(pre_lo, pivot, m.rtt_pre_ms, m.throughput_pre_mbps);
  window_means(post_lo, ctx.duration, m.rtt_post_ms, m.throughput_post_mbps);
  return m;
}

inline nlohmann::json to_json(const Metrics& m) {
  return nlohmann::json{
      {"seed", m.seed},
      {"failure_time_seconds", m.failure_time_seconds},
      {"detection_time_seconds", m.detection_time_seconds},
      {"rto_seconds", m.rto_seconds},
      {"recovered", m.recovered},
      {"rpo_lost_updates", m.rpo_lost_updates},
      {"acked_critical_puts", m.acked_critical_puts},
      {"puts_in_flight_at_failure", m.puts_in_flight_at_failure},
      {"total_responses", m.total_responses},
      {"rtt_pre_ms", m.rtt_pre_ms},
      {"rtt_post_ms", m.rtt_post_ms},
      {"throughput_pre_mbps", m.throughput_pre_mbps},
      {"throughput_post_mbps", m.throughput_post_mbps},
  };
}

// --- CSV round-trip -------------------------------------------------------

namespace detail {

inline std::vector<std::string_view> split(std::string_view line, char sep, int max_fields) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (int(out.size()) + 1 < max_fields) {
    auto c = line.find(sep, start);
    if (c == std::string_view::npos) break;
    out.push_back(line.substr(start, c - start));
    start = c + 1;
  }
  out.push_back(line.substr(start));
  return out;
}

inline TraceKind kind_from_name(std::string_view name) {
  for (std::uint32_t k = 0; k < std::uint32_t(TraceKind::kCount); ++k) {
    if (trace_kind_name(TraceKind(k)) == name) return TraceKind(k);
  }
  throw std::invalid_argument("unknown trace record kind '" + std::string(name) + "'");
}

inline std::uint8_t flags_from_str(std::string_view s) {
  std::uint8_t f = 0;
  for (char c : s) {
    if (c == 'S') f |= kSyn;
    else if (c == 'A') f |= kAck;
    else if (c == 'F') f |= kFin;
    else if (c == 'R') f |= kRst;
  }
  return f;
}

template <typename Fn>
inline void for_each_csv_line(std::string_view text, std::string_view header, Fn fn) {
  std::size_t pos = 0;
  bool first = true;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    std::string_view line =
        text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    if (first) {
      first = false;
      if (line == header.substr(0, header.size() - 1)) continue;  // drop trailing \n
    }
    if (!line.empty()) fn(line);
  }
}

}  // namespace detail

inline std::vector<TraceRecord> parse_trace_csv(std::string_view text) {
  std::vector<TraceRecord> out;
  detail::for_each_csv_line(text, kTraceCsvHeader, [&](std::string_view line) {
    auto f = detail::split(line, ',', kTraceCsvHeaderFields);
    if (f.size() != kTraceCsvHeaderFields)
      throw std::invalid_argument("malformed trace row: " + std::string(line));
    TraceRecord r;
    r.time = std::strtoll(std::string(f[0]).c_str(), nullptr, 10);
    r.node = std::string(f[1]);
    r.kind = detail::kind_from_name(f[2]);
    r.flow_id = std::strtoull(std::string(f[3]).c_str(), nullptr, 10);
    r.seq = std::uint32_t(std::strtoul(std::string(f[4]).c_str(), nullptr, 10));
    r.ack = std::uint32_t(std::strtoul(std::string(f[5]).c_str(), nullptr, 10));
    r.flags = detail::flags_from_str(f[6]);
    r.payload_len = std::uint32_t(std::strtoul(std::string(f[7]).c_str(), nullptr, 10));
    r.detail = std::string(f[8]);
    out.push_back(std::move(r));
  });
  return out;
}

inline std::string conn_stats_to_csv(const std::vector<ConnRow>& rows) {
  std::string out(kConnStatsCsvHeader);
  for (const auto& s : rows) {
    out += std::to_string(s.time);
    out += ',';
    out += std::to_string(s.flow);
    out += ',';
    out += std::to_string(s.srtt_us);
    out += ',';
    // Integer bps keeps the file round-trip exact.
    out += std::to_string(static_cast<std::uint64_t>(s.throughput_bps + 0.5));
    out += '\n';
  }
  return out;
}

inline std::vector<ConnRow> parse_conn_stats_csv(std::string_view text) {
  std::vector<ConnRow> out;
  detail::for_each_csv_line(text, kConnStatsCsvHeader, [&](std::string_view line) {
    auto f = detail::split(line, ',', 4);
    if (f.size() != 4)
      throw std::invalid_argument("malformed conn stats row: " + std::string(line));
    ConnRow r;
    r.time = std::strtoll(std::string(f[0]).c_str(), nullptr, 10);
    r.flow = std::strtoull(std::string(f[1]).c_str(), nullptr, 10);
    r.srtt_us = std::strtoll(std::string(f[2]).c_str(), nullptr, 10);
    r.throughput_bps = std::strtod(std::string(f[3]).c_str(), nullptr);
    out.push_back(r);
  });
  return out;
}

}  // namespace edgesim::harness
