#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "edgesim/kv/types.hpp"

namespace edgesim::kv {

// Canonical big-endian encoding. Fixed field order and fixed-width lengths:
// deterministic replicas must produce byte-identical streams.

inline void put_u8(std::string& out, std::uint8_t v) { out.push_back(char(v)); }
inline void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(char(v >> 8));
  out.push_back(char(v));
}
inline void put_u32(std::string& out, std::uint32_t v) {
  put_u16(out, std::uint16_t(v >> 16));
  put_u16(out, std::uint16_t(v));
}
inline void put_u64(std::string& out, std::uint64_t v) {
  put_u32(out, std::uint32_t(v >> 32));
  put_u32(out, std::uint32_t(v));
}

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}
  bool ok() const { return ok_; }
  std::size_t remaining() const { return data_.size() - pos_; }

  std::uint8_t u8() { return take(1) ? std::uint8_t(data_[pos_ - 1]) : 0; }
  std::uint16_t u16() {
    std::uint16_t hi = u8();
    return std::uint16_t(hi << 8 | u8());
  }
  std::uint32_t u32() {
    std::uint32_t hi = u16();
    return hi << 16 | u16();
  }
  std::uint64_t u64() {
    std::uint64_t hi = u32();
    return hi << 32 | u32();
  }
  std::string bytes(std::size_t n) {
    if (!take(n)) return {};
    return std::string(data_.substr(pos_ - n, n));
  }

 private:
  bool take(std::size_t n) {
    if (!ok_ || data_.size() - pos_ < n) {
      ok_ = false;
      return false;
    }
    pos_ += n;
    return true;
  }
  std::string_view data_;
  std::size_t pos_ = 0;
  bool ok_ = true;
};

enum class RequestKind : std::uint8_t { kGet = 0, kPut = 1 };
enum class Status : std::uint8_t { kOk = 0, kUnavailable = 1 };

// [u32 length][u8 kind][u8 critical][u16 key_len][key][u32 value_len][value]
// [u64 request_id]; length excludes the length field itself.
struct Request {
  RequestKind kind = RequestKind::kGet;
  bool critical = false;
  std::string key;
  std::string value;  // put only
  std::uint64_t request_id = 0;

  std::string encode() const {
    std::string body;
    put_u8(body, std::uint8_t(kind));
    put_u8(body, critical ? 1 : 0);
    put_u16(body, std::uint16_t(key.size()));
    body += key;
    put_u32(body, std::uint32_t(value.size()));
    body += value;
    put_u64(body, request_id);
    std::string out;
    put_u32(out, std::uint32_t(body.size()));
    return out + body;
  }

  static std::optional<Request> decode_body(std::string_view body) {
    Reader r(body);
    Request req;
    req.kind = RequestKind(r.u8());
    req.critical = r.u8() != 0;
    req.key = r.bytes(r.u16());
    req.value = r.bytes(r.u32());
    req.request_id = r.u64();
    if (!r.ok() || r.remaining() != 0) return std::nullopt;
    return req;
  }
};

// Mirrors the request framing; the tag travels as [u64 counter][u32 client_id].
// [u32 length][u8 kind][u8 status][u32 value_len][value][u64 request_id]
// [u64 counter][u32 client_id]
struct Response {
  RequestKind kind = RequestKind::kGet;
  Status status = Status::kOk;
  std::string value;  // get only; empty sentinel when the key is absent
  std::uint64_t request_id = 0;
  Tag tag;

  std::string encode() const {
    std::string body;
    put_u8(body, std::uint8_t(kind));
    put_u8(body, std::uint8_t(status));
    put_u32(body, std::uint32_t(value.size()));
    body += value;
    put_u64(body, request_id);
    put_u64(body, tag.counter);
    put_u32(body, tag.client_id);
    std::string out;
    put_u32(out, std::uint32_t(body.size()));
    return out + body;
  }

  static std::optional<Response> decode_body(std::string_view body) {
    Reader r(body);
    Response resp;
    resp.kind = RequestKind(r.u8());
    resp.status = Status(r.u8());
    resp.value = r.bytes(r.u32());
    resp.request_id = r.u64();
    resp.tag.counter = r.u64();
    resp.tag.client_id = r.u32();
    if (!r.ok() || r.remaining() != 0) return std::nullopt;
    return resp;
  }
};

// Incremental length-prefixed framing over a byte stream.
template <typename Record>
class StreamDecoder {
 public:
  // Returns completely decoded records; keeps partial input buffered.
  std::vector<Record> feed(std::string_view data) {
    buf_.append(data);
    std::vector<Record> out;
    while (buf_.size() - off_ >= 4) {
      Reader r(std::string_view(buf_).substr(off_, 4));
      const std::uint32_t len = r.u32();
      if (buf_.size() - off_ < 4 + std::size_t(len)) break;
      auto rec = Record::decode_body(std::string_view(buf_).substr(off_ + 4, len));
      off_ += 4 + len;
      if (rec) out.push_back(std::move(*rec));
    }
    if (off_ == buf_.size() || off_ > (1u << 20)) {
      buf_.erase(0, off_);
      off_ = 0;
    }
    return out;
  }

 private:
  std::string buf_;
  std::size_t off_ = 0;
};

using RequestDecoder = StreamDecoder<Request>;
using ResponseDecoder = StreamDecoder<Response>;

}  // namespace edgesim::kv
