// Minimal libpcap file reader: Ethernet (or raw IPv4) / IPv4 / TCP. Each TCP
// direction is reassembled by sequence number and handed to an HTTP framer.

#include <algorithm>
#include <cstring>
#include <deque>
#include <map>
#include <memory>
#include <string>
#include <tuple>

#include "hstf/common/error.hpp"
#include "hstf/ingest/capture.hpp"
#include "hstf/ingest/http_message.hpp"

namespace hstf::ingest {
namespace {

constexpr uint32_t kLinkEthernet = 1;
constexpr uint32_t kLinkRaw = 101;
constexpr uint32_t kLinkIpv4 = 228;

constexpr uint8_t kTcpFin = 0x01;
constexpr uint8_t kTcpSyn = 0x02;
constexpr uint8_t kTcpRst = 0x04;

uint16_t be16(const uint8_t* p) { return static_cast<uint16_t>((p[0] << 8) | p[1]); }
uint32_t be32(const uint8_t* p) {
  return (uint32_t{p[0]} << 24) | (uint32_t{p[1]} << 16) | (uint32_t{p[2]} << 8) | p[3];
}

class FileHeaderReader {
 public:
  explicit FileHeaderReader(bool swapped) : swapped_(swapped) {}
  uint32_t u32(const uint8_t* p) const {
    uint32_t v = 0;
    std::memcpy(&v, p, 4);
    return swapped_ ? __builtin_bswap32(v) : v;
  }

 private:
  bool swapped_;
};

std::string ipv4_to_string(const uint8_t* p) {
  return std::to_string(p[0]) + "." + std::to_string(p[1]) + "." + std::to_string(p[2]) + "." +
         std::to_string(p[3]);
}

/// One direction of a TCP connection.
struct DirectionState {
  explicit DirectionState(Direction expected) : framer(expected) {}

  HttpStreamFramer framer;
  bool have_seq = false;
  uint32_t next_seq = 0;
  bool fin_seen = false;
  uint32_t fin_seq = 0;
  bool closed = false;
  std::map<uint32_t, std::pair<std::string, int64_t>> out_of_order;
};

struct Connection {
  Endpoint a;
  Endpoint b;
  std::deque<bool> head_flags;
  // Index 0: a -> b, index 1: b -> a. Framers accept either message shape;
  // `expected` is informational only.
  std::unique_ptr<DirectionState> dirs[2];
};

class PcapParser {
 public:
  ParseResult run(std::span<const uint8_t> src);

 private:
  void handle_frame(const uint8_t* data, size_t len, int64_t ts);
  void handle_ipv4(const uint8_t* data, size_t len, int64_t ts);
  void handle_tcp(const Endpoint& src, const Endpoint& dst, const uint8_t* tcp, size_t len,
                  int64_t ts);
  void deliver(Connection& conn, int dir, std::string_view bytes, int64_t ts);
  void drain(Connection& conn, int dir);
  void close_direction(Connection& conn, int dir);

  uint32_t link_type_ = kLinkEthernet;
  ParseResult result_;
  std::map<std::pair<Endpoint, Endpoint>, std::unique_ptr<Connection>> connections_;
};

ParseResult PcapParser::run(std::span<const uint8_t> src) {
  if (src.size() < 24) throw Error(ErrorCode::kCapture, "pcap: file shorter than global header");
  uint32_t magic = 0;
  std::memcpy(&magic, src.data(), 4);
  bool swapped = false;
  bool nanos = false;
  switch (magic) {
    case 0xa1b2c3d4u: break;
    case 0xa1b23c4du: nanos = true; break;
    case 0xd4c3b2a1u: swapped = true; break;
    case 0x4d3cb2a1u: swapped = true; nanos = true; break;
    case 0x0a0d0d0au: throw Error(ErrorCode::kCapture, "pcap: pcapng files are not supported");
    default: throw Error(ErrorCode::kCapture, "pcap: bad magic number");
  }
  const FileHeaderReader rd(swapped);
  link_type_ = rd.u32(src.data() + 20) & 0x0FFFFFFF;
  if (link_type_ != kLinkEthernet && link_type_ != kLinkRaw && link_type_ != kLinkIpv4) {
    throw Error(ErrorCode::kCapture, "pcap: unsupported link type " + std::to_string(link_type_));
  }

  size_t off = 24;
  while (off < src.size()) {
    if (src.size() - off < 16) {
      ++result_.stats.truncated_records;
      break;
    }
    const uint8_t* rec = src.data() + off;
    const uint32_t ts_sec = rd.u32(rec);
    const uint32_t ts_frac = rd.u32(rec + 4);
    const uint32_t incl = rd.u32(rec + 8);
    off += 16;
    if (incl > src.size() - off) {
      ++result_.stats.truncated_records;
      break;
    }
    ++result_.stats.records;
    const int64_t ts = int64_t{ts_sec} * 1'000'000 + (nanos ? ts_frac / 1000 : ts_frac);
    handle_frame(src.data() + off, incl, ts);
    off += incl;
  }

  for (auto& [key, conn] : connections_) {
    for (int d = 0; d < 2; ++d) {
      if (conn->dirs[d] && !conn->dirs[d]->closed) close_direction(*conn, d);
    }
  }
  // Messages were emitted per stream; restore capture time order.
  std::stable_sort(result_.messages.begin(), result_.messages.end(),
                   [](const TupleMessage& x, const TupleMessage& y) {
                     return x.message.timestamp_us < y.message.timestamp_us;
                   });
  result_.stats.http_messages = result_.messages.size();
  return std::move(result_);
}

void PcapParser::handle_frame(const uint8_t* data, size_t len, int64_t ts) {
  if (link_type_ != kLinkEthernet) {
    handle_ipv4(data, len, ts);
    return;
  }
  if (len < 14) {
    ++result_.stats.truncated_records;
    return;
  }
  size_t off = 12;
  uint16_t ethertype = be16(data + off);
  off += 2;
  while ((ethertype == 0x8100 || ethertype == 0x88a8) && len >= off + 4) {
    ethertype = be16(data + off + 2);
    off += 4;
  }
  if (ethertype != 0x0800) {
    ++result_.stats.skipped_non_ip;
    return;
  }
  handle_ipv4(data + off, len - off, ts);
}

void PcapParser::handle_ipv4(const uint8_t* ip, size_t len, int64_t ts) {
  if (len < 20 || (ip[0] >> 4) != 4) {
    ++result_.stats.skipped_non_ip;
    return;
  }
  const size_t ihl = static_cast<size_t>(ip[0] & 0x0F) * 4;
  const size_t total = be16(ip + 2);
  if (ihl < 20 || total < ihl || len < ihl) {
    ++result_.stats.truncated_records;
    return;
  }
  const uint16_t frag = be16(ip + 6);
  if ((frag & 0x2000) != 0 || (frag & 0x1FFF) != 0) {
    ++result_.stats.skipped_fragments;
    return;
  }
  if (ip[9] != 6) {
    ++result_.stats.skipped_non_tcp;
    return;
  }
  const size_t avail = std::min(len, total);
  Endpoint src{ipv4_to_string(ip + 12), 0};
  Endpoint dst{ipv4_to_string(ip + 16), 0};
  handle_tcp(src, dst, ip + ihl, avail - ihl, ts);
}

void PcapParser::handle_tcp(const Endpoint& src_ip, const Endpoint& dst_ip, const uint8_t* tcp,
                            size_t len, int64_t ts) {
  if (len < 20) {
    ++result_.stats.truncated_records;
    return;
  }
  const size_t doff = static_cast<size_t>(tcp[12] >> 4) * 4;
  if (doff < 20 || doff > len) {
    ++result_.stats.truncated_records;
    return;
  }
  ++result_.stats.tcp_segments;
  Endpoint src{src_ip.host, be16(tcp)};
  Endpoint dst{dst_ip.host, be16(tcp + 2)};
  const uint32_t seq = be32(tcp + 4);
  const uint8_t flags = tcp[13];
  const std::string_view payload(reinterpret_cast<const char*>(tcp + doff), len - doff);

  const bool forward = src < dst;
  auto key = forward ? std::make_pair(src, dst) : std::make_pair(dst, src);
  auto& slot = connections_[key];
  if (!slot) {
    slot = std::make_unique<Connection>();
    slot->a = key.first;
    slot->b = key.second;
  }
  Connection& conn = *slot;
  const int dir = forward ? 0 : 1;
  if (!conn.dirs[dir]) {
    conn.dirs[dir] = std::make_unique<DirectionState>(Direction::kRequest);
    conn.dirs[dir]->framer.set_request_methods(&conn.head_flags);
  }
  DirectionState& st = *conn.dirs[dir];
  if (st.closed) {
    // Port reuse after FIN: start a fresh stream in this direction.
    if ((flags & kTcpSyn) == 0 && payload.empty()) return;
    conn.dirs[dir] = std::make_unique<DirectionState>(Direction::kRequest);
    conn.dirs[dir]->framer.set_request_methods(&conn.head_flags);
  }
  DirectionState& s = *conn.dirs[dir];

  uint32_t data_seq = seq;
  if ((flags & kTcpSyn) != 0) {
    s.have_seq = true;
    s.next_seq = seq + 1;
    data_seq = seq + 1;
  } else if (!s.have_seq) {
    s.have_seq = true;
    s.next_seq = seq;
  }
  if ((flags & kTcpFin) != 0) {
    s.fin_seen = true;
    s.fin_seq = data_seq + static_cast<uint32_t>(payload.size());
  }
  if (!payload.empty()) {
    const auto diff = static_cast<int32_t>(data_seq - s.next_seq);
    if (diff == 0) {
      deliver(conn, dir, payload, ts);
      drain(conn, dir);
    } else if (diff < 0) {
      const auto overlap = static_cast<size_t>(-static_cast<int64_t>(diff));
      if (overlap < payload.size()) {
        deliver(conn, dir, payload.substr(overlap), ts);
        drain(conn, dir);
      }
    } else {
      s.out_of_order.emplace(data_seq, std::make_pair(std::string(payload), ts));
    }
  }
  if ((flags & kTcpRst) != 0 || (s.fin_seen && s.next_seq == s.fin_seq)) {
    close_direction(conn, dir);
  }
}

void PcapParser::deliver(Connection& conn, int dir, std::string_view bytes, int64_t ts) {
  DirectionState& s = *conn.dirs[dir];
  s.next_seq += static_cast<uint32_t>(bytes.size());
  s.framer.feed(bytes, ts);
  const Endpoint& src = dir == 0 ? conn.a : conn.b;
  const Endpoint& dst = dir == 0 ? conn.b : conn.a;
  for (auto& msg : s.framer.take_messages()) {
    result_.messages.push_back(TupleMessage{src, dst, std::move(msg)});
  }
}

void PcapParser::drain(Connection& conn, int dir) {
  DirectionState& s = *conn.dirs[dir];
  while (!s.out_of_order.empty()) {
    auto it = s.out_of_order.begin();
    const auto diff = static_cast<int32_t>(it->first - s.next_seq);
    if (diff > 0) break;
    auto [bytes, ts] = std::move(it->second);
    s.out_of_order.erase(it);
    const auto overlap = static_cast<size_t>(-static_cast<int64_t>(diff));
    if (overlap < bytes.size()) deliver(conn, dir, std::string_view(bytes).substr(overlap), ts);
  }
}

void PcapParser::close_direction(Connection& conn, int dir) {
  DirectionState& s = *conn.dirs[dir];
  if (!s.out_of_order.empty()) {
    ++result_.stats.stream_gaps;
    s.out_of_order.clear();
  }
  s.framer.finish();
  const Endpoint& src = dir == 0 ? conn.a : conn.b;
  const Endpoint& dst = dir == 0 ? conn.b : conn.a;
  for (auto& msg : s.framer.take_messages()) {
    result_.messages.push_back(TupleMessage{src, dst, std::move(msg)});
  }
  result_.stats.undecodable_messages += s.framer.undecodable();
  s.closed = true;
}

}  // namespace

ParseResult parse_pcap(std::span<const uint8_t> source) { return PcapParser{}.run(source); }

}  // namespace hstf::ingest
