#include "hstf/synth/pcap_writer.hpp"

#include <algorithm>
#include <charconv>

#include "hstf/common/error.hpp"
#include "hstf/ingest/http_message.hpp"

namespace hstf::synth {

namespace {

constexpr uint8_t kFin = 0x01;
constexpr uint8_t kSyn = 0x02;
constexpr uint8_t kPsh = 0x08;
constexpr uint8_t kAck = 0x10;

void put16(std::string& s, uint16_t v) {
  s.push_back(static_cast<char>(v >> 8));
  s.push_back(static_cast<char>(v & 0xFF));
}

void put32(std::string& s, uint32_t v) {
  put16(s, static_cast<uint16_t>(v >> 16));
  put16(s, static_cast<uint16_t>(v & 0xFFFF));
}

void put32le(std::string& s, uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put16le(std::string& s, uint16_t v) {
  s.push_back(static_cast<char>(v & 0xFF));
  s.push_back(static_cast<char>(v >> 8));
}

uint16_t ip_checksum(std::string_view header) {
  uint32_t sum = 0;
  for (size_t i = 0; i + 1 < header.size(); i += 2) {
    sum += (static_cast<uint8_t>(header[i]) << 8) | static_cast<uint8_t>(header[i + 1]);
  }
  while (sum >> 16) sum = (sum & 0xFFFF) + (sum >> 16);
  return static_cast<uint16_t>(~sum);
}

std::string ethernet_ipv4(uint32_t src, uint32_t dst, uint8_t proto, std::string_view l4) {
  std::string f;
  f.append("\x02\x00\x00\x00\x00\x02", 6);
  f.append("\x02\x00\x00\x00\x00\x01", 6);
  put16(f, 0x0800);
  std::string ip;
  ip.push_back(0x45);
  ip.push_back(0);
  put16(ip, static_cast<uint16_t>(20 + l4.size()));
  put16(ip, 0);       // id
  put16(ip, 0x4000);  // DF
  ip.push_back(64);
  ip.push_back(static_cast<char>(proto));
  put16(ip, 0);
  put32(ip, src);
  put32(ip, dst);
  const uint16_t csum = ip_checksum(ip);
  ip[10] = static_cast<char>(csum >> 8);
  ip[11] = static_cast<char>(csum & 0xFF);
  f += ip;
  f.append(l4);
  return f;
}

}  // namespace

uint32_t parse_ipv4(std::string_view text) {
  uint32_t out = 0;
  const char* p = text.data();
  const char* end = text.data() + text.size();
  for (int i = 0; i < 4; ++i) {
    unsigned v = 0;
    const auto [next, ec] = std::from_chars(p, end, v);
    if (ec != std::errc() || v > 255 || (i < 3 && (next == end || *next != '.'))) {
      throw Error(ErrorCode::kData, "not an IPv4 address: " + std::string(text));
    }
    out = (out << 8) | v;
    p = i < 3 ? next + 1 : next;
  }
  if (p != end) throw Error(ErrorCode::kData, "not an IPv4 address: " + std::string(text));
  return out;
}

void PcapWriter::add_tcp_segment(const ingest::Endpoint& src, const ingest::Endpoint& dst, uint32_t seq,
                                 uint32_t ack, uint8_t flags, std::string_view payload, int64_t ts) {
  std::string tcp;
  put16(tcp, src.port);
  put16(tcp, dst.port);
  put32(tcp, seq);
  put32(tcp, ack);
  tcp.push_back(0x50);
  tcp.push_back(static_cast<char>(flags));
  put16(tcp, 65535);
  put16(tcp, 0);  // checksum left zero; readers do not verify it
  put16(tcp, 0);
  tcp.append(payload);
  records_.push_back(Record{ts, ethernet_ipv4(parse_ipv4(src.host), parse_ipv4(dst.host), 6, tcp)});
}

void PcapWriter::add_tcp_flow(const ingest::Flow& flow, size_t mss) {
  if (flow.messages.empty()) return;
  const auto& c = flow.key.client;
  const auto& s = flow.key.server;
  uint32_t cseq = 1000, sseq = 5000;
  const int64_t t0 = flow.messages.front().timestamp_us - 1000;
  add_tcp_segment(c, s, cseq, 0, kSyn, {}, t0);
  add_tcp_segment(s, c, sseq, cseq + 1, kSyn | kAck, {}, t0 + 100);
  add_tcp_segment(c, s, cseq + 1, sseq + 1, kAck, {}, t0 + 200);
  ++cseq;
  ++sseq;
  for (const auto& msg : flow.messages) {
    const bool from_client = msg.direction == ingest::Direction::kRequest;
    const std::string raw = ingest::serialize_http_message(msg);
    uint32_t& seq = from_client ? cseq : sseq;
    const uint32_t ack = from_client ? sseq : cseq;
    for (size_t off = 0; off < raw.size(); off += mss) {
      const std::string_view part = std::string_view(raw).substr(off, mss);
      add_tcp_segment(from_client ? c : s, from_client ? s : c, seq, ack, kAck | kPsh, part, msg.timestamp_us);
      seq += static_cast<uint32_t>(part.size());
    }
  }
  const int64_t t1 = flow.messages.back().timestamp_us + 1000;
  add_tcp_segment(c, s, cseq, sseq, kFin | kAck, {}, t1);
  add_tcp_segment(s, c, sseq, cseq + 1, kFin | kAck, {}, t1 + 100);
}

void PcapWriter::add_udp(const ingest::Endpoint& src, const ingest::Endpoint& dst, std::string_view payload,
                         int64_t timestamp_us) {
  std::string udp;
  put16(udp, src.port);
  put16(udp, dst.port);
  put16(udp, static_cast<uint16_t>(8 + payload.size()));
  put16(udp, 0);
  udp.append(payload);
  records_.push_back(Record{timestamp_us, ethernet_ipv4(parse_ipv4(src.host), parse_ipv4(dst.host), 17, udp)});
}

std::string PcapWriter::bytes() const {
  std::vector<const Record*> order;
  for (const auto& r : records_) order.push_back(&r);
  std::stable_sort(order.begin(), order.end(), [](const Record* a, const Record* b) { return a->ts < b->ts; });
  std::string out;
  put32le(out, 0xA1B2C3D4);
  put16le(out, 2);
  put16le(out, 4);
  put32le(out, 0);
  put32le(out, 0);
  put32le(out, 65535);
  put32le(out, 1);
  for (const Record* r : order) {
    put32le(out, static_cast<uint32_t>(r->ts / 1'000'000));
    put32le(out, static_cast<uint32_t>(r->ts % 1'000'000));
    put32le(out, static_cast<uint32_t>(r->frame.size()));
    put32le(out, static_cast<uint32_t>(r->frame.size()));
    out += r->frame;
  }
  return out;
}

}  // namespace hstf::synth
