#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "hstf/ingest/types.hpp"

namespace hstf::synth {

/// Builds a classic pcap (microsecond, Ethernet) from flows whose endpoint
/// hosts are dotted IPv4 addresses. Used to exercise the capture reader.
class PcapWriter {
 public:
  /// Handshake, every message split into `mss`-sized segments (one segment
  /// per message timestamp), then FIN in both directions.
  void add_tcp_flow(const ingest::Flow& flow, size_t mss = 1460);
  void add_udp(const ingest::Endpoint& src, const ingest::Endpoint& dst, std::string_view payload,
               int64_t timestamp_us);

  /// Whole capture file; records are stable-sorted by timestamp.
  std::string bytes() const;

 private:
  struct Record {
    int64_t ts = 0;
    std::string frame;
  };

  void add_tcp_segment(const ingest::Endpoint& src, const ingest::Endpoint& dst, uint32_t seq,
                       uint32_t ack, uint8_t flags, std::string_view payload, int64_t ts);

  std::vector<Record> records_;
};

/// Parses "a.b.c.d"; throws Error(kData) otherwise.
uint32_t parse_ipv4(std::string_view text);

}  // namespace hstf::synth
