#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "hstf/ingest/types.hpp"

namespace hstf::ingest {

enum class CaptureFormat { kPcap, kFlowJsonl };

/// Diagnostic counters collected while parsing a capture.
struct ParseStats {
  uint64_t records = 0;             ///< pcap records or jsonl lines seen
  uint64_t tcp_segments = 0;
  uint64_t skipped_non_ip = 0;
  uint64_t skipped_non_tcp = 0;     ///< UDP, ICMP, ...
  uint64_t skipped_fragments = 0;
  uint64_t truncated_records = 0;
  uint64_t undecodable_messages = 0;
  uint64_t stream_gaps = 0;
  uint64_t http_messages = 0;
};

struct ParseResult {
  std::vector<TupleMessage> messages;
  ParseStats stats;
};

/// Parses a whole capture. A malformed capture header (or a jsonl file with no
/// decodable line at all) throws Error(kCapture); individual bad records are
/// skipped and counted.
ParseResult parse_capture(std::span<const uint8_t> source, CaptureFormat format);
ParseResult parse_capture(std::string_view source, CaptureFormat format);

/// Guesses the format from the leading bytes: pcap magic or otherwise jsonl.
CaptureFormat sniff_capture_format(std::string_view source);

ParseResult parse_pcap(std::span<const uint8_t> source);
ParseResult parse_flow_jsonl(std::string_view source);

}  // namespace hstf::ingest
