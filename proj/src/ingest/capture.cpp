#include "hstf/ingest/capture.hpp"

#include <cstring>

namespace hstf::ingest {

ParseResult parse_capture(std::span<const uint8_t> source, CaptureFormat format) {
  if (format == CaptureFormat::kPcap) return parse_pcap(source);
  return parse_flow_jsonl(std::string_view(reinterpret_cast<const char*>(source.data()), source.size()));
}

ParseResult parse_capture(std::string_view source, CaptureFormat format) {
  return parse_capture(
      std::span<const uint8_t>(reinterpret_cast<const uint8_t*>(source.data()), source.size()), format);
}

CaptureFormat sniff_capture_format(std::string_view source) {
  if (source.size() >= 4) {
    uint32_t magic = 0;
    std::memcpy(&magic, source.data(), 4);
    for (uint32_t m : {0xa1b2c3d4u, 0xa1b23c4du, 0xd4c3b2a1u, 0x4d3cb2a1u}) {
      if (magic == m) return CaptureFormat::kPcap;
    }
  }
  return CaptureFormat::kFlowJsonl;
}

}  // namespace hstf::ingest
