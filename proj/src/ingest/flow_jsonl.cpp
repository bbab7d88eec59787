#include "hstf/ingest/flow_jsonl.hpp"

#include <nlohmann/json.hpp>

#include "hstf/common/codec.hpp"
#include "hstf/common/error.hpp"
#include "hstf/ingest/capture.hpp"
#include "hstf/ingest/http_message.hpp"

namespace hstf::ingest {

using nlohmann::json;

namespace {

json message_record(const Endpoint& src, const Endpoint& dst, const HttpMessage& msg) {
  const std::string raw = serialize_http_message(msg);
  json j;
  j["src_host"] = src.host;
  j["src_port"] = src.port;
  j["dst_host"] = dst.host;
  j["dst_port"] = dst.port;
  j["direction"] = to_string(msg.direction);
  j["ts_us"] = msg.timestamp_us;
  j["raw_b64"] = base64_encode(raw);
  // Chunked or capped bodies re-serialize shorter than they were on the wire.
  if (msg.wire_size != raw.size()) j["wire_size"] = msg.wire_size;
  return j;
}

bool read_endpoint(const json& j, const char* host_key, const char* port_key, Endpoint& out) {
  const auto h = j.find(host_key);
  const auto p = j.find(port_key);
  if (h == j.end() || p == j.end() || !h->is_string() || !p->is_number_integer()) return false;
  const auto port = p->get<int64_t>();
  if (port < 0 || port > 65535 || h->get_ref<const std::string&>().empty()) return false;
  out.host = h->get<std::string>();
  out.port = static_cast<uint16_t>(port);
  return true;
}

}  // namespace

void write_flow_jsonl(std::ostream& out, std::span<const Flow> flows) {
  for (const auto& flow : flows) {
    for (const auto& msg : flow.messages) {
      const bool from_client = msg.direction == Direction::kRequest;
      const Endpoint& src = from_client ? flow.key.client : flow.key.server;
      const Endpoint& dst = from_client ? flow.key.server : flow.key.client;
      json j = message_record(src, dst, msg);
      j["flow_id"] = flow.id;
      out << j.dump() << '\n';
    }
  }
}

void write_message_jsonl(std::ostream& out, std::span<const TupleMessage> messages) {
  for (const auto& m : messages) out << message_record(m.src, m.dst, m.message).dump() << '\n';
}

ParseResult parse_flow_jsonl(std::string_view source) {
  ParseResult result;
  uint64_t nonblank = 0;
  uint64_t json_objects = 0;
  size_t pos = 0;
  while (pos < source.size()) {
    size_t nl = source.find('\n', pos);
    if (nl == std::string_view::npos) nl = source.size();
    std::string_view line = source.substr(pos, nl - pos);
    pos = nl + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    ++nonblank;
    ++result.stats.records;
    json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (!j.is_object()) {
      ++result.stats.undecodable_messages;
      continue;
    }
    ++json_objects;
    TupleMessage tm;
    const auto ts = j.find("ts_us");
    const auto raw = j.find("raw_b64");
    if (!read_endpoint(j, "src_host", "src_port", tm.src) ||
        !read_endpoint(j, "dst_host", "dst_port", tm.dst) || ts == j.end() ||
        !ts->is_number_integer() || raw == j.end() || !raw->is_string()) {
      ++result.stats.undecodable_messages;
      continue;
    }
    std::string bytes;
    try {
      bytes = base64_decode(raw->get_ref<const std::string&>());
    } catch (const Error&) {
      ++result.stats.undecodable_messages;
      continue;
    }
    auto msg = parse_http_message(bytes, ts->get<int64_t>());
    if (!msg) {
      ++result.stats.undecodable_messages;
      continue;
    }
    if (const auto ws = j.find("wire_size"); ws != j.end() && ws->is_number_unsigned()) {
      msg->wire_size = ws->get<uint64_t>();
    }
    tm.message = std::move(*msg);
    result.messages.push_back(std::move(tm));
  }
  if (nonblank > 0 && json_objects == 0) {
    throw Error(ErrorCode::kCapture, "flow-jsonl: no line is a JSON object; not a flow-jsonl capture");
  }
  result.stats.http_messages = result.messages.size();
  return result;
}

}  // namespace hstf::ingest
