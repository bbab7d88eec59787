#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace hstf::ingest {

/// One side of a connection. `host` is opaque: a dotted IPv4 address from a
/// capture or a hashed host token from a desensitized corpus.
struct Endpoint {
  std::string host;
  uint16_t port = 0;

  auto operator<=>(const Endpoint&) const = default;
};

/// Canonical full-duplex key: `client` is the endpoint that sent the first
/// request-direction message of the flow.
struct FlowKey {
  Endpoint client;
  Endpoint server;

  auto operator<=>(const FlowKey&) const = default;
};

enum class Direction { kRequest, kResponse };

std::string_view to_string(Direction d);

struct HeaderLine {
  std::string name;
  std::string value;  ///< OWS-trimmed.
  std::string line;   ///< On-wire bytes without the CRLF.
};

/// One complete HTTP message: the unit called a "packet" by the feature code.
struct HttpMessage {
  Direction direction = Direction::kRequest;
  std::string start_line;
  std::vector<HeaderLine> headers;
  std::string payload;       ///< De-chunked body, capped at kMaxPayloadBytes.
  int64_t timestamp_us = 0;  ///< Microseconds since epoch.
  uint64_t wire_size = 0;    ///< Bytes the message occupied on the wire.
};

inline constexpr size_t kMaxPayloadBytes = 64 * 1024;

enum class Label { kUnlabeled, kMalicious, kBenign };

std::string_view to_string(Label label);
/// Accepts "malicious", "benign", "unlabeled" (case-insensitive).
Label label_from_string(std::string_view text);

struct Flow {
  uint64_t id = 0;
  FlowKey key;
  std::vector<HttpMessage> messages;  ///< Non-empty, time-ordered.
  Label label = Label::kUnlabeled;
  int64_t first_ts = 0;
  int64_t last_ts = 0;
};

/// A parsed message together with the connection tuple it was seen on.
struct TupleMessage {
  Endpoint src;
  Endpoint dst;
  HttpMessage message;
};

}  // namespace hstf::ingest
