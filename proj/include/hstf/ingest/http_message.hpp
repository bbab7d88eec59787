#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hstf/ingest/types.hpp"

namespace hstf::ingest {

/// True for "METHOD SP target SP HTTP/x.y" where METHOD is an RFC 9110 token.
bool is_request_line(std::string_view line);
/// True when the line begins with "HTTP/".
bool is_response_line(std::string_view line);

/// Parses one complete message held in `raw` (start line, header block, body).
/// The body is taken verbatim after the blank line and capped. Direction comes
/// from the start-line shape alone. Returns nullopt for undecodable input.
std::optional<HttpMessage> parse_http_message(std::string_view raw, int64_t timestamp_us);

/// Inverse of parse_http_message for messages with verbatim bodies.
std::string serialize_http_message(const HttpMessage& msg);

/// Value of the first header whose name matches case-insensitively.
std::optional<std::string_view> find_header(const HttpMessage& msg, std::string_view name);

/// Incremental HTTP/1.x framer for one direction of a TCP byte stream.
/// Handles Content-Length, chunked transfer coding and read-until-close
/// response bodies. Multi-segment messages are joined before emission.
class HttpStreamFramer {
 public:
  explicit HttpStreamFramer(Direction expected) : expected_(expected) {}

  /// Appends in-order stream bytes that arrived at `timestamp_us`.
  void feed(std::string_view bytes, int64_t timestamp_us);
  /// Stream closed: completes any read-until-close body.
  void finish();

  /// Responses to HEAD requests carry no body; the request side of the
  /// connection pushes one entry per request so responses pair by order.
  void set_request_methods(std::deque<bool>* head_flags) { head_flags_ = head_flags; }

  std::vector<HttpMessage> take_messages() { return std::exchange(ready_, {}); }
  uint64_t undecodable() const { return undecodable_; }

 private:
  enum class BodyMode { kNone, kLength, kChunked, kUntilClose };

  void parse();
  bool parse_head();
  bool parse_body();
  void emit(std::string body, uint64_t body_wire);
  void consume(size_t n);
  int64_t timestamp_at(uint64_t abs_offset) const;

  Direction expected_;
  std::deque<bool>* head_flags_ = nullptr;
  std::string buffer_;
  uint64_t base_offset_ = 0;
  std::deque<std::pair<uint64_t, int64_t>> segment_marks_;

  bool in_body_ = false;
  HttpMessage pending_;
  size_t head_len_ = 0;
  BodyMode mode_ = BodyMode::kNone;
  uint64_t content_length_ = 0;

  std::vector<HttpMessage> ready_;
  uint64_t undecodable_ = 0;
};

}  // namespace hstf::ingest
