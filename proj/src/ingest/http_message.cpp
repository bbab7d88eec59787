#include "hstf/ingest/http_message.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>

namespace hstf::ingest {

std::string_view to_string(Direction d) {
  return d == Direction::kRequest ? "request" : "response";
}

std::string_view to_string(Label label) {
  switch (label) {
    case Label::kMalicious: return "malicious";
    case Label::kBenign: return "benign";
    case Label::kUnlabeled: return "unlabeled";
  }
  return "unlabeled";
}

namespace {

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) ==
                  std::tolower(static_cast<unsigned char>(y));
         });
}

bool is_tchar(char c) {
  if (std::isalnum(static_cast<unsigned char>(c))) return true;
  static constexpr std::string_view kExtra = "!#$%&'*+-.^_`|~";
  return kExtra.find(c) != std::string_view::npos;
}

std::string_view trim_ows(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

/// Splits a header block (without the terminating blank line) into the start
/// line and header fields. obs-fold continuation lines extend the previous value.
bool parse_head_block(std::string_view block, HttpMessage& msg) {
  std::vector<std::string_view> lines;
  size_t pos = 0;
  while (pos <= block.size()) {
    size_t nl = block.find('\n', pos);
    if (nl == std::string_view::npos) nl = block.size();
    std::string_view line = block.substr(pos, nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    pos = nl + 1;
  }
  if (lines.empty()) return false;
  const std::string_view start = lines.front();
  if (is_response_line(start)) {
    msg.direction = Direction::kResponse;
  } else if (is_request_line(start)) {
    msg.direction = Direction::kRequest;
  } else {
    return false;
  }
  msg.start_line.assign(start);
  msg.headers.clear();
  for (size_t i = 1; i < lines.size(); ++i) {
    std::string_view line = lines[i];
    if (line.empty()) continue;
    if ((line.front() == ' ' || line.front() == '\t') && !msg.headers.empty()) {
      auto& prev = msg.headers.back();
      prev.line.append("\r\n").append(line);
      prev.value.append(" ").append(trim_ows(line));
      continue;
    }
    const size_t colon = line.find(':');
    if (colon == std::string_view::npos || colon == 0) return false;
    HeaderLine h;
    h.name.assign(line.substr(0, colon));
    h.value.assign(trim_ows(line.substr(colon + 1)));
    h.line.assign(line);
    msg.headers.push_back(std::move(h));
  }
  return true;
}

/// Locates the end of the header block. Returns the offset just past the
/// blank line, or npos.
size_t find_head_end(std::string_view data) {
  const size_t crlf = data.find("\r\n\r\n");
  const size_t lf = data.find("\n\n");
  if (crlf == std::string_view::npos && lf == std::string_view::npos) return std::string_view::npos;
  if (lf == std::string_view::npos || (crlf != std::string_view::npos && crlf < lf)) return crlf + 4;
  return lf + 2;
}

struct ChunkResult {
  enum Status { kIncomplete, kMalformed, kDone } status = kIncomplete;
  std::string body;
  size_t consumed = 0;
};

ChunkResult decode_chunked(std::string_view data) {
  ChunkResult r;
  size_t pos = 0;
  while (true) {
    const size_t nl = data.find("\r\n", pos);
    if (nl == std::string_view::npos) return r;
    std::string_view size_line = data.substr(pos, nl - pos);
    if (const size_t semi = size_line.find(';'); semi != std::string_view::npos) {
      size_line = size_line.substr(0, semi);
    }
    size_line = trim_ows(size_line);
    uint64_t size = 0;
    auto [ptr, ec] = std::from_chars(size_line.data(), size_line.data() + size_line.size(), size, 16);
    if (ec != std::errc() || ptr != size_line.data() + size_line.size() || size_line.empty()) {
      r.status = ChunkResult::kMalformed;
      return r;
    }
    pos = nl + 2;
    if (size == 0) {
      // Trailer section ends with an empty line.
      while (true) {
        const size_t tnl = data.find("\r\n", pos);
        if (tnl == std::string_view::npos) return r;
        const bool empty = tnl == pos;
        pos = tnl + 2;
        if (empty) break;
      }
      r.status = ChunkResult::kDone;
      r.consumed = pos;
      return r;
    }
    if (data.size() < pos + size + 2) return r;
    if (r.body.size() < kMaxPayloadBytes) {
      const size_t room = kMaxPayloadBytes - r.body.size();
      r.body.append(data.substr(pos, std::min<uint64_t>(size, room)));
    }
    pos += size;
    if (data.substr(pos, 2) != "\r\n") {
      r.status = ChunkResult::kMalformed;
      return r;
    }
    pos += 2;
  }
}

std::optional<uint64_t> parse_content_length(const HttpMessage& msg) {
  const auto v = find_header(msg, "Content-Length");
  if (!v) return std::nullopt;
  uint64_t n = 0;
  auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), n);
  if (ec != std::errc() || ptr != v->data() + v->size()) return std::nullopt;
  return n;
}

bool is_chunked(const HttpMessage& msg) {
  const auto v = find_header(msg, "Transfer-Encoding");
  if (!v) return false;
  std::string lower(*v);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return lower.find("chunked") != std::string::npos;
}

int status_code_of(std::string_view start_line) {
  const size_t sp = start_line.find(' ');
  if (sp == std::string_view::npos) return 0;
  int code = 0;
  const auto digits = start_line.substr(sp + 1, 3);
  std::from_chars(digits.data(), digits.data() + digits.size(), code);
  return code;
}

}  // namespace

bool is_request_line(std::string_view line) {
  const size_t sp1 = line.find(' ');
  if (sp1 == std::string_view::npos || sp1 == 0) return false;
  const std::string_view method = line.substr(0, sp1);
  if (!std::all_of(method.begin(), method.end(), is_tchar)) return false;
  const size_t sp2 = line.find(' ', sp1 + 1);
  if (sp2 == std::string_view::npos || sp2 == sp1 + 1) return false;
  const std::string_view version = line.substr(sp2 + 1);
  return version.starts_with("HTTP/") && version.find(' ') == std::string_view::npos;
}

bool is_response_line(std::string_view line) { return line.starts_with("HTTP/"); }

std::optional<std::string_view> find_header(const HttpMessage& msg, std::string_view name) {
  for (const auto& h : msg.headers) {
    if (iequals(h.name, name)) return std::string_view(h.value);
  }
  return std::nullopt;
}

std::optional<HttpMessage> parse_http_message(std::string_view raw, int64_t timestamp_us) {
  HttpMessage msg;
  msg.timestamp_us = timestamp_us;
  msg.wire_size = raw.size();
  size_t end = find_head_end(raw);
  std::string_view head;
  if (end == std::string_view::npos) {
    // Header-only message without the final blank line.
    head = raw;
    while (!head.empty() && (head.back() == '\n' || head.back() == '\r')) head.remove_suffix(1);
    end = raw.size();
  } else {
    head = raw.substr(0, end);
    while (!head.empty() && (head.back() == '\n' || head.back() == '\r')) head.remove_suffix(1);
  }
  if (!parse_head_block(head, msg)) return std::nullopt;
  const std::string_view body = raw.substr(end);
  msg.payload.assign(body.substr(0, kMaxPayloadBytes));
  return msg;
}

std::string serialize_http_message(const HttpMessage& msg) {
  std::string out = msg.start_line;
  out += "\r\n";
  for (const auto& h : msg.headers) {
    out += h.line;
    out += "\r\n";
  }
  out += "\r\n";
  out += msg.payload;
  return out;
}

// --- HttpStreamFramer -------------------------------------------------------

void HttpStreamFramer::feed(std::string_view bytes, int64_t timestamp_us) {
  if (bytes.empty()) return;
  segment_marks_.emplace_back(base_offset_ + buffer_.size(), timestamp_us);
  buffer_.append(bytes);
  parse();
}

void HttpStreamFramer::finish() {
  if (in_body_ && mode_ == BodyMode::kUntilClose) {
    const std::string_view body = std::string_view(buffer_).substr(head_len_);
    emit(std::string(body.substr(0, kMaxPayloadBytes)), body.size());
    consume(buffer_.size());
  } else if (in_body_ || !buffer_.empty()) {
    ++undecodable_;  // truncated message at end of stream
    in_body_ = false;
    consume(buffer_.size());
  }
}

int64_t HttpStreamFramer::timestamp_at(uint64_t abs_offset) const {
  int64_t ts = segment_marks_.empty() ? 0 : segment_marks_.front().second;
  for (const auto& [off, t] : segment_marks_) {
    if (off > abs_offset) break;
    ts = t;
  }
  return ts;
}

void HttpStreamFramer::consume(size_t n) {
  buffer_.erase(0, n);
  base_offset_ += n;
  while (segment_marks_.size() > 1 && segment_marks_[1].first <= base_offset_) {
    segment_marks_.pop_front();
  }
}

void HttpStreamFramer::emit(std::string body, uint64_t body_wire) {
  pending_.payload = std::move(body);
  pending_.wire_size = head_len_ + body_wire;
  ready_.push_back(std::move(pending_));
  pending_ = HttpMessage{};
  in_body_ = false;
}

void HttpStreamFramer::parse() {
  while (!buffer_.empty()) {
    if (!in_body_) {
      if (!parse_head()) return;
    }
    if (!parse_body()) return;
  }
}

bool HttpStreamFramer::parse_head() {
  const std::string_view data(buffer_);
  const size_t end = find_head_end(data);
  if (end == std::string_view::npos) {
    // The first line alone tells us whether this can be HTTP at all.
    const size_t nl = data.find('\n');
    if (nl != std::string_view::npos) {
      std::string_view first = data.substr(0, nl);
      if (!first.empty() && first.back() == '\r') first.remove_suffix(1);
      if (!is_request_line(first) && !is_response_line(first)) {
        ++undecodable_;
        consume(buffer_.size());
        return false;
      }
    }
    if (buffer_.size() > kMaxPayloadBytes) {
      ++undecodable_;
      consume(buffer_.size());
    }
    return false;
  }
  std::string_view head = data.substr(0, end);
  while (!head.empty() && (head.back() == '\n' || head.back() == '\r')) head.remove_suffix(1);
  HttpMessage msg;
  if (!parse_head_block(head, msg)) {
    ++undecodable_;
    consume(buffer_.size());
    return false;
  }
  msg.timestamp_us = timestamp_at(base_offset_);
  head_len_ = end;
  const bool chunked = is_chunked(msg);
  const auto length = parse_content_length(msg);
  if (msg.direction == Direction::kRequest) {
    if (head_flags_ != nullptr) {
      head_flags_->push_back(msg.start_line.starts_with("HEAD "));
    }
    mode_ = chunked ? BodyMode::kChunked : (length ? BodyMode::kLength : BodyMode::kNone);
  } else {
    bool head_response = false;
    if (head_flags_ != nullptr && !head_flags_->empty()) {
      head_response = head_flags_->front();
      head_flags_->pop_front();
    }
    const int code = status_code_of(msg.start_line);
    if (head_response || (code >= 100 && code < 200) || code == 204 || code == 304) {
      mode_ = BodyMode::kNone;
    } else if (chunked) {
      mode_ = BodyMode::kChunked;
    } else if (length) {
      mode_ = BodyMode::kLength;
    } else {
      mode_ = BodyMode::kUntilClose;
    }
  }
  content_length_ = length.value_or(0);
  pending_ = std::move(msg);
  in_body_ = true;
  return true;
}

bool HttpStreamFramer::parse_body() {
  const std::string_view body = std::string_view(buffer_).substr(head_len_);
  switch (mode_) {
    case BodyMode::kNone:
      emit({}, 0);
      consume(head_len_);
      return true;
    case BodyMode::kLength:
      if (body.size() < content_length_) return false;
      emit(std::string(body.substr(0, std::min<uint64_t>(content_length_, kMaxPayloadBytes))),
           content_length_);
      consume(head_len_ + content_length_);
      return true;
    case BodyMode::kChunked: {
      ChunkResult r = decode_chunked(body);
      if (r.status == ChunkResult::kIncomplete) return false;
      if (r.status == ChunkResult::kMalformed) {
        ++undecodable_;
        in_body_ = false;
        consume(buffer_.size());
        return false;
      }
      emit(std::move(r.body), r.consumed);
      consume(head_len_ + r.consumed);
      return true;
    }
    case BodyMode::kUntilClose:
      return false;
  }
  return false;
}

}  // namespace hstf::ingest
