#include "hstf/features/extract.hpp"

#include <charconv>
#include <cmath>
#include <string>

#include "hstf/common/error.hpp"

namespace hstf::features {

std::string_view to_string(OverflowPolicy p) {
  return p == OverflowPolicy::kTruncate ? "truncate" : "discard";
}

OverflowPolicy overflow_policy_from_string(std::string_view text) {
  if (text == "truncate") return OverflowPolicy::kTruncate;
  if (text == "discard") return OverflowPolicy::kDiscard;
  throw Error(ErrorCode::kConfig, "overflow policy must be truncate or discard, got '" +
                                      std::string(text) + "'");
}

void FeatureConfig::validate() const {
  if (rows < 3) throw Error(ErrorCode::kConfig, "feature config: rows must be >= 3");
  if (cols < 1) throw Error(ErrorCode::kConfig, "feature config: cols must be >= 1");
  if (flow_size < 1) throw Error(ErrorCode::kConfig, "feature config: flow_size must be >= 1");
  if (max_seq < 1 || max_seq > static_cast<int>(kMaxSequence)) {
    throw Error(ErrorCode::kConfig, "feature config: max_seq must be in [1, 50]");
  }
}

int method_code(std::string_view method) {
  if (method == "GET") return kMethodGet;
  if (method == "POST") return kMethodPost;
  if (method == "HEAD") return kMethodHead;
  if (method == "OPTIONS") return kMethodOptions;
  if (method == "PUT") return kMethodPut;
  if (method == "DELETE") return kMethodDelete;
  return kMethodOther;
}

int version_code(std::string_view version) {
  if (version == "HTTP/1.0") return 10;
  if (version == "HTTP/1.1") return 11;
  if (version == "HTTP/2" || version == "HTTP/2.0") return 20;
  return 0;
}

namespace {

struct StartLine {
  std::string_view first;   // method, or version for responses
  std::string_view second;  // target, or status code
  std::string_view third;   // version, or reason phrase
};

StartLine split_start_line(std::string_view line) {
  StartLine s;
  const size_t sp1 = line.find(' ');
  if (sp1 == std::string_view::npos) {
    s.first = line;
    return s;
  }
  s.first = line.substr(0, sp1);
  const size_t sp2 = line.find(' ', sp1 + 1);
  if (sp2 == std::string_view::npos) {
    s.second = line.substr(sp1 + 1);
    return s;
  }
  s.second = line.substr(sp1 + 1, sp2 - sp1 - 1);
  s.third = line.substr(sp2 + 1);
  return s;
}

int parse_status(std::string_view code) {
  int v = 0;
  std::from_chars(code.data(), code.data() + code.size(), v);
  return v;
}

void fill_row(float* row, int cols, std::string_view bytes) {
  const size_t n = std::min(bytes.size(), static_cast<size_t>(cols));
  for (size_t i = 0; i < n; ++i) row[i] = scale_byte(static_cast<uint8_t>(bytes[i]));
}

void append_normalized(std::vector<float>& out, size_t offset, std::span<const double> raw) {
  for (size_t i = 0; i < raw.size(); ++i) {
    out[offset + i] = static_cast<float>(normalize_stat(raw[i]));
  }
}

}  // namespace

RawMatrix build_raw_matrix(const HttpMessage& msg, int rows, int cols) {
  RawMatrix m;
  m.rows = rows;
  m.cols = cols;
  m.values.assign(static_cast<size_t>(rows) * cols, 0.0f);
  fill_row(m.values.data(), cols, msg.start_line);
  const size_t header_rows = static_cast<size_t>(rows - 2);
  const size_t n = std::min(header_rows, msg.headers.size());
  for (size_t i = 0; i < n; ++i) {
    fill_row(m.values.data() + (i + 1) * cols, cols, msg.headers[i].line);
  }
  fill_row(m.values.data() + static_cast<size_t>(rows - 1) * cols, cols, msg.payload);
  return m;
}

PlVector extract_pl(const HttpMessage& msg) {
  PlVector v{};
  const StartLine s = split_start_line(msg.start_line);
  if (msg.direction == Direction::kRequest) {
    v[0] = method_code(s.first);
    v[1] = static_cast<double>(s.second.size());
    v[2] = version_code(s.third);
  } else {
    v[0] = parse_status(s.second);
    v[1] = static_cast<double>(s.third.size());
    v[2] = version_code(s.first);
  }
  v[3] = static_cast<double>(msg.headers.size());
  const size_t n = std::min(kHeaderSlots, msg.headers.size());
  for (size_t i = 0; i < n; ++i) {
    v[4 + i] = static_cast<double>(msg.headers[i].name.size());
    v[4 + kHeaderSlots + i] = static_cast<double>(msg.headers[i].value.size());
  }
  v[kPlWidth - 1] = static_cast<double>(msg.payload.size());
  return v;
}

FlVector extract_fl(std::span<const HttpMessage* const> msgs, Direction direction) {
  const bool request = direction == Direction::kRequest;
  FlVector v(request ? kFlRequestWidth : kFlResponseWidth, 0.0);
  const size_t mean_pos = request ? 6 : 7;
  const size_t seq_pos = mean_pos + 1;
  const size_t n = std::min(msgs.size(), kMaxSequence);
  double total = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const HttpMessage& m = *msgs[i];
    const StartLine s = split_start_line(m.start_line);
    if (request) {
      const int code = method_code(s.first);
      v[code <= kMethodOptions ? static_cast<size_t>(code) : 5] += 1.0;
    } else {
      const int cls = parse_status(s.second) / 100;
      v[cls >= 1 && cls <= 5 ? static_cast<size_t>(cls) : 6] += 1.0;
    }
    const auto size = static_cast<double>(m.wire_size);
    total += size;
    v[seq_pos + i] = size;
  }
  v[0] = static_cast<double>(n);
  v[mean_pos] = n == 0 ? 0.0 : total / static_cast<double>(n);
  return v;
}

double normalize_stat(double x) {
  if (x < 0.0) return -normalize_stat(-x);
  const double e = std::exp(-x);
  return (1.0 - e) / (1.0 + e);
}

void normalize_stat_inplace(std::span<double> values) {
  for (double& x : values) x = normalize_stat(x);
}

FlowSample FlowSample::zeros(const FeatureConfig& cfg) {
  FlowSample s;
  s.rows = cfg.rows;
  s.cols = cfg.cols;
  s.flow_size = cfg.flow_size;
  const size_t n = static_cast<size_t>(cfg.flow_size);
  s.req_raw.assign(n * cfg.matrix_size(), 0.0f);
  s.res_raw.assign(n * cfg.matrix_size(), 0.0f);
  s.req_pl.assign(n * kPlWidth, 0.0f);
  s.res_pl.assign(n * kPlWidth, 0.0f);
  s.req_fl.assign(kFlRequestWidth, 0.0f);
  s.res_fl.assign(kFlResponseWidth, 0.0f);
  return s;
}

std::optional<FlowSample> flow_to_sample(const Flow& flow, const FeatureConfig& cfg) {
  cfg.validate();
  std::vector<const HttpMessage*> req;
  std::vector<const HttpMessage*> res;
  for (const auto& m : flow.messages) {
    (m.direction == Direction::kRequest ? req : res).push_back(&m);
  }
  FlowSample s = FlowSample::zeros(cfg);
  s.id = flow.id;
  s.label = flow.label;
  const auto limit = static_cast<size_t>(cfg.max_seq);
  for (auto* seq : {&req, &res}) {
    if (seq->size() > limit) {
      if (cfg.overflow == OverflowPolicy::kDiscard) return std::nullopt;
      seq->resize(limit);
      s.truncated = true;
    }
  }

  const size_t cells = cfg.matrix_size();
  auto fill_direction = [&](const std::vector<const HttpMessage*>& seq, std::vector<float>& raw,
                            std::vector<float>& pl) {
    const size_t n = std::min(seq.size(), static_cast<size_t>(cfg.flow_size));
    for (size_t i = 0; i < n; ++i) {
      const RawMatrix m = build_raw_matrix(*seq[i], cfg.rows, cfg.cols);
      std::copy(m.values.begin(), m.values.end(), raw.begin() + static_cast<std::ptrdiff_t>(i * cells));
      const PlVector p = extract_pl(*seq[i]);
      append_normalized(pl, i * kPlWidth, p);
    }
  };
  fill_direction(req, s.req_raw, s.req_pl);
  fill_direction(res, s.res_raw, s.res_pl);

  const FlVector req_fl = extract_fl(req, Direction::kRequest);
  const FlVector res_fl = extract_fl(res, Direction::kResponse);
  append_normalized(s.req_fl, 0, req_fl);
  append_normalized(s.res_fl, 0, res_fl);
  return s;
}

}  // namespace hstf::features
