#include <gtest/gtest.h>

#include <algorithm>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "hstf/common/error.hpp"
#include "hstf/common/rng.hpp"
#include "hstf/ingest/capture.hpp"
#include "hstf/ingest/flow_jsonl.hpp"
#include "hstf/ingest/http_message.hpp"
#include "hstf/ingest/labels.hpp"
#include "hstf/ingest/reassembly.hpp"
#include "hstf/synth/generator.hpp"
#include "hstf/synth/pcap_writer.hpp"

using namespace hstf;
using namespace hstf::ingest;
using namespace std::chrono_literals;

namespace {

HttpMessage parse(const std::string& raw, int64_t ts = 0) {
  auto m = parse_http_message(raw, ts);
  EXPECT_TRUE(m) << raw;
  return *m;
}

TupleMessage tuple(const std::string& src, uint16_t sp, const std::string& dst, uint16_t dp,
                   const std::string& raw, int64_t ts) {
  return {{src, sp}, {dst, dp}, parse(raw, ts)};
}

const std::string kReq = "GET /a HTTP/1.1\r\nHost: x\r\n\r\n";
const std::string kRes = "HTTP/1.1 200 OK\r\nContent-Length: 2\r\n\r\nok";

// Synthetic flows moved onto IPv4 endpoints so they can travel through pcap.
std::vector<Flow> ipv4_flows(size_t n, uint64_t seed) {
  auto flows = synth::generate_corpus({.malicious = n / 2, .benign = n - n / 2, .seed = seed});
  for (size_t i = 0; i < flows.size(); ++i) {
    flows[i].key.client = {"10.0." + std::to_string(i / 200) + "." + std::to_string(i % 200 + 1),
                           static_cast<uint16_t>(40000 + i)};
    flows[i].key.server = {"192.168.1." + std::to_string(i % 50 + 1), 80};
  }
  return flows;
}

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::kUsage;
}

}  // namespace

TEST(HttpMessage, RequestExample) {
  const auto m = parse("GET /a HTTP/1.1\r\nHost: x\r\n\r\n");
  EXPECT_EQ(m.direction, Direction::kRequest);
  EXPECT_EQ(m.start_line, "GET /a HTTP/1.1");
  ASSERT_EQ(m.headers.size(), 1u);
  EXPECT_EQ(m.headers[0].name, "Host");
  EXPECT_EQ(m.headers[0].value, "x");
  EXPECT_EQ(m.headers[0].line, "Host: x");
  EXPECT_GE(m.wire_size, m.start_line.size());
}

TEST(HttpMessage, ResponseExample) {
  const auto m = parse("HTTP/1.1 200 OK\r\n\r\n");
  EXPECT_EQ(m.direction, Direction::kResponse);
  EXPECT_TRUE(m.headers.empty());
}

TEST(HttpMessage, ValueTrimmedAndCaseInsensitiveLookup) {
  const auto m = parse("POST /p HTTP/1.0\r\nContent-Type: \t text/plain \r\n\r\nbody");
  EXPECT_EQ(m.headers[0].value, "text/plain");
  EXPECT_EQ(find_header(m, "content-type").value(), "text/plain");
  EXPECT_FALSE(find_header(m, "Host"));
  EXPECT_EQ(m.payload, "body");
}

TEST(HttpMessage, RejectsNonHttp) {
  EXPECT_FALSE(parse_http_message("\x16\x03\x01 binary junk", 0));
  EXPECT_FALSE(parse_http_message("", 0));
  EXPECT_FALSE(is_request_line("GET /a"));
  EXPECT_TRUE(is_request_line("M-SEARCH * HTTP/1.1"));
  EXPECT_TRUE(is_response_line("HTTP/1.0 404 Not Found"));
}

TEST(HttpMessage, SerializeRoundTrip) {
  const std::string raw = "PUT /x?y=1 HTTP/1.1\r\nA: 1\r\nB:2\r\n\r\n\x01\x02payload";
  EXPECT_EQ(serialize_http_message(parse(raw)), raw);
}

TEST(Framer, ContentLengthAcrossSegments) {
  HttpStreamFramer f(Direction::kRequest);
  f.feed("POST /u HTTP/1.1\r\nContent-Len", 10);
  f.feed("gth: 5\r\n\r\nhel", 20);
  EXPECT_TRUE(f.take_messages().empty());
  f.feed("loGET / HTTP/1.1\r\n\r\n", 30);
  const auto msgs = f.take_messages();
  ASSERT_EQ(msgs.size(), 2u);
  EXPECT_EQ(msgs[0].payload, "hello");
  EXPECT_EQ(msgs[0].timestamp_us, 10);
  EXPECT_EQ(msgs[0].wire_size, 44u);
  EXPECT_EQ(msgs[1].start_line, "GET / HTTP/1.1");
  EXPECT_EQ(msgs[1].timestamp_us, 30);
}

TEST(Framer, ChunkedBodyIsJoined) {
  HttpStreamFramer f(Direction::kResponse);
  const std::string wire =
      "HTTP/1.1 200 OK\r\nTransfer-Encoding: chunked\r\n\r\n4\r\nWiki\r\n5;ext=1\r\npedia\r\n0\r\n\r\n";
  f.feed(wire.substr(0, 50), 1);
  f.feed(wire.substr(50), 2);
  const auto msgs = f.take_messages();
  ASSERT_EQ(msgs.size(), 1u);
  EXPECT_EQ(msgs[0].payload, "Wikipedia");
  EXPECT_EQ(msgs[0].wire_size, wire.size());
}

TEST(Framer, UntilCloseBody) {
  HttpStreamFramer f(Direction::kResponse);
  f.feed("HTTP/1.0 200 OK\r\n\r\nstream", 1);
  f.feed("ing", 2);
  EXPECT_TRUE(f.take_messages().empty());
  f.finish();
  const auto msgs = f.take_messages();
  ASSERT_EQ(msgs.size(), 1u);
  EXPECT_EQ(msgs[0].payload, "streaming");
}

TEST(Framer, HeadResponseHasNoBody) {
  std::deque<bool> heads{true, false};
  HttpStreamFramer f(Direction::kResponse);
  f.set_request_methods(&heads);
  f.feed("HTTP/1.1 200 OK\r\nContent-Length: 100\r\n\r\nHTTP/1.1 204 No Content\r\n\r\n", 1);
  const auto msgs = f.take_messages();
  ASSERT_EQ(msgs.size(), 2u);
  EXPECT_TRUE(msgs[0].payload.empty());
  EXPECT_EQ(msgs[1].start_line, "HTTP/1.1 204 No Content");
}

TEST(Framer, PayloadCapped) {
  HttpStreamFramer f(Direction::kRequest);
  const size_t n = kMaxPayloadBytes + 1000;
  f.feed("POST / HTTP/1.1\r\nContent-Length: " + std::to_string(n) + "\r\n\r\n" + std::string(n, 'a'), 1);
  const auto msgs = f.take_messages();
  ASSERT_EQ(msgs.size(), 1u);
  EXPECT_EQ(msgs[0].payload.size(), kMaxPayloadBytes);
  EXPECT_GT(msgs[0].wire_size, n);
}

TEST(Pcap, RoundTripThroughWriter) {
  const auto flows = ipv4_flows(40, 7);
  synth::PcapWriter w;
  size_t expected = 0;
  for (const auto& f : flows) {
    w.add_tcp_flow(f, 200);
    expected += f.messages.size();
  }
  w.add_udp({"10.9.9.9", 53}, {"10.9.9.1", 53}, "GET / HTTP/1.1\r\n\r\n", 5);
  const std::string bytes = w.bytes();
  EXPECT_EQ(sniff_capture_format(bytes), CaptureFormat::kPcap);
  const auto parsed = parse_capture(bytes, CaptureFormat::kPcap);
  EXPECT_EQ(parsed.stats.skipped_non_tcp, 1u);
  EXPECT_EQ(parsed.stats.undecodable_messages, 0u);
  ASSERT_EQ(parsed.messages.size(), expected);

  auto regrouped = reassemble(parsed.messages);
  ASSERT_EQ(regrouped.size(), flows.size());
  std::map<FlowKey, const Flow*> by_key;
  for (const auto& f : regrouped) by_key[f.key] = &f;
  for (const auto& f : flows) {
    ASSERT_TRUE(by_key.count(f.key));
    const Flow& g = *by_key[f.key];
    ASSERT_EQ(g.messages.size(), f.messages.size());
    for (size_t i = 0; i < f.messages.size(); ++i) {
      EXPECT_EQ(serialize_http_message(g.messages[i]), serialize_http_message(f.messages[i]));
      EXPECT_EQ(g.messages[i].wire_size, f.messages[i].wire_size);
      EXPECT_EQ(g.messages[i].timestamp_us, f.messages[i].timestamp_us);
    }
  }
}

TEST(Pcap, MalformedHeaderIsFatal) {
  const std::string junk = "\xd4\xc3\xb2\xa1\x02";
  EXPECT_EQ(code_of([&] { parse_pcap({reinterpret_cast<const uint8_t*>(junk.data()), junk.size()}); }),
            ErrorCode::kCapture);
}

TEST(Pcap, TruncatedRecordCounted) {
  synth::PcapWriter w;
  w.add_tcp_flow(ipv4_flows(2, 1)[0]);
  std::string bytes = w.bytes();
  bytes.resize(bytes.size() - 10);
  const auto parsed = parse_capture(bytes, CaptureFormat::kPcap);
  EXPECT_EQ(parsed.stats.truncated_records, 1u);
}

TEST(FlowJsonl, RoundTripAndErrors) {
  std::vector<TupleMessage> msgs{tuple("a", 1, "b", 80, kReq, 5), tuple("b", 80, "a", 1, kRes, 6)};
  std::ostringstream out;
  write_message_jsonl(out, msgs);
  const auto parsed = parse_capture(out.str() + "\n{\"src_host\": 1}\n", CaptureFormat::kFlowJsonl);
  ASSERT_EQ(parsed.messages.size(), 2u);
  EXPECT_EQ(parsed.stats.undecodable_messages, 1u);
  EXPECT_EQ(parsed.messages[1].message.payload, "ok");
  EXPECT_EQ(parsed.messages[1].src.host, "b");
  EXPECT_EQ(code_of([] { parse_flow_jsonl("not json\nat all\n"); }), ErrorCode::kCapture);
  EXPECT_TRUE(parse_flow_jsonl("").messages.empty());
}

TEST(Reassembly, SpecExamples) {
  auto one = reassemble({tuple("A", 5, "B", 80, kReq, 0), tuple("B", 80, "A", 5, kRes, 1)});
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].messages.size(), 2u);
  EXPECT_EQ(one[0].key.client.host, "A");

  auto two = reassemble({tuple("A", 5, "B", 80, kReq, 0), tuple("A", 5, "B", 80, kReq, 300'000'000)}, 120s);
  EXPECT_EQ(two.size(), 2u);
}

TEST(Reassembly, ClientIsFirstRequester) {
  auto flows = reassemble({tuple("B", 80, "A", 5, kRes, 0), tuple("A", 5, "B", 80, kReq, 1)});
  ASSERT_EQ(flows.size(), 1u);
  EXPECT_EQ(flows[0].key.client.host, "A");
  EXPECT_EQ(flows[0].key.server.host, "B");
}

namespace {

// Brute force: walk the time-sorted list and append each message to the most
// recent flow of its unordered tuple unless the gap exceeds the timeout.
std::vector<std::vector<std::pair<int64_t, std::string>>> grouping_oracle(std::vector<TupleMessage> msgs,
                                                                          int64_t timeout) {
  std::stable_sort(msgs.begin(), msgs.end(), [](const auto& a, const auto& b) {
    return a.message.timestamp_us < b.message.timestamp_us;
  });
  struct Open {
    Endpoint x, y;
    int64_t last;
    std::vector<std::pair<int64_t, std::string>> items;
  };
  std::vector<Open> flows;
  for (const auto& m : msgs) {
    Open* hit = nullptr;
    for (auto& f : flows) {
      const bool same = (f.x == m.src && f.y == m.dst) || (f.x == m.dst && f.y == m.src);
      if (same) hit = &f;
    }
    if (!hit || m.message.timestamp_us - hit->last > timeout) {
      flows.push_back({m.src, m.dst, m.message.timestamp_us, {}});
      hit = &flows.back();
    }
    hit->last = m.message.timestamp_us;
    hit->items.emplace_back(m.message.timestamp_us, m.message.start_line);
  }
  std::vector<std::vector<std::pair<int64_t, std::string>>> out;
  for (auto& f : flows) out.push_back(std::move(f.items));
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::vector<std::pair<int64_t, std::string>>> summarize(const std::vector<Flow>& flows) {
  std::vector<std::vector<std::pair<int64_t, std::string>>> out;
  for (const auto& f : flows) {
    std::vector<std::pair<int64_t, std::string>> items;
    for (const auto& m : f.messages) items.emplace_back(m.timestamp_us, m.start_line);
    out.push_back(std::move(items));
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<TupleMessage> random_messages(uint64_t seed, size_t n) {
  Rng rng(seed);
  std::vector<TupleMessage> msgs;
  int64_t t = 0;
  for (size_t i = 0; i < n; ++i) {
    t += uniform_int(rng, 0, 3) == 0 ? uniform_int(rng, 100, 200) * 1'000'000 : uniform_int(rng, 0, 5'000'000);
    const int k = static_cast<int>(uniform_int(rng, 0, 4));
    const std::string client = "c" + std::to_string(k % 3);
    const uint16_t port = static_cast<uint16_t>(1000 + k);
    const bool req = uniform01(rng) < 0.5;
    const std::string line = req ? "GET /" + std::to_string(i) + " HTTP/1.1" : "HTTP/1.1 200 R" + std::to_string(i);
    if (req) msgs.push_back(tuple(client, port, "srv", 80, line + "\r\n\r\n", t));
    else msgs.push_back(tuple("srv", 80, client, port, line + "\r\n\r\n", t));
  }
  return msgs;
}

}  // namespace

TEST(Reassembly, MatchesGroupingOracle) {
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    auto msgs = random_messages(seed, 200);
    const auto flows = reassemble(msgs, 120s);
    EXPECT_EQ(summarize(flows), grouping_oracle(msgs, 120'000'000)) << "seed " << seed;
    size_t total = 0;
    for (const auto& f : flows) {
      total += f.messages.size();
      ASSERT_FALSE(f.messages.empty());
      EXPECT_TRUE(std::is_sorted(f.messages.begin(), f.messages.end(),
                                 [](const auto& a, const auto& b) { return a.timestamp_us < b.timestamp_us; }));
      EXPECT_EQ(f.first_ts, f.messages.front().timestamp_us);
      EXPECT_EQ(f.last_ts, f.messages.back().timestamp_us);
    }
    EXPECT_EQ(total, msgs.size());
  }
}

TEST(Reassembly, InterleavedTuples) {
  std::vector<TupleMessage> msgs;
  for (int i = 0; i < 9; ++i) msgs.push_back(tuple("h" + std::to_string(i % 3), 1, "s", 80, kReq, i));
  const auto flows = reassemble(msgs);
  ASSERT_EQ(flows.size(), 3u);
  for (const auto& f : flows) EXPECT_EQ(f.messages.size(), 3u);
}

TEST(Reassembly, DirectionReversalInvariance) {
  auto msgs = random_messages(99, 150);
  auto flipped = msgs;
  for (auto& m : flipped) {
    if (m.message.direction == Direction::kResponse) std::swap(m.src, m.dst);
  }
  EXPECT_EQ(summarize(reassemble(msgs)), summarize(reassemble(flipped)));

  auto reversed_tuple = msgs;
  for (auto& m : reversed_tuple) std::swap(m.src, m.dst);
  EXPECT_EQ(summarize(reassemble(msgs)), summarize(reassemble(reversed_tuple)));
}

TEST(Reassembly, Deterministic) {
  const auto msgs = random_messages(5, 100);
  std::ostringstream a, b;
  write_flow_jsonl(a, reassemble(msgs));
  write_flow_jsonl(b, reassemble(msgs));
  EXPECT_EQ(a.str(), b.str());
}

TEST(Reassembly, CompletionOrder) {
  const auto flows = reassemble(random_messages(3, 300));
  for (size_t i = 1; i < flows.size(); ++i) {
    EXPECT_LE(std::make_pair(flows[i - 1].last_ts, flows[i - 1].id), std::make_pair(flows[i].last_ts, flows[i].id));
  }
}

TEST(Labels, ParseAndApply) {
  const auto map = parse_label_csv("key,label\nevil.example,malicious\n7,Benign\n");
  std::vector<Flow> flows(3);
  flows[0].key.server.host = "evil.example";
  flows[0].id = 1;
  flows[1].key.server.host = "other";
  flows[1].id = 7;
  flows[2].key.server.host = "nowhere";
  flows[2].id = 8;
  apply_labels(flows, map);
  EXPECT_EQ(flows[0].label, Label::kMalicious);
  EXPECT_EQ(flows[1].label, Label::kBenign);
  EXPECT_EQ(flows[2].label, Label::kUnlabeled);
  apply_labels(flows, {});
  for (const auto& f : flows) EXPECT_EQ(f.label, Label::kUnlabeled);
}

TEST(Labels, Errors) {
  EXPECT_EQ(code_of([] { parse_label_csv("a,maybe\n"); }), ErrorCode::kLabels);
  EXPECT_EQ(code_of([] { parse_label_csv("justonefield\n"); }), ErrorCode::kLabels);
  EXPECT_EQ(code_of([] { read_label_file("/nonexistent/labels.csv"); }), ErrorCode::kLabels);
}
