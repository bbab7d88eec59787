#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "hstf/common/error.hpp"
#include "hstf/features/extract.hpp"
#include "hstf/ingest/capture.hpp"
#include "hstf/ingest/flow_jsonl.hpp"
#include "hstf/ingest/labels.hpp"
#include "hstf/ingest/reassembly.hpp"
#include "hstf/synth/generator.hpp"

using namespace hstf;
using namespace hstf::synth;
using ingest::Direction;

namespace {

std::string jsonl(const std::vector<Flow>& flows) {
  std::ostringstream out;
  ingest::write_flow_jsonl(out, flows);
  return out.str();
}

size_t url_length(const Flow& f) {
  const auto& line = f.messages.front().start_line;
  const size_t a = line.find(' ');
  return line.find(' ', a + 1) - a - 1;
}

// Best accuracy of any rule "malicious iff url length >= t" or "<= t".
double best_url_threshold_accuracy(const std::vector<Flow>& flows) {
  std::set<size_t> cuts;
  for (const auto& f : flows) cuts.insert(url_length(f));
  double best = 0;
  for (size_t t : cuts) {
    size_t hi = 0, lo = 0;
    for (const auto& f : flows) {
      const bool mal = f.label == Label::kMalicious;
      const size_t n = url_length(f);
      hi += (n >= t) == mal;
      lo += (n <= t) == mal;
    }
    best = std::max(best, static_cast<double>(std::max(hi, lo)) / static_cast<double>(flows.size()));
  }
  return best;
}

}  // namespace

TEST(Generator, DeterministicBytes) {
  const CorpusSpec spec{.malicious = 50, .benign = 70, .separability = Separability::kMedium, .seed = 5};
  EXPECT_EQ(jsonl(generate_corpus(spec)), jsonl(generate_corpus(spec)));
  auto other = spec;
  other.seed = 6;
  EXPECT_NE(jsonl(generate_corpus(spec)), jsonl(generate_corpus(other)));
  const auto p = default_profile(FlowClass::kTrojan, Separability::kHigh, 9);
  EXPECT_EQ(jsonl(generate(p, 10)), jsonl(generate(p, 10)));
}

TEST(Generator, ExactLabelBalanceAndIds) {
  const auto flows = generate_corpus({.malicious = 123, .benign = 456, .seed = 2});
  ASSERT_EQ(flows.size(), 579u);
  size_t mal = 0;
  for (size_t i = 0; i < flows.size(); ++i) {
    EXPECT_EQ(flows[i].id, i);
    mal += flows[i].label == Label::kMalicious;
    EXPECT_NE(flows[i].label, Label::kUnlabeled);
  }
  EXPECT_EQ(mal, 123u);
  for (size_t i = 1; i < flows.size(); ++i) EXPECT_GE(flows[i].first_ts, flows[i - 1].first_ts);
}

TEST(Generator, UrlLengthAloneSeparatesHighCorpus) {
  const auto flows = generate_corpus({.malicious = 1000, .benign = 1000, .seed = 42});
  EXPECT_GE(best_url_threshold_accuracy(flows), 0.9);
}

TEST(Generator, LowSeparabilityOverlaps) {
  const auto high = generate_corpus({.malicious = 500, .benign = 500, .seed = 1});
  const auto low = generate_corpus({.malicious = 500, .benign = 500, .separability = Separability::kLow, .seed = 1});
  EXPECT_LT(best_url_threshold_accuracy(low), best_url_threshold_accuracy(high));
  EXPECT_EQ(mimic_fraction(Separability::kHigh), 0.0);
  EXPECT_GT(mimic_fraction(Separability::kLow), mimic_fraction(Separability::kMedium));
}

TEST(Generator, SingleMessageFlows) {
  const auto flows = generate_corpus({.malicious = 100, .benign = 100, .seed = 3, .msgs_per_flow = {1, 1}});
  for (const auto& f : flows) {
    size_t req = 0;
    for (const auto& m : f.messages) req += m.direction == Direction::kRequest;
    EXPECT_EQ(req, 1u);
  }
  auto p = default_profile(FlowClass::kBenign);
  p.msgs_per_flow = {1, 1};
  for (const auto& f : generate(p, 50)) EXPECT_EQ(f.messages.size(), 2u);
}

TEST(Generator, ClosureThroughIngestAndFeatures) {
  const auto flows = generate_corpus({.malicious = 150, .benign = 150, .separability = Separability::kLow, .seed = 8});
  std::ostringstream labels;
  write_label_csv(labels, flows);
  const auto parsed = ingest::parse_capture(jsonl(flows), ingest::CaptureFormat::kFlowJsonl);
  EXPECT_EQ(parsed.stats.undecodable_messages, 0u);
  size_t total = 0;
  for (const auto& f : flows) total += f.messages.size();
  EXPECT_EQ(parsed.messages.size(), total);
  auto regrouped = ingest::reassemble(parsed.messages);
  ASSERT_EQ(regrouped.size(), flows.size());
  ingest::apply_labels(regrouped, ingest::parse_label_csv(labels.str()));
  std::map<std::string, Label> truth;
  for (const auto& f : flows) truth[f.key.server.host] = f.label;
  for (const auto& f : regrouped) {
    EXPECT_EQ(f.label, truth.at(f.key.server.host));
    const auto s = features::flow_to_sample(f, {});
    ASSERT_TRUE(s);
  }
}

TEST(Generator, TrojanBeaconsRegularly) {
  const auto p = default_profile(FlowClass::kTrojan, Separability::kHigh, 4);
  for (const auto& f : generate(p, 20)) {
    std::vector<int64_t> ts;
    for (const auto& m : f.messages) {
      if (m.direction == Direction::kRequest) ts.push_back(m.timestamp_us);
    }
    for (size_t i = 1; i < ts.size(); ++i) EXPECT_NEAR(static_cast<double>(ts[i] - ts[i - 1]), 30e6, 3e6);
  }
}

TEST(Profile, ParseAndValidate) {
  const auto p = parse_profile("# beacon\nclass = trojan\nurl_len = 10-20\nmsgs_per_flow=2\nmethods=GET:0.5,POST:0.5\nseed=7\n");
  EXPECT_EQ(p.cls, FlowClass::kTrojan);
  EXPECT_EQ(p.url_len.min, 10);
  EXPECT_EQ(p.url_len.max, 20);
  EXPECT_EQ(p.msgs_per_flow.min, 2);
  EXPECT_EQ(p.msgs_per_flow.max, 2);
  EXPECT_EQ(p.seed, 7u);
  EXPECT_EQ(p.method_weights.size(), 2u);
  for (const auto& f : generate(p, 30)) {
    EXPECT_GE(url_length(f), 10u);
    EXPECT_LE(url_length(f), 20u);
    EXPECT_EQ(f.label, Label::kMalicious);
  }
  EXPECT_THROW(parse_profile("url_len = 9-3\n"), Error);
  EXPECT_THROW(parse_profile("nonsense\n"), Error);
  EXPECT_THROW(separability_from_string("extreme"), Error);
  EXPECT_EQ(separability_from_string("medium"), Separability::kMedium);
}
