#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hstf/ingest/types.hpp"

namespace hstf::synth {

using ingest::Flow;
using ingest::Label;

enum class Separability { kHigh, kMedium, kLow };

std::string_view to_string(Separability s);
/// Throws Error(kConfig) for anything but high/medium/low.
Separability separability_from_string(std::string_view text);

struct IntRange {
  int min = 0;
  int max = 0;
};

enum class FlowClass { kBenign, kTrojan };

/// Distribution parameters for one traffic class.
struct GenProfile {
  FlowClass cls = FlowClass::kBenign;
  IntRange url_len{1, 40};
  IntRange header_count{6, 14};
  std::vector<std::pair<std::string, double>> method_weights{{"GET", 1.0}};
  IntRange payload_len{0, 4000};
  IntRange msgs_per_flow{1, 10};  ///< request/response exchanges
  /// 1 gives a perfectly periodic beacon; 0 gives uniformly random gaps.
  double beacon_regularity = 0.0;
  Separability separability = Separability::kHigh;
  uint64_t seed = 42;

  /// Throws Error(kConfig) on empty or inverted ranges.
  void validate() const;
};

GenProfile default_profile(FlowClass cls, Separability sep = Separability::kHigh, uint64_t seed = 42);

/// Reads `key = value` lines (# comments allowed) over default_profile(class).
/// Keys: class, separability, seed, url_len, header_count, payload_len,
/// msgs_per_flow (ranges as "a-b" or "a"), beacon_regularity, methods
/// ("GET:0.7,POST:0.3").
GenProfile parse_profile(std::string_view text);

/// Fraction of trojan flows that copy benign parameters at this separability.
double mimic_fraction(Separability s);

/// Flow number `index` of a profile. Pure function of (profile, index).
/// `host_index` picks the opaque host tokens; equal indices give equal hosts.
Flow generate_flow(const GenProfile& profile, uint64_t index, uint64_t host_index);

/// `count` flows of the profile's class with ids 0..count-1.
std::vector<Flow> generate(const GenProfile& profile, size_t count);

/// Two-class corpus. Classes are interleaved by a seeded permutation and the
/// flows are emitted in id order with increasing start times.
struct CorpusSpec {
  size_t malicious = 0;
  size_t benign = 0;
  Separability separability = Separability::kHigh;
  uint64_t seed = 42;
  /// Overrides msgs_per_flow for both classes when min > 0.
  IntRange msgs_per_flow{0, 0};
};

/// Calls `sink` once per flow, in id order, without holding the corpus.
void for_each_flow(const CorpusSpec& spec, const std::function<void(Flow&&)>& sink);
std::vector<Flow> generate_corpus(const CorpusSpec& spec);

/// Label CSV keyed by server host.
void write_label_csv(std::ostream& out, std::span<const Flow> flows);

}  // namespace hstf::synth
