#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "hstf/ingest/types.hpp"

namespace hstf::features {

using ingest::Direction;
using ingest::Flow;
using ingest::HttpMessage;
using ingest::Label;

inline constexpr size_t kPlWidth = 41;
inline constexpr size_t kFlRequestWidth = 57;
inline constexpr size_t kFlResponseWidth = 58;
inline constexpr size_t kHeaderSlots = 18;
inline constexpr size_t kMaxSequence = 50;

enum class OverflowPolicy { kTruncate, kDiscard };

std::string_view to_string(OverflowPolicy p);
OverflowPolicy overflow_policy_from_string(std::string_view text);

struct FeatureConfig {
  int rows = 20;
  int cols = 40;
  int flow_size = 3;
  int max_seq = static_cast<int>(kMaxSequence);
  OverflowPolicy overflow = OverflowPolicy::kTruncate;

  /// Throws Error(kConfig) when rows < 3, cols < 1, flow_size < 1 or
  /// max_seq outside [1, 50].
  void validate() const;
  size_t matrix_size() const { return static_cast<size_t>(rows) * static_cast<size_t>(cols); }
};

/// rows x cols byte image of one message; every cell is (b mod 128) / 128.
struct RawMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<float> values;  // row-major

  float at(int r, int c) const { return values[static_cast<size_t>(r) * cols + c]; }
};

using PlVector = std::array<double, kPlWidth>;
using FlVector = std::vector<double>;

// Categorical encodings used in the packet-level vector.
inline constexpr int kMethodGet = 1;
inline constexpr int kMethodPost = 2;
inline constexpr int kMethodHead = 3;
inline constexpr int kMethodOptions = 4;
inline constexpr int kMethodPut = 5;
inline constexpr int kMethodDelete = 6;
inline constexpr int kMethodOther = 7;

int method_code(std::string_view method);
/// HTTP/1.0 -> 10, HTTP/1.1 -> 11, HTTP/2 or HTTP/2.0 -> 20, otherwise 0.
int version_code(std::string_view version);

/// Scales one byte the way raw matrices do.
inline float scale_byte(uint8_t b) { return static_cast<float>(b % 128) / 128.0f; }

/// Row 0: start line; rows 1..rows-2: header lines in wire order; last row:
/// payload. Each row holds the first `cols` bytes; the rest is zero.
RawMatrix build_raw_matrix(const HttpMessage& msg, int rows, int cols);

/// Raw (un-normalized) packet-level statistics.
PlVector extract_pl(const HttpMessage& msg);

/// Raw (un-normalized) flow-level statistics over one direction's messages
/// (at most 50). Width 57 for requests, 58 for responses.
FlVector extract_fl(std::span<const HttpMessage* const> msgs, Direction direction);

/// (1 - e^-x) / (1 + e^-x), evaluated without overflow for negative x.
double normalize_stat(double x);
void normalize_stat_inplace(std::span<double> values);

/// Model-ready bundle for one flow. Arrays are flat row-major float storage:
///   req_raw/res_raw: flow_size x rows x cols
///   req_pl/res_pl:   flow_size x 41 (normalized)
///   req_fl: 57, res_fl: 58 (normalized)
struct FlowSample {
  uint64_t id = 0;
  Label label = Label::kUnlabeled;
  bool truncated = false;  ///< a direction exceeded max_seq and was cut
  int rows = 0;
  int cols = 0;
  int flow_size = 0;
  std::vector<float> req_raw;
  std::vector<float> res_raw;
  std::vector<float> req_pl;
  std::vector<float> res_pl;
  std::vector<float> req_fl;
  std::vector<float> res_fl;

  /// Zero-filled sample of the given shape.
  static FlowSample zeros(const FeatureConfig& cfg);
  bool operator==(const FlowSample&) const = default;
};

/// Splits by direction (capture order), builds matrices and PL vectors for the
/// first flow_size messages of each direction and FL vectors over the whole
/// direction sequence. Returns nullopt when a direction exceeds max_seq and
/// the policy is kDiscard; kTruncate keeps the first max_seq messages.
std::optional<FlowSample> flow_to_sample(const Flow& flow, const FeatureConfig& cfg);

}  // namespace hstf::features
