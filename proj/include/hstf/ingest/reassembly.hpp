#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <set>
#include <utility>
#include <vector>

#include "hstf/ingest/types.hpp"

namespace hstf::ingest {

inline constexpr std::chrono::seconds kDefaultIdleTimeout{120};

/// Streaming full-duplex flow builder. Messages whose tuples are equal or
/// direction-reversed share a flow; a gap longer than the idle timeout on a
/// key closes the flow and starts a new one. Input must be time-ordered.
///
/// Flow ids are assigned in creation order. Completed flows are emitted in
/// completion order: (last_ts, id) for flows that expire or are flushed.
class Reassembler {
 public:
  explicit Reassembler(std::chrono::microseconds idle_timeout = kDefaultIdleTimeout)
      : idle_timeout_us_(idle_timeout.count()) {}

  void add(TupleMessage tm);
  /// Flushes all open flows.
  void finish();

  std::vector<Flow> take_completed() { return std::exchange(completed_, {}); }

 private:
  using PairKey = std::pair<Endpoint, Endpoint>;

  void expire_before(int64_t now_us);
  void close(const PairKey& key);

  int64_t idle_timeout_us_;
  uint64_t next_id_ = 0;
  std::map<PairKey, Flow> open_;
  /// (last_ts, id) -> key, for expiry in completion order.
  std::map<std::pair<int64_t, uint64_t>, PairKey> by_last_ts_;
  std::vector<Flow> completed_;
};

/// Convenience wrapper: stable-sorts by timestamp, then groups everything.
std::vector<Flow> reassemble(std::vector<TupleMessage> messages,
                             std::chrono::microseconds idle_timeout = kDefaultIdleTimeout);

}  // namespace hstf::ingest
