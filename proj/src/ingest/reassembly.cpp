#include "hstf/ingest/reassembly.hpp"

#include <algorithm>

namespace hstf::ingest {

void Reassembler::add(TupleMessage tm) {
  const int64_t ts = tm.message.timestamp_us;
  expire_before(ts);
  PairKey key = tm.src < tm.dst ? PairKey{tm.src, tm.dst} : PairKey{tm.dst, tm.src};
  auto it = open_.find(key);
  if (it != open_.end() && ts - it->second.last_ts > idle_timeout_us_) {
    close(key);
    it = open_.end();
  }
  if (it == open_.end()) {
    Flow flow;
    flow.id = next_id_++;
    if (tm.message.direction == Direction::kRequest) {
      flow.key = FlowKey{tm.src, tm.dst};
    } else {
      flow.key = FlowKey{tm.dst, tm.src};
    }
    flow.first_ts = ts;
    flow.last_ts = ts;
    it = open_.emplace(key, std::move(flow)).first;
  } else {
    by_last_ts_.erase({it->second.last_ts, it->second.id});
  }
  Flow& flow = it->second;
  flow.last_ts = std::max(flow.last_ts, ts);
  flow.messages.push_back(std::move(tm.message));
  by_last_ts_.emplace(std::make_pair(flow.last_ts, flow.id), key);
}

void Reassembler::expire_before(int64_t now_us) {
  while (!by_last_ts_.empty()) {
    auto first = by_last_ts_.begin();
    if (now_us - first->first.first <= idle_timeout_us_) break;
    close(first->second);
  }
}

void Reassembler::close(const PairKey& key) {
  auto it = open_.find(key);
  if (it == open_.end()) return;
  by_last_ts_.erase({it->second.last_ts, it->second.id});
  completed_.push_back(std::move(it->second));
  open_.erase(it);
}

void Reassembler::finish() {
  while (!by_last_ts_.empty()) close(by_last_ts_.begin()->second);
}

std::vector<Flow> reassemble(std::vector<TupleMessage> messages,
                             std::chrono::microseconds idle_timeout) {
  std::stable_sort(messages.begin(), messages.end(),
                   [](const TupleMessage& a, const TupleMessage& b) {
                     return a.message.timestamp_us < b.message.timestamp_us;
                   });
  Reassembler r(idle_timeout);
  for (auto& m : messages) r.add(std::move(m));
  r.finish();
  return r.take_completed();
}

}  // namespace hstf::ingest
