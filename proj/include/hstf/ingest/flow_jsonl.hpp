#pragma once

#include <ostream>
#include <span>

#include "hstf/ingest/types.hpp"

namespace hstf::ingest {

/// Writes the grouped flow-jsonl form: one object per message, in flow order,
/// carrying `flow_id` in addition to the per-message capture fields.
void write_flow_jsonl(std::ostream& out, std::span<const Flow> flows);

/// Writes ungrouped per-message records (the capture input form).
void write_message_jsonl(std::ostream& out, std::span<const TupleMessage> messages);

}  // namespace hstf::ingest
