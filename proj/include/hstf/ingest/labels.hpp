#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>

#include "hstf/ingest/types.hpp"

namespace hstf::ingest {

/// key -> label, where key is a decimal flow id or a server host.
using LabelMap = std::map<std::string, Label, std::less<>>;

/// Parses CSV `key,label` with label in {malicious, benign}. An optional
/// `key,label` header line is skipped. Throws Error(kLabels) on bad rows.
LabelMap parse_label_csv(std::string_view text);
/// Throws Error(kLabels) when the file cannot be read.
LabelMap read_label_file(const std::filesystem::path& path);

/// Labels every flow: flow id match first, then server host; otherwise Unlabeled.
void apply_labels(std::span<Flow> flows, const LabelMap& labels);
void load_labels(std::span<Flow> flows, const std::filesystem::path& labelmap);

}  // namespace hstf::ingest
