#include "hstf/ingest/labels.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "hstf/common/error.hpp"

namespace hstf::ingest {

namespace {

std::string lower_trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace

Label label_from_string(std::string_view text) {
  const std::string t = lower_trim(text);
  if (t == "malicious") return Label::kMalicious;
  if (t == "benign") return Label::kBenign;
  if (t == "unlabeled" || t.empty()) return Label::kUnlabeled;
  throw Error(ErrorCode::kLabels, "unknown label '" + std::string(text) + "'");
}

LabelMap parse_label_csv(std::string_view text) {
  LabelMap out;
  size_t pos = 0;
  size_t line_no = 0;
  while (pos < text.size()) {
    size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const std::string_view line = trim(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (line.empty()) continue;
    const size_t comma = line.rfind(',');
    if (comma == std::string_view::npos) {
      throw Error(ErrorCode::kLabels, "label file line " + std::to_string(line_no) + ": missing comma");
    }
    const std::string_view key = trim(line.substr(0, comma));
    const std::string label = lower_trim(line.substr(comma + 1));
    if (line_no == 1 && lower_trim(key) == "key" && label == "label") continue;
    if (label != "malicious" && label != "benign") {
      throw Error(ErrorCode::kLabels, "label file line " + std::to_string(line_no) +
                                          ": label must be malicious or benign");
    }
    out.insert_or_assign(std::string(key), label_from_string(label));
  }
  return out;
}

LabelMap read_label_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kLabels, "cannot read label file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_label_csv(ss.str());
}

void apply_labels(std::span<Flow> flows, const LabelMap& labels) {
  for (auto& flow : flows) {
    flow.label = Label::kUnlabeled;
    if (auto it = labels.find(std::to_string(flow.id)); it != labels.end()) {
      flow.label = it->second;
    } else if (auto jt = labels.find(flow.key.server.host); jt != labels.end()) {
      flow.label = jt->second;
    }
  }
}

void load_labels(std::span<Flow> flows, const std::filesystem::path& labelmap) {
  apply_labels(flows, read_label_file(labelmap));
}

}  // namespace hstf::ingest
