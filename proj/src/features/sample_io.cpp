#include "hstf/features/sample_io.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <bit>
#include <cstring>

#include "hstf/common/codec.hpp"
#include "hstf/common/error.hpp"

namespace hstf::features {

static_assert(std::endian::native == std::endian::little,
              "binary sample files are written in host order and require a little-endian host");

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'H', 'S', 'T', 'F', 'S', 'M', 'P', '1'};
constexpr uint32_t kVersion = 1;
constexpr size_t kHeaderBytes = 40;

json nested(std::span<const float> flat, size_t outer, size_t rows, size_t cols) {
  json out = json::array();
  for (size_t p = 0; p < outer; ++p) {
    json mat = json::array();
    for (size_t r = 0; r < rows; ++r) {
      const auto* row = flat.data() + (p * rows + r) * cols;
      mat.push_back(std::vector<float>(row, row + cols));
    }
    out.push_back(std::move(mat));
  }
  return out;
}

json rows_of(std::span<const float> flat, size_t outer, size_t width) {
  json out = json::array();
  for (size_t p = 0; p < outer; ++p) {
    out.push_back(std::vector<float>(flat.data() + p * width, flat.data() + (p + 1) * width));
  }
  return out;
}

void flatten_into(const json& j, std::vector<float>& out, size_t expected, const char* what) {
  out.clear();
  // Depth-first walk keeps row-major order for nested arrays.
  auto walk = [&](auto&& self, const json& node) -> void {
    if (node.is_array()) {
      for (const auto& child : node) self(self, child);
    } else if (node.is_number()) {
      out.push_back(node.get<float>());
    } else {
      throw Error(ErrorCode::kData, std::string("sample field ") + what + " holds a non-number");
    }
  };
  walk(walk, j);
  if (out.size() != expected) {
    throw Error(ErrorCode::kData, std::string("sample field ") + what + " has " +
                                      std::to_string(out.size()) + " values, expected " +
                                      std::to_string(expected));
  }
}

int label_code(Label l) {
  switch (l) {
    case Label::kMalicious: return 1;
    case Label::kBenign: return 2;
    case Label::kUnlabeled: return 0;
  }
  return 0;
}

Label label_of_code(uint32_t c) {
  if (c == 1) return Label::kMalicious;
  if (c == 2) return Label::kBenign;
  return Label::kUnlabeled;
}

template <typename T>
void put(std::vector<char>& buf, size_t& off, const T& v) {
  std::memcpy(buf.data() + off, &v, sizeof(T));
  off += sizeof(T);
}

void put_section(std::vector<char>& buf, size_t& off, const std::vector<float>& v) {
  put(buf, off, static_cast<uint32_t>(v.size()));
  std::memcpy(buf.data() + off, v.data(), v.size() * sizeof(float));
  off += v.size() * sizeof(float);
}

void take_section(const char* buf, size_t& off, std::vector<float>& v, size_t expected) {
  uint32_t n = 0;
  std::memcpy(&n, buf + off, 4);
  off += 4;
  if (n != expected) throw Error(ErrorCode::kData, "binary sample record: section length mismatch");
  v.resize(n);
  std::memcpy(v.data(), buf + off, n * sizeof(float));
  off += n * sizeof(float);
}

void check_shape(const FlowSample& s, const FeatureConfig& shape) {
  if (s.rows != shape.rows || s.cols != shape.cols || s.flow_size != shape.flow_size) {
    throw Error(ErrorCode::kShape, "sample shape " + std::to_string(s.rows) + "x" +
                                       std::to_string(s.cols) + "x" + std::to_string(s.flow_size) +
                                       " does not match collection shape " +
                                       std::to_string(shape.rows) + "x" + std::to_string(shape.cols) +
                                       "x" + std::to_string(shape.flow_size));
  }
}

}  // namespace

json sample_to_json(const FlowSample& s) {
  const auto n = static_cast<size_t>(s.flow_size);
  json j;
  j["schema"] = kSampleSchema;
  j["id"] = s.id;
  j["label"] = ingest::to_string(s.label);
  j["truncated"] = s.truncated;
  j["rows"] = s.rows;
  j["cols"] = s.cols;
  j["flow_size"] = s.flow_size;
  j["req_raw"] = nested(s.req_raw, n, static_cast<size_t>(s.rows), static_cast<size_t>(s.cols));
  j["res_raw"] = nested(s.res_raw, n, static_cast<size_t>(s.rows), static_cast<size_t>(s.cols));
  j["req_pl"] = rows_of(s.req_pl, n, kPlWidth);
  j["res_pl"] = rows_of(s.res_pl, n, kPlWidth);
  j["req_fl"] = s.req_fl;
  j["res_fl"] = s.res_fl;
  return j;
}

FlowSample sample_from_json(const json& j) {
  if (!j.is_object() || j.value("schema", "") != kSampleSchema) {
    throw Error(ErrorCode::kData, "sample record is not " + std::string(kSampleSchema));
  }
  FeatureConfig cfg;
  try {
    cfg.rows = j.at("rows").get<int>();
    cfg.cols = j.at("cols").get<int>();
    cfg.flow_size = j.at("flow_size").get<int>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kData, std::string("sample record: ") + e.what());
  }
  cfg.validate();
  FlowSample s = FlowSample::zeros(cfg);
  s.id = j.value("id", uint64_t{0});
  s.label = ingest::label_from_string(j.value("label", "unlabeled"));
  s.truncated = j.value("truncated", false);
  const size_t n = static_cast<size_t>(cfg.flow_size);
  auto field = [&](const char* key) -> const json& {
    const auto it = j.find(key);
    if (it == j.end()) throw Error(ErrorCode::kData, std::string("sample record lacks ") + key);
    return *it;
  };
  flatten_into(field("req_raw"), s.req_raw, n * cfg.matrix_size(), "req_raw");
  flatten_into(field("res_raw"), s.res_raw, n * cfg.matrix_size(), "res_raw");
  flatten_into(field("req_pl"), s.req_pl, n * kPlWidth, "req_pl");
  flatten_into(field("res_pl"), s.res_pl, n * kPlWidth, "res_pl");
  flatten_into(field("req_fl"), s.req_fl, kFlRequestWidth, "req_fl");
  flatten_into(field("res_fl"), s.res_fl, kFlResponseWidth, "res_fl");
  return s;
}

void write_samples_jsonl(std::ostream& out, std::span<const FlowSample> samples) {
  for (const auto& s : samples) out << sample_to_json(s).dump() << '\n';
}

std::vector<FlowSample> read_samples_jsonl(std::string_view text) {
  std::vector<FlowSample> out;
  size_t pos = 0;
  while (pos < text.size()) {
    size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw Error(ErrorCode::kData, "samples file: invalid JSON line");
    out.push_back(sample_from_json(j));
  }
  return out;
}

// --- InMemorySamples ---------------------------------------------------------

InMemorySamples::InMemorySamples(std::vector<FlowSample> samples, FeatureConfig shape)
    : samples_(std::move(samples)), shape_(shape) {
  for (const auto& s : samples_) check_shape(s, shape_);
}

InMemorySamples::InMemorySamples(std::vector<FlowSample> samples) : samples_(std::move(samples)) {
  if (!samples_.empty()) {
    shape_.rows = samples_.front().rows;
    shape_.cols = samples_.front().cols;
    shape_.flow_size = samples_.front().flow_size;
  }
  for (const auto& s : samples_) check_shape(s, shape_);
}

std::string InMemorySamples::fingerprint() const {
  std::string bytes;
  for (const auto& s : samples_) {
    bytes.append(reinterpret_cast<const char*>(&s.id), sizeof(s.id));
    bytes.push_back(static_cast<char>(label_code(s.label)));
    for (const auto* v : {&s.req_raw, &s.res_raw, &s.req_pl, &s.res_pl, &s.req_fl, &s.res_fl}) {
      bytes.append(reinterpret_cast<const char*>(v->data()), v->size() * sizeof(float));
    }
  }
  return sha256_hex(bytes);
}

// --- binary form -------------------------------------------------------------

size_t binary_record_bytes(const FeatureConfig& shape) {
  const size_t n = static_cast<size_t>(shape.flow_size);
  const size_t floats = 2 * n * shape.matrix_size() + 2 * n * kPlWidth + kFlRequestWidth +
                        kFlResponseWidth;
  return 16 + 6 * 4 + floats * sizeof(float);
}

BinarySampleWriter::BinarySampleWriter(const std::filesystem::path& path, const FeatureConfig& shape)
    : out_(path, std::ios::binary | std::ios::trunc), path_(path), shape_(shape) {
  shape_.validate();
  if (!out_) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  record_.resize(binary_record_bytes(shape_));
  std::vector<char> header(kHeaderBytes, 0);
  size_t off = 0;
  std::memcpy(header.data(), kMagic, 8);
  off = 8;
  put(header, off, kVersion);
  put(header, off, static_cast<uint32_t>(shape_.rows));
  put(header, off, static_cast<uint32_t>(shape_.cols));
  put(header, off, static_cast<uint32_t>(shape_.flow_size));
  put(header, off, uint64_t{0});
  put(header, off, static_cast<uint32_t>(record_.size()));
  out_.write(header.data(), static_cast<std::streamsize>(header.size()));
}

BinarySampleWriter::~BinarySampleWriter() {
  try {
    close();
  } catch (...) {
  }
}

void BinarySampleWriter::append(const FlowSample& s) {
  check_shape(s, shape_);
  size_t off = 0;
  put(record_, off, s.id);
  put(record_, off, static_cast<uint32_t>(label_code(s.label)));
  put(record_, off, static_cast<uint32_t>(s.truncated ? 1 : 0));
  for (const auto* v : {&s.req_raw, &s.res_raw, &s.req_pl, &s.res_pl, &s.req_fl, &s.res_fl}) {
    put_section(record_, off, *v);
  }
  out_.write(record_.data(), static_cast<std::streamsize>(record_.size()));
  ++count_;
}

void BinarySampleWriter::close() {
  if (closed_) return;
  closed_ = true;
  out_.seekp(24);
  out_.write(reinterpret_cast<const char*>(&count_), sizeof(count_));
  out_.close();
  if (!out_) throw Error(ErrorCode::kIo, "failed to finalize " + path_.string());
}

BinarySampleFile::BinarySampleFile(const std::filesystem::path& path) : path_(path) {
  fd_ = ::open(path.c_str(), O_RDONLY);
  if (fd_ < 0) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  char header[kHeaderBytes];
  if (::pread(fd_, header, kHeaderBytes, 0) != static_cast<ssize_t>(kHeaderBytes) ||
      std::memcmp(header, kMagic, 8) != 0) {
    ::close(fd_);
    fd_ = -1;
    throw Error(ErrorCode::kData, path.string() + " is not a binary sample file");
  }
  uint32_t version = 0, rows = 0, cols = 0, flow = 0;
  std::memcpy(&version, header + 8, 4);
  std::memcpy(&rows, header + 12, 4);
  std::memcpy(&cols, header + 16, 4);
  std::memcpy(&flow, header + 20, 4);
  std::memcpy(&count_, header + 24, 8);
  std::memcpy(&record_bytes_, header + 32, 4);
  shape_.rows = static_cast<int>(rows);
  shape_.cols = static_cast<int>(cols);
  shape_.flow_size = static_cast<int>(flow);
  if (version != kVersion || record_bytes_ != binary_record_bytes(shape_)) {
    ::close(fd_);
    fd_ = -1;
    throw Error(ErrorCode::kData, path.string() + ": unsupported version or corrupt header");
  }
  const auto file_size = std::filesystem::file_size(path);
  if (file_size < kHeaderBytes + count_ * record_bytes_) {
    ::close(fd_);
    fd_ = -1;
    throw Error(ErrorCode::kData, path.string() + ": truncated sample file");
  }
}

BinarySampleFile::~BinarySampleFile() {
  if (fd_ >= 0) ::close(fd_);
}

void BinarySampleFile::read_at(uint64_t offset, void* dst, size_t n) const {
  auto* p = static_cast<char*>(dst);
  while (n > 0) {
    const ssize_t got = ::pread(fd_, p, n, static_cast<off_t>(offset));
    if (got <= 0) throw Error(ErrorCode::kIo, "read failed on " + path_.string());
    p += got;
    n -= static_cast<size_t>(got);
    offset += static_cast<uint64_t>(got);
  }
}

FlowSample BinarySampleFile::get(size_t i) const {
  if (i >= count_) throw Error(ErrorCode::kData, "sample index out of range");
  thread_local std::vector<char> buf;
  buf.resize(record_bytes_);
  read_at(kHeaderBytes + static_cast<uint64_t>(i) * record_bytes_, buf.data(), buf.size());
  FlowSample s;
  s.rows = shape_.rows;
  s.cols = shape_.cols;
  s.flow_size = shape_.flow_size;
  uint32_t label = 0, flags = 0;
  std::memcpy(&s.id, buf.data(), 8);
  std::memcpy(&label, buf.data() + 8, 4);
  std::memcpy(&flags, buf.data() + 12, 4);
  s.label = label_of_code(label);
  s.truncated = (flags & 1U) != 0;
  size_t off = 16;
  const size_t n = static_cast<size_t>(shape_.flow_size);
  take_section(buf.data(), off, s.req_raw, n * shape_.matrix_size());
  take_section(buf.data(), off, s.res_raw, n * shape_.matrix_size());
  take_section(buf.data(), off, s.req_pl, n * kPlWidth);
  take_section(buf.data(), off, s.res_pl, n * kPlWidth);
  take_section(buf.data(), off, s.req_fl, kFlRequestWidth);
  take_section(buf.data(), off, s.res_fl, kFlResponseWidth);
  return s;
}

Label BinarySampleFile::label(size_t i) const {
  uint32_t code = 0;
  read_at(kHeaderBytes + static_cast<uint64_t>(i) * record_bytes_ + 8, &code, 4);
  return label_of_code(code);
}

uint64_t BinarySampleFile::id(size_t i) const {
  uint64_t v = 0;
  read_at(kHeaderBytes + static_cast<uint64_t>(i) * record_bytes_, &v, 8);
  return v;
}

std::string BinarySampleFile::fingerprint() const { return sha256_file_hex(path_); }

bool is_binary_sample_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  char magic[8] = {};
  in.read(magic, 8);
  return in.gcount() == 8 && std::memcmp(magic, kMagic, 8) == 0;
}

std::unique_ptr<SampleSource> open_samples(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::kIo, "no such file " + path.string());
  if (is_binary_sample_file(path)) return std::make_unique<BinarySampleFile>(path);
  auto samples = read_samples_jsonl(read_file_bytes(path));
  return std::make_unique<InMemorySamples>(std::move(samples));
}

}  // namespace hstf::features
