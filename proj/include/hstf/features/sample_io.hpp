#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <nlohmann/json.hpp>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hstf/features/extract.hpp"

namespace hstf::features {

inline constexpr std::string_view kSampleSchema = "hstf-sample/v1";

nlohmann::json sample_to_json(const FlowSample& s);
/// Throws Error(kData) on schema or shape violations.
FlowSample sample_from_json(const nlohmann::json& j);

void write_samples_jsonl(std::ostream& out, std::span<const FlowSample> samples);
std::vector<FlowSample> read_samples_jsonl(std::string_view text);

/// Random-access view over a labeled sample collection.
class SampleSource {
 public:
  virtual ~SampleSource() = default;
  virtual size_t size() const = 0;
  virtual FlowSample get(size_t i) const = 0;
  virtual Label label(size_t i) const = 0;
  virtual uint64_t id(size_t i) const = 0;
  /// rows/cols/flow_size of every sample (other fields default).
  virtual FeatureConfig shape() const = 0;
  /// Content hash used to tag reports with the corpus they came from.
  virtual std::string fingerprint() const = 0;
};

class InMemorySamples final : public SampleSource {
 public:
  InMemorySamples(std::vector<FlowSample> samples, FeatureConfig shape);
  explicit InMemorySamples(std::vector<FlowSample> samples);

  size_t size() const override { return samples_.size(); }
  FlowSample get(size_t i) const override { return samples_.at(i); }
  const FlowSample& at(size_t i) const { return samples_.at(i); }
  Label label(size_t i) const override { return samples_.at(i).label; }
  uint64_t id(size_t i) const override { return samples_.at(i).id; }
  FeatureConfig shape() const override { return shape_; }
  std::string fingerprint() const override;

 private:
  std::vector<FlowSample> samples_;
  FeatureConfig shape_;
};

// Compact binary form: a fixed header followed by fixed-size records, so any
// record can be read with one positioned read. Little-endian throughout.
//   header: "HSTFSMP1" u32 version u32 rows u32 cols u32 flow_size
//           u64 count u32 record_bytes u32 reserved
//   record: u64 id u32 label u32 flags, then six length-prefixed f32 sections
//           (req_raw, res_raw, req_pl, res_pl, req_fl, res_fl)
class BinarySampleWriter {
 public:
  BinarySampleWriter(const std::filesystem::path& path, const FeatureConfig& shape);
  ~BinarySampleWriter();
  BinarySampleWriter(const BinarySampleWriter&) = delete;
  BinarySampleWriter& operator=(const BinarySampleWriter&) = delete;

  void append(const FlowSample& s);
  /// Patches the record count into the header. Called by the destructor too.
  void close();
  uint64_t count() const { return count_; }

 private:
  std::ofstream out_;
  std::filesystem::path path_;
  FeatureConfig shape_;
  uint64_t count_ = 0;
  std::vector<char> record_;
  bool closed_ = false;
};

class BinarySampleFile final : public SampleSource {
 public:
  explicit BinarySampleFile(const std::filesystem::path& path);
  ~BinarySampleFile() override;
  BinarySampleFile(const BinarySampleFile&) = delete;
  BinarySampleFile& operator=(const BinarySampleFile&) = delete;

  size_t size() const override { return count_; }
  FlowSample get(size_t i) const override;
  Label label(size_t i) const override;
  uint64_t id(size_t i) const override;
  FeatureConfig shape() const override { return shape_; }
  std::string fingerprint() const override;

 private:
  void read_at(uint64_t offset, void* dst, size_t n) const;

  std::filesystem::path path_;
  int fd_ = -1;
  FeatureConfig shape_;
  uint64_t count_ = 0;
  uint32_t record_bytes_ = 0;
};

size_t binary_record_bytes(const FeatureConfig& shape);
bool is_binary_sample_file(const std::filesystem::path& path);

/// Opens either form: binary when the magic matches, otherwise hstf-sample/v1
/// JSON lines loaded into memory.
std::unique_ptr<SampleSource> open_samples(const std::filesystem::path& path);

}  // namespace hstf::features
