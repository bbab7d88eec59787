#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "hstf/net/train.hpp"

namespace hstf::eval {

struct TimingConfig {
  net::ModelConfig model;
  net::TrainConfig train;
  std::vector<size_t> sizes{500, 1000, 2000, 4000, 8000};
  /// Epochs timed per size; the fastest one is reported.
  int epochs = 2;
  uint64_t seed = 42;
  /// Scratch directory for the streamed corpus; a temporary one when empty.
  std::filesystem::path work_dir;
};

struct TimingRow {
  size_t n = 0;
  size_t batch_size = 0;
  double seconds_per_epoch = 0.0;
  long peak_rss_kb = 0;
};

/// For each N, trains on the first N samples of a synthetic corpus in a
/// separate child process and reports the fastest epoch time and the child's
/// peak resident memory. Samples are read from disk per batch.
std::vector<TimingRow> timing_benchmark(const TimingConfig& config);

/// Same measurement at a single N for each batch size in `batch_sizes`.
std::vector<TimingRow> batch_memory_probe(const TimingConfig& config, size_t n,
                                          const std::vector<int>& batch_sizes);

void write_timing_csv(std::ostream& out, const std::vector<TimingRow>& rows, const std::string& config_hash);
std::string timing_config_hash(const TimingConfig& config);

}  // namespace hstf::eval
