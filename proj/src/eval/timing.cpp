#include "hstf/eval/timing.hpp"

#include <spdlog/spdlog.h>
#include <sys/resource.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <numeric>

#include "hstf/common/codec.hpp"
#include "hstf/common/error.hpp"
#include "hstf/eval/corpus.hpp"

namespace hstf::eval {

namespace {

struct ChildResult {
  double seconds = 0.0;
  int ok = 0;
};

/// Runs the timed epochs in a forked child so each measurement starts from
/// the same resident set and ru_maxrss belongs to that run alone.
TimingRow measure(const TimingConfig& cfg, const std::filesystem::path& corpus, size_t n, int batch_size) {
  int fds[2];
  if (pipe(fds) != 0) throw Error(ErrorCode::kIo, "pipe() failed");
  const pid_t pid = fork();
  if (pid < 0) throw Error(ErrorCode::kIo, "fork() failed");
  if (pid == 0) {
    close(fds[0]);
    ChildResult res;
    try {
      features::BinarySampleFile data(corpus);
      std::vector<size_t> idx(n);
      std::iota(idx.begin(), idx.end(), size_t{0});
      net::TrainConfig tc = cfg.train;
      tc.batch_size = batch_size;
      net::Trainer trainer(cfg.model, tc);
      double best = 1e300;
      for (int e = 1; e <= cfg.epochs; ++e) {
        const auto t0 = std::chrono::steady_clock::now();
        trainer.train_epoch(data, idx, e);
        best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
      }
      res.seconds = best;
      res.ok = 1;
    } catch (const std::exception& e) {
      std::fprintf(stderr, "timing child failed: %s\n", e.what());
    }
    const auto written = write(fds[1], &res, sizeof res);
    _exit(written == static_cast<ssize_t>(sizeof res) && res.ok ? 0 : 1);
  }
  close(fds[1]);
  ChildResult res;
  const auto got = read(fds[0], &res, sizeof res);
  close(fds[0]);
  int status = 0;
  struct rusage ru {};
  if (wait4(pid, &status, 0, &ru) < 0) throw Error(ErrorCode::kIo, "wait4() failed");
  if (got != static_cast<ssize_t>(sizeof res) || !WIFEXITED(status) || WEXITSTATUS(status) != 0 || !res.ok) {
    throw Error(ErrorCode::kNumeric, "timing run for N=" + std::to_string(n) + " failed");
  }
  TimingRow row;
  row.n = n;
  row.batch_size = static_cast<size_t>(batch_size);
  row.seconds_per_epoch = res.seconds;
  row.peak_rss_kb = ru.ru_maxrss;
  spdlog::info("timing N={} batch={}: {:.3f} s/epoch, peak {} KiB", n, batch_size, res.seconds, row.peak_rss_kb);
  return row;
}

struct ScratchCorpus {
  std::filesystem::path dir;
  std::filesystem::path file;
  bool owned = false;

  ~ScratchCorpus() {
    std::error_code ec;
    if (owned) std::filesystem::remove_all(dir, ec);
    else std::filesystem::remove(file, ec);
  }
};

void prepare(const TimingConfig& cfg, size_t n_max, ScratchCorpus& scratch) {
  if (cfg.work_dir.empty()) {
    scratch.dir = std::filesystem::temp_directory_path() / ("hstf-timing-" + std::to_string(getpid()));
    scratch.owned = true;
  } else {
    scratch.dir = cfg.work_dir;
  }
  std::filesystem::create_directories(scratch.dir);
  scratch.file = scratch.dir / "timing-corpus.bin";
  synth::CorpusSpec spec;
  spec.malicious = n_max / 2;
  spec.benign = n_max - n_max / 2;
  spec.seed = cfg.seed;
  write_synthetic_samples(spec, cfg.model.feature_shape(), scratch.file);
}

}  // namespace

std::vector<TimingRow> timing_benchmark(const TimingConfig& cfg) {
  if (cfg.sizes.empty()) return {};
  cfg.model.validate();
  ScratchCorpus scratch;
  prepare(cfg, *std::max_element(cfg.sizes.begin(), cfg.sizes.end()), scratch);
  std::vector<TimingRow> rows;
  for (size_t n : cfg.sizes) rows.push_back(measure(cfg, scratch.file, n, cfg.train.batch_size));
  return rows;
}

std::vector<TimingRow> batch_memory_probe(const TimingConfig& cfg, size_t n, const std::vector<int>& batch_sizes) {
  cfg.model.validate();
  ScratchCorpus scratch;
  prepare(cfg, n, scratch);
  std::vector<TimingRow> rows;
  for (int b : batch_sizes) rows.push_back(measure(cfg, scratch.file, n, b));
  return rows;
}

std::string timing_config_hash(const TimingConfig& cfg) {
  nlohmann::json j{{"model", cfg.model.to_json()},
                   {"batch_size", cfg.train.batch_size},
                   {"train_seed", cfg.train.seed},
                   {"sizes", cfg.sizes},
                   {"epochs", cfg.epochs},
                   {"seed", cfg.seed}};
  return sha256_hex(j.dump());
}

void write_timing_csv(std::ostream& out, const std::vector<TimingRow>& rows, const std::string& config_hash) {
  out << "# config_hash=" << config_hash << "\n";
  out << "n,batch_size,seconds_per_epoch,peak_rss_kb,time_ratio_to_half\n";
  char buf[160];
  for (const auto& r : rows) {
    std::string ratio;
    for (const auto& h : rows) {
      if (h.n * 2 == r.n && h.seconds_per_epoch > 0) {
        char rb[32];
        std::snprintf(rb, sizeof rb, "%.4f", r.seconds_per_epoch / h.seconds_per_epoch);
        ratio = rb;
      }
    }
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.6f,%ld,%s\n", r.n, r.batch_size, r.seconds_per_epoch, r.peak_rss_kb,
                  ratio.c_str());
    out << buf;
  }
}

}  // namespace hstf::eval
