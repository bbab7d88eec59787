#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace hstf::cli {

inline constexpr uint64_t kDefaultSeed = 42;
inline constexpr double kDefaultLambda = 0.5;

/// Options shared by every subcommand.
struct Common {
  std::string config;  ///< JSON config file (synth: key=value profile)
  uint64_t seed = kDefaultSeed;
  bool seed_given = false;  ///< --seed appeared on the command line
  int threads = 1;
};

struct ExtractOptions {
  Common common;
  std::string input;
  std::string output;       ///< samples; .bin selects the binary form
  std::string flows_output; ///< default: output stem + .flows.jsonl
  std::string labels;
  std::string format;       ///< pcap | flow-jsonl | "" (sniff)
  std::string policy;       ///< truncate | discard | "" (config, else discard)
};

struct TrainOptions {
  Common common;
  std::string input;
  std::string output;   ///< checkpoint
  std::string history;  ///< default: output stem + .history.csv
  int epochs = 0;       ///< 0 keeps the configured maximum
  bool sidecar = false;
};

struct DetectOptions {
  Common common;
  std::string input;
  std::string checkpoint;
  std::string output;  ///< per-flow JSON lines; stdout when empty
  std::string labels;
  std::string format;  ///< pcap | flow-jsonl | samples | "" (sniff)
  std::string policy;  ///< truncate | discard | "" (config, else truncate)
  double lambda = kDefaultLambda;
};

struct EvalOptions {
  Common common;
  std::string input;
  std::string test_input;
  std::string preset = "smoke";
  std::string output;  ///< report JSON; ROC CSV next to it
  double lambda = kDefaultLambda;
  int repeats = 0;
  int epochs = 0;
};

struct SynthOptions {
  Common common;
  std::string output;  ///< flow-jsonl
  std::string labels;  ///< default: output stem + .labels.csv
  size_t malicious = 500;
  size_t benign = 500;
  size_t count = 0;    ///< with a profile: flows of the profile's class
  std::string separability = "high";
};

struct BenchOptions {
  Common common;
  std::string output;  ///< CSV; stdout when empty
  std::vector<size_t> sizes{500, 1000, 2000, 4000, 8000};
  int epochs = 2;
};

// Each returns the process exit code and throws hstf::Error on fatal errors.
int run_extract(const ExtractOptions& o, std::ostream& out);
int run_train(const TrainOptions& o, std::ostream& out);
int run_detect(const DetectOptions& o, std::ostream& out);
int run_eval(const EvalOptions& o, std::ostream& out);
int run_synth(const SynthOptions& o, std::ostream& out);
int run_bench(const BenchOptions& o, std::ostream& out);

}  // namespace hstf::cli
