#pragma once

#include <functional>
#include <nlohmann/json.hpp>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hstf/eval/metrics.hpp"
#include "hstf/eval/scenario.hpp"
#include "hstf/features/sample_io.hpp"
#include "hstf/net/train.hpp"

namespace hstf::eval {

inline constexpr std::string_view kReportSchema = "hstf-report/v1";

struct ExperimentConfig {
  Scenario scenario;
  net::ModelConfig model;  ///< rows/cols/flow_size follow the scenario
  net::TrainConfig train;
  double beta = 1.0;
  double lambda = 0.5;

  /// Model config with the scenario's shape applied.
  net::ModelConfig effective_model() const;
  nlohmann::json to_json() const;
  /// SHA-256 of the canonical JSON form.
  std::string hash() const;
};

struct RepeatResult {
  int repeat = 0;
  uint64_t seed = 0;
  size_t n_train = 0;
  size_t n_val = 0;
  size_t n_test = 0;
  ConfusionCounts counts;
  PointMetrics metrics;
  double auc = 0.0;
  /// |FPR - R(1-P)/P| on a balanced test set; empty when P = 0.
  std::optional<double> fpr_identity_residual;
  int epochs = 0;
  int best_epoch = 0;
  std::vector<double> scores;  ///< test p_malicious, aligned with labels
  std::vector<Label> labels;

  nlohmann::json to_json() const;
};

struct MeanMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f_beta = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
  double auc = 0.0;
};

struct ExperimentReport {
  bool cross_corpus = false;
  ExperimentConfig config;
  std::string config_hash;
  std::string train_fingerprint;
  std::string test_fingerprint;
  std::vector<RepeatResult> repeats;
  MeanMetrics mean;
  RocCurve roc;  ///< over the pooled test predictions of every repeat

  nlohmann::json to_json() const;
};

/// Trains and evaluates one model per repeat. With `test_pool` the test
/// split is drawn from that corpus instead (cross-corpus mode). Confusion
/// counts are recomputed two ways and must agree.
ExperimentReport run_experiment(const features::SampleSource& pool, const features::SampleSource* test_pool,
                                const ExperimentConfig& config,
                                const std::function<void(const RepeatResult&)>& on_repeat = {});

/// `fpr,tpr,lambda` rows preceded by a `# config_hash=` line.
void write_roc_csv(std::ostream& out, const RocCurve& roc, const std::string& config_hash);

// --- presets ------------------------------------------------------------------

struct Preset {
  std::string name;
  std::string description;
  std::vector<Scenario> scenarios;
  bool cross_corpus = false;
  bool compare_published = false;
  std::optional<int> max_epochs;
};

std::vector<std::string> preset_names();
/// Throws Error(kConfig) naming every available preset.
Preset find_preset(std::string_view name);

/// Published robustness rows (percent), one per training ratio 1:k.
struct PublishedRow {
  int ratio_ben = 1;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};
std::span<const PublishedRow> published_robustness();

struct GridReport {
  std::string preset;
  std::vector<ExperimentReport> runs;
  bool compare_published = false;

  std::string config_hash() const;
  /// Rows of {ratio, published P/R/F1, measured P/R/F1} in percent.
  nlohmann::json comparison() const;
  nlohmann::json to_json() const;
};

/// Non-zero fields replace the preset's values.
struct PresetOverrides {
  int repeats = 0;
  int max_epochs = 0;
};

/// Runs every scenario of the preset with the model/train/threshold settings
/// of `base`; the scenario seed follows base.scenario.seed.
GridReport run_preset(const Preset& preset, const features::SampleSource& pool,
                      const features::SampleSource* test_pool, const ExperimentConfig& base,
                      const PresetOverrides& overrides = {},
                      const std::function<void(const ExperimentReport&)>& on_run = {},
                      const std::function<void(const RepeatResult&)>& on_repeat = {});

/// Human-readable side-by-side table of GridReport::comparison().
void print_comparison(std::ostream& out, const GridReport& grid);

}  // namespace hstf::eval
