#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "hstf/features/sample_io.hpp"

namespace hstf::eval {

/// One imbalance scenario. The training portion is drawn at
/// ratio_mal:ratio_ben; the test portion is always balanced.
struct Scenario {
  std::string name = "custom";
  int ratio_mal = 1;
  int ratio_ben = 1;
  int rows = 20;
  int cols = 40;
  int flow_size = 3;
  int repeats = 10;
  uint64_t seed = 42;
  /// Test samples per class; 0 takes 20% of the smaller class (all of it for
  /// a separate test corpus).
  size_t test_per_class = 0;
  /// Malicious training samples (validation included); 0 takes as many as the
  /// remaining pool supports at the requested ratio.
  size_t train_malicious = 0;
  double val_fraction = 0.1;

  /// Throws Error(kConfig).
  void validate() const;
  features::FeatureConfig shape() const;
  nlohmann::json to_json() const;
};

/// Indices into the training pool (train, val) and into the test pool (test,
/// which is the training pool unless a separate corpus is given).
struct Split {
  int repeat = 0;
  uint64_t seed = 0;
  std::vector<size_t> train;
  std::vector<size_t> val;
  std::vector<size_t> test;
};

/// Split for one repeat, seeded by scenario.seed + repeat. Train, val and
/// test are disjoint; val is a stratified share of the training draw.
/// Throws Error(kData) listing required against available counts when the
/// pool cannot supply the scenario.
Split build_split(const features::SampleSource& pool, const Scenario& sc, int repeat,
                  const features::SampleSource* test_pool = nullptr);

std::vector<Split> build_scenario(const features::SampleSource& pool, const Scenario& sc,
                                  const features::SampleSource* test_pool = nullptr);

}  // namespace hstf::eval
