#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>

#include "hstf/features/extract.hpp"

namespace hstf::net {

/// Architecture and optimizer settings. Defaults reproduce the published
/// configuration: two 2x8 kernels (stride 2), 2x2 max-pool (stride 1),
/// LSTM hidden size 16, dropout 0.3 behind the LSTMs, Adam at lr 1e-4.
struct ModelConfig {
  int rows = 20;
  int cols = 40;
  int flow_size = 3;

  int conv_kernels = 2;
  int kernel_h = 2;
  int kernel_w = 8;
  int conv_stride = 2;
  int pool_h = 2;
  int pool_w = 2;
  int pool_stride = 1;

  int lstm_hidden = 16;
  int ep_out = 32;
  int ef_out = 32;
  int er_hidden = 0;  ///< 0 means cols: ER collapses to a single cols->cols layer
  int head_hidden = 64;

  double dropout = 0.3;
  double lr = 1e-4;
  uint64_t seed = 42;

  /// false drops the packet- and flow-level statistics branches (raw-only
  /// contrast model).
  bool use_stats = true;

  /// Throws Error(kConfig) on invalid dimensions or hyper-parameters.
  void validate() const;

  int er_width() const { return er_hidden == 0 ? cols : er_hidden; }
  int conv_out_h() const { return (rows - kernel_h) / conv_stride + 1; }
  int conv_out_w() const { return (cols - kernel_w) / conv_stride + 1; }
  int pool_out_h() const { return (conv_out_h() - pool_h) / pool_stride + 1; }
  int pool_out_w() const { return (conv_out_w() - pool_w) / pool_stride + 1; }
  int conv_flat() const { return conv_kernels * pool_out_h() * pool_out_w(); }
  int lstm_input() const { return conv_flat() + (use_stats ? ep_out : 0); }
  int fused_width() const { return 2 * lstm_hidden + (use_stats ? 2 * ef_out : 0); }

  features::FeatureConfig feature_shape() const;
  /// Throws Error(kShape) unless `shape` matches rows/cols/flow_size.
  void check_shape(const features::FeatureConfig& shape) const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);

  bool operator==(const ModelConfig&) const = default;
};

}  // namespace hstf::net
