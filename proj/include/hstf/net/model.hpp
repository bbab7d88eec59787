#pragma once

// Hybrid CNN/LSTM detector. Per direction (request, response) each of the
// first flow_size messages goes through
//
//   raw matrix --ER (row-wise dense+ReLU)--> conv 2x8/2 + ReLU --> max-pool
//   PL vector  --EP (dense+ReLU)----------------------------------+
//                                                                  concat -> LSTM step
//
// The last LSTM hidden state of each direction (dropout in training), plus
// the EF codes of both FL vectors, feed dense(64)+ReLU -> dense(2) -> softmax.
// Output unit 0 is the malicious class, unit 1 benign.

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "hstf/features/extract.hpp"
#include "hstf/net/config.hpp"
#include "hstf/net/params.hpp"

namespace hstf::net {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

enum class Mode { kTrain, kInfer };

enum Gate : int { kForget = 0, kInput = 1, kCandidate = 2, kOutput = 3 };
inline constexpr int kRequestBranch = 0;
inline constexpr int kResponseBranch = 1;
inline constexpr size_t kAbsent = static_cast<size_t>(-1);

/// Indices of every parameter array inside the model's ParamSet.
struct Layout {
  struct Dense {
    size_t weight = kAbsent;  // [out, in]
    size_t bias = kAbsent;    // [out]
  };
  struct Lstm {
    size_t weight[4] = {kAbsent, kAbsent, kAbsent, kAbsent};  // [H, H + X], input is [h_prev, x]
    size_t bias[4] = {kAbsent, kAbsent, kAbsent, kAbsent};
  };
  std::vector<Dense> er;
  size_t conv_weight = kAbsent;  // [K, kh, kw]
  size_t conv_bias = kAbsent;    // [K]
  Dense ep;
  Dense ef[2];
  Lstm lstm[2];
  Dense head;
  Dense out;
};

struct Prediction {
  double p_malicious = 0.0;
  double p_benign = 0.0;
};

template <typename T>
class Model {
 public:
  /// Allocates every parameter and applies Glorot-uniform initialization
  /// (zero biases, forget-gate bias 1) from config.seed.
  explicit Model(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  const Layout& layout() const { return layout_; }
  ParamSet<T>& params() { return params_; }
  const ParamSet<T>& params() const { return params_; }

  template <typename U>
  Model<U> cast() const {
    Model<U> m(config_);
    m.params() = params_.template cast<U>();
    return m;
  }

 private:
  ModelConfig config_;
  Layout layout_;
  ParamSet<T> params_;
};

template <typename T>
struct PacketCache {
  std::vector<Mat<T>> er;     ///< er[0] input matrix, er[l+1] output of layer l
  std::vector<T> conv;        ///< K x Ho x Wo after ReLU
  std::vector<int> pool_arg;  ///< winning conv index per pooled cell
  Vec<T> pooled;
  Vec<T> pl;
  Vec<T> ep;
  Vec<T> x;  ///< LSTM input: [pooled, ep]
};

template <typename T>
struct StepCache {
  Vec<T> z;  ///< [h_prev, x]
  Vec<T> gate[4];
  Vec<T> c;
  Vec<T> tanh_c;
  Vec<T> h;
};

template <typename T>
struct BranchCache {
  std::vector<PacketCache<T>> packets;
  std::vector<StepCache<T>> steps;
  Vec<T> h;       ///< last hidden state
  Vec<T> mask;    ///< inverted-dropout multipliers (train mode)
  Vec<T> h_out;   ///< h after dropout
  Vec<T> fl;
  Vec<T> ef;
};

template <typename T>
struct ForwardCache {
  Mode mode = Mode::kInfer;
  BranchCache<T> branch[2];
  Vec<T> fused;
  Vec<T> hidden;
  Vec<T> logits;
  Vec<T> probs;
};

// --- building blocks (exposed for testing) ----------------------------------

/// ER: every row through the shared dense stack with ReLU. Shape preserved.
template <typename T>
Mat<T> encode_raw(const Model<T>& model, const Mat<T>& matrix);

/// Convolution (all kernels, stride, ReLU) followed by max pooling; returns
/// the flattened kernel-major K x Hp x Wp vector.
template <typename T>
Vec<T> conv_pool(const Model<T>& model, const Mat<T>& encoded);

template <typename T>
Vec<T> encode_pl(const Model<T>& model, const Vec<T>& pl);

template <typename T>
Vec<T> encode_fl(const Model<T>& model, const Vec<T>& fl, int branch);

/// Runs one direction's LSTM over the sequence and returns the final h.
template <typename T>
Vec<T> lstm_forward(const Model<T>& model, std::span<const Vec<T>> sequence, int branch);

// --- whole network ------------------------------------------------------------

/// Full forward pass. In kTrain mode dropout masks are drawn from
/// `dropout_seed`. `cache` may be null in inference. Throws Error(kShape) on
/// shape mismatch and Error(kNumeric) on non-finite activations.
template <typename T>
Prediction forward(const Model<T>& model, const features::FlowSample& sample, Mode mode,
                   ForwardCache<T>* cache = nullptr, uint64_t dropout_seed = 0);

/// Cross-entropy loss of a cached forward pass.
template <typename T>
T cross_entropy(const ForwardCache<T>& cache, features::Label label);

/// Accumulates d(loss)/d(param) into `grads` (same structure as the model
/// params) and returns the loss.
template <typename T>
T backward(const Model<T>& model, const ForwardCache<T>& cache, features::Label label,
           ParamSet<T>& grads);

/// Algorithm used by detection: malicious iff p_malicious > lambda.
inline features::Label classify(double p_malicious, double lambda) {
  return p_malicious > lambda ? features::Label::kMalicious : features::Label::kBenign;
}

extern template class Model<float>;
extern template class Model<double>;

}  // namespace hstf::net
