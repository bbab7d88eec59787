#include "hstf/net/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hstf/common/error.hpp"
#include "hstf/common/rng.hpp"

namespace hstf::net {

// --- ModelConfig --------------------------------------------------------------

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::kConfig, msg); };
  if (rows < 1 || cols < 1 || flow_size < 1) fail("rows, cols and flow_size must be positive");
  if (conv_kernels < 1 || kernel_h < 1 || kernel_w < 1 || conv_stride < 1) {
    fail("convolution sizes must be positive");
  }
  if (pool_h < 1 || pool_w < 1 || pool_stride < 1) fail("pooling sizes must be positive");
  if (kernel_h > rows || kernel_w > cols) fail("convolution kernel larger than the input matrix");
  if ((rows - kernel_h) % conv_stride != 0 || (cols - kernel_w) % conv_stride != 0) {
    fail("convolution stride does not tile the " + std::to_string(rows) + "x" +
         std::to_string(cols) + " matrix");
  }
  if (conv_out_h() < pool_h || conv_out_w() < pool_w) fail("pooling window larger than the convolution map");
  if ((conv_out_h() - pool_h) % pool_stride != 0 || (conv_out_w() - pool_w) % pool_stride != 0) {
    fail("pooling stride does not tile the convolution map");
  }
  if (lstm_hidden < 1 || head_hidden < 1 || er_hidden < 0) fail("layer widths must be positive");
  if (use_stats && (ep_out < 1 || ef_out < 1)) fail("encoder widths must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must be in [0, 1)");
  if (!(lr >= 0.0) || !std::isfinite(lr)) fail("learning rate must be finite and non-negative");
}

features::FeatureConfig ModelConfig::feature_shape() const {
  features::FeatureConfig f;
  f.rows = rows;
  f.cols = cols;
  f.flow_size = flow_size;
  return f;
}

void ModelConfig::check_shape(const features::FeatureConfig& shape) const {
  if (shape.rows != rows || shape.cols != cols || shape.flow_size != flow_size) {
    throw Error(ErrorCode::kShape,
                "sample shape " + std::to_string(shape.rows) + "x" + std::to_string(shape.cols) +
                    " flow " + std::to_string(shape.flow_size) + " does not match model shape " +
                    std::to_string(rows) + "x" + std::to_string(cols) + " flow " +
                    std::to_string(flow_size));
  }
}

nlohmann::json ModelConfig::to_json() const {
  return nlohmann::json{
      {"rows", rows},
      {"cols", cols},
      {"flow_size", flow_size},
      {"conv", {{"kernels", conv_kernels}, {"kernel_h", kernel_h}, {"kernel_w", kernel_w}, {"stride", conv_stride}}},
      {"pool", {{"h", pool_h}, {"w", pool_w}, {"stride", pool_stride}}},
      {"lstm_hidden", lstm_hidden},
      {"ep_out", ep_out},
      {"ef_out", ef_out},
      {"er_hidden", er_hidden},
      {"head_hidden", head_hidden},
      {"dropout", dropout},
      {"lr", lr},
      {"seed", seed},
      {"use_stats", use_stats},
  };
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.rows = j.value("rows", c.rows);
    c.cols = j.value("cols", c.cols);
    c.flow_size = j.value("flow_size", c.flow_size);
    if (j.contains("conv")) {
      const auto& conv = j.at("conv");
      c.conv_kernels = conv.value("kernels", c.conv_kernels);
      c.kernel_h = conv.value("kernel_h", c.kernel_h);
      c.kernel_w = conv.value("kernel_w", c.kernel_w);
      c.conv_stride = conv.value("stride", c.conv_stride);
    }
    if (j.contains("pool")) {
      const auto& pool = j.at("pool");
      c.pool_h = pool.value("h", c.pool_h);
      c.pool_w = pool.value("w", c.pool_w);
      c.pool_stride = pool.value("stride", c.pool_stride);
    }
    c.lstm_hidden = j.value("lstm_hidden", c.lstm_hidden);
    c.ep_out = j.value("ep_out", c.ep_out);
    c.ef_out = j.value("ef_out", c.ef_out);
    c.er_hidden = j.value("er_hidden", c.er_hidden);
    c.head_hidden = j.value("head_hidden", c.head_hidden);
    c.dropout = j.value("dropout", c.dropout);
    c.lr = j.value("lr", c.lr);
    c.seed = j.value("seed", c.seed);
    c.use_stats = j.value("use_stats", c.use_stats);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("invalid model config: ") + e.what());
  }
  c.validate();
  return c;
}

// --- Model --------------------------------------------------------------------

namespace {

template <typename T>
void glorot(ParamTensor<T>& t, size_t fan_in, size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& v : t.data) v = static_cast<T>(uniform(rng, -limit, limit));
}

template <typename T>
Layout::Dense add_dense(ParamSet<T>& ps, const std::string& name, size_t in, size_t out, Rng& rng) {
  Layout::Dense d;
  d.weight = ps.add(name + ".weight", {out, in});
  d.bias = ps.add(name + ".bias", {out});
  glorot(ps[d.weight], in, out, rng);
  return d;
}

template <typename T>
Layout::Lstm add_lstm(ParamSet<T>& ps, const std::string& name, size_t hidden, size_t input, Rng& rng) {
  static constexpr const char* kGateNames[4] = {"f", "i", "c", "o"};
  Layout::Lstm l;
  for (int g = 0; g < 4; ++g) {
    l.weight[g] = ps.add(name + ".w_" + kGateNames[g], {hidden, hidden + input});
    l.bias[g] = ps.add(name + ".b_" + kGateNames[g], {hidden});
    glorot(ps[l.weight[g]], hidden + input, hidden, rng);
  }
  std::fill(ps[l.bias[kForget]].data.begin(), ps[l.bias[kForget]].data.end(), T(1));
  return l;
}

}  // namespace

template <typename T>
Model<T>::Model(const ModelConfig& config) : config_(config) {
  config_.validate();
  Rng rng(config_.seed);
  const auto cols = static_cast<size_t>(config_.cols);
  const auto erw = static_cast<size_t>(config_.er_width());
  if (erw == cols) {
    layout_.er.push_back(add_dense(params_, "er.0", cols, cols, rng));
  } else {
    layout_.er.push_back(add_dense(params_, "er.0", cols, erw, rng));
    layout_.er.push_back(add_dense(params_, "er.1", erw, cols, rng));
  }

  const auto k = static_cast<size_t>(config_.conv_kernels);
  const auto kh = static_cast<size_t>(config_.kernel_h);
  const auto kw = static_cast<size_t>(config_.kernel_w);
  layout_.conv_weight = params_.add("conv.weight", {k, kh, kw});
  layout_.conv_bias = params_.add("conv.bias", {k});
  glorot(params_[layout_.conv_weight], kh * kw, k * kh * kw, rng);

  if (config_.use_stats) {
    layout_.ep = add_dense(params_, "ep", features::kPlWidth, static_cast<size_t>(config_.ep_out), rng);
  }
  const auto h = static_cast<size_t>(config_.lstm_hidden);
  const auto x = static_cast<size_t>(config_.lstm_input());
  layout_.lstm[kRequestBranch] = add_lstm(params_, "lstm_req", h, x, rng);
  layout_.lstm[kResponseBranch] = add_lstm(params_, "lstm_res", h, x, rng);
  if (config_.use_stats) {
    const auto ef = static_cast<size_t>(config_.ef_out);
    layout_.ef[kRequestBranch] = add_dense(params_, "ef_req", features::kFlRequestWidth, ef, rng);
    layout_.ef[kResponseBranch] = add_dense(params_, "ef_res", features::kFlResponseWidth, ef, rng);
  }
  layout_.head = add_dense(params_, "head", static_cast<size_t>(config_.fused_width()),
                           static_cast<size_t>(config_.head_hidden), rng);
  layout_.out = add_dense(params_, "out", static_cast<size_t>(config_.head_hidden), 2, rng);
}

// --- forward helpers ----------------------------------------------------------

namespace {

template <typename T>
using CMap = Eigen::Map<const Mat<T>>;
template <typename T>
using CVMap = Eigen::Map<const Vec<T>>;
template <typename T>
using GMap = Eigen::Map<Mat<T>>;
template <typename T>
using GVMap = Eigen::Map<Vec<T>>;

template <typename T>
CMap<T> weight_of(const ParamSet<T>& ps, size_t idx) {
  const auto& t = ps[idx];
  return CMap<T>(t.data.data(), static_cast<Eigen::Index>(t.shape[0]),
                 static_cast<Eigen::Index>(t.shape[1]));
}

template <typename T>
CVMap<T> bias_of(const ParamSet<T>& ps, size_t idx) {
  const auto& t = ps[idx];
  return CVMap<T>(t.data.data(), static_cast<Eigen::Index>(t.size()));
}

template <typename T>
GMap<T> grad_weight(ParamSet<T>& ps, size_t idx) {
  auto& t = ps[idx];
  return GMap<T>(t.data.data(), static_cast<Eigen::Index>(t.shape[0]),
                 static_cast<Eigen::Index>(t.shape[1]));
}

template <typename T>
GVMap<T> grad_bias(ParamSet<T>& ps, size_t idx) {
  auto& t = ps[idx];
  return GVMap<T>(t.data.data(), static_cast<Eigen::Index>(t.size()));
}

template <typename T>
void check_finite(const T* data, Eigen::Index n, const char* layer) {
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!std::isfinite(data[i])) {
      throw Error(ErrorCode::kNumeric, std::string("non-finite activation in layer ") + layer +
                                           " at index " + std::to_string(i));
    }
  }
}

template <typename T>
void check_finite(const Vec<T>& v, const char* layer) {
  check_finite(v.data(), v.size(), layer);
}

template <typename T>
void check_finite(const Mat<T>& m, const char* layer) {
  check_finite(m.data(), m.size(), layer);
}

template <typename T>
Vec<T> dense_relu(const ParamSet<T>& ps, const Layout::Dense& d, const Vec<T>& in) {
  return (weight_of(ps, d.weight) * in + bias_of(ps, d.bias)).cwiseMax(T(0));
}

template <typename T>
T sigmoid(T v) {
  return T(1) / (T(1) + std::exp(-v));
}

template <typename T>
Vec<T> to_vec(const std::vector<float>& src, size_t offset, size_t n) {
  Vec<T> v(static_cast<Eigen::Index>(n));
  for (size_t i = 0; i < n; ++i) v[static_cast<Eigen::Index>(i)] = static_cast<T>(src[offset + i]);
  return v;
}

template <typename T>
Mat<T> to_mat(const std::vector<float>& src, size_t offset, int rows, int cols) {
  Mat<T> m(rows, cols);
  const size_t n = static_cast<size_t>(rows) * static_cast<size_t>(cols);
  for (size_t i = 0; i < n; ++i) m.data()[i] = static_cast<T>(src[offset + i]);
  return m;
}

template <typename T>
void conv_pool_impl(const Model<T>& model, const Mat<T>& in, std::vector<T>& conv,
                    std::vector<int>& arg, Vec<T>& pooled) {
  const auto& c = model.config();
  const auto& ps = model.params();
  const T* w = ps.data(model.layout().conv_weight);
  const T* b = ps.data(model.layout().conv_bias);
  const int ho = c.conv_out_h(), wo = c.conv_out_w();
  const int hp = c.pool_out_h(), wp = c.pool_out_w();
  conv.assign(static_cast<size_t>(c.conv_kernels) * ho * wo, T(0));
  for (int k = 0; k < c.conv_kernels; ++k) {
    const T* wk = w + static_cast<size_t>(k) * c.kernel_h * c.kernel_w;
    for (int i = 0; i < ho; ++i) {
      for (int j = 0; j < wo; ++j) {
        T acc = b[k];
        for (int a = 0; a < c.kernel_h; ++a) {
          const T* row = in.data() + static_cast<size_t>(i * c.conv_stride + a) * c.cols + j * c.conv_stride;
          const T* wr = wk + static_cast<size_t>(a) * c.kernel_w;
          for (int bb = 0; bb < c.kernel_w; ++bb) acc += wr[bb] * row[bb];
        }
        conv[(static_cast<size_t>(k) * ho + i) * wo + j] = std::max(acc, T(0));
      }
    }
  }
  pooled.resize(c.conv_flat());
  arg.assign(static_cast<size_t>(c.conv_flat()), 0);
  for (int k = 0; k < c.conv_kernels; ++k) {
    for (int p = 0; p < hp; ++p) {
      for (int q = 0; q < wp; ++q) {
        int best = -1;
        T best_v = T(0);
        for (int a = 0; a < c.pool_h; ++a) {
          for (int bb = 0; bb < c.pool_w; ++bb) {
            const int idx = (k * ho + p * c.pool_stride + a) * wo + q * c.pool_stride + bb;
            if (best < 0 || conv[static_cast<size_t>(idx)] > best_v) {
              best = idx;
              best_v = conv[static_cast<size_t>(idx)];
            }
          }
        }
        const int out = (k * hp + p) * wp + q;
        pooled[out] = best_v;
        arg[static_cast<size_t>(out)] = best;
      }
    }
  }
}

template <typename T>
void lstm_step(const ParamSet<T>& ps, const Layout::Lstm& l, const Vec<T>& h_prev,
               const Vec<T>& c_prev, const Vec<T>& x, StepCache<T>& s) {
  const auto hn = h_prev.size();
  s.z.resize(hn + x.size());
  s.z << h_prev, x;
  for (int g = 0; g < 4; ++g) {
    Vec<T> pre = weight_of(ps, l.weight[g]) * s.z + bias_of(ps, l.bias[g]);
    if (g == kCandidate) {
      s.gate[g] = pre.array().tanh().matrix();
    } else {
      s.gate[g] = pre.unaryExpr([](T v) { return sigmoid(v); });
    }
  }
  s.c = s.gate[kForget].cwiseProduct(c_prev) + s.gate[kInput].cwiseProduct(s.gate[kCandidate]);
  s.tanh_c = s.c.array().tanh().matrix();
  s.h = s.gate[kOutput].cwiseProduct(s.tanh_c);
}

}  // namespace

// --- building blocks ----------------------------------------------------------

template <typename T>
Mat<T> encode_raw(const Model<T>& model, const Mat<T>& matrix) {
  const auto& c = model.config();
  if (matrix.rows() != c.rows || matrix.cols() != c.cols) {
    throw Error(ErrorCode::kShape, "raw matrix is " + std::to_string(matrix.rows()) + "x" +
                                       std::to_string(matrix.cols()) + ", model expects " +
                                       std::to_string(c.rows) + "x" + std::to_string(c.cols));
  }
  Mat<T> cur = matrix;
  for (const auto& d : model.layout().er) {
    const auto w = weight_of(model.params(), d.weight);
    const auto b = bias_of(model.params(), d.bias);
    Mat<T> next = (cur * w.transpose()).rowwise() + b.transpose();
    cur = next.cwiseMax(T(0));
  }
  return cur;
}

template <typename T>
Vec<T> conv_pool(const Model<T>& model, const Mat<T>& encoded) {
  const auto& c = model.config();
  if (encoded.rows() != c.rows || encoded.cols() != c.cols) {
    throw Error(ErrorCode::kShape, "encoded matrix shape does not match the model");
  }
  std::vector<T> conv;
  std::vector<int> arg;
  Vec<T> pooled;
  conv_pool_impl(model, encoded, conv, arg, pooled);
  return pooled;
}

template <typename T>
Vec<T> encode_pl(const Model<T>& model, const Vec<T>& pl) {
  if (!model.config().use_stats) throw Error(ErrorCode::kConfig, "model has no statistics encoders");
  if (pl.size() != static_cast<Eigen::Index>(features::kPlWidth)) {
    throw Error(ErrorCode::kShape, "packet-level vector must have length 41, got " + std::to_string(pl.size()));
  }
  return dense_relu(model.params(), model.layout().ep, pl);
}

template <typename T>
Vec<T> encode_fl(const Model<T>& model, const Vec<T>& fl, int branch) {
  if (!model.config().use_stats) throw Error(ErrorCode::kConfig, "model has no statistics encoders");
  const size_t want = branch == kRequestBranch ? features::kFlRequestWidth : features::kFlResponseWidth;
  if (fl.size() != static_cast<Eigen::Index>(want)) {
    throw Error(ErrorCode::kShape, "flow-level vector must have length " + std::to_string(want) +
                                       ", got " + std::to_string(fl.size()));
  }
  return dense_relu(model.params(), model.layout().ef[branch], fl);
}

template <typename T>
Vec<T> lstm_forward(const Model<T>& model, std::span<const Vec<T>> sequence, int branch) {
  const auto h = model.config().lstm_hidden;
  Vec<T> hs = Vec<T>::Zero(h);
  Vec<T> cs = Vec<T>::Zero(h);
  StepCache<T> s;
  for (const auto& x : sequence) {
    if (x.size() != model.config().lstm_input()) {
      throw Error(ErrorCode::kShape, "LSTM input has length " + std::to_string(x.size()) +
                                         ", expected " + std::to_string(model.config().lstm_input()));
    }
    lstm_step(model.params(), model.layout().lstm[branch], hs, cs, x, s);
    hs = s.h;
    cs = s.c;
  }
  return hs;
}

// --- forward ------------------------------------------------------------------

namespace {

void check_sample(const ModelConfig& c, const features::FlowSample& s) {
  features::FeatureConfig shape;
  shape.rows = s.rows;
  shape.cols = s.cols;
  shape.flow_size = s.flow_size;
  c.check_shape(shape);
  const size_t raw = static_cast<size_t>(c.flow_size) * c.rows * c.cols;
  const size_t pl = static_cast<size_t>(c.flow_size) * features::kPlWidth;
  if (s.req_raw.size() != raw || s.res_raw.size() != raw || s.req_pl.size() != pl ||
      s.res_pl.size() != pl || s.req_fl.size() != features::kFlRequestWidth ||
      s.res_fl.size() != features::kFlResponseWidth) {
    throw Error(ErrorCode::kShape, "sample " + std::to_string(s.id) + " has inconsistent array sizes");
  }
}

}  // namespace

template <typename T>
Prediction forward(const Model<T>& model, const features::FlowSample& sample, Mode mode,
                   ForwardCache<T>* cache, uint64_t dropout_seed) {
  const auto& c = model.config();
  const auto& ps = model.params();
  const auto& lay = model.layout();
  check_sample(c, sample);

  ForwardCache<T> local;
  ForwardCache<T>& fc = cache != nullptr ? *cache : local;
  fc.mode = mode;
  Rng drop_rng(dropout_seed);
  const size_t mat_size = static_cast<size_t>(c.rows) * c.cols;

  for (int br = 0; br < 2; ++br) {
    const auto& raw = br == kRequestBranch ? sample.req_raw : sample.res_raw;
    const auto& pl = br == kRequestBranch ? sample.req_pl : sample.res_pl;
    const auto& fl = br == kRequestBranch ? sample.req_fl : sample.res_fl;
    auto& bc = fc.branch[br];
    bc.packets.resize(static_cast<size_t>(c.flow_size));
    bc.steps.resize(static_cast<size_t>(c.flow_size));

    Vec<T> hs = Vec<T>::Zero(c.lstm_hidden);
    Vec<T> cs = Vec<T>::Zero(c.lstm_hidden);
    for (int t = 0; t < c.flow_size; ++t) {
      auto& pc = bc.packets[static_cast<size_t>(t)];
      pc.er.resize(lay.er.size() + 1);
      pc.er[0] = to_mat<T>(raw, static_cast<size_t>(t) * mat_size, c.rows, c.cols);
      for (size_t l = 0; l < lay.er.size(); ++l) {
        const auto w = weight_of(ps, lay.er[l].weight);
        const auto b = bias_of(ps, lay.er[l].bias);
        Mat<T> pre = (pc.er[l] * w.transpose()).rowwise() + b.transpose();
        pc.er[l + 1] = pre.cwiseMax(T(0));
        check_finite(pc.er[l + 1], "er");
      }
      conv_pool_impl(model, pc.er.back(), pc.conv, pc.pool_arg, pc.pooled);
      check_finite(pc.pooled, "conv");
      if (c.use_stats) {
        pc.pl = to_vec<T>(pl, static_cast<size_t>(t) * features::kPlWidth, features::kPlWidth);
        pc.ep = dense_relu(ps, lay.ep, pc.pl);
        check_finite(pc.ep, "ep");
        pc.x.resize(pc.pooled.size() + pc.ep.size());
        pc.x << pc.pooled, pc.ep;
      } else {
        pc.x = pc.pooled;
      }
      auto& sc = bc.steps[static_cast<size_t>(t)];
      lstm_step(ps, lay.lstm[br], hs, cs, pc.x, sc);
      check_finite(sc.h, br == kRequestBranch ? "lstm_req" : "lstm_res");
      check_finite(sc.c, br == kRequestBranch ? "lstm_req" : "lstm_res");
      hs = sc.h;
      cs = sc.c;
    }
    bc.h = hs;
    if (mode == Mode::kTrain && c.dropout > 0.0) {
      const T keep_scale = static_cast<T>(1.0 / (1.0 - c.dropout));
      bc.mask.resize(c.lstm_hidden);
      for (int j = 0; j < c.lstm_hidden; ++j) {
        bc.mask[j] = uniform01(drop_rng) < c.dropout ? T(0) : keep_scale;
      }
    } else {
      bc.mask = Vec<T>::Ones(c.lstm_hidden);
    }
    bc.h_out = bc.h.cwiseProduct(bc.mask);
    if (c.use_stats) {
      const size_t width = br == kRequestBranch ? features::kFlRequestWidth : features::kFlResponseWidth;
      bc.fl = to_vec<T>(fl, 0, width);
      bc.ef = dense_relu(ps, lay.ef[br], bc.fl);
      check_finite(bc.ef, br == kRequestBranch ? "ef_req" : "ef_res");
    }
  }

  fc.fused.resize(c.fused_width());
  if (c.use_stats) {
    fc.fused << fc.branch[0].h_out, fc.branch[1].h_out, fc.branch[0].ef, fc.branch[1].ef;
  } else {
    fc.fused << fc.branch[0].h_out, fc.branch[1].h_out;
  }
  fc.hidden = dense_relu(ps, lay.head, fc.fused);
  check_finite(fc.hidden, "head");
  fc.logits = weight_of(ps, lay.out.weight) * fc.hidden + bias_of(ps, lay.out.bias);
  check_finite(fc.logits, "out");

  const T m = fc.logits.maxCoeff();
  fc.probs = (fc.logits.array() - m).exp().matrix();
  fc.probs /= fc.probs.sum();

  // Two-way softmax in double so the pair sums to one to rounding.
  const double d = static_cast<double>(fc.logits[1]) - static_cast<double>(fc.logits[0]);
  Prediction p;
  p.p_malicious = d > 0 ? std::exp(-d) / (1.0 + std::exp(-d)) : 1.0 / (1.0 + std::exp(d));
  p.p_benign = 1.0 - p.p_malicious;
  return p;
}

template <typename T>
T cross_entropy(const ForwardCache<T>& cache, features::Label label) {
  if (label == features::Label::kUnlabeled) throw Error(ErrorCode::kData, "loss needs a labeled sample");
  const int target = label == features::Label::kMalicious ? 0 : 1;
  const T m = cache.logits.maxCoeff();
  const T lse = m + std::log((cache.logits.array() - m).exp().sum());
  return lse - cache.logits[target];
}

// --- backward -----------------------------------------------------------------

template <typename T>
T backward(const Model<T>& model, const ForwardCache<T>& fc, features::Label label, ParamSet<T>& grads) {
  const auto& c = model.config();
  const auto& ps = model.params();
  const auto& lay = model.layout();
  const T loss = cross_entropy(fc, label);
  const int target = label == features::Label::kMalicious ? 0 : 1;

  Vec<T> dlogits = fc.probs;
  dlogits[target] -= T(1);
  grad_weight(grads, lay.out.weight).noalias() += dlogits * fc.hidden.transpose();
  grad_bias(grads, lay.out.bias) += dlogits;

  Vec<T> dhidden = weight_of(ps, lay.out.weight).transpose() * dlogits;
  dhidden = dhidden.cwiseProduct((fc.hidden.array() > T(0)).template cast<T>().matrix());
  grad_weight(grads, lay.head.weight).noalias() += dhidden * fc.fused.transpose();
  grad_bias(grads, lay.head.bias) += dhidden;
  const Vec<T> dfused = weight_of(ps, lay.head.weight).transpose() * dhidden;

  const int hn = c.lstm_hidden;
  const int ho = c.conv_out_h(), wo = c.conv_out_w();
  std::vector<T> dconv;
  Mat<T> dencoded(c.rows, c.cols);

  for (int br = 0; br < 2; ++br) {
    const auto& bc = fc.branch[br];
    if (c.use_stats) {
      Vec<T> def = dfused.segment(2 * hn + br * c.ef_out, c.ef_out);
      def = def.cwiseProduct((bc.ef.array() > T(0)).template cast<T>().matrix());
      grad_weight(grads, lay.ef[br].weight).noalias() += def * bc.fl.transpose();
      grad_bias(grads, lay.ef[br].bias) += def;
    }

    Vec<T> dh = dfused.segment(br * hn, hn).cwiseProduct(bc.mask);
    Vec<T> dc = Vec<T>::Zero(hn);
    const auto& lstm = lay.lstm[br];
    for (int t = c.flow_size - 1; t >= 0; --t) {
      const auto& s = bc.steps[static_cast<size_t>(t)];
      const Vec<T> c_prev = t > 0 ? bc.steps[static_cast<size_t>(t - 1)].c : Vec<T>::Zero(hn);
      const auto& f = s.gate[kForget];
      const auto& i = s.gate[kInput];
      const auto& g = s.gate[kCandidate];
      const auto& o = s.gate[kOutput];

      Vec<T> d_o = dh.cwiseProduct(s.tanh_c);
      dc += dh.cwiseProduct(o).cwiseProduct((T(1) - s.tanh_c.array().square()).matrix());
      Vec<T> dpre[4];
      dpre[kForget] = dc.cwiseProduct(c_prev).cwiseProduct(f.cwiseProduct((T(1) - f.array()).matrix()));
      dpre[kInput] = dc.cwiseProduct(g).cwiseProduct(i.cwiseProduct((T(1) - i.array()).matrix()));
      dpre[kCandidate] = dc.cwiseProduct(i).cwiseProduct((T(1) - g.array().square()).matrix());
      dpre[kOutput] = d_o.cwiseProduct(o.cwiseProduct((T(1) - o.array()).matrix()));

      Vec<T> dz = Vec<T>::Zero(s.z.size());
      for (int gi = 0; gi < 4; ++gi) {
        grad_weight(grads, lstm.weight[gi]).noalias() += dpre[gi] * s.z.transpose();
        grad_bias(grads, lstm.bias[gi]) += dpre[gi];
        dz.noalias() += weight_of(ps, lstm.weight[gi]).transpose() * dpre[gi];
      }
      dc = dc.cwiseProduct(f);
      dh = dz.head(hn);
      const Vec<T> dx = dz.tail(dz.size() - hn);

      const auto& pc = bc.packets[static_cast<size_t>(t)];
      if (c.use_stats) {
        Vec<T> dep = dx.tail(c.ep_out);
        dep = dep.cwiseProduct((pc.ep.array() > T(0)).template cast<T>().matrix());
        grad_weight(grads, lay.ep.weight).noalias() += dep * pc.pl.transpose();
        grad_bias(grads, lay.ep.bias) += dep;
      }

      // Max-pool routes each pooled gradient to its winning conv cell.
      dconv.assign(pc.conv.size(), T(0));
      for (int idx = 0; idx < c.conv_flat(); ++idx) {
        dconv[static_cast<size_t>(pc.pool_arg[static_cast<size_t>(idx)])] += dx[idx];
      }
      for (size_t k = 0; k < dconv.size(); ++k) {
        if (!(pc.conv[k] > T(0))) dconv[k] = T(0);
      }

      const Mat<T>& enc = pc.er.back();
      dencoded.setZero();
      T* gw = grads.data(lay.conv_weight);
      T* gb = grads.data(lay.conv_bias);
      const T* w = ps.data(lay.conv_weight);
      for (int k = 0; k < c.conv_kernels; ++k) {
        const size_t koff = static_cast<size_t>(k) * c.kernel_h * c.kernel_w;
        for (int oi = 0; oi < ho; ++oi) {
          for (int oj = 0; oj < wo; ++oj) {
            const T d = dconv[(static_cast<size_t>(k) * ho + oi) * wo + oj];
            if (d == T(0)) continue;
            gb[k] += d;
            for (int a = 0; a < c.kernel_h; ++a) {
              const int r = oi * c.conv_stride + a;
              for (int b = 0; b < c.kernel_w; ++b) {
                const int col = oj * c.conv_stride + b;
                gw[koff + static_cast<size_t>(a) * c.kernel_w + b] += d * enc(r, col);
                dencoded(r, col) += d * w[koff + static_cast<size_t>(a) * c.kernel_w + b];
              }
            }
          }
        }
      }

      Mat<T> dout = dencoded;
      for (size_t l = lay.er.size(); l-- > 0;) {
        const Mat<T>& out = pc.er[l + 1];
        const Mat<T>& in = pc.er[l];
        Mat<T> dpre_m = dout.cwiseProduct((out.array() > T(0)).template cast<T>().matrix());
        grad_weight(grads, lay.er[l].weight).noalias() += dpre_m.transpose() * in;
        grad_bias(grads, lay.er[l].bias) += dpre_m.colwise().sum().transpose();
        if (l > 0) dout = dpre_m * weight_of(ps, lay.er[l].weight);
      }
    }
  }
  return loss;
}

// --- instantiations -----------------------------------------------------------

template class Model<float>;
template class Model<double>;

#define HSTF_INSTANTIATE(T)                                                                   \
  template Mat<T> encode_raw<T>(const Model<T>&, const Mat<T>&);                              \
  template Vec<T> conv_pool<T>(const Model<T>&, const Mat<T>&);                               \
  template Vec<T> encode_pl<T>(const Model<T>&, const Vec<T>&);                               \
  template Vec<T> encode_fl<T>(const Model<T>&, const Vec<T>&, int);                          \
  template Vec<T> lstm_forward<T>(const Model<T>&, std::span<const Vec<T>>, int);             \
  template Prediction forward<T>(const Model<T>&, const features::FlowSample&, Mode,          \
                                 ForwardCache<T>*, uint64_t);                                 \
  template T cross_entropy<T>(const ForwardCache<T>&, features::Label);                       \
  template T backward<T>(const Model<T>&, const ForwardCache<T>&, features::Label, ParamSet<T>&);

HSTF_INSTANTIATE(float)
HSTF_INSTANTIATE(double)

#undef HSTF_INSTANTIATE

}  // namespace hstf::net
