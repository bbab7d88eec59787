#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "hstf/common/error.hpp"
#include "hstf/features/sample_io.hpp"
#include "hstf/net/checkpoint.hpp"
#include "hstf/net/model.hpp"
#include "hstf/net/train.hpp"
#include "hstf/synth/generator.hpp"
#include "support/gradcheck.hpp"

using namespace hstf;
using namespace hstf::net;
using features::FlowSample;
using features::Label;

namespace {

const ParamTensor<double>& find(const Model<double>& m, const std::string& name) {
  for (const auto& t : m.params()) {
    if (t.name == name) return t;
  }
  throw std::runtime_error("no param " + name);
}

ParamTensor<double>& find(Model<double>& m, const std::string& name) {
  return const_cast<ParamTensor<double>&>(find(static_cast<const Model<double>&>(m), name));
}

void zero_all(Model<double>& m) { m.params().fill_zero(); }

features::InMemorySamples synth_samples(size_t per_class, uint64_t seed, const features::FeatureConfig& shape = {}) {
  std::vector<FlowSample> out;
  for (const auto& f : synth::generate_corpus({.malicious = per_class, .benign = per_class, .seed = seed})) {
    if (auto s = features::flow_to_sample(f, shape)) out.push_back(std::move(*s));
  }
  return features::InMemorySamples(std::move(out), shape);
}

std::vector<size_t> iota(size_t a, size_t b) {
  std::vector<size_t> v;
  for (size_t i = a; i < b; ++i) v.push_back(i);
  return v;
}

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::kUsage;
}

}  // namespace

TEST(Shapes, DefaultChain) {
  ModelConfig c;
  EXPECT_EQ(c.conv_out_h(), 10);
  EXPECT_EQ(c.conv_out_w(), 17);
  EXPECT_EQ(c.pool_out_h(), 9);
  EXPECT_EQ(c.pool_out_w(), 16);
  EXPECT_EQ(c.conv_flat(), 288);
  EXPECT_EQ(c.lstm_input(), 320);
  EXPECT_EQ(c.fused_width(), 96);

  const Model<double> m(c);
  EXPECT_EQ(find(m, "conv.weight").shape, (std::vector<size_t>{2, 2, 8}));
  EXPECT_EQ(find(m, "er.0.weight").shape, (std::vector<size_t>{40, 40}));
  EXPECT_EQ(find(m, "ep.weight").shape, (std::vector<size_t>{32, 41}));
  EXPECT_EQ(find(m, "ef_req.weight").shape, (std::vector<size_t>{32, 57}));
  EXPECT_EQ(find(m, "ef_res.weight").shape, (std::vector<size_t>{32, 58}));
  EXPECT_EQ(find(m, "lstm_req.w_f").shape, (std::vector<size_t>{16, 336}));
  EXPECT_EQ(find(m, "head.weight").shape, (std::vector<size_t>{64, 96}));
  EXPECT_EQ(find(m, "out.weight").shape, (std::vector<size_t>{2, 64}));

  const auto sample = test_support::random_sample(c.feature_shape(), 3, Label::kBenign);
  ForwardCache<double> cache;
  forward(m, sample, Mode::kInfer, &cache);
  const auto& pc = cache.branch[kResponseBranch].packets[2];
  EXPECT_EQ(pc.conv.size(), 2u * 10 * 17);
  EXPECT_EQ(pc.pooled.size(), 288);
  EXPECT_EQ(pc.x.size(), 320);
  EXPECT_EQ(cache.branch[kRequestBranch].h.size(), 16);
  EXPECT_EQ(cache.fused.size(), 96);
  EXPECT_EQ(cache.hidden.size(), 64);
  EXPECT_EQ(cache.logits.size(), 2);
}

TEST(Shapes, ContrastModelDropsStatistics) {
  ModelConfig c;
  c.use_stats = false;
  EXPECT_EQ(c.lstm_input(), 288);
  EXPECT_EQ(c.fused_width(), 32);
  const Model<float> m(c);
  for (const auto& t : m.params()) EXPECT_EQ(t.name.find("ep"), std::string::npos) << t.name;
}

TEST(Config, Validation) {
  ModelConfig c;
  c.cols = 41;  // (41-8) not divisible by stride 2
  EXPECT_EQ(code_of([&] { c.validate(); }), ErrorCode::kConfig);
  c = {};
  c.dropout = 1.0;
  EXPECT_EQ(code_of([&] { c.validate(); }), ErrorCode::kConfig);
  c = {};
  c.lr = -1;
  EXPECT_EQ(code_of([&] { c.validate(); }), ErrorCode::kConfig);
  c = {};
  c.rows = 4;
  c.cols = 8;
  c.kernel_w = 8;
  EXPECT_EQ(code_of([&] { c.validate(); }), ErrorCode::kConfig);  // 2x1 map cannot hold a 2x2 pool
  c = {};
  EXPECT_EQ(ModelConfig::from_json(c.to_json()), c);
}

TEST(Encoders, ZeroInZeroOut) {
  Model<double> m(ModelConfig{});
  const Mat<double> zero = Mat<double>::Zero(20, 40);
  EXPECT_EQ(encode_raw<double>(m, zero), zero);
  EXPECT_TRUE(encode_pl<double>(m, Vec<double>::Zero(41)).isZero());
  EXPECT_EQ(encode_pl<double>(m, Vec<double>::Zero(41)).size(), 32);
  EXPECT_TRUE(encode_fl<double>(m, Vec<double>::Zero(57), kRequestBranch).isZero());
  EXPECT_EQ(encode_fl<double>(m, Vec<double>::Zero(58), kResponseBranch).size(), 32);
}

TEST(Encoders, IdentityRawEncoder) {
  Model<double> m(ModelConfig{});
  auto& w = find(m, "er.0.weight").data;
  std::fill(w.begin(), w.end(), 0.0);
  for (size_t i = 0; i < 40; ++i) w[i * 40 + i] = 1.0;
  Rng rng(1);
  Mat<double> x(20, 40);
  for (int i = 0; i < x.size(); ++i) x.data()[i] = uniform01(rng);
  EXPECT_EQ(encode_raw<double>(m, x), x);
}

TEST(Encoders, DeterministicInit) {
  const Model<float> a(ModelConfig{});
  const Model<float> b(ModelConfig{});
  for (size_t i = 0; i < a.params().count(); ++i) EXPECT_EQ(a.params()[i].data, b.params()[i].data);
  ModelConfig other;
  other.seed = 43;
  EXPECT_NE(Model<float>(other).params()[0].data, a.params()[0].data);
}

TEST(Encoders, GlorotBoundsAndForgetBias) {
  const Model<double> m(ModelConfig{});
  const auto& w = find(m, "head.weight");
  const double bound = std::sqrt(6.0 / (96 + 64));
  for (double v : w.data) EXPECT_LE(std::abs(v), bound);
  for (double v : find(m, "lstm_res.b_f").data) EXPECT_EQ(v, 1.0);
  for (double v : find(m, "lstm_res.b_i").data) EXPECT_EQ(v, 0.0);
}

TEST(ConvPool, ConstantFieldWithOnesKernel) {
  ModelConfig c;
  c.conv_kernels = 1;
  Model<double> m(c);
  auto& w = find(m, "conv.weight").data;
  std::fill(w.begin(), w.end(), 1.0);
  const double cval = 0.25;
  const auto out = conv_pool<double>(m, Mat<double>::Constant(20, 40, cval));
  ASSERT_EQ(out.size(), 9 * 16);
  for (int i = 0; i < out.size(); ++i) EXPECT_DOUBLE_EQ(out[i], 16 * cval);
}

TEST(ConvPool, BiasOnZeroInput) {
  Model<double> m(ModelConfig{});
  auto& b = find(m, "conv.bias").data;
  b = {0.7, -0.4};
  const auto out = conv_pool<double>(m, Mat<double>::Zero(20, 40));
  for (int i = 0; i < 144; ++i) EXPECT_EQ(out[i], 0.7);
  for (int i = 144; i < 288; ++i) EXPECT_EQ(out[i], 0.0);
}

TEST(ConvPool, TiesGoToLowestIndex) {
  const Model<double> m(ModelConfig{});
  const auto zero = FlowSample::zeros(ModelConfig{}.feature_shape());
  ForwardCache<double> cache;
  forward(m, zero, Mode::kInfer, &cache);
  const auto& arg = cache.branch[0].packets[0].pool_arg;
  ASSERT_EQ(arg.size(), 288u);
  for (int k = 0; k < 2; ++k) {
    for (int i = 0; i < 9; ++i) {
      for (int j = 0; j < 16; ++j) EXPECT_EQ(arg[k * 144 + i * 16 + j], k * 170 + i * 17 + j);
    }
  }
}

TEST(Lstm, ZeroWeightsGiveZeroState) {
  Model<double> m(ModelConfig{});
  zero_all(m);
  std::vector<Vec<double>> seq(3, Vec<double>::Zero(320));
  EXPECT_TRUE(lstm_forward<double>(m, seq, kRequestBranch).isZero());
}

TEST(Lstm, ScalarHandExample) {
  ModelConfig c;
  c.lstm_hidden = 1;
  Model<double> m(c);
  zero_all(m);
  // Input weight on x[0] is 1, so the candidate pre-activation is exactly 1.
  find(m, "lstm_req.w_c").data[1] = 1.0;
  Vec<double> x = Vec<double>::Zero(320);
  x[0] = 1.0;
  std::vector<Vec<double>> seq{x};
  const auto h = lstm_forward<double>(m, seq, kRequestBranch);
  const double c1 = 0.5 * std::tanh(1.0);
  EXPECT_NEAR(c1, 0.38079707797788, 1e-12);
  EXPECT_NEAR(h[0], 0.5 * std::tanh(c1), 1e-15);
  EXPECT_NEAR(h[0], 0.18170, 1e-5);
}

TEST(Lstm, OrderSensitive) {
  const Model<double> m(ModelConfig{});
  Rng rng(4);
  std::vector<Vec<double>> seq;
  for (int t = 0; t < 3; ++t) {
    Vec<double> v(320);
    for (int i = 0; i < 320; ++i) v[i] = uniform(rng, -1, 1);
    seq.push_back(v);
  }
  auto rev = seq;
  std::reverse(rev.begin(), rev.end());
  EXPECT_GT((lstm_forward<double>(m, seq, 0) - lstm_forward<double>(m, rev, 0)).norm(), 1e-6);
}

TEST(Forward, SoftmaxSumsToOne) {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    ModelConfig c;
    c.seed = seed;
    const Model<float> m(c);
    const auto s = test_support::random_sample(c.feature_shape(), seed + 100, Label::kMalicious);
    const auto p = forward(m, s, Mode::kInfer);
    EXPECT_NEAR(p.p_malicious + p.p_benign, 1.0, 1e-9);
    EXPECT_GE(p.p_malicious, 0.0);
    EXPECT_LE(p.p_malicious, 1.0);
  }
}

TEST(Forward, InferIsRepeatableAndDropoutIsSeeded) {
  const ModelConfig c;
  const Model<float> m(c);
  const auto s = test_support::random_sample(c.feature_shape(), 8, Label::kMalicious);
  const auto a = forward(m, s, Mode::kInfer);
  const auto b = forward(m, s, Mode::kInfer);
  EXPECT_EQ(a.p_malicious, b.p_malicious);
  const auto t1 = forward<float>(m, s, Mode::kTrain, nullptr, 77);
  const auto t2 = forward<float>(m, s, Mode::kTrain, nullptr, 77);
  EXPECT_EQ(t1.p_malicious, t2.p_malicious);
  ForwardCache<float> c1, c2;
  forward(m, s, Mode::kTrain, &c1, 77);
  forward(m, s, Mode::kTrain, &c2, 78);
  EXPECT_NE(c1.branch[0].mask, c2.branch[0].mask);
  for (int i = 0; i < c1.branch[0].mask.size(); ++i) {
    const float v = c1.branch[0].mask[i];
    EXPECT_TRUE(v == 0.0f || std::abs(v - 1.0f / 0.7f) < 1e-6f);
  }
}

TEST(Forward, Errors) {
  const ModelConfig c;
  Model<float> m(c);
  auto s = test_support::random_sample({.rows = 20, .cols = 32, .flow_size = 3}, 1, Label::kBenign);
  EXPECT_EQ(code_of([&] { forward(m, s, Mode::kInfer); }), ErrorCode::kShape);
  s = test_support::random_sample(c.feature_shape(), 1, Label::kBenign);
  m.params()[0].data[3] = std::numeric_limits<float>::quiet_NaN();
  try {
    forward(m, s, Mode::kInfer);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNumeric);
    EXPECT_NE(std::string(e.what()).find("er"), std::string::npos);
  }
}

TEST(Backward, LogitGradientIsSoftmaxMinusOneHot) {
  const ModelConfig c;
  const Model<double> m(c);
  for (Label label : {Label::kMalicious, Label::kBenign}) {
    const auto s = test_support::random_sample(c.feature_shape(), 21, label);
    ForwardCache<double> cache;
    forward(m, s, Mode::kTrain, &cache, 3);
    auto grads = m.params().zeros_like();
    const double loss = backward(m, cache, label, grads);
    const int hot = label == Label::kMalicious ? 0 : 1;
    EXPECT_NEAR(loss, -std::log(cache.probs[hot]), 1e-12);
    const auto& gb = grads[m.layout().out.bias].data;
    for (int k = 0; k < 2; ++k) EXPECT_NEAR(gb[k], cache.probs[k] - (k == hot ? 1.0 : 0.0), 1e-15);
    for (const auto& t : grads) {
      for (double v : t.data) EXPECT_TRUE(std::isfinite(v)) << t.name;
    }
  }
}

TEST(Backward, GradientCheck) {
  for (int kernels : {1, 2}) {
    for (bool deep : {false, true}) {
      Model<double> m(test_support::shrunken_config(kernels, deep));
      for (Label label : {Label::kMalicious, Label::kBenign}) {
        const auto s = test_support::random_sample(m.config().feature_shape(), 17, label);
        for (const auto& r : test_support::gradient_check(m, s)) {
          EXPECT_LT(r.max_rel, 1e-4) << r.name << " kernels=" << kernels << " deep=" << deep;
        }
      }
    }
  }
}

TEST(Classify, Threshold) {
  EXPECT_EQ(classify(0.7, 0.5), Label::kMalicious);
  EXPECT_EQ(classify(0.7, 0.7), Label::kBenign);
  EXPECT_EQ(classify(1.0, 1.0), Label::kBenign);
  EXPECT_EQ(classify(0.0, 0.0), Label::kBenign);
}

TEST(Checkpoint, InlineAndSidecarRoundTrip) {
  const ModelConfig c;
  Model<float> m(c);
  Rng rng(9);
  for (auto& t : m.params()) {
    for (float& v : t.data) v = static_cast<float>(uniform(rng, -0.3, 0.3));
  }
  CheckpointMeta meta{.epochs = 4, .best_epoch = 2, .train_loss = 0.1, .val_loss = 0.2, .val_f1 = 0.9, .seed = 5};
  const auto dir = std::filesystem::temp_directory_path() / "hstf_ckpt_test";
  std::filesystem::create_directories(dir);
  for (bool sidecar : {false, true}) {
    const auto path = dir / (sidecar ? "side.json" : "inline.json");
    save_checkpoint(path, m, meta, sidecar);
    EXPECT_EQ(std::filesystem::exists(dir / (path.filename().string() + ".bin")), sidecar);
    const auto loaded = load_checkpoint(path);
    EXPECT_EQ(loaded.model.config(), c);
    EXPECT_EQ(loaded.meta.best_epoch, 2);
    EXPECT_EQ(loaded.meta.seed, 5u);
    for (size_t i = 0; i < m.params().count(); ++i) EXPECT_EQ(loaded.model.params()[i].data, m.params()[i].data);
    for (uint64_t k = 0; k < 5; ++k) {
      const auto s = test_support::random_sample(c.feature_shape(), k, Label::kBenign);
      EXPECT_EQ(forward(m, s, Mode::kInfer).p_malicious, forward(loaded.model, s, Mode::kInfer).p_malicious);
    }
  }
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, RejectsDamage) {
  const Model<float> m(ModelConfig{});
  auto doc = checkpoint_to_json(m, {});
  auto bad_schema = doc;
  bad_schema["version"] = "other";
  EXPECT_EQ(code_of([&] { checkpoint_from_json(bad_schema); }), ErrorCode::kCheckpoint);
  auto bad_shape = doc;
  bad_shape["params"]["head.weight"]["shape"] = {64, 95};
  EXPECT_EQ(code_of([&] { checkpoint_from_json(bad_shape); }), ErrorCode::kCheckpoint);
  auto missing = doc;
  missing["params"].erase("out.bias");
  EXPECT_EQ(code_of([&] { checkpoint_from_json(missing); }), ErrorCode::kCheckpoint);
  EXPECT_EQ(code_of([] { load_checkpoint("/nonexistent/model.json"); }), ErrorCode::kCheckpoint);
}

TEST(Training, ZeroLearningRateKeepsParameters) {
  const auto data = synth_samples(20, 1);
  ModelConfig mc;
  mc.lr = 0;
  TrainConfig tc;
  tc.batch_size = 8;
  Trainer tr(mc, tc);
  const auto before = tr.model().params();
  const auto idx = iota(0, data.size());
  for (int e = 0; e < 2; ++e) tr.train_epoch(data, idx, e);
  EXPECT_EQ(tr.steps(), 10);
  for (size_t i = 0; i < before.count(); ++i) EXPECT_EQ(tr.model().params()[i].data, before[i].data);
}

TEST(Training, DeterministicAcrossThreadCounts) {
  const auto data = synth_samples(24, 2);
  const auto idx = iota(0, data.size());
  std::vector<ParamSet<float>> results;
  for (int threads : {1, 3, 1}) {
    TrainConfig tc;
    tc.batch_size = 16;
    tc.threads = threads;
    Trainer tr(ModelConfig{}, tc);
    tr.train_epoch(data, idx, 0);
    tr.train_epoch(data, idx, 1);
    results.push_back(tr.model().params());
  }
  for (size_t r = 1; r < results.size(); ++r) {
    for (size_t i = 0; i < results[0].count(); ++i) EXPECT_EQ(results[r][i].data, results[0][i].data);
  }
}

TEST(Training, SeparableToySetReachesPerfectF1) {
  const auto data = synth_samples(100, 12);
  std::vector<size_t> train_idx, val_idx;
  for (size_t i = 0; i < data.size(); ++i) (i % 5 == 0 ? val_idx : train_idx).push_back(i);
  TrainConfig tc;
  tc.max_epochs = 50;
  std::vector<EpochRecord> seen;
  const auto result = train(ModelConfig{}, tc, data, train_idx, val_idx,
                            [&](const EpochRecord& r) { seen.push_back(r); });
  EXPECT_EQ(result.meta.val_f1, 1.0);
  EXPECT_EQ(seen.size(), result.history.size());
  EXPECT_LE(result.history.size(), 50u);
  const auto eval = evaluate(result.model, data, val_idx);
  EXPECT_EQ(eval.f1, 1.0);

  const auto again = train(ModelConfig{}, tc, data, train_idx, val_idx);
  ASSERT_EQ(again.history.size(), result.history.size());
  for (size_t i = 0; i < again.history.size(); ++i) EXPECT_EQ(again.history[i].loss, result.history[i].loss);
  EXPECT_EQ(checkpoint_to_json(again.model, again.meta), checkpoint_to_json(result.model, result.meta));
}

TEST(Training, EmptySplitIsAnError) {
  const auto data = synth_samples(4, 3);
  const std::vector<size_t> none;
  const auto some = iota(0, data.size());
  EXPECT_EQ(code_of([&] { train(ModelConfig{}, TrainConfig{}, data, none, some); }), ErrorCode::kData);
  EXPECT_EQ(code_of([&] { train(ModelConfig{}, TrainConfig{}, data, some, none); }), ErrorCode::kData);
}
