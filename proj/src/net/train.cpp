#include "hstf/net/train.hpp"

#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <exception>
#include <thread>

#include "hstf/common/error.hpp"
#include "hstf/common/rng.hpp"

namespace hstf::net {

namespace {

// Gradient shards per minibatch. Fixed so that the summation order, and hence
// every parameter bit, is the same for any thread count.
constexpr int kShards = 4;

/// Runs fn(0..n-1) on up to `threads` workers; rethrows the first failure.
template <typename Fn>
void parallel_for(int n, int threads, Fn&& fn) {
  const int workers = std::max(1, std::min(threads, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(static_cast<size_t>(workers));
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[static_cast<size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

features::Label require_label(const features::SampleSource& data, size_t idx) {
  const auto label = data.label(idx);
  if (label == features::Label::kUnlabeled) {
    throw Error(ErrorCode::kData, "sample " + std::to_string(data.id(idx)) + " is unlabeled");
  }
  return label;
}

struct Scored {
  double p = 0.0;
  double loss = 0.0;
};

std::vector<Scored> score(const Model<float>& model, const features::SampleSource& data,
                          std::span<const size_t> indices, int threads, bool with_loss) {
  std::vector<Scored> out(indices.size());
  const int chunks = static_cast<int>(std::min<size_t>(indices.size(), 64));
  parallel_for(chunks, resolve_threads(threads), [&](int c) {
    const size_t lo = indices.size() * static_cast<size_t>(c) / static_cast<size_t>(chunks);
    const size_t hi = indices.size() * static_cast<size_t>(c + 1) / static_cast<size_t>(chunks);
    ForwardCache<float> fc;
    for (size_t k = lo; k < hi; ++k) {
      const auto sample = data.get(indices[k]);
      const auto pred = forward(model, sample, Mode::kInfer, with_loss ? &fc : nullptr);
      out[k].p = pred.p_malicious;
      if (with_loss) out[k].loss = static_cast<double>(cross_entropy(fc, require_label(data, indices[k])));
    }
  });
  return out;
}

}  // namespace

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

Trainer::Trainer(const ModelConfig& model_config, const TrainConfig& config)
    : model_config_(model_config), config_(config), model_(model_config) {
  if (config_.batch_size < 1) throw Error(ErrorCode::kConfig, "batch size must be positive");
  if (config_.max_epochs < 1) throw Error(ErrorCode::kConfig, "max epochs must be positive");
  if (config_.patience < 1) throw Error(ErrorCode::kConfig, "patience must be positive");
  m_ = model_.params().zeros_like();
  v_ = model_.params().zeros_like();
}

void Trainer::apply_adam(const ParamSet<float>& grads) {
  ++steps_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, steps_);
  const double c2 = 1.0 - std::pow(b2, steps_);
  const double lr = model_config_.lr;
  auto& params = model_.params();
  for (size_t t = 0; t < params.count(); ++t) {
    float* p = params.data(t);
    float* m = m_.data(t);
    float* v = v_.data(t);
    const float* g = grads.data(t);
    for (size_t k = 0; k < params[t].size(); ++k) {
      const double gk = g[k];
      const double mk = b1 * m[k] + (1.0 - b1) * gk;
      const double vk = b2 * v[k] + (1.0 - b2) * gk * gk;
      m[k] = static_cast<float>(mk);
      v[k] = static_cast<float>(vk);
      const double step = lr * (mk / c1) / (std::sqrt(vk / c2) + config_.epsilon);
      p[k] = static_cast<float>(static_cast<double>(p[k]) - step);
    }
  }
}

EpochStats Trainer::train_epoch(const features::SampleSource& data, std::span<const size_t> indices,
                                int epoch) {
  if (indices.empty()) throw Error(ErrorCode::kData, "training split is empty");
  model_config_.check_shape(data.shape());

  std::vector<size_t> order(indices.begin(), indices.end());
  Rng rng(derive_seed(config_.seed, static_cast<uint64_t>(epoch), 0x5348u));
  shuffle(order, rng);

  std::vector<ParamSet<float>> shard_grads;
  for (int s = 0; s < kShards; ++s) shard_grads.push_back(model_.params().zeros_like());
  std::vector<double> shard_loss(kShards);
  std::vector<size_t> shard_correct(kShards);
  ParamSet<float> total = model_.params().zeros_like();

  double loss_sum = 0.0;
  size_t correct = 0;
  const int threads = resolve_threads(config_.threads);
  const auto bs = static_cast<size_t>(config_.batch_size);
  std::vector<features::FlowSample> batch;
  batch.reserve(bs);
  std::vector<features::Label> labels(bs);

  for (size_t b0 = 0; b0 < order.size(); b0 += bs) {
    const size_t b1 = std::min(order.size(), b0 + bs);
    const size_t n = b1 - b0;
    // The whole minibatch is resident at once, so memory follows the batch
    // size and not the dataset size.
    batch.clear();
    for (size_t pos = b0; pos < b1; ++pos) {
      labels[pos - b0] = require_label(data, order[pos]);
      batch.push_back(data.get(order[pos]));
    }
    parallel_for(kShards, threads, [&](int s) {
      auto& grads = shard_grads[static_cast<size_t>(s)];
      grads.fill_zero();
      double loss = 0.0;
      size_t ok = 0;
      ForwardCache<float> fc;
      const size_t lo = b0 + n * static_cast<size_t>(s) / kShards;
      const size_t hi = b0 + n * static_cast<size_t>(s + 1) / kShards;
      for (size_t pos = lo; pos < hi; ++pos) {
        const auto label = labels[pos - b0];
        const auto pred = forward(model_, batch[pos - b0], Mode::kTrain, &fc,
                                  derive_seed(config_.seed, static_cast<uint64_t>(epoch), pos));
        loss += static_cast<double>(backward(model_, fc, label, grads));
        const bool said_mal = pred.p_malicious > 0.5;
        if (said_mal == (label == features::Label::kMalicious)) ++ok;
      }
      shard_loss[static_cast<size_t>(s)] = loss;
      shard_correct[static_cast<size_t>(s)] = ok;
    });

    total.fill_zero();
    double batch_loss = 0.0;
    for (int s = 0; s < kShards; ++s) {
      total.accumulate(shard_grads[static_cast<size_t>(s)]);
      batch_loss += shard_loss[static_cast<size_t>(s)];
      correct += shard_correct[static_cast<size_t>(s)];
    }
    if (!std::isfinite(batch_loss)) {
      throw Error(ErrorCode::kNumeric, "training diverged at epoch " + std::to_string(epoch) +
                                           ": loss is not finite");
    }
    loss_sum += batch_loss;
    total.scale(1.0f / static_cast<float>(n));
    apply_adam(total);
  }
  return EpochStats{loss_sum / static_cast<double>(order.size()),
                    static_cast<double>(correct) / static_cast<double>(order.size())};
}

std::vector<double> predict_scores(const Model<float>& model, const features::SampleSource& data,
                                   std::span<const size_t> indices, int threads) {
  model.config().check_shape(data.shape());
  const auto scored = score(model, data, indices, threads, false);
  std::vector<double> out;
  out.reserve(scored.size());
  for (const auto& s : scored) out.push_back(s.p);
  return out;
}

Evaluation evaluate(const Model<float>& model, const features::SampleSource& data,
                    std::span<const size_t> indices, int threads) {
  if (indices.empty()) throw Error(ErrorCode::kData, "validation split is empty");
  model.config().check_shape(data.shape());
  const auto scored = score(model, data, indices, threads, true);
  size_t tp = 0, fp = 0, tn = 0, fn = 0;
  double loss = 0.0;
  for (size_t k = 0; k < indices.size(); ++k) {
    const bool mal = data.label(indices[k]) == features::Label::kMalicious;
    const bool said = classify(scored[k].p, 0.5) == features::Label::kMalicious;
    loss += scored[k].loss;
    if (mal && said) ++tp;
    else if (mal) ++fn;
    else if (said) ++fp;
    else ++tn;
  }
  Evaluation e;
  const double n = static_cast<double>(indices.size());
  e.loss = loss / n;
  e.acc = static_cast<double>(tp + tn) / n;
  e.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  e.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  e.f1 = e.precision + e.recall > 0 ? 2.0 * e.precision * e.recall / (e.precision + e.recall) : 0.0;
  return e;
}

TrainResult train(const ModelConfig& model_config, const TrainConfig& config,
                  const features::SampleSource& data, std::span<const size_t> train_indices,
                  std::span<const size_t> val_indices,
                  const std::function<void(const EpochRecord&)>& on_epoch) {
  if (train_indices.empty()) throw Error(ErrorCode::kData, "training split is empty");
  if (val_indices.empty()) throw Error(ErrorCode::kData, "validation split is empty");
  model_config.check_shape(data.shape());

  Trainer trainer(model_config, config);
  TrainResult result{trainer.model(), {}, {}};
  ParamSet<float> best = trainer.model().params();
  int best_epoch = 0;
  double best_f1 = -1.0, best_loss = 0.0;
  int since_improved = 0;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto stats = trainer.train_epoch(data, train_indices, epoch);
    const auto val = evaluate(trainer.model(), data, val_indices, config.threads);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = stats.loss;
    rec.acc = stats.acc;
    rec.val_loss = val.loss;
    rec.val_acc = val.acc;
    rec.val_precision = val.precision;
    rec.val_recall = val.recall;
    rec.val_f1 = val.f1;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(rec);
    spdlog::info("epoch {} loss {:.5f} acc {:.4f} val_loss {:.5f} val_f1 {:.4f} ({:.1f}s)", epoch,
                 rec.loss, rec.acc, rec.val_loss, rec.val_f1, rec.seconds);
    if (on_epoch) on_epoch(rec);

    const bool better_f1 = val.f1 > best_f1;
    if (better_f1 || (val.f1 == best_f1 && val.loss < best_loss)) {
      best = trainer.model().params();
      best_epoch = epoch;
      best_f1 = val.f1;
      best_loss = val.loss;
    }
    since_improved = better_f1 ? 0 : since_improved + 1;
    if (since_improved >= config.patience) break;
  }

  result.model.params() = best;
  result.meta.epochs = static_cast<int>(result.history.size());
  result.meta.best_epoch = best_epoch;
  result.meta.train_loss = result.history[static_cast<size_t>(best_epoch - 1)].loss;
  result.meta.val_loss = best_loss;
  result.meta.val_f1 = best_f1;
  result.meta.seed = config.seed;
  return result;
}

}  // namespace hstf::net
