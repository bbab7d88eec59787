#include "hstf/eval/scenario.hpp"

#include <algorithm>
#include <cmath>

#include "hstf/common/error.hpp"
#include "hstf/common/rng.hpp"

namespace hstf::eval {

using features::Label;

void Scenario::validate() const {
  if (ratio_mal < 1 || ratio_ben < 1) throw Error(ErrorCode::kConfig, "scenario ratios must be positive");
  if (repeats < 1) throw Error(ErrorCode::kConfig, "scenario needs at least one repeat");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw Error(ErrorCode::kConfig, "val_fraction must be in (0, 1)");
  shape().validate();
}

features::FeatureConfig Scenario::shape() const {
  features::FeatureConfig f;
  f.rows = rows;
  f.cols = cols;
  f.flow_size = flow_size;
  return f;
}

nlohmann::json Scenario::to_json() const {
  return nlohmann::json{{"name", name},
                        {"ratio_mal", ratio_mal},
                        {"ratio_ben", ratio_ben},
                        {"rows", rows},
                        {"cols", cols},
                        {"flow_size", flow_size},
                        {"repeats", repeats},
                        {"seed", seed},
                        {"test_per_class", test_per_class},
                        {"train_malicious", train_malicious},
                        {"val_fraction", val_fraction}};
}

namespace {

struct ByClass {
  std::vector<size_t> mal;
  std::vector<size_t> ben;
};

ByClass partition(const features::SampleSource& pool) {
  ByClass out;
  for (size_t i = 0; i < pool.size(); ++i) {
    const auto l = pool.label(i);
    if (l == Label::kMalicious) out.mal.push_back(i);
    else if (l == Label::kBenign) out.ben.push_back(i);
  }
  return out;
}

[[noreturn]] void short_pool(const std::string& what, size_t need, size_t have) {
  throw Error(ErrorCode::kData, "pool too small: " + what + " requires " + std::to_string(need) +
                                    " samples, " + std::to_string(have) + " available");
}

size_t share(size_t n, double fraction) {
  if (n < 2) return 0;
  return std::clamp<size_t>(static_cast<size_t>(std::llround(static_cast<double>(n) * fraction)), 1, n - 1);
}

}  // namespace

Split build_split(const features::SampleSource& pool, const Scenario& sc, int repeat,
                  const features::SampleSource* test_pool) {
  sc.validate();
  Split split;
  split.repeat = repeat;
  split.seed = sc.seed + static_cast<uint64_t>(repeat);
  Rng rng(split.seed);

  ByClass p = partition(pool);
  shuffle(p.mal, rng);
  shuffle(p.ben, rng);
  size_t mal_used = 0, ben_used = 0;

  if (test_pool != nullptr) {
    ByClass t = partition(*test_pool);
    shuffle(t.mal, rng);
    shuffle(t.ben, rng);
    const size_t per = sc.test_per_class > 0 ? sc.test_per_class : std::min(t.mal.size(), t.ben.size());
    if (per == 0 || t.mal.size() < per) short_pool("malicious test set", std::max<size_t>(per, 1), t.mal.size());
    if (t.ben.size() < per) short_pool("benign test set", per, t.ben.size());
    split.test.assign(t.mal.begin(), t.mal.begin() + static_cast<std::ptrdiff_t>(per));
    split.test.insert(split.test.end(), t.ben.begin(), t.ben.begin() + static_cast<std::ptrdiff_t>(per));
  } else {
    const size_t smaller = std::min(p.mal.size(), p.ben.size());
    const size_t per = sc.test_per_class > 0 ? sc.test_per_class : smaller / 5;
    if (per == 0 || p.mal.size() < per) short_pool("malicious test set", std::max<size_t>(per, 1), p.mal.size());
    if (p.ben.size() < per) short_pool("benign test set", per, p.ben.size());
    split.test.assign(p.mal.begin(), p.mal.begin() + static_cast<std::ptrdiff_t>(per));
    split.test.insert(split.test.end(), p.ben.begin(), p.ben.begin() + static_cast<std::ptrdiff_t>(per));
    mal_used = ben_used = per;
  }

  const size_t mal_left = p.mal.size() - mal_used;
  const size_t ben_left = p.ben.size() - ben_used;
  const auto rm = static_cast<size_t>(sc.ratio_mal);
  const auto rb = static_cast<size_t>(sc.ratio_ben);
  size_t n_mal = sc.train_malicious;
  if (n_mal == 0) n_mal = std::min(mal_left, ben_left * rm / rb);
  const size_t n_ben = (n_mal * rb + rm / 2) / rm;
  if (n_mal < 2 || n_mal > mal_left) {
    short_pool("malicious training set at " + std::to_string(rm) + ":" + std::to_string(rb),
               std::max<size_t>(n_mal, 2), mal_left);
  }
  if (n_ben < 2 || n_ben > ben_left) {
    short_pool("benign training set at " + std::to_string(rm) + ":" + std::to_string(rb),
               std::max<size_t>(n_ben, 2), ben_left);
  }

  const auto mal_begin = p.mal.begin() + static_cast<std::ptrdiff_t>(mal_used);
  const auto ben_begin = p.ben.begin() + static_cast<std::ptrdiff_t>(ben_used);
  const size_t v_mal = share(n_mal, sc.val_fraction);
  const size_t v_ben = share(n_ben, sc.val_fraction);
  split.val.assign(mal_begin, mal_begin + static_cast<std::ptrdiff_t>(v_mal));
  split.val.insert(split.val.end(), ben_begin, ben_begin + static_cast<std::ptrdiff_t>(v_ben));
  split.train.assign(mal_begin + static_cast<std::ptrdiff_t>(v_mal), mal_begin + static_cast<std::ptrdiff_t>(n_mal));
  split.train.insert(split.train.end(), ben_begin + static_cast<std::ptrdiff_t>(v_ben),
                     ben_begin + static_cast<std::ptrdiff_t>(n_ben));
  return split;
}

std::vector<Split> build_scenario(const features::SampleSource& pool, const Scenario& sc,
                                  const features::SampleSource* test_pool) {
  std::vector<Split> out;
  for (int r = 0; r < sc.repeats; ++r) out.push_back(build_split(pool, sc, r, test_pool));
  return out;
}

}  // namespace hstf::eval
