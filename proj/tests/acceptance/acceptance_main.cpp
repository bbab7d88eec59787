// Acceptance suite: one check per criterion, one result line each.
//
//   hstf_acceptance                 run every criterion
//   hstf_acceptance --criterion 6   run one
//
// Criterion 11 replays a user-supplied corpus when HSTF_REPLAY_CORPUS names a
// labeled sample file; otherwise it runs the same grid on a small synthetic
// stand-in so the comparison path is still exercised.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "hstf/cli/commands.hpp"
#include "hstf/common/codec.hpp"
#include "hstf/common/logging.hpp"
#include "hstf/common/rng.hpp"
#include "hstf/eval/corpus.hpp"
#include "hstf/eval/experiment.hpp"
#include "hstf/eval/metrics.hpp"
#include "hstf/eval/timing.hpp"
#include "hstf/features/extract.hpp"
#include "hstf/features/sample_io.hpp"
#include "hstf/net/checkpoint.hpp"
#include "hstf/net/model.hpp"
#include "hstf/synth/generator.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

namespace fs = std::filesystem;
using namespace hstf;
using features::Label;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("hstf_acceptance_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// --- 1 ----------------------------------------------------------------------

Outcome feature_oracle() {
  const auto t0 = Clock::now();
  synth::CorpusSpec spec{.malicious = 500, .benign = 500, .separability = synth::Separability::kLow, .seed = 2024};
  const features::FeatureConfig cfg;
  size_t flows = 0, mismatched = 0;
  synth::for_each_flow(spec, [&](ingest::Flow&& f) {
    ++flows;
    const auto fast = features::flow_to_sample(f, cfg);
    if (!fast || !(*fast == oracle::extract(f, cfg.rows, cfg.cols, cfg.flow_size))) ++mismatched;
  });
  const double secs = seconds_since(t0);
  return {flows == 1000 && mismatched == 0 && secs < 30.0,
          fmt("%zu flows, %zu mismatched, %.1fs (limit 30s)", flows, mismatched, secs)};
}

// --- 2 ----------------------------------------------------------------------

Outcome shapes() {
  const net::ModelConfig c;
  const features::FeatureConfig fc;
  const auto sample = test_support::random_sample(c.feature_shape(), 1, Label::kBenign);
  const net::Model<float> m(c);
  net::ForwardCache<float> cache;
  net::forward(m, sample, net::Mode::kInfer, &cache);
  const auto& pc = cache.branch[0].packets[0];
  const bool ok = features::kPlWidth == 41 && features::kFlRequestWidth == 57 && features::kFlResponseWidth == 58 &&
                  fc.rows == 20 && fc.cols == 40 && c.conv_out_h() == 10 && c.conv_out_w() == 17 &&
                  c.conv_kernels == 2 && c.pool_out_h() == 9 && c.pool_out_w() == 16 && c.conv_flat() == 288 &&
                  c.fused_width() == 96 && pc.conv.size() == 2u * 10 * 17 && pc.pooled.size() == 288 &&
                  cache.fused.size() == 96 && sample.req_fl.size() == 57 && sample.res_fl.size() == 58;
  return {ok, fmt("PL %zu, FL %zu/%zu, matrix %dx%d, conv %dx%dx%d, pool %dx%dx%d, flat %d, fused %d",
                  features::kPlWidth, features::kFlRequestWidth, features::kFlResponseWidth, fc.rows, fc.cols,
                  c.conv_out_h(), c.conv_out_w(), c.conv_kernels, c.pool_out_h(), c.pool_out_w(),
                  c.conv_kernels, c.conv_flat(), c.fused_width())};
}

// --- 3 ----------------------------------------------------------------------

Outcome normalization() {
  bool zero = features::normalize_stat(0.0) == 0.0;
  double worst = 0.0;
  for (int i = -5000; i <= 5000; ++i) {
    const double x = i * 0.01;
    worst = std::max(worst, std::abs(features::normalize_stat(x) - std::tanh(x / 2)));
  }
  int bad_bytes = 0;
  for (int b = 0; b < 256; ++b) {
    if (features::scale_byte(static_cast<uint8_t>(b)) != static_cast<float>(b % 128) / 128.0f) ++bad_bytes;
  }
  return {zero && worst <= 1e-12 && bad_bytes == 0,
          fmt("f(0)=0 %s, max |f(x)-tanh(x/2)| %.2e on 10001 points in [-50,50], %d byte mismatches",
              zero ? "yes" : "no", worst, bad_bytes)};
}

// --- 4 ----------------------------------------------------------------------

Outcome gradient_check() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string worst_name;
  size_t arrays = 0;
  for (int kernels : {1, 2}) {
    for (bool deep : {false, true}) {
      net::Model<double> m(test_support::shrunken_config(kernels, deep));
      for (Label label : {Label::kMalicious, Label::kBenign}) {
        for (uint64_t seed : {17u, 23u}) {
          const auto s = test_support::random_sample(m.config().feature_shape(), seed, label);
          for (const auto& r : test_support::gradient_check(m, s)) {
            ++arrays;
            if (r.max_rel > worst) {
              worst = r.max_rel;
              worst_name = r.name;
            }
          }
        }
      }
    }
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 120.0,
          fmt("%zu array checks, max relative error %.2e (%s), %.1fs", arrays, worst, worst_name.c_str(), secs)};
}

// --- 5 ----------------------------------------------------------------------

Outcome metric_identities() {
  const double f1 = 100.0 * eval::f_beta(0.9966, 0.9928);
  const bool row_ok = std::abs(f1 - 99.47) <= 0.01;

  const auto dir = scratch("c5");
  eval::write_synthetic_samples({.malicious = 300, .benign = 300, .separability = synth::Separability::kMedium, .seed = 5},
                                {}, dir / "pool.bin");
  const features::BinarySampleFile pool(dir / "pool.bin");
  eval::ExperimentConfig cfg;
  cfg.scenario.repeats = 3;
  cfg.scenario.test_per_class = 50;
  cfg.train.max_epochs = 4;
  cfg.train.threads = net::resolve_threads(0);
  const auto report = eval::run_experiment(pool, nullptr, cfg);
  double worst_identity = 0.0;
  size_t checked = 0;
  for (const auto& r : report.repeats) {
    if (!r.fpr_identity_residual) continue;
    ++checked;
    worst_identity = std::max(worst_identity, *r.fpr_identity_residual);
  }
  const auto& r0 = report.repeats[0];
  std::vector<bool> pos;
  for (auto l : r0.labels) pos.push_back(l == Label::kMalicious);
  const double auc_gap = std::abs(r0.auc - oracle::pairwise_auc(r0.scores, pos));
  fs::remove_all(dir);
  const bool ok = row_ok && checked == report.repeats.size() && worst_identity <= 1e-9 &&
                  r0.scores.size() == 100 && auc_gap <= 1e-9;
  return {ok, fmt("F1 from P 99.66 R 99.28 = %.4f; FPR identity max residual %.1e over %zu 1:1 repeats; "
                  "AUC %.6f vs pairwise oracle gap %.1e on %zu samples",
                  f1, worst_identity, checked, r0.auc, auc_gap, r0.scores.size())};
}

// --- 6 and 7 ------------------------------------------------------------------

struct RunSummary {
  eval::ExperimentReport report;
  double seconds = 0.0;
};

RunSummary synthetic_run(const std::string& tag, size_t mal, size_t ben, eval::Scenario sc) {
  const auto dir = scratch(tag);
  const auto t0 = Clock::now();
  eval::write_synthetic_samples({.malicious = mal, .benign = ben, .seed = 42}, sc.shape(), dir / "pool.bin");
  const features::BinarySampleFile pool(dir / "pool.bin");
  eval::ExperimentConfig cfg;
  cfg.scenario = sc;
  cfg.train.threads = net::resolve_threads(0);
  RunSummary out;
  out.report = eval::run_experiment(pool, nullptr, cfg, [&](const eval::RepeatResult& r) {
    std::cout << fmt("  %s repeat %d: train %zu val %zu test %zu, P %.4f R %.4f F1 %.4f FPR %.4f, epochs %d\n",
                     tag.c_str(), r.repeat, r.n_train, r.n_val, r.n_test, r.metrics.precision, r.metrics.recall,
                     r.metrics.f_beta, r.metrics.fpr, r.epochs)
              << std::flush;
  });
  out.seconds = seconds_since(t0);
  fs::remove_all(dir);
  return out;
}

Outcome end_to_end() {
  eval::Scenario sc;
  sc.name = "separability-1to1";
  sc.repeats = 3;
  const auto run = synthetic_run("c6", 1000, 1000, sc);
  const double f1 = run.report.mean.f_beta;
  return {f1 >= 0.99 && run.seconds < 600.0,
          fmt("mean F1 %.4f over %zu repeats (need >= 0.99), %.0fs on %d core(s) (limit 600s)", f1,
              run.report.repeats.size(), run.seconds, net::resolve_threads(0))};
}

Outcome imbalance() {
  eval::Scenario sc;
  sc.name = "robustness-1to100";
  sc.ratio_ben = 100;
  sc.train_malicious = 100;
  sc.test_per_class = 100;
  sc.repeats = 3;
  const auto run = synthetic_run("c7", 200, 10100, sc);
  const auto& m = run.report.mean;
  return {m.f_beta >= 0.95 && m.fpr <= 0.01 && run.seconds < 1800.0,
          fmt("train 100:10000, test 100+100, %zu repeats: mean F1 %.4f (need >= 0.95), FPR %.4f (need <= 0.01), %.0fs",
              run.report.repeats.size(), m.f_beta, m.fpr, run.seconds)};
}

// --- 8 ----------------------------------------------------------------------

Outcome complexity() {
  eval::TimingConfig tc;
  tc.sizes = {500, 1000, 2000, 4000, 8000};
  tc.epochs = 2;
  tc.work_dir = scratch("c8");
  const auto rows = eval::timing_benchmark(tc);
  std::map<size_t, eval::TimingRow> by_n;
  for (const auto& r : rows) {
    by_n[r.n] = r;
    std::cout << fmt("  N %5zu: %.3f s/epoch, peak RSS %ld KiB\n", r.n, r.seconds_per_epoch, r.peak_rss_kb);
  }
  bool ok = true;
  std::string ratios;
  for (size_t n : {500, 1000, 2000}) {
    const double ratio = by_n[2 * n].seconds_per_epoch / by_n[n].seconds_per_epoch;
    ok = ok && ratio <= 2.5;
    ratios += fmt("%s%zu->%zu %.2f", ratios.empty() ? "" : ", ", n, 2 * n, ratio);
  }
  long lo = by_n.begin()->second.peak_rss_kb, hi = lo;
  for (const auto& [n, r] : by_n) {
    lo = std::min(lo, r.peak_rss_kb);
    hi = std::max(hi, r.peak_rss_kb);
  }
  const double spread = static_cast<double>(hi - lo) / static_cast<double>(lo);
  ok = ok && spread <= 0.15;

  const auto probe = eval::batch_memory_probe(tc, 1000, {64, 512});
  const bool grows = probe.size() == 2 && probe[1].peak_rss_kb > probe[0].peak_rss_kb;
  ok = ok && grows;
  fs::remove_all(tc.work_dir);
  return {ok, fmt("time ratios %s (limit 2.5); peak RSS spread %.1f%% across N=500..8000 (limit 15%%); "
                  "batch 64 -> 512 RSS %ld -> %ld KiB",
                  ratios.c_str(), 100 * spread, probe.empty() ? 0L : probe[0].peak_rss_kb,
                  probe.size() < 2 ? 0L : probe[1].peak_rss_kb)};
}

// --- 9 ----------------------------------------------------------------------

Outcome determinism() {
  const auto dir = scratch("c9");
  std::ostringstream sink;
  cli::SynthOptions so;
  so.output = (dir / "corpus.jsonl").string();
  so.malicious = 150;
  so.benign = 150;
  cli::run_synth(so, sink);

  std::vector<std::string> sample_hashes, ckpt_hashes, history_hashes;
  for (int round = 0; round < 2; ++round) {
    const std::string tag = std::to_string(round);
    cli::ExtractOptions eo;
    eo.input = so.output;
    eo.labels = (dir / "corpus.labels.csv").string();
    eo.output = (dir / ("samples" + tag + ".bin")).string();
    cli::run_extract(eo, sink);
    sample_hashes.push_back(sha256_file_hex(eo.output) + sha256_file_hex(dir / ("samples" + tag + ".flows.jsonl")));

    cli::TrainOptions to;
    to.input = (dir / "samples0.bin").string();
    to.output = (dir / ("model" + tag + ".json")).string();
    to.epochs = 4;
    cli::run_train(to, sink);
    ckpt_hashes.push_back(sha256_file_hex(to.output));
    history_hashes.push_back(sha256_file_hex(dir / ("model" + tag + ".history.csv")));
  }
  fs::remove_all(dir);
  const bool ok = sample_hashes[0] == sample_hashes[1] && ckpt_hashes[0] == ckpt_hashes[1] &&
                  history_hashes[0] == history_hashes[1];
  return {ok, fmt("extract outputs %s, checkpoints %s (sha256 %.16s...), histories %s",
                  sample_hashes[0] == sample_hashes[1] ? "identical" : "DIFFER",
                  ckpt_hashes[0] == ckpt_hashes[1] ? "identical" : "DIFFER", ckpt_hashes[0].c_str(),
                  history_hashes[0] == history_hashes[1] ? "identical" : "DIFFER")};
}

// --- 10 ---------------------------------------------------------------------

Outcome checkpoint_round_trip() {
  const auto dir = scratch("c10");
  const net::ModelConfig c;
  net::Model<float> m(c);
  Rng rng(10);
  for (auto& t : m.params()) {
    for (float& v : t.data) v = static_cast<float>(uniform(rng, -0.5, 0.5));
  }
  std::vector<features::FlowSample> samples;
  std::vector<double> before;
  for (uint64_t i = 0; i < 100; ++i) {
    samples.push_back(test_support::random_sample(c.feature_shape(), 1000 + i, Label::kBenign));
    const auto p = net::forward(m, samples.back(), net::Mode::kInfer);
    before.push_back(p.p_malicious);
    before.push_back(p.p_benign);
  }
  size_t differing = 0;
  for (bool sidecar : {false, true}) {
    const auto path = dir / (sidecar ? "sidecar.json" : "inline.json");
    net::save_checkpoint(path, m, {}, sidecar);
    const auto loaded = net::load_checkpoint(path);
    for (size_t i = 0; i < samples.size(); ++i) {
      const auto p = net::forward(loaded.model, samples[i], net::Mode::kInfer);
      differing += p.p_malicious != before[2 * i];
      differing += p.p_benign != before[2 * i + 1];
    }
  }
  fs::remove_all(dir);
  return {differing == 0, fmt("100 samples x {inline, sidecar}: %zu outputs differ bitwise", differing)};
}

// --- 11 ---------------------------------------------------------------------

Outcome corpus_replay() {
  const char* env = std::getenv("HSTF_REPLAY_CORPUS");
  const bool replay = env != nullptr && *env != '\0';
  fs::path dir;
  std::unique_ptr<features::SampleSource> pool;
  eval::ExperimentConfig base;
  eval::PresetOverrides ov;
  base.train.threads = net::resolve_threads(0);
  if (replay) {
    pool = features::open_samples(env);
  } else {
    dir = scratch("c11");
    eval::write_synthetic_samples({.malicious = 40, .benign = 2600, .seed = 11}, {}, dir / "pool.bin");
    pool = features::open_samples(dir / "pool.bin");
    ov.repeats = 1;
    ov.max_epochs = 3;
  }
  const auto grid = eval::run_preset(eval::find_preset("paper-robustness"), *pool, nullptr, base, ov);
  std::ostringstream table;
  eval::print_comparison(table, grid);
  std::cout << table.str();
  if (!dir.empty()) fs::remove_all(dir);
  const auto rows = grid.comparison();
  size_t with_published = 0;
  for (const auto& r : rows) with_published += !r["published"].is_null();
  return {rows.size() == 8 && with_published == 8,
          fmt("%s: %zu scenarios compared against %zu published rows (informational, no tolerance)",
              replay ? "replayed user corpus" : "synthetic stand-in (set HSTF_REPLAY_CORPUS to replay)",
              rows.size(), with_published)};
}

struct Criterion {
  int id;
  const char* title;
  std::function<Outcome()> run;
};

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all{
      {1, "feature extraction matches brute-force oracle", feature_oracle},
      {2, "shape suite", shapes},
      {3, "normalization identities", normalization},
      {4, "gradient check", gradient_check},
      {5, "metric identities", metric_identities},
      {6, "end-to-end separability", end_to_end},
      {7, "imbalance robustness at 1:100", imbalance},
      {8, "complexity properties", complexity},
      {9, "determinism of train and extract", determinism},
      {10, "checkpoint round trip", checkpoint_round_trip},
      {11, "corpus replay comparison", corpus_replay},
  };
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  init_logging();
  CLI::App app{"Acceptance criteria"};
  std::vector<int> selected;
  app.add_option("--criterion", selected, "Criterion number(s) to run; all when omitted")->check(CLI::Range(1, 11));
  CLI11_PARSE(app, argc, argv);

  int failures = 0;
  for (const auto& c : criteria()) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), c.id) == selected.end()) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << "criterion " << c.id << " [" << (o.pass ? "PASS" : "FAIL") << "] " << c.title << ": " << o.detail
              << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
