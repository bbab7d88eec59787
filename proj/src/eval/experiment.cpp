#include "hstf/eval/experiment.hpp"

#include <spdlog/spdlog.h>

#include <array>
#include <cmath>
#include <cstdio>

#include "hstf/common/codec.hpp"
#include "hstf/common/error.hpp"

namespace hstf::eval {

using nlohmann::json;

namespace {

json train_config_json(const net::TrainConfig& t) {
  return json{{"batch_size", t.batch_size}, {"max_epochs", t.max_epochs}, {"patience", t.patience},
              {"beta1", t.beta1},           {"beta2", t.beta2},           {"epsilon", t.epsilon},
              {"seed", t.seed}};
}

json counts_json(const ConfusionCounts& c) {
  return json{{"tp", c.tp}, {"fp", c.fp}, {"tn", c.tn}, {"fn", c.fn}};
}

json metrics_json(const PointMetrics& m) {
  return json{{"precision", m.precision}, {"recall", m.recall}, {"beta", m.beta},
              {"f_beta", m.f_beta},       {"fpr", m.fpr},       {"tpr", m.tpr}};
}

json roc_json(const RocCurve& roc) {
  json pts = json::array();
  for (const auto& p : roc.points) pts.push_back(json{{"fpr", p.fpr}, {"tpr", p.tpr}, {"lambda", p.lambda}});
  return pts;
}

/// Independent recount from per-sample verdicts.
ConfusionCounts recount(const std::vector<double>& scores, const std::vector<Label>& labels, double lambda) {
  ConfusionCounts c;
  for (size_t i = 0; i < scores.size(); ++i) {
    const auto verdict = net::classify(scores[i], lambda);
    if (labels[i] == Label::kMalicious) {
      (verdict == Label::kMalicious ? c.tp : c.fn) += 1;
    } else {
      (verdict == Label::kMalicious ? c.fp : c.tn) += 1;
    }
  }
  return c;
}

constexpr std::array<PublishedRow, 8> kPublished = {{{1, 99.66, 99.28, 99.47},
                                                     {3, 99.76, 99.74, 99.75},
                                                     {6, 99.96, 99.66, 99.81},
                                                     {10, 99.76, 99.42, 99.59},
                                                     {16, 99.84, 99.00, 99.42},
                                                     {24, 99.78, 99.34, 99.56},
                                                     {50, 99.90, 98.34, 99.11},
                                                     {100, 99.98, 97.30, 98.62}}};

std::string fmt_percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

Scenario ratio_scenario(int k) {
  Scenario s;
  s.name = "robustness-1to" + std::to_string(k);
  s.ratio_mal = 1;
  s.ratio_ben = k;
  s.repeats = 10;
  return s;
}

std::vector<Preset> all_presets() {
  std::vector<Preset> out;
  Preset paper{"paper-robustness", "training ratios 1:1 to 1:100 with a balanced test set, compared with the published rows", {}, false, true, {}};
  for (const auto& row : kPublished) {
    Preset single{"robustness-1to" + std::to_string(row.ratio_ben),
                  "training ratio 1:" + std::to_string(row.ratio_ben) + ", balanced test set, 10 repeats",
                  {ratio_scenario(row.ratio_ben)}, false, false, {}};
    out.push_back(single);
    paper.scenarios.push_back(ratio_scenario(row.ratio_ben));
  }
  out.push_back(paper);

  Scenario gen;
  gen.name = "generalization";
  out.push_back(Preset{"generalization", "train on one corpus, test on a second corpus", {gen}, true, false, {}});

  for (int packet : {400, 800}) {
    for (int flow : {3, 6}) {
      Scenario s;
      s.name = "grid-" + std::to_string(packet) + "x" + std::to_string(flow);
      // Packet size is the matrix byte budget; rows stay at 20.
      s.rows = 20;
      s.cols = packet / 20;
      s.flow_size = flow;
      out.push_back(Preset{s.name, "packet size " + std::to_string(packet) + " bytes, flow size " + std::to_string(flow), {s}, false, false, {}});
    }
  }

  Scenario smoke;
  smoke.name = "smoke";
  smoke.repeats = 1;
  out.push_back(Preset{"smoke", "one quick 1:1 repeat", {smoke}, false, false, 3});
  return out;
}

}  // namespace

// --- ExperimentConfig / reports -------------------------------------------------

net::ModelConfig ExperimentConfig::effective_model() const {
  net::ModelConfig m = model;
  m.rows = scenario.rows;
  m.cols = scenario.cols;
  m.flow_size = scenario.flow_size;
  return m;
}

json ExperimentConfig::to_json() const {
  return json{{"scenario", scenario.to_json()},
              {"model", effective_model().to_json()},
              {"train", train_config_json(train)},
              {"beta", beta},
              {"lambda", lambda}};
}

std::string ExperimentConfig::hash() const { return sha256_hex(to_json().dump()); }

json RepeatResult::to_json() const {
  json j{{"repeat", repeat},
         {"seed", seed},
         {"n_train", n_train},
         {"n_val", n_val},
         {"n_test", n_test},
         {"counts", counts_json(counts)},
         {"metrics", metrics_json(metrics)},
         {"auc", auc},
         {"epochs", epochs},
         {"best_epoch", best_epoch}};
  j["fpr_identity_residual"] = fpr_identity_residual ? json(*fpr_identity_residual) : json(nullptr);
  return j;
}

json ExperimentReport::to_json() const {
  json reps = json::array();
  for (const auto& r : repeats) reps.push_back(r.to_json());
  return json{{"schema", kReportSchema},
              {"mode", cross_corpus ? "cross-corpus" : "in-corpus"},
              {"config", config.to_json()},
              {"config_hash", config_hash},
              {"corpus", {{"train_fingerprint", train_fingerprint}, {"test_fingerprint", test_fingerprint}}},
              {"repeats", std::move(reps)},
              {"mean",
               {{"precision", mean.precision},
                {"recall", mean.recall},
                {"f_beta", mean.f_beta},
                {"fpr", mean.fpr},
                {"tpr", mean.tpr},
                {"auc", mean.auc}}},
              {"roc", {{"auc", roc.auc}, {"points", roc_json(roc)}}}};
}

ExperimentReport run_experiment(const features::SampleSource& pool, const features::SampleSource* test_pool,
                                const ExperimentConfig& config,
                                const std::function<void(const RepeatResult&)>& on_repeat) {
  const net::ModelConfig model_cfg = config.effective_model();
  model_cfg.check_shape(pool.shape());
  if (test_pool != nullptr) model_cfg.check_shape(test_pool->shape());
  if (!(config.lambda >= 0.0 && config.lambda <= 1.0)) throw Error(ErrorCode::kConfig, "lambda must be in [0, 1]");

  ExperimentReport report;
  report.cross_corpus = test_pool != nullptr;
  report.config = config;
  report.config_hash = config.hash();
  report.train_fingerprint = pool.fingerprint();
  report.test_fingerprint = test_pool != nullptr ? test_pool->fingerprint() : report.train_fingerprint;
  const features::SampleSource& tests = test_pool != nullptr ? *test_pool : pool;

  std::vector<double> all_scores;
  std::vector<Label> all_labels;
  for (int r = 0; r < config.scenario.repeats; ++r) {
    const Split split = build_split(pool, config.scenario, r, test_pool);
    net::ModelConfig mc = model_cfg;
    mc.seed = model_cfg.seed + static_cast<uint64_t>(r);
    net::TrainConfig tc = config.train;
    tc.seed = config.train.seed + static_cast<uint64_t>(r);
    spdlog::info("{} repeat {}: train {} val {} test {}", config.scenario.name, r, split.train.size(),
                 split.val.size(), split.test.size());
    const auto trained = net::train(mc, tc, pool, split.train, split.val);

    RepeatResult rr;
    rr.repeat = r;
    rr.seed = split.seed;
    rr.n_train = split.train.size();
    rr.n_val = split.val.size();
    rr.n_test = split.test.size();
    rr.epochs = trained.meta.epochs;
    rr.best_epoch = trained.meta.best_epoch;
    rr.scores = net::predict_scores(trained.model, tests, split.test, tc.threads);
    for (size_t idx : split.test) rr.labels.push_back(tests.label(idx));

    rr.counts = count_predictions(rr.scores, rr.labels, config.lambda);
    if (!(recount(rr.scores, rr.labels, config.lambda) == rr.counts)) {
      throw Error(ErrorCode::kNumeric, "confusion counts disagree between the two tallies");
    }
    rr.metrics = compute_metrics(rr.counts, config.beta);
    rr.auc = roc_sweep(rr.scores, rr.labels).auc;
    if (rr.counts.tp + rr.counts.fn == rr.counts.fp + rr.counts.tn && rr.metrics.precision > 0.0) {
      rr.fpr_identity_residual = std::abs(rr.metrics.fpr - balanced_fpr(rr.metrics.precision, rr.metrics.recall));
    }
    spdlog::info("{} repeat {}: P {:.4f} R {:.4f} F {:.4f} FPR {:.4f} AUC {:.4f}", config.scenario.name, r,
                 rr.metrics.precision, rr.metrics.recall, rr.metrics.f_beta, rr.metrics.fpr, rr.auc);

    all_scores.insert(all_scores.end(), rr.scores.begin(), rr.scores.end());
    all_labels.insert(all_labels.end(), rr.labels.begin(), rr.labels.end());
    if (on_repeat) on_repeat(rr);
    report.repeats.push_back(std::move(rr));
  }

  const double n = static_cast<double>(report.repeats.size());
  for (const auto& r : report.repeats) {
    report.mean.precision += r.metrics.precision / n;
    report.mean.recall += r.metrics.recall / n;
    report.mean.f_beta += r.metrics.f_beta / n;
    report.mean.fpr += r.metrics.fpr / n;
    report.mean.tpr += r.metrics.tpr / n;
    report.mean.auc += r.auc / n;
  }
  report.roc = roc_sweep(all_scores, all_labels);
  return report;
}

void write_roc_csv(std::ostream& out, const RocCurve& roc, const std::string& config_hash) {
  out << "# config_hash=" << config_hash << "\n";
  out << "fpr,tpr,lambda\n";
  char buf[128];
  for (const auto& p : roc.points) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", p.fpr, p.tpr, p.lambda);
    out << buf;
  }
}

// --- presets ------------------------------------------------------------------

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (const auto& p : all_presets()) names.push_back(p.name);
  return names;
}

Preset find_preset(std::string_view name) {
  for (auto& p : all_presets()) {
    if (p.name == name) return p;
  }
  std::string list;
  for (const auto& n : preset_names()) list += (list.empty() ? "" : ", ") + n;
  throw Error(ErrorCode::kConfig, "unknown preset '" + std::string(name) + "'; available presets: " + list);
}

std::span<const PublishedRow> published_robustness() { return kPublished; }

std::string GridReport::config_hash() const {
  json all = json::array();
  for (const auto& r : runs) all.push_back(r.config.to_json());
  return sha256_hex(all.dump());
}

json GridReport::comparison() const {
  json rows = json::array();
  for (const auto& run : runs) {
    const auto& sc = run.config.scenario;
    json row{{"scenario", sc.name},
             {"ratio", std::to_string(sc.ratio_mal) + ":" + std::to_string(sc.ratio_ben)},
             {"measured", {{"precision", 100.0 * run.mean.precision}, {"recall", 100.0 * run.mean.recall}, {"f1", 100.0 * run.mean.f_beta}}}};
    row["published"] = nullptr;
    if (sc.ratio_mal == 1) {
      for (const auto& p : kPublished) {
        if (p.ratio_ben == sc.ratio_ben) row["published"] = {{"precision", p.precision}, {"recall", p.recall}, {"f1", p.f1}};
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

json GridReport::to_json() const {
  json runs_json = json::array();
  for (const auto& r : runs) runs_json.push_back(r.to_json());
  json j{{"schema", kReportSchema}, {"preset", preset}, {"config_hash", config_hash()}, {"runs", std::move(runs_json)}};
  if (compare_published) j["comparison"] = comparison();
  return j;
}

GridReport run_preset(const Preset& preset, const features::SampleSource& pool,
                      const features::SampleSource* test_pool, const ExperimentConfig& base,
                      const PresetOverrides& overrides,
                      const std::function<void(const ExperimentReport&)>& on_run,
                      const std::function<void(const RepeatResult&)>& on_repeat) {
  if (preset.cross_corpus && test_pool == nullptr) {
    throw Error(ErrorCode::kUsage, "preset '" + preset.name + "' needs a separate test corpus");
  }
  GridReport grid;
  grid.preset = preset.name;
  grid.compare_published = preset.compare_published;
  for (const auto& sc : preset.scenarios) {
    ExperimentConfig cfg = base;
    cfg.scenario = sc;
    cfg.scenario.seed = base.scenario.seed;
    if (overrides.repeats > 0) cfg.scenario.repeats = overrides.repeats;
    if (preset.max_epochs) cfg.train.max_epochs = std::min(cfg.train.max_epochs, *preset.max_epochs);
    if (overrides.max_epochs > 0) cfg.train.max_epochs = overrides.max_epochs;
    grid.runs.push_back(run_experiment(pool, test_pool, cfg, on_repeat));
    if (on_run) on_run(grid.runs.back());
  }
  return grid;
}

void print_comparison(std::ostream& out, const GridReport& grid) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-8s | %8s %8s %8s | %8s %8s %8s\n", "ratio", "pub P", "pub R", "pub F1",
                "our P", "our R", "our F1");
  out << buf;
  for (const auto& row : grid.comparison()) {
    const auto& m = row["measured"];
    const auto& p = row["published"];
    auto cell = [&](const json& obj, const char* key) {
      return obj.is_null() ? std::string("-") : fmt_percent(obj[key].get<double>());
    };
    std::snprintf(buf, sizeof buf, "%-8s | %8s %8s %8s | %8s %8s %8s\n", row["ratio"].get<std::string>().c_str(),
                  cell(p, "precision").c_str(), cell(p, "recall").c_str(), cell(p, "f1").c_str(),
                  cell(m, "precision").c_str(), cell(m, "recall").c_str(), cell(m, "f1").c_str());
    out << buf;
  }
}

}  // namespace hstf::eval
