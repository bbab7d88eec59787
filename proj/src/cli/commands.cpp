#include "hstf/cli/commands.hpp"

#include <spdlog/spdlog.h>

#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>

#include "hstf/common/codec.hpp"
#include "hstf/common/error.hpp"
#include "hstf/common/rng.hpp"
#include "hstf/eval/experiment.hpp"
#include "hstf/eval/timing.hpp"
#include "hstf/features/sample_io.hpp"
#include "hstf/ingest/capture.hpp"
#include "hstf/ingest/flow_jsonl.hpp"
#include "hstf/ingest/labels.hpp"
#include "hstf/ingest/reassembly.hpp"
#include "hstf/net/checkpoint.hpp"
#include "hstf/net/train.hpp"
#include "hstf/synth/generator.hpp"

namespace hstf::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Settings {
  net::ModelConfig model;
  net::TrainConfig train;
  features::FeatureConfig features;
  std::string policy;  // from the config file, empty when unset
};

[[noreturn]] void usage(const std::string& msg) { throw Error(ErrorCode::kUsage, msg); }

void require_readable(const std::string& path, const char* what) {
  if (path.empty()) usage(std::string("missing ") + what);
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) throw Error(ErrorCode::kIo, std::string(what) + " '" + path + "' is not a readable file");
}

void require_writable_parent(const std::string& path, const char* what) {
  if (path.empty()) usage(std::string("missing ") + what);
  const fs::path parent = fs::path(path).parent_path();
  std::error_code ec;
  if (!parent.empty() && !fs::is_directory(parent, ec)) {
    throw Error(ErrorCode::kIo, std::string(what) + " directory '" + parent.string() + "' does not exist");
  }
}

/// Optional JSON config: {"model": {...}, "train": {...}, "features": {...}}.
Settings load_settings(const Common& c) {
  Settings s;
  if (!c.config.empty()) {
    require_readable(c.config, "config file");
    const json doc = json::parse(read_file_bytes(c.config), nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) throw Error(ErrorCode::kConfig, "config file is not a JSON object");
    try {
      if (doc.contains("model")) s.model = net::ModelConfig::from_json(doc.at("model"));
      if (doc.contains("train")) {
        const auto& t = doc.at("train");
        s.train.batch_size = t.value("batch_size", s.train.batch_size);
        s.train.max_epochs = t.value("max_epochs", s.train.max_epochs);
        s.train.patience = t.value("patience", s.train.patience);
        s.train.beta1 = t.value("beta1", s.train.beta1);
        s.train.beta2 = t.value("beta2", s.train.beta2);
        s.train.epsilon = t.value("epsilon", s.train.epsilon);
      }
      if (doc.contains("features")) {
        const auto& f = doc.at("features");
        s.features.max_seq = f.value("max_seq", s.features.max_seq);
        s.model.rows = f.value("rows", s.model.rows);
        s.model.cols = f.value("cols", s.model.cols);
        s.model.flow_size = f.value("flow_size", s.model.flow_size);
        s.policy = f.value("overflow_policy", std::string());
      }
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kConfig, std::string("config file: ") + e.what());
    }
  }
  s.model.seed = c.seed;
  s.train.seed = c.seed;
  s.train.threads = c.threads;
  s.features.rows = s.model.rows;
  s.features.cols = s.model.cols;
  s.features.flow_size = s.model.flow_size;
  return s;
}

// --policy beats the config file, which beats the per-command default
std::string pick_policy(const std::string& flag, const std::string& config, const char* fallback) {
  if (!flag.empty()) return flag;
  return config.empty() ? fallback : config;
}

std::string with_suffix(const std::string& path, const std::string& suffix) {
  fs::path p(path);
  if (p.extension() == ".bin" || p.extension() == ".jsonl" || p.extension() == ".json") p.replace_extension();
  return p.string() + suffix;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write '" + path + "'");
  return out;
}

struct CaptureFlows {
  std::vector<ingest::Flow> flows;
  ingest::ParseStats stats;
};

CaptureFlows read_capture(const std::string& path, const std::string& format) {
  const std::string bytes = read_file_bytes(path);
  ingest::CaptureFormat fmt;
  if (format.empty()) fmt = ingest::sniff_capture_format(bytes);
  else if (format == "pcap") fmt = ingest::CaptureFormat::kPcap;
  else if (format == "flow-jsonl") fmt = ingest::CaptureFormat::kFlowJsonl;
  else usage("--format must be pcap or flow-jsonl for this command, got '" + format + "'");
  auto parsed = ingest::parse_capture(std::string_view(bytes), fmt);
  CaptureFlows out;
  out.stats = parsed.stats;
  out.flows = ingest::reassemble(std::move(parsed.messages));
  return out;
}

json stats_json(const ingest::ParseStats& s) {
  return json{{"records", s.records},
              {"tcp_segments", s.tcp_segments},
              {"skipped_non_ip", s.skipped_non_ip},
              {"skipped_non_tcp", s.skipped_non_tcp},
              {"skipped_fragments", s.skipped_fragments},
              {"truncated_records", s.truncated_records},
              {"undecodable_messages", s.undecodable_messages},
              {"stream_gaps", s.stream_gaps},
              {"http_messages", s.http_messages}};
}

bool looks_like_samples(const std::string& path) {
  if (features::is_binary_sample_file(path)) return true;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const json j = json::parse(line, nullptr, false);
    return j.is_object() && j.value("schema", std::string()) == features::kSampleSchema;
  }
  return false;
}

/// Stratified validation share for cmd_train.
void split_train_val(const features::SampleSource& data, uint64_t seed, std::vector<size_t>& train,
                     std::vector<size_t>& val) {
  std::vector<size_t> mal, ben;
  for (size_t i = 0; i < data.size(); ++i) {
    const auto l = data.label(i);
    if (l == features::Label::kUnlabeled) {
      throw Error(ErrorCode::kData, "sample " + std::to_string(data.id(i)) + " is unlabeled; training needs labels");
    }
    (l == features::Label::kMalicious ? mal : ben).push_back(i);
  }
  Rng rng(derive_seed(seed, 0x76616CULL));
  shuffle(mal, rng);
  shuffle(ben, rng);
  for (auto* cls : {&mal, &ben}) {
    const size_t n = cls->size();
    const size_t v = n < 2 ? 0 : std::max<size_t>(1, (n + 5) / 10);
    val.insert(val.end(), cls->begin(), cls->begin() + static_cast<std::ptrdiff_t>(v));
    train.insert(train.end(), cls->begin() + static_cast<std::ptrdiff_t>(v), cls->end());
  }
}

}  // namespace

// --- extract --------------------------------------------------------------------

int run_extract(const ExtractOptions& o, std::ostream& out) {
  require_readable(o.input, "--input capture");
  require_writable_parent(o.output, "--output sample file");
  Settings s = load_settings(o.common);
  s.features.overflow = features::overflow_policy_from_string(pick_policy(o.policy, s.policy, "discard"));
  s.features.validate();

  auto cap = read_capture(o.input, o.format);
  if (!o.labels.empty()) ingest::load_labels(cap.flows, o.labels);
  if (cap.flows.empty()) spdlog::warn("capture '{}' holds no HTTP flows; writing an empty sample file", o.input);

  const std::string flows_path = o.flows_output.empty() ? with_suffix(o.output, ".flows.jsonl") : o.flows_output;
  {
    auto fo = open_out(flows_path);
    ingest::write_flow_jsonl(fo, cap.flows);
  }

  size_t written = 0, discarded = 0, truncated = 0, mal = 0, ben = 0;
  const bool binary = fs::path(o.output).extension() == ".bin";
  std::unique_ptr<features::BinarySampleWriter> bin;
  std::ofstream jsonl;
  if (binary) bin = std::make_unique<features::BinarySampleWriter>(o.output, s.features);
  else jsonl = open_out(o.output);
  for (const auto& flow : cap.flows) {
    auto sample = features::flow_to_sample(flow, s.features);
    if (!sample) {
      ++discarded;
      continue;
    }
    ++written;
    if (sample->truncated) ++truncated;
    if (sample->label == features::Label::kMalicious) ++mal;
    if (sample->label == features::Label::kBenign) ++ben;
    if (bin) bin->append(*sample);
    else jsonl << features::sample_to_json(*sample).dump() << '\n';
  }
  if (bin) bin->close();

  out << json{{"flows", cap.flows.size()},
              {"samples", written},
              {"discarded", discarded},
              {"truncated", truncated},
              {"malicious", mal},
              {"benign", ben},
              {"unlabeled", written - mal - ben},
              {"parse", stats_json(cap.stats)},
              {"samples_path", o.output},
              {"flows_path", flows_path}}
             .dump()
      << '\n';
  return 0;
}

// --- train ----------------------------------------------------------------------

int run_train(const TrainOptions& o, std::ostream& out) {
  require_readable(o.input, "--input sample file");
  require_writable_parent(o.output, "--output checkpoint");
  Settings s = load_settings(o.common);
  if (o.epochs > 0) s.train.max_epochs = o.epochs;
  s.model.validate();

  const auto data = features::open_samples(o.input);
  s.model.check_shape(data->shape());
  std::vector<size_t> train_idx, val_idx;
  split_train_val(*data, o.common.seed, train_idx, val_idx);
  if (train_idx.empty() || val_idx.empty()) throw Error(ErrorCode::kData, "need at least two labeled samples per class to train");

  const auto result = net::train(s.model, s.train, *data, train_idx, val_idx);
  net::save_checkpoint(o.output, result.model, result.meta, o.sidecar);

  const std::string history = o.history.empty() ? with_suffix(o.output, ".history.csv") : o.history;
  {
    auto h = open_out(history);
    h << "epoch,loss,acc,val_recall,val_loss,val_acc,val_precision,val_f1\n";
    char buf[256];
    for (const auto& r : result.history) {
      std::snprintf(buf, sizeof buf, "%d,%.8f,%.8f,%.8f,%.8f,%.8f,%.8f,%.8f\n", r.epoch, r.loss, r.acc, r.val_recall,
                    r.val_loss, r.val_acc, r.val_precision, r.val_f1);
      h << buf;
    }
  }
  out << json{{"checkpoint", o.output},
              {"history", history},
              {"train_samples", train_idx.size()},
              {"val_samples", val_idx.size()},
              {"meta", result.meta.to_json()}}
             .dump()
      << '\n';
  return 0;
}

// --- detect ---------------------------------------------------------------------

int run_detect(const DetectOptions& o, std::ostream& out) {
  require_readable(o.input, "--input");
  require_readable(o.checkpoint, "--checkpoint");
  if (!(o.lambda >= 0.0 && o.lambda <= 1.0)) usage("--lambda must be in [0, 1]");
  if (!o.output.empty()) require_writable_parent(o.output, "--output");
  const Settings s = load_settings(o.common);
  const auto ck = net::load_checkpoint(o.checkpoint);
  const auto& model = ck.model;

  std::vector<features::FlowSample> samples;
  std::unique_ptr<features::SampleSource> source;
  const bool as_samples = o.format == "samples" || (o.format.empty() && looks_like_samples(o.input));
  if (as_samples) {
    source = features::open_samples(o.input);
    model.config().check_shape(source->shape());
  } else {
    auto cap = read_capture(o.input, o.format);
    if (!o.labels.empty()) ingest::load_labels(cap.flows, o.labels);
    auto shape = model.config().feature_shape();
    shape.overflow = features::overflow_policy_from_string(pick_policy(o.policy, s.policy, "truncate"));
    for (const auto& flow : cap.flows) {
      auto sample = features::flow_to_sample(flow, shape);
      if (sample) samples.push_back(std::move(*sample));
    }
    source = std::make_unique<features::InMemorySamples>(std::move(samples), shape);
  }

  std::ofstream file;
  std::ostream* sink = &out;
  if (!o.output.empty()) {
    file = open_out(o.output);
    sink = &file;
  }
  size_t n_mal = 0, n_ben = 0, n_trunc = 0, correct = 0, labeled = 0;
  char pbuf[32];
  for (size_t i = 0; i < source->size(); ++i) {
    const auto sample = source->get(i);
    const auto pred = net::forward(model, sample, net::Mode::kInfer);
    const auto verdict = net::classify(pred.p_malicious, o.lambda);
    (verdict == features::Label::kMalicious ? n_mal : n_ben) += 1;
    if (sample.truncated) ++n_trunc;
    if (sample.label != features::Label::kUnlabeled) {
      ++labeled;
      if (sample.label == verdict) ++correct;
    }
    std::snprintf(pbuf, sizeof pbuf, "%.9f", pred.p_malicious);
    json line{{"flow_id", sample.id},
              {"p_malicious", json::parse(pbuf)},
              {"verdict", verdict == features::Label::kMalicious ? "Malicious" : "Benign"},
              {"truncated", sample.truncated}};
    *sink << line.dump() << '\n';
  }
  json summary{{"flows", source->size()}, {"malicious", n_mal}, {"benign", n_ben}, {"truncated", n_trunc}, {"lambda", o.lambda}};
  if (labeled > 0) summary["accuracy"] = static_cast<double>(correct) / static_cast<double>(labeled);
  // With per-flow lines on stdout the summary goes to stderr.
  (sink == &out ? std::cerr : out) << json{{"summary", summary}}.dump() << '\n';
  return 0;
}

// --- eval -----------------------------------------------------------------------

int run_eval(const EvalOptions& o, std::ostream& out) {
  require_readable(o.input, "--input sample pool");
  if (!o.test_input.empty()) require_readable(o.test_input, "--test-input sample pool");
  const std::string report_path = o.output.empty() ? "hstf-report.json" : o.output;
  require_writable_parent(report_path, "--output report");
  if (!(o.lambda >= 0.0 && o.lambda <= 1.0)) usage("--lambda must be in [0, 1]");
  const eval::Preset preset = eval::find_preset(o.preset);
  Settings s = load_settings(o.common);

  const auto pool = features::open_samples(o.input);
  std::unique_ptr<features::SampleSource> test_pool;
  if (!o.test_input.empty()) test_pool = features::open_samples(o.test_input);
  if (preset.cross_corpus && !test_pool) usage("preset '" + preset.name + "' needs --test-input");

  eval::ExperimentConfig base;
  base.model = s.model;
  base.train = s.train;
  base.lambda = o.lambda;
  base.scenario.seed = o.common.seed;
  eval::PresetOverrides ov;
  ov.repeats = o.repeats;
  ov.max_epochs = o.epochs;

  const auto grid = eval::run_preset(preset, *pool, test_pool.get(), base, ov);
  {
    auto f = open_out(report_path);
    f << grid.to_json().dump(2) << '\n';
  }
  std::vector<std::string> roc_paths;
  for (const auto& run : grid.runs) {
    const std::string suffix = grid.runs.size() == 1 ? ".roc.csv" : "." + run.config.scenario.name + ".roc.csv";
    roc_paths.push_back(with_suffix(report_path, suffix));
    auto f = open_out(roc_paths.back());
    eval::write_roc_csv(f, run.roc, run.config_hash);
  }

  for (const auto& run : grid.runs) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s (%s): P %.4f R %.4f F1 %.4f FPR %.4f AUC %.4f over %zu repeats\n",
                  run.config.scenario.name.c_str(), run.cross_corpus ? "cross-corpus" : "in-corpus",
                  run.mean.precision, run.mean.recall, run.mean.f_beta, run.mean.fpr, run.mean.auc,
                  run.repeats.size());
    out << buf;
  }
  if (grid.compare_published) eval::print_comparison(out, grid);
  out << "report: " << report_path << '\n';
  for (const auto& p : roc_paths) out << "roc: " << p << '\n';
  return 0;
}

// --- synth ----------------------------------------------------------------------

int run_synth(const SynthOptions& o, std::ostream& out) {
  require_writable_parent(o.output, "--output flow file");
  const std::string labels = o.labels.empty() ? with_suffix(o.output, ".labels.csv") : o.labels;
  auto flows_out = open_out(o.output);
  auto labels_out = open_out(labels);
  labels_out << "key,label\n";
  size_t n_mal = 0, n_ben = 0;
  auto sink = [&](synth::Flow&& f) {
    ingest::write_flow_jsonl(flows_out, std::span<const synth::Flow>(&f, 1));
    labels_out << f.key.server.host << ',' << ingest::to_string(f.label) << '\n';
    (f.label == ingest::Label::kMalicious ? n_mal : n_ben) += 1;
  };

  if (!o.common.config.empty()) {
    require_readable(o.common.config, "--config profile");
    auto profile = synth::parse_profile(read_file_bytes(o.common.config));
    if (o.common.seed_given || read_file_bytes(o.common.config).find("seed") == std::string::npos) {
      profile.seed = o.common.seed;
    }
    const size_t count = o.count > 0 ? o.count : 1000;
    for (auto& f : synth::generate(profile, count)) sink(std::move(f));
  } else {
    synth::CorpusSpec spec;
    spec.malicious = o.malicious;
    spec.benign = o.benign;
    spec.separability = synth::separability_from_string(o.separability);
    spec.seed = o.common.seed;
    synth::for_each_flow(spec, sink);
  }
  out << json{{"flows", n_mal + n_ben}, {"malicious", n_mal}, {"benign", n_ben}, {"output", o.output}, {"labels", labels}}.dump()
      << '\n';
  return 0;
}

// --- bench ----------------------------------------------------------------------

int run_bench(const BenchOptions& o, std::ostream& out) {
  if (!o.output.empty()) require_writable_parent(o.output, "--output");
  Settings s = load_settings(o.common);
  eval::TimingConfig tc;
  tc.model = s.model;
  tc.train = s.train;
  tc.sizes = o.sizes;
  tc.epochs = o.epochs;
  tc.seed = o.common.seed;
  const auto rows = eval::timing_benchmark(tc);
  if (o.output.empty()) {
    eval::write_timing_csv(out, rows, eval::timing_config_hash(tc));
  } else {
    auto f = open_out(o.output);
    eval::write_timing_csv(f, rows, eval::timing_config_hash(tc));
    out << "timing: " << o.output << '\n';
  }
  return 0;
}

}  // namespace hstf::cli
