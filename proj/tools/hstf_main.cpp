#include <CLI11.hpp>

#include <iostream>

#include "hstf/cli/commands.hpp"
#include "hstf/common/error.hpp"
#include "hstf/common/logging.hpp"
#include "hstf/eval/experiment.hpp"

namespace {

void add_common(CLI::App* cmd, hstf::cli::Common& c) {
  cmd->add_option("--config", c.config, "Configuration file");
  cmd->add_option("--seed", c.seed, "Seed for every random choice")->default_val(hstf::cli::kDefaultSeed);
  cmd->add_option("--threads", c.threads, "Worker threads (0 = all cores)")->default_val(1)->check(CLI::NonNegativeNumber);
}

int fail(hstf::ErrorCode code, const std::string& msg) {
  std::cerr << "error: " << hstf::error_code_name(code) << ": " << msg << '\n';
  return code == hstf::ErrorCode::kUsage ? 2 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  hstf::init_logging();
  CLI::App app{"HTTP Trojan traffic detector: capture parsing, feature extraction, training, detection and evaluation"};
  app.require_subcommand(1);

  hstf::cli::ExtractOptions ex;
  auto* extract = app.add_subcommand("extract", "Parse a capture into flows and model samples");
  add_common(extract, ex.common);
  extract->add_option("--input", ex.input, "pcap or flow-jsonl capture")->required();
  extract->add_option("--output", ex.output, "Sample file (.bin for binary, otherwise JSON lines)")->required();
  extract->add_option("--flows-output", ex.flows_output, "Grouped flow-jsonl output");
  extract->add_option("--labels", ex.labels, "Label CSV (key,label)");
  extract->add_option("--format", ex.format, "Capture format")->check(CLI::IsMember({"pcap", "flow-jsonl"}));
  extract->add_option("--policy", ex.policy, "Over-long flows (default discard)")->check(CLI::IsMember({"truncate", "discard"}));

  hstf::cli::TrainOptions tr;
  auto* train = app.add_subcommand("train", "Train a model on labeled samples");
  add_common(train, tr.common);
  train->add_option("--input", tr.input, "Labeled sample file")->required();
  train->add_option("--output", tr.output, "Checkpoint path")->required();
  train->add_option("--history", tr.history, "Per-epoch history CSV");
  train->add_option("--epochs", tr.epochs, "Maximum epochs")->check(CLI::NonNegativeNumber);
  train->add_flag("--sidecar", tr.sidecar, "Store parameters in a binary sidecar file");

  hstf::cli::DetectOptions de;
  auto* detect = app.add_subcommand("detect", "Score flows with a trained checkpoint");
  add_common(detect, de.common);
  detect->add_option("--input", de.input, "Capture or sample file")->required();
  detect->add_option("--checkpoint", de.checkpoint, "Checkpoint path")->required();
  detect->add_option("--output", de.output, "Per-flow verdict lines (default stdout)");
  detect->add_option("--labels", de.labels, "Label CSV for an accuracy summary");
  detect->add_option("--format", de.format, "Input format")->check(CLI::IsMember({"pcap", "flow-jsonl", "samples"}));
  detect->add_option("--policy", de.policy, "Over-long flows (default truncate)")->check(CLI::IsMember({"truncate", "discard"}));
  detect->add_option("--lambda", de.lambda, "Malicious iff p_malicious > lambda")->default_val(hstf::cli::kDefaultLambda)->check(CLI::Range(0.0, 1.0));

  hstf::cli::EvalOptions ev;
  auto* evalc = app.add_subcommand("eval", "Run an evaluation preset");
  add_common(evalc, ev.common);
  evalc->add_option("--input", ev.input, "Sample pool")->required();
  evalc->add_option("--test-input", ev.test_input, "Second corpus for cross-corpus runs");
  evalc->add_option("--preset", ev.preset, "Scenario preset")->default_val("smoke");
  evalc->add_option("--output", ev.output, "Report JSON path")->default_val("hstf-report.json");
  evalc->add_option("--lambda", ev.lambda, "Detection threshold")->default_val(hstf::cli::kDefaultLambda)->check(CLI::Range(0.0, 1.0));
  evalc->add_option("--repeats", ev.repeats, "Override the preset's repeat count")->check(CLI::NonNegativeNumber);
  evalc->add_option("--epochs", ev.epochs, "Override the maximum epochs")->check(CLI::NonNegativeNumber);
  std::string preset_list;
  for (const auto& n : hstf::eval::preset_names()) preset_list += (preset_list.empty() ? "" : ", ") + n;
  evalc->footer("Presets: " + preset_list);

  hstf::cli::SynthOptions sy;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic labeled corpus");
  add_common(synth, sy.common);
  synth->add_option("--output", sy.output, "flow-jsonl output")->required();
  synth->add_option("--labels", sy.labels, "Label CSV output");
  synth->add_option("--malicious", sy.malicious, "Trojan-like flows")->default_val(500);
  synth->add_option("--benign", sy.benign, "Benign flows")->default_val(500);
  synth->add_option("--count", sy.count, "Flows to draw from a --config profile");
  synth->add_option("--separability", sy.separability, "Class overlap")->check(CLI::IsMember({"high", "medium", "low"}))->default_val("high");

  hstf::cli::BenchOptions be;
  auto* bench = app.add_subcommand("bench", "Epoch time and peak memory against training-set size");
  add_common(bench, be.common);
  bench->add_option("--output", be.output, "Timing CSV (default stdout)");
  bench->add_option("--sizes", be.sizes, "Training-set sizes")->delimiter(',');
  bench->add_option("--epochs", be.epochs, "Timed epochs per size")->default_val(2)->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(hstf::ErrorCode::kUsage, e.what());
  }

  for (auto* c : {extract, train, detect, evalc, synth, bench}) {
    if (c->get_option("--seed")->count() > 0) {
      ex.common.seed_given = tr.common.seed_given = de.common.seed_given = true;
      ev.common.seed_given = sy.common.seed_given = be.common.seed_given = true;
    }
  }

  try {
    if (*extract) return hstf::cli::run_extract(ex, std::cout);
    if (*train) return hstf::cli::run_train(tr, std::cout);
    if (*detect) return hstf::cli::run_detect(de, std::cout);
    if (*evalc) return hstf::cli::run_eval(ev, std::cout);
    if (*synth) return hstf::cli::run_synth(sy, std::cout);
    if (*bench) return hstf::cli::run_bench(be, std::cout);
  } catch (const hstf::Error& e) {
    return fail(e.code(), e.what());
  } catch (const std::exception& e) {
    return fail(hstf::ErrorCode::kIo, e.what());
  }
  return 0;
}
