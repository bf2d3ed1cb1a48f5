// tdl: command-line entry points for datasets, stage training, evaluation
// and full experiments. Exit status: 0 success, 1 config or stage failure,
// 2 usage error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tdl/config.hpp"
#include "tdl/io.hpp"
#include "tdl/pipelines.hpp"
#include "tdl/report.hpp"

namespace fs = std::filesystem;
using namespace tdl;

namespace {

struct Options {
  std::string config;
  std::optional<uint64_t> seed;
  std::string out;
  double fraction = 1.0;
  std::string method = "task_distillation";
  std::vector<double> fractions{0.125, 0.25, 0.5, 1.0};
  std::string reports;
  bool quiet = false;
};

struct Run {
  ExperimentConfig cfg;
  fs::path out;
  RunManifest manifest;
};

Run prepare(const Options& o, const std::string& command) {
  Run r;
  r.cfg = load_experiment_config(o.config);
  if (o.seed) r.cfg.seed = *o.seed;
  validate(r.cfg);
  r.out = o.out.empty() ? default_output_root() / r.cfg.name / ("seed-" + std::to_string(r.cfg.seed)) : fs::path(o.out);
  fs::create_directories(r.out);
  r.manifest.command = command;
  r.manifest.config_hash = config_hash(r.cfg);
  r.manifest.seeds = {r.cfg.seed};
  r.manifest.code_version = std::string(code_version());
  r.manifest.started = utc_timestamp();
  std::ofstream(r.out / "config.ini") << format_config(r.cfg);
  add_artifact(r.manifest, r.out, "config", r.out / "config.ini");
  return r;
}

ProgressFn progress(const Options& o) {
  if (o.quiet) return {};
  return [](const std::string& m) { std::cerr << m << std::endl; };
}

Experiment experiment(const Run& r, const Options& o) { return Experiment(r.cfg, r.out / "cache", progress(o)); }

void finish(Run& r) {
  r.manifest.finished = utc_timestamp();
  write_manifest(r.out / "manifest.json", r.manifest);
  std::cerr << "wrote " << (r.out / "manifest.json").string() << "\n";
}

void save_model(Run& r, const std::string& name, const Model& m) {
  const fs::path p = r.out / (name + ".tdlc");
  write_checkpoint(p, m);
  add_artifact(r.manifest, r.out, name, p);
}

void save_reports(Run& r, const std::vector<ExperimentReport>& reports, const std::string& stem = "report") {
  const fs::path jsonl = r.out / (stem + ".jsonl");
  write_reports(jsonl, reports);
  add_artifact(r.manifest, r.out, stem, jsonl);
  const std::string table = render_tables(reports);
  const fs::path txt = r.out / (stem + ".txt");
  std::ofstream(txt) << table;
  add_artifact(r.manifest, r.out, stem + "_table", txt);
  std::cout << table;
}

ExperimentReport stage_only(Experiment& ex, const std::string& method, const std::vector<std::string>& stages) {
  ExperimentReport rep;
  rep.experiment = ex.config().name;
  rep.method = method;
  rep.provenance = ex.provenance();
  for (const auto& s : stages) rep.stages.push_back(ex.stage_report(s));
  return rep;
}

std::string fraction_suffix(double f) {
  if (f == 1.0) return "";
  std::ostringstream o;
  o << "@" << f;
  return o.str();
}

int dispatch(const std::string& cmd, const Options& o) {
  if (cmd == "analyze") {
    const auto reports = read_reports(o.reports);
    std::cout << render_tables(reports);
    return 0;
  }
  Run r = prepare(o, cmd);
  if (cmd == "eval-seg" || (cmd == "run-experiment" && r.cfg.proxy == Modality::depth)) {
    save_reports(r, {run_seg_transfer(r.cfg, progress(o))});
    finish(r);
    return 0;
  }
  Experiment ex = experiment(r, o);
  if (cmd == "gen-data") {
    write_dataset(r.out / "source.tdl1", ex.source_data());
    write_dataset(r.out / "target.tdl1", ex.target_data());
    add_artifact(r.manifest, r.out, "source_data", r.out / "source.tdl1");
    add_artifact(r.manifest, r.out, "target_data", r.out / "target.tdl1");
  } else if (cmd == "train-source") {
    save_model(r, "source", ex.source_model());
    save_reports(r, {stage_only(ex, "train_source", {"source"})}, "stages");
  } else if (cmd == "distill-proxy") {
    save_model(r, "proxy", ex.proxy_model());
    save_reports(r, {stage_only(ex, "distill_proxy", {"source", "proxy"})}, "stages");
  } else if (cmd == "distill-target") {
    const std::string name = "target" + fraction_suffix(o.fraction);
    save_model(r, name, ex.target_model(o.fraction));
    save_reports(r, {stage_only(ex, "distill_target", {"source", "proxy", name})}, "stages");
  } else if (cmd == "train-recognizer") {
    const std::string name = "target_recognizer" + fraction_suffix(o.fraction);
    save_model(r, name, ex.target_recognizer(o.fraction));
    save_reports(r, {stage_only(ex, "train_recognizer", {name})}, "stages");
  } else if (cmd == "eval-drive") {
    ExperimentReport rep;
    if (o.method == "direct") rep = run_direct(ex);
    else if (o.method == "modular") rep = run_modular(ex, RecognizerTraining::ground_truth);
    else if (o.method == "modular_predicted") rep = run_modular(ex, RecognizerTraining::predicted_in_source);
    else rep = run_task_distillation(ex);
    save_reports(r, {rep}, "report_" + o.method);
  } else if (cmd == "run-experiment") {
    save_reports(r, run_policy_transfer(ex));
  } else if (cmd == "ablate-data") {
    save_reports(r, {run_data_ablation(ex, o.fractions)}, "ablation");
  }
  finish(r);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tdl: task distillation experiments"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub, bool config_required = true) {
    auto* c = sub->add_option("--config", o.config, "experiment config (INI)")->check(CLI::ExistingFile);
    if (config_required) c->required();
    sub->add_option("--seed", o.seed, "override the experiment seed");
    sub->add_option("--out", o.out, "output directory (default $TDL_OUT/<name>/seed-<seed>)");
    sub->add_flag("--quiet", o.quiet, "suppress progress on stderr");
  };

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"gen-data", "render source and target datasets"},
      {"train-source", "behavior-clone the source model f^S on source images"},
      {"distill-proxy", "distill f^S into the proxy-label model f^P"},
      {"distill-target", "distill f^P into the target image model f^T"},
      {"train-recognizer", "train the target image -> proxy-label recognizer"},
      {"eval-drive", "closed-loop evaluation of one method in the target world"},
      {"eval-seg", "segmentation transfer through the depth proxy"},
      {"run-experiment", "all methods of the configured experiment"},
      {"ablate-data", "target-data ablation of distillation vs modular"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    common(sub);
    if (name == "distill-target" || name == "train-recognizer") {
      sub->add_option("--fraction", o.fraction, "fraction of target data")->check(CLI::Range(0.0, 1.0));
    }
    if (name == "eval-drive") {
      sub->add_option("--method", o.method, "direct | modular | modular_predicted | task_distillation")
          ->check(CLI::IsMember({"direct", "modular", "modular_predicted", "task_distillation"}));
    }
    if (name == "ablate-data") {
      sub->add_option("--fraction", o.fractions, "target-data fractions")->check(CLI::Range(0.0, 1.0));
    }
  }
  auto* analyze = app.add_subcommand("analyze", "render tables and accuracy-model predictions from reports");
  analyze->add_option("--reports", o.reports, "report file (.jsonl)")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return 2;
  }

  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    return dispatch(cmd, o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const StageError& e) {
    std::cerr << "stage failure: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
