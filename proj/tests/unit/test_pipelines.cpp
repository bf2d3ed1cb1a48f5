#include <filesystem>

#include "doctest.h"
#include "tdl/config.hpp"
#include "tdl/pipelines.hpp"
#include "tdl/report.hpp"

using namespace tdl;

namespace {

ExperimentConfig tiny() {
  ExperimentConfig c;
  c.name = "tiny";
  c.source.length = 300.0;
  c.target.length = 300.0;
  c.source_n = 48;
  c.target_n = 48;
  c.test_n = 16;
  for (StageSettings* s : {&c.source_stage, &c.proxy_stage, &c.target_stage, &c.recognizer_stage}) {
    s->epochs = 1;
    s->widths = {4, 4, 8, 8};
    s->max_heldout_loss = 10.0;
  }
  c.eval.episodes_per_controller = 1;
  c.eval.cap = 40;
  c.seed = 3;
  return c;
}

std::vector<std::string> stage_names(const ExperimentReport& r) {
  std::vector<std::string> out;
  for (const auto& s : r.stages) out.push_back(s.stage);
  return out;
}

}  // namespace

TEST_CASE("direct transfer trains only the source model") {
  ExperimentConfig cfg = tiny();
  cfg.measure_factors = false;
  const ExperimentReport r = run_direct(cfg);
  CHECK(r.method == "direct");
  CHECK(stage_names(r) == std::vector<std::string>{"source"});
  REQUIRE(r.drive.has_value());
  CHECK(r.drive->episodes.size() == 5);
  CHECK(r.provenance.config_hash == config_hash(cfg));
  CHECK(r.provenance.seed == 3);
}

TEST_CASE("task distillation: stages, input modalities and data fractions") {
  Experiment ex(tiny());
  const ExperimentReport r = run_task_distillation(ex);
  CHECK(r.method == "task_distillation");
  CHECK(stage_names(r) == std::vector<std::string>{"source", "proxy", "target"});
  CHECK(ex.source_model().spec().input == Modality::image);
  CHECK(ex.proxy_model().spec().input == Modality::seg_map);
  // The deployed target model reads images only.
  CHECK(ex.target_model().spec().input == Modality::image);

  CHECK(ex.target_data(1.0).size() == 48);
  const Dataset& half = ex.target_data(0.5);
  REQUIRE(half.size() == 24);
  for (std::size_t i = 0; i < half.size(); ++i) CHECK(half[i] == ex.target_data(1.0)[i]);
  CHECK(&ex.target_model(1.0) == &ex.target_model());
  CHECK_THROWS(ex.stage_report("never_ran"));
}

TEST_CASE("modular baselines train a recognizer on target data") {
  Experiment ex(tiny());
  const ExperimentReport gt = run_modular(ex, RecognizerTraining::ground_truth);
  CHECK(gt.method == "modular");
  CHECK(stage_names(gt) == std::vector<std::string>{"source", "proxy", "target_recognizer"});
  CHECK(gt.stages.back().heldout_miou.has_value());
  const ExperimentReport pred = run_modular(ex, RecognizerTraining::predicted_in_source);
  CHECK(pred.method == "modular_predicted");
  CHECK(ex.proxy_model_predicted().checksum() != ex.proxy_model().checksum());
}

TEST_CASE("identical configs and seeds give byte-identical reports") {
  ExperimentConfig cfg = tiny();
  cfg.measure_factors = false;
  const std::string a = to_jsonl(run_task_distillation(cfg));
  const std::string b = to_jsonl(run_task_distillation(cfg));
  CHECK(a == b);
  cfg.seed = 4;
  CHECK(to_jsonl(run_task_distillation(cfg)) != a);
}

TEST_CASE("cached stages reload identically") {
  const auto dir = std::filesystem::temp_directory_path() / "tdl_test_pipeline_cache";
  std::filesystem::remove_all(dir);
  uint64_t first = 0;
  {
    Experiment ex(tiny(), dir);
    first = ex.target_model().checksum();
  }
  Experiment again(tiny(), dir);
  CHECK(again.target_model().checksum() == first);
  CHECK(again.stage_report("target").checksum == first);
  std::filesystem::remove_all(dir);
}

TEST_CASE("a stage over its held-out loss bound aborts the run") {
  ExperimentConfig cfg = tiny();
  cfg.source_stage.max_heldout_loss = 1e-9;
  try {
    run_direct(cfg);
    FAIL("expected StageError");
  } catch (const StageError& e) {
    CHECK(e.stage() == "source");
  }
}

TEST_CASE("policy transfer reports carry measured factors") {
  Experiment ex(tiny());
  const auto reports = run_policy_transfer(ex);
  REQUIRE(reports.size() == 4);
  CHECK(reports[0].method == "direct");
  CHECK(reports[3].method == "task_distillation");
  for (const auto& r : reports) {
    REQUIRE(r.factors.has_value());
    CHECK(r.factors->G_L >= 0.0);
    CHECK(r.factors->G_L <= 1.0);
  }
  CHECK(render_factor_table(reports).find("task_distillation") != std::string::npos);
}

TEST_CASE("data ablation rows follow the requested fractions") {
  ExperimentConfig cfg = tiny();
  cfg.measure_factors = false;
  const ExperimentReport r = run_data_ablation(cfg, {0.5, 1.0});
  REQUIRE(r.ablation.size() == 2);
  CHECK(r.ablation[0].target_samples == 24);
  CHECK(r.ablation[1].target_samples == 48);
}

TEST_CASE("segmentation transfer through the depth proxy") {
  ExperimentConfig cfg = tiny();
  cfg.proxy = Modality::depth;
  cfg.noise = {8, 0.5, 0.05, true};
  const ExperimentReport r = run_seg_transfer(cfg);
  std::vector<std::string> rows;
  for (const auto& [name, m] : r.seg) rows.push_back(name);
  CHECK(rows == std::vector<std::string>{"adapted", "direct", "proxy_on_target", "source_in_domain"});
  for (const auto& [name, m] : r.seg) {
    CHECK(m.matrix.total() == 16 * kImageHeight * kImageWidth);
    CHECK(m.miou >= 0.0);
  }
}
