#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "tdl/config.hpp"
#include "tdl/report.hpp"

using namespace tdl;

namespace {

ConfigError config_error(const std::string& text) {
  try {
    parse_experiment_config(text);
  } catch (const ConfigError& e) {
    return e;
  }
  FAIL("expected a ConfigError");
  return ConfigError(-1, "", "");
}

ExperimentReport sample_report() {
  ExperimentReport r;
  r.experiment = "unit";
  r.method = "task_distillation";
  TrainReport t;
  t.stage = "source";
  t.train_loss = {0.3, 0.1 / 3.0};
  t.heldout_loss = {0.25, 0.04};
  t.train_count = 90;
  t.heldout_count = 10;
  t.wall_seconds = 1.5;
  t.checksum = 0xdeadbeefcafef00dULL;
  r.stages.push_back(t);
  TrainReport rec = t;
  rec.stage = "target_recognizer";
  rec.heldout_miou = 0.61;
  r.stages.push_back(rec);
  std::vector<EpisodeResult> eps(4);
  for (int i = 0; i < 4; ++i) {
    eps[static_cast<std::size_t>(i)].distance = 25.0 * (i + 1) + 0.1;
    eps[static_cast<std::size_t>(i)].seed = static_cast<uint64_t>(i) * 0x9e3779b97f4a7c15ULL;
    eps[static_cast<std::size_t>(i)].steps = 50 * (i + 1);
  }
  eps[1].terminated_by = Termination::infraction;
  eps[1].infraction = Infraction::collision;
  r.drive = aggregate(eps, 2, default_thresholds());
  SegMap a(2, 2), b(2, 2);
  a.ids = {0, 1, 1, 2};
  b.ids = {0, 1, 2, 2};
  r.seg.emplace_back("adapted", seg_metrics(confusion(a, b)));
  r.factors = AccuracyFactors{0.9, 0.5, 0.7, 0.8, 0.1, 0.95};
  r.measurements = FactorMeasurements{0.8, 0.9, 0.6, 0.42, 0.5, 0.95, 0.1};
  r.ablation.push_back({0.5, 100, 80.0, 60.0, 0.4});
  r.provenance = {"0123456789abcdef", 3, "0.1.0"};
  return r;
}

}  // namespace

TEST_CASE("config: defaults, round trip and hashing") {
  const ExperimentConfig d = parse_experiment_config("");
  CHECK(d == ExperimentConfig{});
  const std::string text = R"(# comment
[experiment]
name = custom
seed = 4
proxy = seg_map
class_map = 5:3
source_n = 300

[source]
kind = mazeworld
style = mazeworld
palette.1 = 0.5, 0.25, 0.125

[train.target]
widths = 8, 16, 32, 32
epochs = 3

[eval]
thresholds = 10, 20
)";
  const ExperimentConfig c = parse_experiment_config(text);
  CHECK(c.name == "custom");
  CHECK(c.seed == 4);
  CHECK(c.source.kind == WorldKind::mazeworld);
  CHECK(c.source.style.palette[1] == std::array<double, 3>{0.5, 0.25, 0.125});
  CHECK(c.class_map == maze_to_road_map());
  CHECK(c.target_stage.widths == std::array<int, 4>{8, 16, 32, 32});
  CHECK(c.eval.thresholds == std::vector<double>{10, 20});
  CHECK(parse_experiment_config(format_config(c)) == c);
  CHECK(format_config(parse_experiment_config(format_config(c))) == format_config(c));
  CHECK(config_hash(c) == config_hash(parse_experiment_config(format_config(c))));
  CHECK(config_hash(c) != config_hash(d));
  CHECK(config_hash(c).size() == 16);
}

TEST_CASE("config errors name the line and field") {
  ConfigError e = config_error("[experiment]\nbogus = 1\n");
  CHECK(e.line() == 2);
  CHECK(e.field() == "experiment.bogus");
  CHECK(std::string(e.what()).find("line 2") != std::string::npos);

  e = config_error("[experiment]\nseed = 1\n\nseed = 2\n");
  CHECK(e.line() == 4);

  e = config_error("[train.source]\nlr = fast\n");
  CHECK(e.line() == 2);
  CHECK(e.field() == "train.source.lr");

  e = config_error("[nowhere]\nx = 1\n");
  CHECK(e.line() == 2);

  e = config_error("[experiment]\nsource_n = 0\n");
  CHECK(e.field() == "experiment.source_n");

  e = config_error("[experiment]\nproxy = telepathy\n");
  CHECK(e.field() == "experiment.proxy");
}

TEST_CASE("reports round-trip through JSON") {
  const ExperimentReport r = sample_report();
  const std::string line = to_jsonl(r);
  CHECK(line.find('\n') == std::string::npos);
  const ExperimentReport back = report_from_json(line);
  CHECK(to_jsonl(back) == line);
  CHECK(back.stages[0].train_loss == r.stages[0].train_loss);
  CHECK(back.stages[0].checksum == r.stages[0].checksum);
  CHECK(back.stages[1].heldout_miou == r.stages[1].heldout_miou);
  CHECK(back.drive->episodes == r.drive->episodes);
  CHECK(back.seg[0].second.matrix == r.seg[0].second.matrix);
  CHECK(back.seg[0].second.iou == r.seg[0].second.iou);
  CHECK(back.measurements->distilled_success == r.measurements->distilled_success);
  // Wall time belongs to the manifest, not the reproducible report.
  CHECK(line.find("wall") == std::string::npos);

  const TrainReport t = train_report_from_json(train_report_json(r.stages[1]));
  CHECK(t.wall_seconds == 1.5);
  CHECK(t.heldout_miou == r.stages[1].heldout_miou);
}

TEST_CASE("report files and tables") {
  const auto dir = std::filesystem::temp_directory_path() / "tdl_test_report";
  std::filesystem::create_directories(dir);
  ExperimentReport direct = sample_report();
  direct.method = "direct";
  const std::vector<ExperimentReport> reports{direct, sample_report()};
  write_reports(dir / "r.jsonl", reports);
  const auto back = read_reports(dir / "r.jsonl");
  REQUIRE(back.size() == 2);
  CHECK(to_jsonl(back[1]) == to_jsonl(reports[1]));

  const std::string drive = render_drive_table(reports);
  CHECK(drive.find("avg.") != std::string::npos);
  CHECK(drive.find("50m") != std::string::npos);
  CHECK(drive.find("task_distillation") != std::string::npos);
  CHECK(render_seg_table(reports[0]).find("mIoU") != std::string::npos);
  const std::string factors = render_factor_table(reports);
  CHECK(factors.find("|a_S - a_P|") != std::string::npos);
  CHECK(factors.find("predicted") != std::string::npos);
  CHECK(factors.find("measured") != std::string::npos);
  CHECK(render_tables(reports).find(drive) != std::string::npos);

  std::ofstream(dir / "bad.jsonl") << "{not json\n";
  CHECK_THROWS_AS(read_reports(dir / "bad.jsonl"), FormatError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("manifests record and verify artifact digests") {
  const auto dir = std::filesystem::temp_directory_path() / "tdl_test_manifest";
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "a.txt") << "hello";
  RunManifest m;
  m.command = "unit";
  m.config_hash = "00";
  m.seeds = {1, 2};
  m.code_version = std::string(code_version());
  m.started = utc_timestamp();
  add_artifact(m, dir, "a", dir / "a.txt");
  m.finished = utc_timestamp();
  write_manifest(dir / "manifest.json", m);
  const RunManifest back = read_manifest(dir / "manifest.json");
  CHECK(back.seeds == m.seeds);
  REQUIRE(back.artifacts.size() == 1);
  CHECK(back.artifacts[0].path == "a.txt");
  CHECK_NOTHROW(verify_manifest(dir / "manifest.json"));
  std::ofstream(dir / "a.txt") << "changed";
  CHECK_THROWS_AS(verify_manifest(dir / "manifest.json"), FormatError);
  CHECK(m.started.size() == 20);
  std::filesystem::remove_all(dir);
}
