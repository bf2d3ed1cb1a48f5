// Acceptance run: one PASS/FAIL line per criterion on stdout, progress and
// measured numbers on stderr. Exit status is non-zero if any criterion fails.
//
//   acceptance [--out DIR] [--only AC-5,AC-6] [--configs DIR]
//
// AC-5, AC-6 and AC-8 share one experiment per seed, cached under DIR/cache so
// a rerun after a crash resumes from the finished stages.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tdl/config.hpp"
#include "tdl/distill.hpp"
#include "tdl/drive_eval.hpp"
#include "tdl/io.hpp"
#include "tdl/labelspace.hpp"
#include "tdl/metrics.hpp"
#include "tdl/models.hpp"
#include "tdl/pipelines.hpp"
#include "tdl/report.hpp"
#include "tdl/tensor.hpp"
#include "tdl/worlds.hpp"

#ifndef TDL_CONFIG_DIR
#define TDL_CONFIG_DIR "configs"
#endif

namespace fs = std::filesystem;
using namespace tdl;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

void note(const std::string& msg) {
  std::cerr << "  " << msg << "\n";
  std::cerr.flush();
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream o;
  o.precision(digits);
  o << v;
  return o.str();
}

Tensor randn(Shape s, Rng& rng, double scale = 1.0, bool grad = true) {
  std::vector<double> v(static_cast<std::size_t>(shape_numel(s)));
  for (double& x : v) x = scale * rng.normal();
  return Tensor::from(std::move(s), v, grad);
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

struct Outcome {
  bool pass = false;
  std::string detail;
};

// ---------------------------------------------------------------- AC-1

void jitter_biases(Model& m, uint64_t seed) {
  Rng rng(seed);
  for (auto& [name, p] : m.named_parameters())
    if (name.ends_with(".b"))
      for (double& v : p.mutable_data()) v = 0.1 * rng.normal();
}

Outcome ac1() {
  // Largest gradients here are O(0.1-1); entries below 1e-4 are compared in
  // absolute terms, where central differences bottom out at ~1e-10.
  constexpr double kEps = 1e-5, kFloor = 1e-4;
  const auto t0 = Clock::now();
  double worst = 0.0;

  // Two-layer tanh MLP.
  {
    Rng rng(1);
    Tensor w1 = randn({12, 16}, rng, 0.4), b1 = randn({16}, rng, 0.1);
    Tensor w2 = randn({16, 3}, rng, 0.4), b2 = randn({3}, rng, 0.1);
    const Tensor x = randn({8, 12}, rng, 1.0, false);
    const Tensor y = randn({8, 3}, rng, 0.5, false);
    std::vector<Tensor> params{w1, b1, w2, b2};
    auto loss = [&] { return l1_loss(add_bias(matmul(tanh(add_bias(matmul(x, w1), b1)), w2), b2), y); };
    const double e = finite_diff_check(loss, params, kEps, 11, 200, kFloor);
    note("tanh MLP: max rel err " + fmt(e));
    worst = std::max(worst, e);
  }

  // The two shipped architectures on real observations, with the losses they
  // are trained under. Biases start at exactly zero, which parks dead units on
  // the relu kink where no derivative exists, so they are jittered first.
  const World w = generate_world({WorldKind::roadworld, 3, 300.0, 4.0, 1.0, 4.0, default_style(WorldKind::roadworld)});
  const Dataset data = generate_dataset(w, 2, 4);
  std::vector<Observation> maps, images;
  for (const Sample& s : data) {
    maps.push_back(Observation::map_seg(s.seg_map));
    images.push_back(Observation::of(s.image));
  }
  {
    Model m(waypoint_spec(Modality::seg_map, 21, {4, 4, 8, 8}));
    jitter_biases(m, 21);
    const Tensor x = m.encode(maps);
    Rng rng(2);
    const Tensor y = randn({2, kNumWaypoints, 2}, rng, 0.3, false);
    std::vector<Tensor> params = m.parameters();
    const double e = finite_diff_check([&] { return l1_loss(m.forward(x), y); }, params, kEps, 12, 200, kFloor);
    note("waypoint net: max rel err " + fmt(e));
    worst = std::max(worst, e);
  }
  {
    Model m(segmentation_spec(Modality::image, Modality::seg_camera, 22, {4, 4, 8, 8}));
    jitter_biases(m, 22);
    const Tensor x = m.encode(images);
    std::vector<int> targets;
    for (const Sample& s : data)
      for (uint8_t id : s.seg_cam.ids) targets.push_back(id);
    std::vector<Tensor> params = m.parameters();
    const double e = finite_diff_check([&] { return cross_entropy(m.forward(x), targets); }, params, kEps, 13, 200, kFloor);
    note("segmentation net: max rel err " + fmt(e));
    worst = std::max(worst, e);
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 30.0, "max rel err " + fmt(worst) + ", " + fmt(secs, 3) + " s"};
}

// ---------------------------------------------------------------- AC-2

Outcome ac2() {
  Rng rng(2024);
  int mismatches = 0;
  for (int t = 0; t < 100; ++t) {
    SegMap pred(8, 8, 0), gt(8, 8, 0);
    // Restrict some maps to fewer classes so absent classes are exercised.
    const int classes = 2 + static_cast<int>(rng.below(kNumClasses - 1));
    for (std::size_t i = 0; i < pred.ids.size(); ++i) {
      pred.ids[i] = static_cast<uint8_t>(rng.below(static_cast<uint64_t>(classes)));
      gt.ids[i] = static_cast<uint8_t>(rng.below(static_cast<uint64_t>(classes)));
    }
    const SegMetrics m = seg_metrics(confusion(pred, gt));
    double sum = 0.0;
    int present = 0;
    for (int c = 0; c < kNumClasses; ++c) {
      int64_t inter = 0, uni = 0;
      for (std::size_t i = 0; i < pred.ids.size(); ++i) {
        const bool p = pred.ids[i] == c, g = gt.ids[i] == c;
        inter += p && g;
        uni += p || g;
      }
      const auto& got = m.iou[static_cast<std::size_t>(c)];
      if (uni == 0) {
        mismatches += got.has_value();
        continue;
      }
      const double expect = static_cast<double>(inter) / static_cast<double>(uni);
      mismatches += !got.has_value() || *got != expect;
      sum += expect;
      ++present;
    }
    int64_t correct = 0;
    for (std::size_t i = 0; i < pred.ids.size(); ++i) correct += pred.ids[i] == gt.ids[i];
    mismatches += m.miou != sum / present;
    mismatches += m.accuracy != static_cast<double>(correct) / 64.0;
  }
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    AccuracyFactors f{rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform()};
    worst = std::max(worst, std::abs(predict_accuracy(f, TransferMethod::direct) - f.a_S * f.G_I));
    worst = std::max(worst, std::abs(predict_accuracy(f, TransferMethod::modular) - f.a_P * f.a_l * f.G_L));
    worst = std::max(worst, std::abs(predict_accuracy(f, TransferMethod::distill) - f.a_P * f.G_L * f.a_d));
  }
  return {mismatches == 0 && worst <= 1e-12,
          std::to_string(mismatches) + " metric mismatches, max product error " + fmt(worst)};
}

// ---------------------------------------------------------------- AC-3

Outcome ac3() {
  const World w = straight_test_world();
  double worst = 0.0;
  for (const PIDGains& g : default_controllers()) {
    AgentState a;
    a.position = {50.0, 1.0};
    PidController pid(g);
    double lateral = 1.0;
    for (int i = 0; i < 100 && std::abs(lateral) >= 0.05; ++i) {
      a = step(w, a, pid(expert_waypoints(w, a))).state;
      w.path().project(a.position, &lateral);
    }
    worst = std::max(worst, std::abs(lateral));
  }
  return {worst < 0.05, "worst cross-track error after <= 100 steps " + fmt(worst) + " m"};
}

// ---------------------------------------------------------------- AC-4

Outcome ac4() {
  const World w = generate_world({WorldKind::trackworld, 1, 500.0, 4.0, 1.0, 4.0, default_style(WorldKind::trackworld)});
  DatasetOptions o;
  o.mask = render_seg_map | render_expert;
  const Dataset data = generate_dataset(w, 10000, 77, o);

  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.input = Modality::seg_map;
  cfg.seed = 5;
  const std::array<int, 4> widths{8, 16, 32, 32};
  auto log = [](const std::string& stage) {
    return [stage](const TrainReport& r) {
      note(stage + " epoch " + std::to_string(r.train_loss.size()) + " held-out " + fmt(r.heldout_loss.back()));
    };
  };
  const auto [bc, bc_report] = behavior_clone(waypoint_spec(Modality::seg_map, 5, widths), data, cfg, log("bc"));
  cfg.teacher_input = Modality::seg_map;
  const auto [sd, sd_report] = distill(waypoint_spec(Modality::seg_map, 6, widths), &bc, data, cfg, log("self"));

  const double bc_l1 = bc_report.final_heldout(), sd_l1 = sd_report.final_heldout();
  const double slowest = std::max(bc_report.wall_seconds, sd_report.wall_seconds);
  return {bc_l1 < 0.08 && sd_l1 <= 0.05 && slowest < 300.0,
          "clone held-out L1 " + fmt(bc_l1) + ", self-distill " + fmt(sd_l1) + ", slowest stage " + fmt(slowest, 3) +
              " s"};
}

// ------------------------------------------------------- AC-5, AC-6, AC-8

struct SeedResult {
  double direct = 0.0, modular = 0.0, modular_predicted = 0.0, distill = 0.0, distill_half = 0.0;
};

std::vector<SeedResult> policy_runs(const fs::path& configs, const fs::path& out) {
  static std::vector<SeedResult> cache;
  if (!cache.empty()) return cache;
  const ExperimentConfig base = load_experiment_config(configs / "policy_transfer.ini");
  for (uint64_t seed : {1, 2, 3}) {
    ExperimentConfig cfg = base;
    cfg.seed = seed;
    const auto t0 = Clock::now();
    Experiment ex(cfg, out / "cache" / ("seed-" + std::to_string(seed)),
                  [seed](const std::string& m) { note("seed " + std::to_string(seed) + ": " + m); });
    const auto reports = run_policy_transfer(ex);
    const DriveMetrics half = ex.evaluate(ex.target_world(), model_policy(ex.target_model(0.5)), "task_distillation@0.5");

    // Only the distillation side of the ablation is needed: AC-8 compares it
    // with modular at full data, which run_policy_transfer already evaluated.
    ExperimentReport half_report;
    half_report.experiment = cfg.name;
    half_report.method = "task_distillation@0.5";
    half_report.drive = half;
    half_report.provenance = ex.provenance();
    std::vector<ExperimentReport> all = reports;
    all.push_back(half_report);
    const fs::path dir = out / ("policy_transfer-seed-" + std::to_string(seed));
    fs::create_directories(dir);
    write_reports(dir / "report.jsonl", all);
    std::ofstream(dir / "tables.txt") << render_tables(all);

    SeedResult r;
    for (const auto& rep : reports) {
      const double mean = rep.drive ? rep.drive->mean : 0.0;
      if (rep.method == "direct") r.direct = mean;
      else if (rep.method == "modular") r.modular = mean;
      else if (rep.method == "modular_predicted") r.modular_predicted = mean;
      else if (rep.method == "task_distillation") r.distill = mean;
    }
    r.distill_half = half.mean;
    note("seed " + std::to_string(seed) + ": direct " + fmt(r.direct) + ", modular " + fmt(r.modular) +
         ", modular-predicted " + fmt(r.modular_predicted) + ", distill " + fmt(r.distill) + ", distill@0.5 " +
         fmt(r.distill_half) + " (" + fmt(seconds_since(t0), 4) + " s)");
    cache.push_back(r);
  }
  return cache;
}

Outcome ac5(const fs::path& configs, const fs::path& out) {
  double direct = 0.0, distill = 0.0;
  for (const SeedResult& r : policy_runs(configs, out)) {
    direct += r.direct / 3.0;
    distill += r.distill / 3.0;
  }
  return {distill >= 2.0 * direct, "distill mean " + fmt(distill) + " m vs direct " + fmt(direct) + " m"};
}

Outcome ac6(const fs::path& configs, const fs::path& out) {
  int over_modular = 0, over_predicted = 0;
  std::string per_seed;
  for (const SeedResult& r : policy_runs(configs, out)) {
    over_modular += r.distill >= r.modular;
    over_predicted += r.distill >= r.modular_predicted;
    per_seed += (per_seed.empty() ? "" : "; ") + fmt(r.distill) + " vs " + fmt(r.modular) + " / " +
                fmt(r.modular_predicted);
  }
  return {over_modular >= 2 && over_predicted == 3,
          "distill >= modular in " + std::to_string(over_modular) + "/3, >= modular-predicted in " +
              std::to_string(over_predicted) + "/3 (" + per_seed + ")"};
}

Outcome ac8(const fs::path& configs, const fs::path& out) {
  int wins = 0;
  std::string per_seed;
  for (const SeedResult& r : policy_runs(configs, out)) {
    wins += r.distill_half >= r.modular;
    per_seed += (per_seed.empty() ? "" : "; ") + fmt(r.distill_half) + " vs " + fmt(r.modular);
  }
  return {wins >= 2, "distill@0.5 >= modular@1.0 in " + std::to_string(wins) + "/3 (" + per_seed + ")"};
}

// ---------------------------------------------------------------- AC-7

Outcome ac7(const fs::path& configs, const fs::path& out) {
  const ExperimentConfig cfg = load_experiment_config(configs / "seg_transfer.ini");
  const ExperimentReport r = run_seg_transfer(cfg, note);
  fs::create_directories(out / "seg_transfer");
  write_reports(out / "seg_transfer" / "report.jsonl", {r});
  std::ofstream(out / "seg_transfer" / "tables.txt") << render_seg_table(r);
  std::map<std::string, double> miou;
  for (const auto& [name, m] : r.seg) miou[name] = m.miou;
  const double adapted = miou["adapted"], proxy = miou["proxy_on_target"], direct = miou["direct"];
  return {std::abs(adapted - proxy) <= 0.05 && adapted > direct,
          "mIoU adapted " + fmt(adapted) + ", proxy-on-target " + fmt(proxy) + ", direct " + fmt(direct)};
}

// ---------------------------------------------------------------- AC-9

std::string bytes_of(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream o;
  o << in.rdbuf();
  return o.str();
}

Outcome ac9(const fs::path& configs, const fs::path& out) {
  const ExperimentConfig cfg = load_experiment_config(configs / "smoke.ini");
  const fs::path dir = out / "determinism";
  fs::create_directories(dir);
  for (const char* name : {"a.jsonl", "b.jsonl"}) {
    Experiment fresh(cfg);
    write_reports(dir / name, run_policy_transfer(fresh));
  }
  const bool reports_same = bytes_of(dir / "a.jsonl") == bytes_of(dir / "b.jsonl");

  Experiment ex(cfg);
  const Dataset& data = ex.source_data();
  write_dataset(dir / "data.tdl1", data);
  const Dataset back = read_dataset(dir / "data.tdl1");
  write_dataset(dir / "data2.tdl1", back);
  const bool data_same = back == data && bytes_of(dir / "data.tdl1") == bytes_of(dir / "data2.tdl1");

  bool models_same = true;
  for (const Model* m : {&ex.source_model(), &ex.proxy_model(), &ex.target_recognizer()}) {
    write_checkpoint(dir / "model.tdlm", *m);
    const Model loaded = read_checkpoint(dir / "model.tdlm");
    write_checkpoint(dir / "model2.tdlm", loaded);
    models_same = models_same && loaded.spec() == m->spec() && loaded.checksum() == m->checksum() &&
                  bytes_of(dir / "model.tdlm") == bytes_of(dir / "model2.tdlm");
    for (std::size_t i = 0; i < m->named_parameters().size(); ++i)
      models_same = models_same && values(loaded.named_parameters()[i].second) == values(m->named_parameters()[i].second);
  }
  return {reports_same && data_same && models_same, std::string("reports ") + (reports_same ? "identical" : "DIFFER") +
                                                        ", dataset round trip " + (data_same ? "exact" : "BROKEN") +
                                                        ", checkpoint round trip " + (models_same ? "exact" : "BROKEN")};
}

// ---------------------------------------------------------------- AC-10

StyleSpec random_style(Rng& rng) {
  StyleSpec s;
  for (auto& rgb : s.palette)
    for (double& v : rgb) v = rng.uniform();
  s.texture_noise = rng.uniform();
  s.lighting_gain = 0.3 + 1.5 * rng.uniform();
  s.sprite_rate = rng.uniform() * 0.5;
  return s;
}

Outcome ac10() {
  Rng rng(10);
  int checked = 0, differing = 0, images_unchanged = 0;
  for (WorldKind kind : {WorldKind::trackworld, WorldKind::mazeworld, WorldKind::roadworld}) {
    for (uint64_t seed = 0; seed < 3; ++seed) {
      const World base = generate_world({kind, seed, 400.0, 4.0, 1.0, 4.0, default_style(kind)});
      const Dataset ref = generate_dataset(base, 40, seed + 100);
      for (int k = 0; k < 3; ++k) {
        const StyleSpec style = random_style(rng);
        validate(style);
        const Dataset other = generate_dataset(base.restyled(style), 40, seed + 100);
        for (std::size_t i = 0; i < ref.size(); ++i) {
          ++checked;
          differing += !(ref[i].seg_cam == other[i].seg_cam && ref[i].seg_map == other[i].seg_map &&
                         ref[i].depth == other[i].depth && ref[i].expert == other[i].expert);
          images_unchanged += ref[i].image == other[i].image;
        }
      }
    }
  }
  // Identical images would mean the restyle never took effect.
  return {differing == 0 && images_unchanged == 0, std::to_string(checked) + " samples, " + std::to_string(differing) +
                                                       " with changed labels, " + std::to_string(images_unchanged) +
                                                       " with unchanged images"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria AC-1..AC-10"};
  std::string out = "acceptance_out";
  std::string configs = TDL_CONFIG_DIR;
  std::vector<std::string> only;
  app.add_option("--out", out, "directory for reports and caches");
  app.add_option("--configs", configs, "directory holding the experiment configs")->check(CLI::ExistingDirectory);
  app.add_option("--only", only, "run only these criteria, e.g. AC-3")->delimiter(',');
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(out);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"AC-1", ac1},
      {"AC-2", ac2},
      {"AC-3", ac3},
      {"AC-4", ac4},
      {"AC-5", [&] { return ac5(configs, out); }},
      {"AC-6", [&] { return ac6(configs, out); }},
      {"AC-7", [&] { return ac7(configs, out); }},
      {"AC-8", [&] { return ac8(configs, out); }},
      {"AC-9", [&] { return ac9(configs, out); }},
      {"AC-10", ac10},
  };
  const std::set<std::string> wanted(only.begin(), only.end());
  int failed = 0;
  const auto t0 = Clock::now();
  for (const auto& [id, run] : criteria) {
    if (!wanted.empty() && !wanted.count(id)) continue;
    std::cerr << id << " running\n";
    const auto t = Clock::now();
    Outcome r;
    try {
      r = run();
    } catch (const std::exception& e) {
      r = {false, std::string("exception: ") + e.what()};
    }
    failed += !r.pass;
    std::cout << id << " " << (r.pass ? "PASS" : "FAIL") << "  " << r.detail << "  [" << fmt(seconds_since(t), 4)
              << " s]" << std::endl;
  }
  std::cerr << "total " << fmt(seconds_since(t0), 5) << " s\n";
  return failed == 0 ? 0 : 1;
}
