#include "tdl/report.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"
#include "tdl/io.hpp"

#ifndef TDL_VERSION
#define TDL_VERSION "0.0.0"
#endif

namespace tdl {

using json = nlohmann::ordered_json;

std::string_view code_version() { return TDL_VERSION; }

namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> opt_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

json stage_json(const TrainReport& r) {
  return {{"stage", r.stage},
          {"train_loss", r.train_loss},
          {"heldout_loss", r.heldout_loss},
          {"heldout_miou", opt(r.heldout_miou)},
          {"train_count", r.train_count},
          {"heldout_count", r.heldout_count},
          {"checksum", hex64(r.checksum)}};
}

TrainReport stage_from(const json& j) {
  TrainReport r;
  r.stage = j.at("stage").get<std::string>();
  r.train_loss = j.at("train_loss").get<std::vector<double>>();
  r.heldout_loss = j.at("heldout_loss").get<std::vector<double>>();
  r.heldout_miou = opt_from(j.at("heldout_miou"));
  r.train_count = j.at("train_count").get<int>();
  r.heldout_count = j.at("heldout_count").get<int>();
  r.checksum = std::stoull(j.at("checksum").get<std::string>(), nullptr, 16);
  if (j.contains("wall_seconds")) r.wall_seconds = j.at("wall_seconds").get<double>();
  return r;
}

json drive_json(const DriveMetrics& m) {
  json eps = json::array();
  for (const auto& e : m.episodes) {
    eps.push_back({{"distance", e.distance},
                   {"terminated_by", std::string(to_string(e.terminated_by))},
                   {"infraction", std::string(to_string(e.infraction))},
                   {"seed", e.seed},
                   {"steps", e.steps}});
  }
  return {{"mean", m.mean},
          {"std", m.std},
          {"min", m.min},
          {"max", m.max},
          {"thresholds", m.thresholds},
          {"completion", m.completion},
          {"collision_rate", m.collision_rate},
          {"offroad_rate", m.offroad_rate},
          {"controller_means", m.controller_means},
          {"episodes", eps}};
}

DriveMetrics drive_from(const json& j) {
  DriveMetrics m;
  m.mean = j.at("mean").get<double>();
  m.std = j.at("std").get<double>();
  m.min = j.at("min").get<double>();
  m.max = j.at("max").get<double>();
  m.thresholds = j.at("thresholds").get<std::vector<double>>();
  m.completion = j.at("completion").get<std::vector<double>>();
  m.collision_rate = j.at("collision_rate").get<double>();
  m.offroad_rate = j.at("offroad_rate").get<double>();
  m.controller_means = j.at("controller_means").get<std::vector<double>>();
  for (const auto& e : j.at("episodes")) {
    EpisodeResult r;
    r.distance = e.at("distance").get<double>();
    r.terminated_by = e.at("terminated_by").get<std::string>() == "timeout" ? Termination::timeout : Termination::infraction;
    const auto inf = e.at("infraction").get<std::string>();
    r.infraction = inf == "collision" ? Infraction::collision : inf == "offroad" ? Infraction::offroad : Infraction::none;
    r.seed = e.at("seed").get<uint64_t>();
    r.steps = e.at("steps").get<int>();
    m.episodes.push_back(r);
  }
  return m;
}

json seg_json(const std::string& name, const SegMetrics& m) {
  json iou = json::array();
  for (const auto& v : m.iou) iou.push_back(opt(v));
  return {{"name", name},
          {"miou", m.miou},
          {"accuracy", m.accuracy},
          {"iou", iou},
          {"confusion", {{"classes", m.matrix.classes}, {"counts", m.matrix.counts}}}};
}

std::pair<std::string, SegMetrics> seg_from(const json& j) {
  SegMetrics m;
  m.miou = j.at("miou").get<double>();
  m.accuracy = j.at("accuracy").get<double>();
  for (const auto& v : j.at("iou")) m.iou.push_back(opt_from(v));
  m.matrix = Confusion(j.at("confusion").at("classes").get<int>());
  m.matrix.counts = j.at("confusion").at("counts").get<std::vector<int64_t>>();
  return {j.at("name").get<std::string>(), std::move(m)};
}

json factors_json(const AccuracyFactors& f) {
  return {{"a_P", f.a_P}, {"a_l", f.a_l}, {"a_d", f.a_d}, {"a_S", f.a_S}, {"G_I", f.G_I}, {"G_L", f.G_L}};
}

AccuracyFactors factors_from(const json& j) {
  return {j.at("a_P").get<double>(), j.at("a_l").get<double>(), j.at("a_d").get<double>(),
          j.at("a_S").get<double>(), j.at("G_I").get<double>(), j.at("G_L").get<double>()};
}

json measurements_json(const FactorMeasurements& m) {
  return {{"source_success", m.source_success},
          {"proxy_success", m.proxy_success},
          {"proxy_target_success", m.proxy_target_success},
          {"distilled_success", m.distilled_success},
          {"recognizer_target_miou", m.recognizer_target_miou},
          {"label_overlap", m.label_overlap},
          {"image_overlap", m.image_overlap}};
}

FactorMeasurements measurements_from(const json& j) {
  FactorMeasurements m;
  m.source_success = j.at("source_success").get<double>();
  m.proxy_success = j.at("proxy_success").get<double>();
  m.proxy_target_success = j.at("proxy_target_success").get<double>();
  m.distilled_success = j.at("distilled_success").get<double>();
  m.recognizer_target_miou = j.at("recognizer_target_miou").get<double>();
  m.label_overlap = j.at("label_overlap").get<double>();
  m.image_overlap = j.at("image_overlap").get<double>();
  return m;
}

std::string fixed(double v, int prec) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(prec) << v;
  return o.str();
}

std::string pad(const std::string& s, std::size_t w, bool left = false) {
  if (s.size() >= w) return s;
  return left ? s + std::string(w - s.size(), ' ') : std::string(w - s.size(), ' ') + s;
}

}  // namespace

std::string to_jsonl(const ExperimentReport& r) {
  json j;
  j["experiment"] = r.experiment;
  j["method"] = r.method;
  j["provenance"] = {{"config_hash", r.provenance.config_hash},
                     {"seed", r.provenance.seed},
                     {"code_version", r.provenance.code_version}};
  json stages = json::array();
  for (const auto& s : r.stages) stages.push_back(stage_json(s));
  j["stages"] = stages;
  j["drive"] = r.drive ? drive_json(*r.drive) : json(nullptr);
  json seg = json::array();
  for (const auto& [name, m] : r.seg) seg.push_back(seg_json(name, m));
  j["seg"] = seg;
  j["factors"] = r.factors ? factors_json(*r.factors) : json(nullptr);
  j["measurements"] = r.measurements ? measurements_json(*r.measurements) : json(nullptr);
  json ab = json::array();
  for (const auto& a : r.ablation) {
    ab.push_back({{"fraction", a.fraction},
                  {"target_samples", a.target_samples},
                  {"distill_mean", a.distill_mean},
                  {"modular_mean", a.modular_mean},
                  {"recognizer_miou", a.recognizer_miou}});
  }
  j["ablation"] = ab;
  return j.dump();
}

ExperimentReport report_from_json(std::string_view line) {
  try {
    const json j = json::parse(line);
    ExperimentReport r;
    r.experiment = j.at("experiment").get<std::string>();
    r.method = j.at("method").get<std::string>();
    const auto& p = j.at("provenance");
    r.provenance = {p.at("config_hash").get<std::string>(), p.at("seed").get<uint64_t>(),
                    p.at("code_version").get<std::string>()};
    for (const auto& s : j.at("stages")) r.stages.push_back(stage_from(s));
    if (!j.at("drive").is_null()) r.drive = drive_from(j.at("drive"));
    for (const auto& s : j.at("seg")) r.seg.push_back(seg_from(s));
    if (!j.at("factors").is_null()) r.factors = factors_from(j.at("factors"));
    if (!j.at("measurements").is_null()) r.measurements = measurements_from(j.at("measurements"));
    for (const auto& a : j.at("ablation")) {
      r.ablation.push_back({a.at("fraction").get<double>(), a.at("target_samples").get<int>(),
                            a.at("distill_mean").get<double>(), a.at("modular_mean").get<double>(),
                            a.at("recognizer_miou").get<double>()});
    }
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("report record: ") + e.what());
  }
}

std::string train_report_json(const TrainReport& r) {
  json j = stage_json(r);
  j["wall_seconds"] = r.wall_seconds;
  return j.dump();
}

TrainReport train_report_from_json(std::string_view text) {
  try {
    return stage_from(json::parse(text));
  } catch (const json::exception& e) {
    throw FormatError(std::string("train report: ") + e.what());
  }
}

void write_reports(const std::filesystem::path& path, const std::vector<ExperimentReport>& reports) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot create " + path.string());
  for (const auto& r : reports) out << to_jsonl(r) << '\n';
}

std::vector<ExperimentReport> read_reports(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<ExperimentReport> out;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(report_from_json(line));
    } catch (const FormatError& e) {
      throw FormatError(path.string() + " line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

std::string render_drive_table(const std::vector<ExperimentReport>& reports) {
  std::vector<const ExperimentReport*> rows;
  for (const auto& r : reports) {
    if (r.drive) rows.push_back(&r);
  }
  if (rows.empty()) return {};
  auto label = [](const ExperimentReport& r) {
    return r.method + (r.provenance.seed ? " s" + std::to_string(r.provenance.seed) : "");
  };
  std::size_t width = 22;
  for (const auto* r : rows) width = std::max(width, label(*r).size());
  std::ostringstream o;
  const auto& th = rows.front()->drive->thresholds;
  o << pad("method", width, true) << " | " << pad("avg.", 8) << pad("std", 8) << pad("min", 8) << pad("max", 8) << " |";
  for (double t : th) o << pad(fixed(t, 0) + "m", 7);
  o << " | " << pad("coll.", 6) << pad("offr.", 6) << "\n";
  o << std::string(width, '-') << "-+-" << std::string(32, '-') << "-+" << std::string(7 * th.size(), '-') << "-+-"
    << std::string(12, '-') << "\n";
  for (const auto* r : rows) {
    const auto& m = *r->drive;
    o << pad(label(*r), width, true) << " | "
      << pad(fixed(m.mean, 1), 8) << pad(fixed(m.std, 1), 8) << pad(fixed(m.min, 1), 8) << pad(fixed(m.max, 1), 8)
      << " |";
    for (double c : m.completion) o << pad(fixed(c, 2), 7);
    o << " | " << pad(fixed(m.collision_rate, 2), 6) << pad(fixed(m.offroad_rate, 2), 6) << "\n";
  }
  return o.str();
}

std::string render_seg_table(const ExperimentReport& r) {
  if (r.seg.empty()) return {};
  static const char* names[kNumClasses] = {"sky", "road", "offroad", "obstacle", "marking", "distr."};
  std::ostringstream o;
  o << pad("model", 18, true) << " |";
  for (const char* n : names) o << pad(n, 9);
  o << " | " << pad("mIoU", 7) << pad("acc.", 7) << "\n";
  for (const auto& [name, m] : r.seg) {
    o << pad(name, 18, true) << " |";
    for (std::size_t k = 0; k < static_cast<std::size_t>(kNumClasses); ++k) {
      o << pad(k < m.iou.size() && m.iou[k] ? fixed(100.0 * *m.iou[k], 1) : "-", 9);
    }
    o << " | " << pad(fixed(100.0 * m.miou, 1), 7) << pad(fixed(100.0 * m.accuracy, 1), 7) << "\n";
  }
  return o.str();
}

std::string render_ablation_table(const ExperimentReport& r) {
  if (r.ablation.empty()) return {};
  std::ostringstream o;
  o << pad("fraction", 9) << pad("samples", 9) << pad("distill", 10) << pad("modular", 10) << pad("rec. mIoU", 11)
    << "\n";
  for (const auto& a : r.ablation) {
    o << pad(fixed(a.fraction, 3), 9) << pad(std::to_string(a.target_samples), 9) << pad(fixed(a.distill_mean, 1), 10)
      << pad(fixed(a.modular_mean, 1), 10) << pad(fixed(a.recognizer_miou, 3), 11) << "\n";
  }
  return o.str();
}

std::string render_factor_table(const std::vector<ExperimentReport>& reports) {
  const ExperimentReport* with = nullptr;
  for (const auto& r : reports) {
    if (r.factors) with = &r;
  }
  if (!with) return {};
  const auto& f = *with->factors;
  std::ostringstream o;
  o << "factors: a_S " << fixed(f.a_S, 3) << "  a_P " << fixed(f.a_P, 3) << "  a_l " << fixed(f.a_l, 3) << "  a_d "
    << fixed(f.a_d, 3) << "  G_I " << fixed(f.G_I, 3) << "  G_L " << fixed(f.G_L, 3) << "  |a_S - a_P| "
    << fixed(std::abs(f.a_S - f.a_P), 3) << "\n";
  o << pad("method", 22, true) << pad("predicted", 11) << pad("measured", 10) << "\n";
  const std::pair<TransferMethod, const char*> methods[] = {
      {TransferMethod::direct, "direct"}, {TransferMethod::modular, "modular"}, {TransferMethod::distill, "task_distillation"}};
  for (const auto& [m, name] : methods) {
    std::string measured = "-";
    for (const auto& r : reports) {
      if (r.method == name && r.drive) measured = fixed(drive_success(*r.drive), 3);
    }
    o << pad(name, 22, true) << pad(fixed(predict_accuracy(f, m), 3), 11) << pad(measured, 10) << "\n";
  }
  return o.str();
}

std::string render_tables(const std::vector<ExperimentReport>& reports) {
  std::ostringstream o;
  o << render_drive_table(reports);
  for (const auto& r : reports) {
    if (!r.seg.empty()) o << "\n" << r.experiment << " / " << r.method << "\n" << render_seg_table(r);
    if (!r.ablation.empty()) o << "\n" << r.experiment << " ablation\n" << render_ablation_table(r);
  }
  const std::string factors = render_factor_table(reports);
  if (!factors.empty()) o << "\n" << factors;
  return o.str();
}

std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void add_artifact(RunManifest& m, const std::filesystem::path& dir, const std::string& name,
                  const std::filesystem::path& file) {
  m.artifacts.push_back({name, std::filesystem::relative(file, dir).generic_string(), file_digest(file)});
}

void write_manifest(const std::filesystem::path& path, const RunManifest& m) {
  json arts = json::array();
  for (const auto& a : m.artifacts) arts.push_back({{"name", a.name}, {"path", a.path}, {"digest", a.digest}});
  const json j = {{"command", m.command},     {"config_hash", m.config_hash}, {"seeds", m.seeds},
                  {"code_version", m.code_version}, {"started", m.started},     {"finished", m.finished},
                  {"artifacts", arts}};
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot create " + path.string());
  out << j.dump(2) << '\n';
}

RunManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  try {
    const json j = json::parse(in);
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.seeds = j.at("seeds").get<std::vector<uint64_t>>();
    m.code_version = j.at("code_version").get<std::string>();
    m.started = j.at("started").get<std::string>();
    m.finished = j.at("finished").get<std::string>();
    for (const auto& a : j.at("artifacts")) {
      m.artifacts.push_back({a.at("name").get<std::string>(), a.at("path").get<std::string>(),
                             a.at("digest").get<std::string>()});
    }
    return m;
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void verify_manifest(const std::filesystem::path& path) {
  const RunManifest m = read_manifest(path);
  const auto dir = path.parent_path();
  for (const auto& a : m.artifacts) {
    const auto file = dir / a.path;
    if (!std::filesystem::exists(file)) throw FormatError("manifest artifact '" + a.name + "' missing: " + file.string());
    const std::string d = file_digest(file);
    if (d != a.digest) {
      throw FormatError("manifest artifact '" + a.name + "' changed: digest " + d + ", recorded " + a.digest);
    }
  }
}

}  // namespace tdl
