#pragma once

// Structured experiment records (one JSON object per line), their table
// renderings, and run manifests.
//
// Records never carry wall-clock time, so identical configs and seeds give
// byte-identical report files. Timing lives only in the manifest.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "tdl/pipelines.hpp"

namespace tdl {

std::string_view code_version();

/// One JSON object, no trailing newline.
std::string to_jsonl(const ExperimentReport& report);
ExperimentReport report_from_json(std::string_view line);

std::string train_report_json(const TrainReport& report);
TrainReport train_report_from_json(std::string_view text);

void write_reports(const std::filesystem::path& path, const std::vector<ExperimentReport>& reports);
std::vector<ExperimentReport> read_reports(const std::filesystem::path& path);

/// Driving results: "method | avg. std min max | <thresholds>".
std::string render_drive_table(const std::vector<ExperimentReport>& reports);
/// Per-class IoU, mIoU and pixel accuracy for every segmentation row.
std::string render_seg_table(const ExperimentReport& report);
std::string render_ablation_table(const ExperimentReport& report);
/// Measured factors, and the accuracy model's prediction next to the measured
/// success of each method present in `reports`.
std::string render_factor_table(const std::vector<ExperimentReport>& reports);
/// Whichever of the above apply to the given reports.
std::string render_tables(const std::vector<ExperimentReport>& reports);

struct ManifestArtifact {
  std::string name;
  std::string path;  // relative to the manifest's directory
  std::string digest;
};

struct RunManifest {
  std::string command;
  std::string config_hash;
  std::vector<uint64_t> seeds;
  std::string code_version;
  std::string started;  // ISO-8601 UTC
  std::string finished;
  std::vector<ManifestArtifact> artifacts;
};

std::string utc_timestamp();
/// Records `file` (inside `dir`) with its current digest.
void add_artifact(RunManifest& m, const std::filesystem::path& dir, const std::string& name,
                  const std::filesystem::path& file);
void write_manifest(const std::filesystem::path& path, const RunManifest& m);
RunManifest read_manifest(const std::filesystem::path& path);
/// Throws FormatError naming the first artifact that is missing or whose
/// digest changed.
void verify_manifest(const std::filesystem::path& path);

}  // namespace tdl
