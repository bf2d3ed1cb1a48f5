#pragma once

// Bit-exact binary formats for datasets and checkpoints, and debug raster
// dumps. All multi-byte values are little-endian.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "tdl/models.hpp"
#include "tdl/types.hpp"

namespace tdl {

inline constexpr uint32_t kDatasetVersion = 1;
inline constexpr uint32_t kCheckpointVersion = 1;

/// Layout: "TDL1", version, sample count, modality table, samples, then an
/// FNV-1a digest of every preceding byte. A modality is either present in
/// every sample with one shape, or absent from all of them.
void write_dataset(std::ostream& out, const Dataset& data);
Dataset read_dataset(std::istream& in);
void write_dataset(const std::filesystem::path& path, const Dataset& data);
Dataset read_dataset(const std::filesystem::path& path);

/// Layout: "TDLC", version, ModelSpec fields, named parameter tensors, digest.
void write_checkpoint(std::ostream& out, const Model& model);
Model read_checkpoint(std::istream& in);
void write_checkpoint(const std::filesystem::path& path, const Model& model);
Model read_checkpoint(const std::filesystem::path& path);

/// FNV-1a of a file's bytes, as 16 hex digits.
std::string file_digest(const std::filesystem::path& path);

/// Binary PPM (P6).
void write_ppm(const std::filesystem::path& path, const Image& img);
/// Binary PGM (P5); class ids are spread over the grey range for visibility.
void write_pgm(const std::filesystem::path& path, const SegMap& seg);
/// Depth quantized linearly over [0, kMaxDepth]; holes are black.
void write_pgm(const std::filesystem::path& path, const DepthMap& depth);

/// $TDL_OUT when set, else "out".
std::filesystem::path default_output_root();

}  // namespace tdl
