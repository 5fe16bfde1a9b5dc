#pragma once

// Binary file formats. All integers are little-endian u32, features f32 LE,
// poses and calibration f64 LE, regardless of host byte order.
//
//   FGRD  "FGRD" version H W C | H*W*C f32 (row, col, channel)
//   TPDB  "TPDB" version H W C n_objects
//           per object:   object_id template_count
//           per template: template_index | direction 3*f64, inplane f64 |
//                         rotation 9*f64 | t_z bb_diag focal bb_cx bb_cy f64 |
//                         mask H*W bytes (0/1) | features H*W*C f32
//   EMBD  "EMBD" version C_in C_out | W (C_out*C_in f64, row-major) | b (C_out f64)
//         version 2 adds a hidden layer:
//         "EMBD" 2 C_in C_hidden C_out | W1 b1 | W2 b2
//   VPTS  "VPTS" version count | per entry: index u32, the TPDB pose section
//
// Writers go through a temporary file and rename. Readers reject bad magic,
// unknown versions, truncation, trailing bytes, non-finite floats and mask
// bytes outside {0,1} with distinct error codes.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "posegrid/feature_grid.hpp"
#include "posegrid/retrieval.hpp"
#include "posegrid/trainer.hpp"
#include "posegrid/viewsphere.hpp"

namespace posegrid::io {

inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::uint32_t kEmbdTwoLayerVersion = 2;

inline constexpr std::size_t kFgrdHeaderBytes = 20;
inline constexpr std::size_t kTpdbHeaderBytes = 24;
inline constexpr std::size_t kTpdbObjectHeaderBytes = 8;
/// index + direction + inplane + rotation + render meta.
inline constexpr std::size_t kTpdbTemplateMetaBytes = 4 + 8 * (3 + 1 + 9 + 5);

std::vector<std::uint8_t> encode_fgrd(const FeatureGrid& grid);
FeatureGrid decode_fgrd(std::span<const std::uint8_t> bytes);
void write_fgrd(const std::filesystem::path& path, const FeatureGrid& grid);
FeatureGrid read_fgrd(const std::filesystem::path& path);

/// Records may hold arbitrary (raw) features; the DB writer emits its arena.
void write_tpdb(const std::filesystem::path& path, const TemplateDB& db);
void write_tpdb(const std::filesystem::path& path, std::span<const TemplateRecord> records);
/// Loads straight into a DB; features must be unit or zero cells.
TemplateDB read_tpdb(const std::filesystem::path& path);
/// Loads any well-formed TPDB, in file order.
std::vector<TemplateRecord> read_tpdb_records(const std::filesystem::path& path);
std::vector<TemplateRecord> decode_tpdb_records(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_embd(const Embedding& embedding);
Embedding decode_embd(std::span<const std::uint8_t> bytes);
void write_embd(const std::filesystem::path& path, const Embedding& embedding);
Embedding read_embd(const std::filesystem::path& path);

struct IndexedViewpoint {
  std::uint32_t index = 0;
  Viewpoint viewpoint;
  RotationMatrix rotation;
};

void write_viewpoints(const std::filesystem::path& path, std::span<const IndexedViewpoint> views);
std::vector<IndexedViewpoint> read_viewpoints(const std::filesystem::path& path);

/// Expected TPDB size for a uniform single-object database.
std::uint64_t tpdb_size(std::size_t objects, std::size_t templates, std::size_t height, std::size_t width,
                        std::size_t channels);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
/// Atomic: writes `path`.tmp then renames over `path`.
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace posegrid::io
