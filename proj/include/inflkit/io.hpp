#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "inflkit/attribution.hpp"
#include "inflkit/solvers.hpp"
#include "inflkit/types.hpp"

namespace inflkit {

// Dataset ingestion, checkpoint/score persistence, and binary containers.
// Byte layouts are documented in docs/FORMATS.md; every persisted artifact
// carries a format version and readers reject unknown versions.

// --- datasets ---------------------------------------------------------

// Big-endian IDX pair (magic 0x803 images / 0x801 labels); pixels scaled
// to [0,1] as 64-bit reals, images flattened row-major.
Dataset read_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path);

// Delimited text with a header row; label_column selects the class-index
// column, every other column is a feature.
Dataset read_delimited(const std::filesystem::path& path,
                       const std::string& label_column, char delimiter = ',');

// Deterministic generators; name is one of "gaussian_blobs" (class means
// 6 sigma apart, labels round-robin) or "two_moons_2class".
Dataset generate_synthetic(const std::string& name, int n, int d, int classes,
                           std::uint64_t seed);

// Test-fixture helper: writes a dataset of [0,1] pixels as an IDX pair.
void write_idx(const Dataset& data, int rows, int cols,
               const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path);

// --- score records ----------------------------------------------------

// Line-delimited records, one JSON object per line with fields
// train_index, test_index, score, solver_id, damping. Scores are encoded
// with shortest round-trip formatting, so read(write(x)) == x bit-exactly.
void write_scores(const std::filesystem::path& path,
                  std::span<const InfluenceRecord> records);
std::vector<InfluenceRecord> read_scores(const std::filesystem::path& path);

std::string format_double(double value);   // shortest exact decimal
double parse_double(const std::string& text);

// --- binary container (checkpoints and solver states) ------------------

struct CheckpointMeta {
    std::string provenance_json;  // seeds, training config, free-form
};

void write_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                      const CheckpointMeta& meta);
std::pair<ModelParams, CheckpointMeta> read_checkpoint(const std::filesystem::path& path);

// States embed the checkpoint hash they were fitted against; readers verify
// it so stale fits cannot be applied to other parameters.
void write_kfac_state(const std::filesystem::path& path, const KfacState& state,
                      std::uint64_t checkpoint_hash);
std::pair<KfacState, std::uint64_t> read_kfac_state(const std::filesystem::path& path);
void write_ekfac_state(const std::filesystem::path& path, const EkfacState& state,
                       std::uint64_t checkpoint_hash);
std::pair<EkfacState, std::uint64_t> read_ekfac_state(const std::filesystem::path& path);

// --- hashing and atomic writes -----------------------------------------

std::uint64_t fnv1a64(std::span<const unsigned char> bytes);
std::uint64_t fnv1a64(const std::string& text);
std::uint64_t hash_file(const std::filesystem::path& path);
std::uint64_t hash_params(const ModelParams& params);
std::string hash_hex(std::uint64_t h);

// Writes to a temp file in the same directory, then renames into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace inflkit
