#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "inflkit/evaluation.hpp"
#include "inflkit/io.hpp"
#include "inflkit/solvers.hpp"
#include "inflkit/types.hpp"

namespace inflkit {

using Json = nlohmann::ordered_json;  // ordered: stable bytes for manifests

// Run configuration, loaded from a JSON file with sections
// model / training / data / solver / experiment (schema in docs/CONFIG.md).

struct DataSourceConfig {
    enum class Kind { kSynthetic, kIdx, kDelimited };
    Kind kind = Kind::kSynthetic;
    // synthetic
    std::string generator = "gaussian_blobs";
    int n = 0, d = 0, classes = 0;
    std::uint64_t seed = 0;
    // idx
    std::filesystem::path images, labels;
    // delimited
    std::filesystem::path path;
    std::string label_column = "label";

    Dataset load(const std::filesystem::path& base_dir) const;
};

struct CorruptionConfig {
    double fraction = 0.0;
    std::uint64_t seed = 0;
};

struct DataConfig {
    DataSourceConfig train;
    std::optional<DataSourceConfig> test;
    std::optional<CorruptionConfig> corrupt;  // applied to the train split
};

struct SolverConfig {
    std::string kind = "ekfac";  // exact | lissa | kfac | ekfac
    double damping = 1e-3;
    std::uint64_t seed = 0;
    LissaConfig lissa;  // damping field mirrored from the above

    void validate() const;
};

struct LdsExperimentConfig {
    int num_subsets = 100;
    double alpha = 0.5;
    std::uint64_t subset_seed = 0;
    int test_sample_count = 64;
    std::uint64_t test_seed = 0;
    std::vector<std::string> solvers;  // defaults to the configured solver
};

struct RunConfig {
    MlpSpec model;
    TrainConfig training;
    DataConfig data;
    SolverConfig solver;
    LdsExperimentConfig lds;
    std::filesystem::path base_dir;  // directory of the config file

    void validate() const;
};

RunConfig parse_config(const Json& j, const std::filesystem::path& base_dir);
RunConfig load_config(const std::filesystem::path& path);
Json config_to_json(const RunConfig& cfg);

std::unique_ptr<InverseCurvature> make_solver(const SolverConfig& cfg,
                                              const ModelParams& params,
                                              const Dataset& data);

// Run manifest written atomically alongside every command's outputs.
struct RunManifest {
    std::string command;
    std::string toolkit_version;
    Json resolved_config;
    Json seeds;
    Json input_hashes;
    Json output_paths;  // relative to the manifest's directory
    double wall_clock_sec = 0.0;

    Json to_json() const;
    static RunManifest from_json(const Json& j);
};

void write_manifest(const std::filesystem::path& out_dir, const RunManifest& m);
RunManifest read_manifest(const std::filesystem::path& path);

}  // namespace inflkit
