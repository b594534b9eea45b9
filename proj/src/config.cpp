#include "inflkit/config.hpp"

#include "inflkit/version.hpp"

namespace inflkit {

namespace {

std::filesystem::path resolve(const std::filesystem::path& base,
                              const std::filesystem::path& p) {
    if (p.is_absolute()) return p;
    return base / p;
}

const Json& require(const Json& j, const char* key, const char* where) {
    auto it = j.find(key);
    if (it == j.end())
        throw UsageError(std::string("config: missing '") + key + "' in " + where);
    return *it;
}

DataSourceConfig parse_source(const Json& j, const char* where) {
    DataSourceConfig src;
    const std::string kind = require(j, "source", where).get<std::string>();
    if (kind == "synthetic") {
        src.kind = DataSourceConfig::Kind::kSynthetic;
        src.generator = require(j, "generator", where).get<std::string>();
        src.n = require(j, "n", where).get<int>();
        src.d = require(j, "d", where).get<int>();
        src.classes = require(j, "classes", where).get<int>();
        src.seed = j.value("seed", std::uint64_t{0});
    } else if (kind == "idx") {
        src.kind = DataSourceConfig::Kind::kIdx;
        src.images = require(j, "images", where).get<std::string>();
        src.labels = require(j, "labels", where).get<std::string>();
    } else if (kind == "delimited") {
        src.kind = DataSourceConfig::Kind::kDelimited;
        src.path = require(j, "path", where).get<std::string>();
        src.label_column = j.value("label_column", std::string("label"));
    } else {
        throw UsageError("config: unknown data source '" + kind + "' in " + where);
    }
    return src;
}

Json source_to_json(const DataSourceConfig& src) {
    Json j;
    switch (src.kind) {
        case DataSourceConfig::Kind::kSynthetic:
            j["source"] = "synthetic";
            j["generator"] = src.generator;
            j["n"] = src.n;
            j["d"] = src.d;
            j["classes"] = src.classes;
            j["seed"] = src.seed;
            break;
        case DataSourceConfig::Kind::kIdx:
            j["source"] = "idx";
            j["images"] = src.images.string();
            j["labels"] = src.labels.string();
            break;
        case DataSourceConfig::Kind::kDelimited:
            j["source"] = "delimited";
            j["path"] = src.path.string();
            j["label_column"] = src.label_column;
            break;
    }
    return j;
}

}  // namespace

Dataset DataSourceConfig::load(const std::filesystem::path& base_dir) const {
    switch (kind) {
        case Kind::kSynthetic:
            return generate_synthetic(generator, n, d, classes, seed);
        case Kind::kIdx:
            return read_idx(resolve(base_dir, images), resolve(base_dir, labels));
        case Kind::kDelimited:
            return read_delimited(resolve(base_dir, path), label_column);
    }
    throw UsageError("data source: unknown kind");
}

void SolverConfig::validate() const {
    if (kind != "exact" && kind != "lissa" && kind != "kfac" && kind != "ekfac")
        throw UsageError("config: unknown solver '" + kind +
                         "' (expected exact, lissa, kfac, or ekfac)");
    Damping{damping}.validate();
}

void RunConfig::validate() const {
    model.validate();
    training.validate();
    solver.validate();
}

RunConfig parse_config(const Json& j, const std::filesystem::path& base_dir) {
    RunConfig cfg;
    cfg.base_dir = base_dir;

    const Json& model = require(j, "model", "config");
    for (const auto& d : require(model, "layer_dims", "model"))
        cfg.model.layer_dims.push_back(d.get<int>());
    cfg.model.activation =
        activation_from_name(model.value("activation", std::string("relu")));

    const Json& training = require(j, "training", "config");
    cfg.training.learning_rate = require(training, "learning_rate", "training").get<double>();
    cfg.training.epochs = require(training, "epochs", "training").get<int>();
    cfg.training.batch_size = require(training, "batch_size", "training").get<int>();
    cfg.training.seed = training.value("seed", std::uint64_t{0});
    cfg.training.l2_penalty = training.value("l2_penalty", 0.0);

    const Json& data = require(j, "data", "config");
    cfg.data.train = parse_source(require(data, "train", "data"), "data.train");
    if (data.contains("test"))
        cfg.data.test = parse_source(data["test"], "data.test");
    if (data.contains("corrupt")) {
        CorruptionConfig cc;
        cc.fraction = require(data["corrupt"], "fraction", "data.corrupt").get<double>();
        cc.seed = data["corrupt"].value("seed", std::uint64_t{0});
        cfg.data.corrupt = cc;
    }

    if (j.contains("solver")) {
        const Json& solver = j["solver"];
        cfg.solver.kind = solver.value("kind", std::string("ekfac"));
        cfg.solver.damping = solver.value("damping", 1e-3);
        cfg.solver.seed = solver.value("seed", std::uint64_t{0});
        if (solver.contains("lissa")) {
            const Json& ls = solver["lissa"];
            cfg.solver.lissa.alpha = ls.value("alpha", 0.0);
            cfg.solver.lissa.iterations = ls.value("iterations", 100);
            cfg.solver.lissa.batch_size = ls.value("batch_size", 0);
            cfg.solver.lissa.repeats = ls.value("repeats", 1);
        }
    }
    cfg.solver.lissa.seed = cfg.solver.seed;
    cfg.solver.lissa.damping.lambda = cfg.solver.damping;

    if (j.contains("experiment") && j["experiment"].contains("lds")) {
        const Json& lds = j["experiment"]["lds"];
        cfg.lds.num_subsets = lds.value("num_subsets", 100);
        cfg.lds.alpha = lds.value("alpha", 0.5);
        cfg.lds.subset_seed = lds.value("subset_seed", std::uint64_t{0});
        cfg.lds.test_sample_count = lds.value("test_sample_count", 64);
        cfg.lds.test_seed = lds.value("test_seed", std::uint64_t{0});
        if (lds.contains("solvers"))
            for (const auto& s : lds["solvers"])
                cfg.lds.solvers.push_back(s.get<std::string>());
    }

    cfg.validate();
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    Json j;
    try {
        j = Json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw UsageError("config " + path.string() + ": " + e.what());
    }
    return parse_config(j, path.parent_path());
}

Json config_to_json(const RunConfig& cfg) {
    Json j;
    j["model"]["layer_dims"] = cfg.model.layer_dims;
    j["model"]["activation"] = activation_name(cfg.model.activation);
    j["training"]["learning_rate"] = cfg.training.learning_rate;
    j["training"]["epochs"] = cfg.training.epochs;
    j["training"]["batch_size"] = cfg.training.batch_size;
    j["training"]["seed"] = cfg.training.seed;
    j["training"]["l2_penalty"] = cfg.training.l2_penalty;
    j["data"]["train"] = source_to_json(cfg.data.train);
    if (cfg.data.test) j["data"]["test"] = source_to_json(*cfg.data.test);
    if (cfg.data.corrupt) {
        j["data"]["corrupt"]["fraction"] = cfg.data.corrupt->fraction;
        j["data"]["corrupt"]["seed"] = cfg.data.corrupt->seed;
    }
    j["solver"]["kind"] = cfg.solver.kind;
    j["solver"]["damping"] = cfg.solver.damping;
    j["solver"]["seed"] = cfg.solver.seed;
    j["solver"]["lissa"]["alpha"] = cfg.solver.lissa.alpha;
    j["solver"]["lissa"]["iterations"] = cfg.solver.lissa.iterations;
    j["solver"]["lissa"]["batch_size"] = cfg.solver.lissa.batch_size;
    j["solver"]["lissa"]["repeats"] = cfg.solver.lissa.repeats;
    j["experiment"]["lds"]["num_subsets"] = cfg.lds.num_subsets;
    j["experiment"]["lds"]["alpha"] = cfg.lds.alpha;
    j["experiment"]["lds"]["subset_seed"] = cfg.lds.subset_seed;
    j["experiment"]["lds"]["test_sample_count"] = cfg.lds.test_sample_count;
    j["experiment"]["lds"]["test_seed"] = cfg.lds.test_seed;
    if (!cfg.lds.solvers.empty()) j["experiment"]["lds"]["solvers"] = cfg.lds.solvers;
    return j;
}

std::unique_ptr<InverseCurvature> make_solver(const SolverConfig& cfg,
                                              const ModelParams& params,
                                              const Dataset& data) {
    cfg.validate();
    const Damping damping{cfg.damping};
    if (cfg.kind == "exact")
        return std::make_unique<ExactDenseSolver>(params, data, damping);
    if (cfg.kind == "lissa") {
        LissaConfig lissa = cfg.lissa;
        lissa.damping = damping;
        lissa.seed = cfg.seed;
        return std::make_unique<LissaSolver>(params, data, lissa);
    }
    if (cfg.kind == "kfac")
        return std::make_unique<KfacSolver>(params, data, damping, cfg.seed);
    if (cfg.kind == "ekfac")
        return std::make_unique<EkfacSolver>(params, data, damping, cfg.seed);
    throw UsageError("unknown solver kind '" + cfg.kind + "'");
}

Json RunManifest::to_json() const {
    Json j;
    j["command"] = command;
    j["toolkit_version"] = toolkit_version;
    j["resolved_config"] = resolved_config;
    j["seeds"] = seeds;
    j["input_hashes"] = input_hashes;
    j["output_paths"] = output_paths;
    j["wall_clock_sec"] = wall_clock_sec;
    return j;
}

RunManifest RunManifest::from_json(const Json& j) {
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.toolkit_version = j.at("toolkit_version").get<std::string>();
    m.resolved_config = j.at("resolved_config");
    m.seeds = j.value("seeds", Json::object());
    m.input_hashes = j.value("input_hashes", Json::object());
    m.output_paths = j.value("output_paths", Json::object());
    m.wall_clock_sec = j.value("wall_clock_sec", 0.0);
    return m;
}

void write_manifest(const std::filesystem::path& out_dir, const RunManifest& m) {
    write_file_atomic(out_dir / "manifest.json", m.to_json().dump(2) + "\n");
}

RunManifest read_manifest(const std::filesystem::path& path) {
    Json j;
    try {
        j = Json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw DataError("manifest " + path.string() + ": " + e.what());
    }
    try {
        return RunManifest::from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("manifest " + path.string() + ": " + e.what());
    }
}

}  // namespace inflkit
