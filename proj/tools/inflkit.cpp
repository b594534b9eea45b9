// inflkit: train small classifiers, attribute test predictions to training
// points with damped inverse-curvature solvers, flag suspect labels by
// self-influence, score attribution quality against retraining, and apply
// one-shot unlearning updates.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "inflkit/attribution.hpp"
#include "inflkit/config.hpp"
#include "inflkit/evaluation.hpp"
#include "inflkit/io.hpp"
#include "inflkit/parallel.hpp"
#include "inflkit/unlearning.hpp"
#include "inflkit/version.hpp"

namespace fs = std::filesystem;
using namespace inflkit;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::string checkpoint;
    std::string solver;   // empty: keep config value
    double damping = -1;  // <0: keep config value
    std::string solver_state;
};

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    }
};

fs::path data_base_dir(const RunConfig& cfg) {
    if (const char* env = std::getenv("INFLKIT_DATA_DIR")) return fs::path(env);
    return cfg.base_dir;
}

// Command-line solver/damping flags override the config file.
void apply_overrides(RunConfig& cfg, const CommonArgs& args) {
    if (!args.solver.empty()) cfg.solver.kind = args.solver;
    if (args.damping > 0) cfg.solver.damping = args.damping;
    cfg.solver.lissa.damping.lambda = cfg.solver.damping;
    cfg.solver.validate();
}

struct LoadedData {
    Dataset train;
    std::optional<Dataset> test;
    std::optional<CorruptionSpec> corruption;
};

LoadedData load_data(const RunConfig& cfg) {
    LoadedData out{cfg.data.train.load(data_base_dir(cfg)), std::nullopt, std::nullopt};
    out.train.validate();
    if (cfg.data.test) {
        out.test = cfg.data.test->load(data_base_dir(cfg));
        out.test->validate();
    }
    if (cfg.data.corrupt) {
        auto [corrupted, spec] =
            corrupt_labels(out.train, cfg.data.corrupt->fraction, cfg.data.corrupt->seed);
        out.train = std::move(corrupted);
        out.corruption = std::move(spec);
    }
    return out;
}

Json corruption_to_json(const CorruptionSpec& spec) {
    Json j;
    j["fraction"] = spec.fraction;
    j["seed"] = spec.seed;
    Json flips = Json::array();
    for (const auto& f : spec.flips) {
        flips.push_back(Json{{"index", f.index},
                             {"old_label", f.old_label},
                             {"new_label", f.new_label}});
    }
    j["flips"] = std::move(flips);
    return j;
}

CorruptionSpec corruption_from_json(const Json& j) {
    CorruptionSpec spec;
    spec.fraction = j.at("fraction").get<double>();
    spec.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& f : j.at("flips")) {
        spec.flips.push_back({f.at("index").get<int>(), f.at("old_label").get<int>(),
                              f.at("new_label").get<int>()});
    }
    return spec;
}

std::vector<int> parse_index_list(const std::string& text) {
    std::vector<int> out;
    std::string token;
    std::istringstream in(text);
    while (std::getline(in, token, ',')) {
        if (token.empty()) continue;
        try {
            std::size_t used = 0;
            out.push_back(std::stoi(token, &used));
            if (used != token.size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw UsageError("cannot parse index '" + token + "'");
        }
    }
    if (out.empty()) throw UsageError("empty index list");
    return out;
}

std::vector<double> parse_real_list(const std::string& text) {
    std::vector<double> out;
    std::string token;
    std::istringstream in(text);
    while (std::getline(in, token, ',')) {
        if (token.empty()) continue;
        out.push_back(parse_double(token));
    }
    if (out.empty()) throw UsageError("empty list");
    return out;
}

// Hashes of any file-backed data sources, keyed for the manifest.
void add_data_hashes(const RunConfig& cfg, Json& hashes) {
    auto add = [&](const char* key, const DataSourceConfig& src) {
        const fs::path base = data_base_dir(cfg);
        if (src.kind == DataSourceConfig::Kind::kIdx) {
            hashes[std::string(key) + "_images"] =
                hash_hex(hash_file(src.images.is_absolute() ? src.images : base / src.images));
            hashes[std::string(key) + "_labels"] =
                hash_hex(hash_file(src.labels.is_absolute() ? src.labels : base / src.labels));
        } else if (src.kind == DataSourceConfig::Kind::kDelimited) {
            hashes[key] =
                hash_hex(hash_file(src.path.is_absolute() ? src.path : base / src.path));
        }
    };
    add("train_data", cfg.data.train);
    if (cfg.data.test) add("test_data", *cfg.data.test);
}

Json seeds_json(const RunConfig& cfg) {
    Json j;
    j["training"] = cfg.training.seed;
    j["data_train"] = cfg.data.train.seed;
    if (cfg.data.corrupt) j["corruption"] = cfg.data.corrupt->seed;
    j["solver"] = cfg.solver.seed;
    j["lds_subset"] = cfg.lds.subset_seed;
    j["lds_test"] = cfg.lds.test_seed;
    return j;
}

// Fit (or reload) the configured solver; kfac/ekfac states round-trip
// through --solver-state so expensive fits are reusable across invocations.
std::unique_ptr<InverseCurvature> build_solver(const RunConfig& cfg,
                                               const ModelParams& params,
                                               const Dataset& train,
                                               const std::string& state_path,
                                               Json& output_paths) {
    if (state_path.empty()) return make_solver(cfg.solver, params, train);
    if (cfg.solver.kind != "kfac" && cfg.solver.kind != "ekfac")
        throw UsageError("--solver-state applies only to kfac/ekfac solvers");
    const fs::path path(state_path);
    const std::uint64_t want_hash = hash_params(params);
    const Damping damping{cfg.solver.damping};
    if (fs::exists(path)) {
        if (cfg.solver.kind == "kfac") {
            auto [state, h] = read_kfac_state(path);
            if (h != want_hash)
                throw DataError(state_path + ": state was fitted for a different checkpoint");
            return std::make_unique<KfacSolver>(params, std::move(state), damping);
        }
        auto [state, h] = read_ekfac_state(path);
        if (h != want_hash)
            throw DataError(state_path + ": state was fitted for a different checkpoint");
        return std::make_unique<EkfacSolver>(params, std::move(state), damping);
    }
    auto solver = make_solver(cfg.solver, params, train);
    if (cfg.solver.kind == "kfac")
        write_kfac_state(path, static_cast<const KfacSolver&>(*solver).state(), want_hash);
    else
        write_ekfac_state(path, static_cast<const EkfacSolver&>(*solver).state(), want_hash);
    output_paths["solver_state"] = state_path;
    return solver;
}

void finish_manifest(const fs::path& out_dir, RunManifest& manifest, const Timer& timer) {
    manifest.toolkit_version = kToolkitVersion;
    manifest.wall_clock_sec = timer.seconds();
    write_manifest(out_dir, manifest);
}

// --- commands -------------------------------------------------------------

int cmd_train(const RunConfig& cfg, const Json& args, const fs::path& out_dir) {
    Timer timer;
    fs::create_directories(out_dir);
    LoadedData data = load_data(cfg);

    TrainResult result = train(cfg.model, data.train, cfg.training);

    Json provenance;
    provenance["seeds"] = seeds_json(cfg);
    provenance["training"] = config_to_json(cfg)["training"];
    provenance["final_risk"] = result.final_risk;
    write_checkpoint(out_dir / "model.ckpt", result.params,
                     CheckpointMeta{provenance.dump()});

    RunManifest manifest;
    manifest.command = "train";
    manifest.resolved_config = config_to_json(cfg);
    manifest.resolved_config["args"] = args;
    manifest.seeds = seeds_json(cfg);
    manifest.output_paths["checkpoint"] = "model.ckpt";
    if (data.corruption) {
        write_file_atomic(out_dir / "corruption.json",
                          corruption_to_json(*data.corruption).dump(2) + "\n");
        manifest.output_paths["corruption"] = "corruption.json";
    }
    manifest.input_hashes["resolved_config"] =
        hash_hex(fnv1a64(manifest.resolved_config.dump()));
    add_data_hashes(cfg, manifest.input_hashes);
    std::cout << "trained " << data.train.size() << " examples, final risk "
              << result.final_risk << ", checkpoint " << (out_dir / "model.ckpt").string()
              << " (hash " << hash_hex(hash_params(result.params)) << ")\n";
    finish_manifest(out_dir, manifest, timer);
    return 0;
}

int cmd_attribute(const RunConfig& cfg, const Json& args, const fs::path& out_dir) {
    Timer timer;
    fs::create_directories(out_dir);
    LoadedData data = load_data(cfg);
    auto [params, meta] = read_checkpoint(args.at("checkpoint").get<std::string>());
    const std::vector<int> test_indices = args.at("test_indices").get<std::vector<int>>();
    const int top_k = args.at("top_k").get<int>();
    if (top_k < 1) throw UsageError("--top-k must be >= 1");
    if (!data.test) throw UsageError("attribute: config needs a data.test section");
    for (int t : test_indices)
        if (t < 0 || t >= data.test->size())
            throw UsageError("test index " + std::to_string(t) + " out of range");

    RunManifest manifest;
    manifest.command = "attribute";
    auto solver = build_solver(cfg, params, data.train,
                               args.value("solver_state", std::string()),
                               manifest.output_paths);

    std::vector<InfluenceRecord> records;
    std::string report = "test_index,polarity,rank,train_index,score\n";
    for (int t : test_indices) {
        VectorXd scores = influence_batch(*solver, data.test->at(t), data.train);
        for (int i = 0; i < data.train.size(); ++i)
            records.push_back({i, t, scores(i), solver->id(), solver->damping()});
        std::vector<double> values(scores.data(), scores.data() + scores.size());
        std::vector<int> order = rank_descending(values);
        const int k = std::min<int>(top_k, data.train.size());
        for (int r = 0; r < k; ++r) {
            report += std::to_string(t) + ",positive," + std::to_string(r + 1) + "," +
                      std::to_string(order[static_cast<std::size_t>(r)]) + "," +
                      format_double(values[static_cast<std::size_t>(
                          order[static_cast<std::size_t>(r)])]) +
                      "\n";
        }
        for (int r = 0; r < k; ++r) {
            const int idx = order[order.size() - 1 - static_cast<std::size_t>(r)];
            report += std::to_string(t) + ",negative," + std::to_string(r + 1) + "," +
                      std::to_string(idx) + "," +
                      format_double(values[static_cast<std::size_t>(idx)]) + "\n";
        }
    }
    write_scores(out_dir / "scores.jsonl", records);
    write_file_atomic(out_dir / "report.csv", report);

    manifest.resolved_config = config_to_json(cfg);
    manifest.resolved_config["args"] = args;
    manifest.seeds = seeds_json(cfg);
    manifest.input_hashes["checkpoint"] =
        hash_hex(hash_file(args.at("checkpoint").get<std::string>()));
    add_data_hashes(cfg, manifest.input_hashes);
    manifest.output_paths["scores"] = "scores.jsonl";
    manifest.output_paths["report"] = "report.csv";
    std::cout << "attributed " << test_indices.size() << " test points with "
              << solver->id() << ", wrote " << records.size() << " records\n";
    finish_manifest(out_dir, manifest, timer);
    return 0;
}

int cmd_detect(const RunConfig& cfg, const Json& args, const fs::path& out_dir) {
    Timer timer;
    fs::create_directories(out_dir);
    LoadedData data = load_data(cfg);
    auto [params, meta] = read_checkpoint(args.at("checkpoint").get<std::string>());
    const std::vector<double> budgets = args.at("budgets").get<std::vector<double>>();
    for (double b : budgets)
        if (!(b > 0.0 && b <= 1.0))
            throw UsageError("budgets must lie in (0,1]");

    RunManifest manifest;
    manifest.command = "detect";
    auto solver = build_solver(cfg, params, data.train,
                               args.value("solver_state", std::string()),
                               manifest.output_paths);

    std::vector<double> scores = self_influence_all(*solver, data.train);
    std::vector<int> ranking = rank_descending(scores);

    std::vector<InfluenceRecord> records;
    records.reserve(scores.size());
    for (int i = 0; i < data.train.size(); ++i)
        records.push_back({i, -1, scores[static_cast<std::size_t>(i)], solver->id(),
                           solver->damping()});
    write_scores(out_dir / "selfinfluence.jsonl", records);
    std::string ranking_text;
    for (int idx : ranking) ranking_text += std::to_string(idx) + "\n";
    write_file_atomic(out_dir / "ranking.txt", ranking_text);

    manifest.resolved_config = config_to_json(cfg);
    manifest.resolved_config["args"] = args;
    manifest.seeds = seeds_json(cfg);
    manifest.input_hashes["checkpoint"] =
        hash_hex(hash_file(args.at("checkpoint").get<std::string>()));
    add_data_hashes(cfg, manifest.input_hashes);
    manifest.output_paths["selfinfluence"] = "selfinfluence.jsonl";
    manifest.output_paths["ranking"] = "ranking.txt";

    // Ground truth: an explicit flip map wins; otherwise the corruption
    // derived from the config, when present.
    std::optional<CorruptionSpec> truth;
    const std::string corruption_file = args.value("corruption", std::string());
    if (!corruption_file.empty()) {
        try {
            truth = corruption_from_json(Json::parse(read_file(corruption_file)));
        } catch (const nlohmann::json::exception& e) {
            throw DataError(corruption_file + ": " + e.what());
        }
        manifest.input_hashes["corruption"] = hash_hex(hash_file(corruption_file));
    } else if (data.corruption) {
        truth = data.corruption;
    }
    if (truth) {
        auto curve = detection_curve(ranking, *truth, budgets);
        std::string csv = "budget,recall\n";
        for (auto [budget, recall] : curve)
            csv += format_double(budget) + "," + format_double(recall) + "\n";
        write_file_atomic(out_dir / "detection_curve.csv", csv);
        manifest.output_paths["detection_curve"] = "detection_curve.csv";
        std::cout << "detection recall at " << format_double(curve.front().first)
                  << " budget: " << format_double(curve.front().second) << "\n";
    }
    std::cout << "ranked " << data.train.size() << " training points by self-influence ("
              << solver->id() << ")\n";
    finish_manifest(out_dir, manifest, timer);
    return 0;
}

int cmd_lds(const RunConfig& cfg, const Json& args, const fs::path& out_dir) {
    Timer timer;
    fs::create_directories(out_dir);
    LoadedData data = load_data(cfg);
    if (!data.test) throw UsageError("lds: config needs a data.test section");
    LdsConfig lds_cfg;
    lds_cfg.num_subsets = cfg.lds.num_subsets;
    lds_cfg.alpha = cfg.lds.alpha;
    lds_cfg.subset_seed = cfg.lds.subset_seed;
    lds_cfg.test_sample_count = std::min(cfg.lds.test_sample_count, data.test->size());
    lds_cfg.test_seed = cfg.lds.test_seed;
    lds_cfg.validate();

    TrainResult full = train(cfg.model, data.train, cfg.training);
    std::vector<Example> probes =
        sample_test_points(*data.test, lds_cfg.test_sample_count, lds_cfg.test_seed);
    auto masks = sample_subsets(data.train.size(), lds_cfg.alpha, lds_cfg.num_subsets,
                                lds_cfg.subset_seed);

    // Subset retrains are resumable: each run is cached under a key derived
    // from everything that determines it.
    Json cache_key;
    cache_key["model"] = config_to_json(cfg)["model"];
    cache_key["training"] = config_to_json(cfg)["training"];
    cache_key["data"] = config_to_json(cfg)["data"];
    cache_key["lds"] = Json{{"num_subsets", lds_cfg.num_subsets},
                            {"alpha", lds_cfg.alpha},
                            {"subset_seed", lds_cfg.subset_seed},
                            {"test_sample_count", lds_cfg.test_sample_count},
                            {"test_seed", lds_cfg.test_seed}};
    const fs::path cache_dir = out_dir / ("subsets_" + hash_hex(fnv1a64(cache_key.dump())));
    fs::create_directories(cache_dir);

    std::vector<SubsetRun> runs(masks.size());
    std::vector<std::uint8_t> cached(masks.size(), 0);
    int reused = 0;
    for (std::size_t j = 0; j < masks.size(); ++j) {
        const fs::path ckpt = cache_dir / ("subset_" + std::to_string(j) + ".ckpt");
        const fs::path info = cache_dir / ("subset_" + std::to_string(j) + ".json");
        if (!fs::exists(ckpt) || !fs::exists(info)) continue;
        try {
            Json meta = Json::parse(read_file(info));
            const std::string mask_text(masks[j].begin(), masks[j].end());
            if (meta.at("mask_hash").get<std::string>() != hash_hex(fnv1a64(mask_text)))
                continue;
            auto [params, unused] = read_checkpoint(ckpt);
            SubsetRun run;
            run.mask = masks[j];
            run.seed = cfg.training.seed;
            run.params = std::move(params);
            std::vector<double> losses = meta.at("losses").get<std::vector<double>>();
            run.test_losses =
                Eigen::Map<const VectorXd>(losses.data(), static_cast<Eigen::Index>(losses.size()));
            runs[j] = std::move(run);
            cached[j] = 1;
            ++reused;
        } catch (const Error&) {
            continue;  // unreadable cache entry: recompute
        }
    }
    par::parallel_slots(masks.size(), [&](std::size_t j) {
        if (cached[j]) return;
        SubsetRun run;
        run.mask = masks[j];
        run.seed = cfg.training.seed;
        run.params = retrain_subset(cfg.model, data.train, run.mask, cfg.training);
        run.test_losses.resize(static_cast<Eigen::Index>(probes.size()));
        for (std::size_t t = 0; t < probes.size(); ++t)
            run.test_losses(static_cast<Eigen::Index>(t)) = loss(run.params, probes[t]);
        runs[j] = std::move(run);
    });
    for (std::size_t j = 0; j < masks.size(); ++j) {
        if (cached[j]) continue;
        const fs::path ckpt = cache_dir / ("subset_" + std::to_string(j) + ".ckpt");
        const fs::path info = cache_dir / ("subset_" + std::to_string(j) + ".json");
        write_checkpoint(ckpt, runs[j].params, CheckpointMeta{"{}"});
        Json meta;
        const std::string mask_text(masks[j].begin(), masks[j].end());
        meta["mask_hash"] = hash_hex(fnv1a64(mask_text));
        std::vector<double> losses(runs[j].test_losses.data(),
                                   runs[j].test_losses.data() + runs[j].test_losses.size());
        meta["losses"] = losses;
        write_file_atomic(info, meta.dump() + "\n");
    }

    std::string subset_lines;
    for (std::size_t j = 0; j < runs.size(); ++j) {
        Json row;
        row["subset_index"] = j;
        int kept = 0;
        for (auto b : runs[j].mask) kept += b;
        row["kept"] = kept;
        std::vector<double> losses(runs[j].test_losses.data(),
                                   runs[j].test_losses.data() + runs[j].test_losses.size());
        row["losses"] = losses;
        subset_lines += row.dump() + "\n";
    }
    write_file_atomic(out_dir / "subset_losses.jsonl", subset_lines);

    std::vector<std::string> solver_kinds = cfg.lds.solvers;
    if (solver_kinds.empty()) solver_kinds.push_back(cfg.solver.kind);
    std::string per_test_lines;
    std::string summary = "solver_id,mean_lds\n";
    for (const std::string& kind : solver_kinds) {
        SolverConfig sc = cfg.solver;
        sc.kind = kind;
        auto solver = make_solver(sc, full.params, data.train);
        auto attribution = [&](const Example& z) {
            return influence_batch(*solver, z, data.train);
        };
        LdsResult result = lds(probes, attribution, runs);
        for (std::size_t t = 0; t < result.per_test.size(); ++t) {
            Json row;
            row["solver_id"] = kind;
            row["test_slot"] = t;
            row["lds"] = result.per_test[t];
            per_test_lines += row.dump() + "\n";
        }
        summary += kind + "," + format_double(result.mean) + "\n";
        std::cout << "lds[" << kind << "] = " << format_double(result.mean) << " over "
                  << probes.size() << " test points, " << runs.size() << " subsets ("
                  << reused << " reused)\n";
    }
    write_file_atomic(out_dir / "per_test_lds.jsonl", per_test_lines);
    write_file_atomic(out_dir / "summary.csv", summary);

    RunManifest manifest;
    manifest.command = "lds";
    manifest.resolved_config = config_to_json(cfg);
    manifest.resolved_config["args"] = args;
    manifest.seeds = seeds_json(cfg);
    manifest.input_hashes["full_model"] = hash_hex(hash_params(full.params));
    add_data_hashes(cfg, manifest.input_hashes);
    manifest.output_paths["subset_losses"] = "subset_losses.jsonl";
    manifest.output_paths["per_test_lds"] = "per_test_lds.jsonl";
    manifest.output_paths["summary"] = "summary.csv";
    finish_manifest(out_dir, manifest, timer);
    return 0;
}

int cmd_unlearn(const RunConfig& cfg, const Json& args, const fs::path& out_dir) {
    Timer timer;
    fs::create_directories(out_dir);
    LoadedData data = load_data(cfg);
    auto [params, meta] = read_checkpoint(args.at("checkpoint").get<std::string>());
    const std::string mode = args.at("mode").get<std::string>();

    Json forget_json;
    try {
        forget_json = Json::parse(read_file(args.at("forget").get<std::string>()));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(args.at("forget").get<std::string>() + ": " + e.what());
    }
    ForgetSet forget;
    if (forget_json.contains("remove"))
        forget.remove = forget_json["remove"].get<std::vector<int>>();
    if (forget_json.contains("repairs"))
        for (const auto& r : forget_json["repairs"])
            forget.repairs.push_back({r.at("index").get<int>(), r.at("new_label").get<int>()});

    RunManifest manifest;
    manifest.command = "unlearn";
    auto solver = build_solver(cfg, params, data.train,
                               args.value("solver_state", std::string()),
                               manifest.output_paths);

    ModelParams updated = mode == "remove" ? unlearn_remove(*solver, data.train, forget)
                          : mode == "relabel"
                              ? unlearn_relabel(*solver, data.train, forget)
                              : throw UsageError("mode must be remove or relabel");

    Json provenance;
    provenance["mode"] = mode;
    provenance["solver_id"] = solver->id();
    provenance["damping"] = solver->damping();
    provenance["forget"] = forget_json;
    provenance["source_checkpoint_hash"] = hash_hex(hash_params(params));
    write_checkpoint(out_dir / "model.ckpt", updated, CheckpointMeta{provenance.dump()});
    write_file_atomic(out_dir / "provenance.json", provenance.dump(2) + "\n");

    manifest.resolved_config = config_to_json(cfg);
    manifest.resolved_config["args"] = args;
    manifest.seeds = seeds_json(cfg);
    manifest.input_hashes["checkpoint"] =
        hash_hex(hash_file(args.at("checkpoint").get<std::string>()));
    manifest.input_hashes["forget"] =
        hash_hex(hash_file(args.at("forget").get<std::string>()));
    manifest.output_paths["checkpoint"] = "model.ckpt";
    manifest.output_paths["provenance"] = "provenance.json";

    if (data.test) {
        double before = 0.0, after = 0.0;
        for (const Example& z : data.test->examples) {
            before += loss(params, z);
            after += loss(updated, z);
        }
        before /= data.test->size();
        after /= data.test->size();
        std::string csv = "metric,value\n";
        csv += "heldout_mean_loss_before," + format_double(before) + "\n";
        csv += "heldout_mean_loss_after," + format_double(after) + "\n";
        write_file_atomic(out_dir / "eval.csv", csv);
        manifest.output_paths["eval"] = "eval.csv";
        std::cout << "held-out mean loss " << format_double(before) << " -> "
                  << format_double(after) << "\n";
    }
    std::cout << "unlearned " << (mode == "remove" ? forget.remove.size()
                                                   : forget.repairs.size())
              << " points (" << mode << "), new checkpoint hash "
              << hash_hex(hash_params(updated)) << "\n";
    finish_manifest(out_dir, manifest, timer);
    return 0;
}

int dispatch(const std::string& command, const RunConfig& cfg, const Json& args,
             const fs::path& out_dir) {
    if (command == "train") return cmd_train(cfg, args, out_dir);
    if (command == "attribute") return cmd_attribute(cfg, args, out_dir);
    if (command == "detect") return cmd_detect(cfg, args, out_dir);
    if (command == "lds") return cmd_lds(cfg, args, out_dir);
    if (command == "unlearn") return cmd_unlearn(cfg, args, out_dir);
    throw UsageError("unknown command in manifest: " + command);
}

int cmd_rerun(const std::string& manifest_path, const fs::path& out_dir) {
    RunManifest manifest = read_manifest(manifest_path);
    Json cfg_json = manifest.resolved_config;
    Json args = cfg_json.value("args", Json::object());
    cfg_json.erase("args");
    const fs::path base =
        fs::absolute(fs::path(manifest_path)).parent_path();
    RunConfig cfg = parse_config(cfg_json, base);
    return dispatch(manifest.command, cfg, args, out_dir);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"influence-function data attribution toolkit"};
    app.require_subcommand(1);
    int jobs = 0;
    app.add_option("--jobs", jobs, "cap worker threads (outputs do not depend on it)");

    CommonArgs train_args, attr_args, detect_args, lds_args, unlearn_args;
    std::string test_indices = "0";
    int top_k = 10;
    std::string budgets = "0.1,0.2,0.3,0.4,0.5";
    std::string corruption_file, forget_file, mode = "remove", manifest_path;
    std::string rerun_out;

    auto add_common = [](CLI::App* sub, CommonArgs& args, bool needs_checkpoint) {
        sub->add_option("--config", args.config_path, "run configuration (json)")
            ->required();
        sub->add_option("--out-dir", args.out_dir, "output directory")->required();
        if (needs_checkpoint)
            sub->add_option("--checkpoint", args.checkpoint, "model checkpoint")
                ->required();
        sub->add_option("--solver", args.solver,
                        "solver override: exact | lissa | kfac | ekfac");
        sub->add_option("--damping", args.damping, "damping override (lambda > 0)");
        sub->add_option("--solver-state", args.solver_state,
                        "kfac/ekfac state file to reuse (fitted and written if absent)");
    };

    CLI::App* train_cmd = app.add_subcommand("train", "train a model from a config");
    add_common(train_cmd, train_args, false);

    CLI::App* attr_cmd =
        app.add_subcommand("attribute", "influence scores for test points");
    add_common(attr_cmd, attr_args, true);
    attr_cmd->add_option("--test-indices", test_indices, "comma-separated test indices");
    attr_cmd->add_option("--top-k", top_k, "ranked report size per test point");

    CLI::App* detect_cmd =
        app.add_subcommand("detect", "rank training points by self-influence");
    add_common(detect_cmd, detect_args, true);
    detect_cmd->add_option("--budgets", budgets, "comma-separated inspection budgets");
    detect_cmd->add_option("--corruption", corruption_file,
                           "ground-truth flip map (json) for the detection curve");

    CLI::App* lds_cmd =
        app.add_subcommand("lds", "linear datamodeling score against subset retraining");
    add_common(lds_cmd, lds_args, false);

    CLI::App* unlearn_cmd =
        app.add_subcommand("unlearn", "one-shot removal or label-repair update");
    add_common(unlearn_cmd, unlearn_args, true);
    unlearn_cmd->add_option("--forget", forget_file, "forget set (json)")->required();
    unlearn_cmd->add_option("--mode", mode, "remove | relabel");

    CLI::App* rerun_cmd =
        app.add_subcommand("rerun", "re-execute a command from its manifest");
    rerun_cmd->add_option("--manifest", manifest_path, "manifest.json of a prior run")
        ->required();
    rerun_cmd->add_option("--out-dir", rerun_out, "output directory")->required();

    try {
        app.parse(argc, argv);
        par::set_threads(jobs);

        if (rerun_cmd->parsed()) return cmd_rerun(manifest_path, rerun_out);

        auto run = [&](CLI::App* sub, CommonArgs& common,
                       const std::string& name) -> std::optional<int> {
            if (!sub->parsed()) return std::nullopt;
            RunConfig cfg = load_config(common.config_path);
            apply_overrides(cfg, common);
            Json args;
            if (!common.checkpoint.empty())
                args["checkpoint"] = fs::absolute(common.checkpoint).string();
            if (!common.solver_state.empty())
                args["solver_state"] = fs::absolute(common.solver_state).string();
            if (name == "attribute") {
                args["test_indices"] = parse_index_list(test_indices);
                args["top_k"] = top_k;
            }
            if (name == "detect") {
                args["budgets"] = parse_real_list(budgets);
                if (!corruption_file.empty())
                    args["corruption"] = fs::absolute(corruption_file).string();
            }
            if (name == "unlearn") {
                args["forget"] = fs::absolute(forget_file).string();
                args["mode"] = mode;
            }
            return dispatch(name, cfg, args, common.out_dir);
        };

        for (auto& [sub, common, name] :
             std::vector<std::tuple<CLI::App*, CommonArgs*, std::string>>{
                 {train_cmd, &train_args, "train"},
                 {attr_cmd, &attr_args, "attribute"},
                 {detect_cmd, &detect_args, "detect"},
                 {lds_cmd, &lds_args, "lds"},
                 {unlearn_cmd, &unlearn_args, "unlearn"}}) {
            if (auto code = run(sub, *common, name)) return *code;
        }
        throw UsageError("no subcommand given");
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;  // usage error
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "failure: " << e.what() << "\n";
        return 3;
    }
}
