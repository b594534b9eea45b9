#include "inflkit/io.hpp"

#include <cstdlib>
#include <fstream>

#include "doctest.h"
#include "inflkit/config.hpp"
#include "support.hpp"

using namespace inflkit;
using namespace testsup;

namespace {

void write_raw(const std::filesystem::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::string u32be(std::uint32_t v) {
    std::string s;
    s.push_back(static_cast<char>((v >> 24) & 0xff));
    s.push_back(static_cast<char>((v >> 16) & 0xff));
    s.push_back(static_cast<char>((v >> 8) & 0xff));
    s.push_back(static_cast<char>(v & 0xff));
    return s;
}

}  // namespace

TEST_CASE("read_idx") {
    TempDir tmp("idx");
    const auto images = tmp.path() / "images.idx";
    const auto labels = tmp.path() / "labels.idx";

    SUBCASE("hand-authored two-image fixture decodes exactly") {
        // 2 images of 2x2: pixels 0 and 255 map to exactly 0.0 and 1.0.
        std::string img = u32be(0x803) + u32be(2) + u32be(2) + u32be(2);
        img += '\x00';
        img += '\xff';
        img += '\x7f';
        img += '\x00';
        img += '\xff';
        img += '\xff';
        img += '\x00';
        img += '\x01';
        std::string lab = u32be(0x801) + u32be(2);
        lab += '\x03';
        lab += '\x00';
        write_raw(images, img);
        write_raw(labels, lab);

        Dataset data = read_idx(images, labels);
        CHECK(data.size() == 2);
        CHECK(data.feature_dim == 4);
        CHECK(data.class_count == 4);
        CHECK(data.at(0).features(0) == 0.0);
        CHECK(data.at(0).features(1) == 1.0);
        CHECK(data.at(0).features(2) == doctest::Approx(127.0 / 255.0));
        CHECK(data.at(0).label == 3);
        CHECK(data.at(1).features(3) == doctest::Approx(1.0 / 255.0));
        CHECK(data.at(1).label == 0);
    }
    SUBCASE("bad magic is rejected") {
        write_raw(images, u32be(0x802) + u32be(1) + u32be(1) + u32be(1) + "x");
        write_raw(labels, u32be(0x801) + u32be(1) + "\x00");
        CHECK_THROWS_AS((void)read_idx(images, labels), DataError);
    }
    SUBCASE("count mismatch is rejected") {
        write_raw(images, u32be(0x803) + u32be(1) + u32be(1) + u32be(1) + "x");
        write_raw(labels, u32be(0x801) + u32be(2) + "\x00\x01");
        CHECK_THROWS_AS((void)read_idx(images, labels), DataError);
    }
    SUBCASE("truncated pixels report the missing byte count") {
        write_raw(images, u32be(0x803) + u32be(2) + u32be(2) + u32be(2) + "abc");
        write_raw(labels, u32be(0x801) + u32be(2) + "\x00\x01");
        try {
            (void)read_idx(images, labels);
            FAIL("expected DataError");
        } catch (const DataError& e) {
            CHECK(std::string(e.what()).find("5 more bytes") != std::string::npos);
        }
    }
    SUBCASE("round-trip through write_idx") {
        Dataset data = two_class_blobs(10, 4, 1.0, 3);
        for (auto& z : data.examples)
            z.features = (z.features.array() * 0.1 + 0.5).cwiseMax(0.0).cwiseMin(1.0);
        write_idx(data, 2, 2, images, labels);
        Dataset back = read_idx(images, labels);
        CHECK(back.size() == 10);
        for (int i = 0; i < 10; ++i) {
            CHECK(back.at(i).label == data.at(i).label);
            for (int k = 0; k < 4; ++k)
                CHECK(std::abs(back.at(i).features(k) - data.at(i).features(k)) <=
                      0.5 / 255.0 + 1e-12);
        }
    }
    SUBCASE("real MNIST dimensions when available") {
        const char* dir = std::getenv("INFLKIT_DATA_DIR");
        if (dir == nullptr) {
            MESSAGE("INFLKIT_DATA_DIR not set; skipping the MNIST fixture check");
            return;
        }
        const auto base = std::filesystem::path(dir);
        const auto imgs = base / "train-images-idx3-ubyte";
        const auto labs = base / "train-labels-idx1-ubyte";
        if (!std::filesystem::exists(imgs) || !std::filesystem::exists(labs)) {
            MESSAGE("MNIST files not present; skipping");
            return;
        }
        Dataset mnist = read_idx(imgs, labs);
        CHECK(mnist.size() == 60000);
        CHECK(mnist.feature_dim == 784);
        CHECK(mnist.class_count == 10);
    }
}

TEST_CASE("read_delimited") {
    TempDir tmp("csv");
    const auto path = tmp.path() / "data.csv";

    SUBCASE("header with label column anywhere") {
        write_raw(path, "f1,label,f2\n1.5,0,-2.0\n0.25,1,4.0\n");
        Dataset data = read_delimited(path, "label");
        CHECK(data.size() == 2);
        CHECK(data.feature_dim == 2);
        CHECK(data.class_count == 2);
        CHECK(data.at(0).features(0) == 1.5);
        CHECK(data.at(0).features(1) == -2.0);
        CHECK(data.at(1).label == 1);
    }
    SUBCASE("missing label column") {
        write_raw(path, "a,b\n1,2\n");
        CHECK_THROWS_AS((void)read_delimited(path, "label"), DataError);
    }
    SUBCASE("ragged row names the line") {
        write_raw(path, "a,label\n1,0\n1,2,3\n");
        try {
            (void)read_delimited(path, "label");
            FAIL("expected DataError");
        } catch (const DataError& e) {
            CHECK(std::string(e.what()).find("line 3") != std::string::npos);
        }
    }
    SUBCASE("bad feature value names the line") {
        write_raw(path, "a,label\nx,0\n");
        try {
            (void)read_delimited(path, "label");
            FAIL("expected DataError");
        } catch (const DataError& e) {
            CHECK(std::string(e.what()).find("line 2") != std::string::npos);
        }
    }
}

TEST_CASE("generate_synthetic") {
    SUBCASE("stratified blob labels: exactly 50/50 at n = 100") {
        Dataset data = generate_synthetic("gaussian_blobs", 100, 2, 2, 4);
        int zeros = 0;
        for (const auto& z : data.examples) zeros += z.label == 0 ? 1 : 0;
        CHECK(zeros == 50);
    }
    SUBCASE("deterministic in seed") {
        Dataset a = generate_synthetic("gaussian_blobs", 50, 3, 2, 9);
        Dataset b = generate_synthetic("gaussian_blobs", 50, 3, 2, 9);
        for (int i = 0; i < 50; ++i) CHECK(a.at(i).features == b.at(i).features);
    }
    SUBCASE("6-sigma separation trains to >= 99% accuracy") {
        Dataset data = generate_synthetic("gaussian_blobs", 200, 4, 2, 11);
        TrainConfig cfg{0.3, 400, 200, 1, 1e-3};
        ModelParams params = train(linear_spec(4, 2), data, cfg).params;
        CHECK(accuracy(params, data) >= 0.99);
    }
    SUBCASE("two moons is balanced and 2-dimensional at least") {
        Dataset data = generate_synthetic("two_moons_2class", 101, 3, 2, 5);
        int ones = 0;
        for (const auto& z : data.examples) ones += z.label;
        CHECK(ones == 50);
        CHECK_THROWS_AS((void)generate_synthetic("two_moons_2class", 10, 1, 2, 5),
                        UsageError);
    }
    SUBCASE("unknown generator is rejected") {
        CHECK_THROWS_AS((void)generate_synthetic("mystery", 10, 2, 2, 1), UsageError);
    }
}

TEST_CASE("score records") {
    TempDir tmp("scores");
    const auto path = tmp.path() / "scores.jsonl";

    SUBCASE("round-trips 1000 random records bit-exactly") {
        Rng rng(31);
        std::vector<InfluenceRecord> records;
        for (int i = 0; i < 1000; ++i) {
            InfluenceRecord r;
            r.train_index = static_cast<int>(rng.below(100000));
            r.test_index = i % 7 == 0 ? -1 : static_cast<int>(rng.below(1000));
            r.score = rng.normal() * std::pow(10.0, rng.uniform(-300, 300));
            r.solver_id = i % 2 == 0 ? "ekfac" : "exact";
            r.damping = std::pow(10.0, rng.uniform(-12, 0));
            records.push_back(r);
        }
        write_scores(path, records);
        auto back = read_scores(path);
        REQUIRE(back.size() == records.size());
        for (std::size_t i = 0; i < records.size(); ++i) {
            CHECK(back[i].train_index == records[i].train_index);
            CHECK(back[i].test_index == records[i].test_index);
            CHECK(back[i].score == records[i].score);
            CHECK(back[i].solver_id == records[i].solver_id);
            CHECK(back[i].damping == records[i].damping);
        }
    }
    SUBCASE("empty file reads as empty") {
        write_raw(path, "");
        CHECK(read_scores(path).empty());
    }
    SUBCASE("smallest subnormal survives") {
        InfluenceRecord r{0, 0, 4.9406564584124654e-324, "exact", 1e-3};
        write_scores(path, std::vector<InfluenceRecord>{r});
        CHECK(read_scores(path)[0].score == 4.9406564584124654e-324);
        CHECK(read_scores(path)[0].score != 0.0);
    }
    SUBCASE("malformed line names the line number") {
        write_raw(path,
                  "{\"train_index\":1,\"test_index\":2,\"score\":0.5,\"solver_id\":\"x\",\"damping\":0.1}\n"
                  "{broken\n");
        try {
            (void)read_scores(path);
            FAIL("expected DataError");
        } catch (const DataError& e) {
            CHECK(std::string(e.what()).find("line 2") != std::string::npos);
        }
    }
    SUBCASE("missing field names the line number") {
        write_raw(path, "{\"train_index\":1}\n");
        CHECK_THROWS_AS((void)read_scores(path), DataError);
    }
    SUBCASE("non-finite scores are refused at write time") {
        InfluenceRecord r{0, 0, std::numeric_limits<double>::infinity(), "exact", 1e-3};
        CHECK_THROWS_AS(write_scores(path, std::vector<InfluenceRecord>{r}), UsageError);
    }
}

TEST_CASE("format_double shortest round-trip") {
    for (double v : {0.1, 1.0 / 3.0, -0.0, 2.5e-310, 1.7976931348623157e308}) {
        CHECK(parse_double(format_double(v)) == v);
    }
    CHECK(format_double(0.25) == "0.25");
    CHECK_THROWS_AS((void)parse_double("1.5extra"), DataError);
    CHECK_THROWS_AS((void)parse_double(""), DataError);
}

TEST_CASE("checkpoint container") {
    TempDir tmp("ckpt");
    const auto path = tmp.path() / "model.ckpt";
    MlpSpec spec = mlp_spec({4, 6, 3}, Activation::kRelu);
    ModelParams params = init_params(spec, 77);
    params.l2_penalty = 1e-3;
    CheckpointMeta meta{R"({"init_seed":77})"};

    SUBCASE("round-trips parameters bit-exactly") {
        write_checkpoint(path, params, meta);
        auto [back, back_meta] = read_checkpoint(path);
        CHECK(back.theta == params.theta);
        CHECK(back.spec.layer_dims == spec.layer_dims);
        CHECK(back.spec.activation == Activation::kRelu);
        CHECK(back.l2_penalty == params.l2_penalty);
        CHECK(back_meta.provenance_json == meta.provenance_json);
        CHECK(hash_params(back) == hash_params(params));
    }
    SUBCASE("rejects foreign files, bad versions, truncation, trailing bytes") {
        write_raw(path, "not a container at all");
        CHECK_THROWS_AS((void)read_checkpoint(path), DataError);

        write_checkpoint(path, params, meta);
        std::string raw = read_file(path);
        std::string bumped = raw;
        bumped[8] = '\x09';  // version field
        write_raw(path, bumped);
        CHECK_THROWS_AS((void)read_checkpoint(path), DataError);

        write_raw(path, raw.substr(0, raw.size() - 9));
        CHECK_THROWS_AS((void)read_checkpoint(path), DataError);

        write_raw(path, raw + "x");
        CHECK_THROWS_AS((void)read_checkpoint(path), DataError);
    }
    SUBCASE("checkpoint and state kinds are not interchangeable") {
        write_checkpoint(path, params, meta);
        CHECK_THROWS_AS((void)read_kfac_state(path), DataError);
    }
}

TEST_CASE("solver state containers") {
    TempDir tmp("state");
    MlpSpec spec = mlp_spec({3, 4, 2});
    ModelParams params = init_params(spec, 5);
    Dataset data = two_class_blobs(30, 3, 1.0, 6);
    const std::uint64_t ckpt_hash = hash_params(params);

    SUBCASE("kfac state round-trip") {
        KfacState state = fit_kfac(params, data, 8);
        const auto path = tmp.path() / "kfac.state";
        write_kfac_state(path, state, ckpt_hash);
        auto [back, h] = read_kfac_state(path);
        CHECK(h == ckpt_hash);
        CHECK(back.sample_count == state.sample_count);
        CHECK(back.l2_penalty == state.l2_penalty);
        REQUIRE(back.layers.size() == state.layers.size());
        for (std::size_t l = 0; l < state.layers.size(); ++l) {
            CHECK(back.layers[l].input_cov == state.layers[l].input_cov);
            CHECK(back.layers[l].preact_cov == state.layers[l].preact_cov);
        }
    }
    SUBCASE("ekfac state round-trip preserves apply results bitwise") {
        EkfacState state = fit_ekfac(params, data, 8);
        const auto path = tmp.path() / "ekfac.state";
        write_ekfac_state(path, state, ckpt_hash);
        auto [back, h] = read_ekfac_state(path);
        CHECK(h == ckpt_hash);
        VectorXd v = random_vector(params.param_dim(), 9);
        CHECK(apply_ekfac_inverse(back, Damping{1e-3}, v) ==
              apply_ekfac_inverse(state, Damping{1e-3}, v));
    }
}

TEST_CASE("config parsing") {
    TempDir tmp("cfg");
    const auto path = tmp.path() / "run.json";

    SUBCASE("full config round-trips through json") {
        write_raw(path, R"({
          "model": {"layer_dims": [4, 8, 2], "activation": "tanh"},
          "training": {"learning_rate": 0.2, "epochs": 10, "batch_size": 16,
                       "seed": 3, "l2_penalty": 0.001},
          "data": {
            "train": {"source": "synthetic", "generator": "gaussian_blobs",
                      "n": 64, "d": 4, "classes": 2, "seed": 5},
            "test": {"source": "synthetic", "generator": "gaussian_blobs",
                     "n": 16, "d": 4, "classes": 2, "seed": 6},
            "corrupt": {"fraction": 0.1, "seed": 7}
          },
          "solver": {"kind": "lissa", "damping": 0.01, "seed": 9,
                     "lissa": {"iterations": 50, "batch_size": 8}},
          "experiment": {"lds": {"num_subsets": 12, "alpha": 0.5,
                                  "test_sample_count": 4}}
        })");
        RunConfig cfg = load_config(path);
        CHECK(cfg.model.layer_dims == std::vector<int>{4, 8, 2});
        CHECK(cfg.model.activation == Activation::kTanh);
        CHECK(cfg.training.epochs == 10);
        CHECK(cfg.data.corrupt.has_value());
        CHECK(cfg.solver.kind == "lissa");
        CHECK(cfg.solver.lissa.iterations == 50);
        CHECK(cfg.solver.lissa.damping.lambda == 0.01);
        CHECK(cfg.lds.num_subsets == 12);

        Dataset train_data = cfg.data.train.load(cfg.base_dir);
        CHECK(train_data.size() == 64);

        Json echo = config_to_json(cfg);
        RunConfig cfg2 = parse_config(echo, tmp.path());
        CHECK(config_to_json(cfg2) == echo);
    }
    SUBCASE("missing sections and unknown solvers are usage errors") {
        write_raw(path, R"({"model": {"layer_dims": [2, 2]}})");
        CHECK_THROWS_AS((void)load_config(path), UsageError);

        write_raw(path, R"({
          "model": {"layer_dims": [2, 2]},
          "training": {"learning_rate": 0.1, "epochs": 1, "batch_size": 4},
          "data": {"train": {"source": "synthetic", "generator": "gaussian_blobs",
                              "n": 8, "d": 2, "classes": 2}},
          "solver": {"kind": "quantum"}
        })");
        CHECK_THROWS_AS((void)load_config(path), UsageError);
    }
    SUBCASE("malformed json is a usage error") {
        write_raw(path, "{nope");
        CHECK_THROWS_AS((void)load_config(path), UsageError);
    }
}
